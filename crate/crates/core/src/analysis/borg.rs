use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use serde::Serialize;

use super::spectral::{coverage, spectrum, CoverageStats};
use super::trace::{default_sites, log_coeffs, moments, trace_rhs, xi_from_truncation, TraceReport};
use super::ArcSpec;
use crate::cmv::CmvTruncation;
use crate::error::Result;
use crate::herglotz::{CaratheodoryEval, RadialSchedule, ThetaGrid, XiProfile};
use crate::linalg::{c, identity, operator_norm, CMatrix, Tolerances, C64};
use crate::verblunsky::{borg_parameters, borg_sequence, VerblunskySequence};
use crate::weyl::{m11_from_pair, SchurOptions, SchurSolver};

/// Antiderivative of the scalar Borg phase in the offset from `θ0`; it
/// returns to 0 after a full turn, so it is periodic.
fn xi_antiderivative(arc: &ArcSpec, theta: f64) -> f64 {
    if arc.is_full() {
        return 0.0;
    }
    let t = arc.offset(theta);
    let l = arc.length();
    let ts = arc.theta_star() - arc.theta0;
    if t < l {
        0.0
    } else if t < ts {
        FRAC_PI_2 * (t - l)
    } else {
        FRAC_PI_2 * (ts - l) - FRAC_PI_2 * (t - ts)
    }
}

/// Exact Borg phase on `grid`, one cell average per point (so the
/// cell-exact quadrature of [`XiProfile::fourier_coefficient`] sees the
/// true step positions to first order).
pub fn borg_xi(arc: &ArcSpec, grid: ThetaGrid, m: usize) -> XiProfile {
    let h = grid.h();
    let values = (0..grid.n)
        .map(|j| {
            let a = grid.offset + j as f64 * h;
            let d = xi_antiderivative(arc, a + h) - xi_antiderivative(arc, a);
            identity(m) * c(d / h, 0.0)
        })
        .collect();
    XiProfile { grid, r: 1.0, values, skipped: vec![] }
}

/// `2i ∮ Ξ conj(ζ)^j dμ0` for the exact Borg phase.
pub fn borg_trace_rhs(arc: &ArcSpec, j: i64, m: usize) -> CMatrix {
    let jf = j as f64;
    let mut s = c(0.0, 0.0);
    for (a, b, v) in arc.xi_pieces() {
        s += (C64::from_polar(1.0, -jf * a) - C64::from_polar(1.0, -jf * b)) * (v / (PI * jf));
    }
    identity(m) * s
}

/// Closed-form `M_{1,1}` of the Borg family: the exponential Herglotz
/// integral of the step phase, done piece by piece.
pub fn borg_m11(arc: &ArcSpec, m: usize) -> CaratheodoryEval {
    let pieces = arc.xi_pieces();
    let id = format!("borg_m11({}, {})", arc.theta0, arc.theta1);
    CaratheodoryEval::closed_form(m, &id, move |z| {
        let one = c(1.0, 0.0);
        let mut e = c(0.0, 0.0);
        for &(a, b, v) in &pieces {
            let la = (one - z * C64::from_polar(1.0, -a)).ln();
            let lb = (one - z * C64::from_polar(1.0, -b)).ln();
            e += v * (c(b - a, 0.0) - c(0.0, 2.0) * (lb - la));
        }
        Ok(identity(m) * (c(0.0, 1.0 / TAU) * e).exp())
    })
}

/// Worst deviation of each coefficient identity of the Borg family.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub k_range: (i64, i64),
    pub checks: Vec<(String, f64)>,
}

impl IdentityReport {
    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }
}

/// Checks, for `k` in `lo..=hi`, with `φ = (θ0+θ1)/2` and `a = cos((θ1−θ0)/4)`:
/// `α_{k+1}*α_k = α_kα_{k+1}* = −e^{−iφ}a²`,
/// `α_{k+1}*ρ̃_k = ρ_kα_{k+1}*` and `ρ̃_kα_{k−1} = α_{k−1}ρ_k`,
/// `α_kα_{k+2}* + α_{k−1}α_{k+1}* = 2e^{−2iφ}a²`,
/// `α_k*α_k + α_{k+1}*α_{k+1} = 2a²`, `α_{k+1} = −e^{iφ}α_k`, `α_k*α_k = a²`.
pub fn coefficient_identities(seq: &VerblunskySequence, arc: &ArcSpec, lo: i64, hi: i64) -> Result<IdentityReport> {
    let m = seq.m();
    let (_, a) = borg_parameters(arc.theta0, arc.theta1);
    let a2 = a * a;
    let phi = 0.5 * (arc.theta0 + arc.theta1);
    let id = identity(m);
    let c1 = &id * (-C64::from_polar(a2, -phi));
    let c2 = &id * C64::from_polar(2.0 * a2, -2.0 * phi);
    let e = C64::from_polar(1.0, phi);
    let mut worst = [0.0f64; 6];
    let al = |k: i64| seq.alpha(k);
    for k in lo..=hi {
        let (ak, ak1) = (al(k), al(k + 1));
        let (akd, ak1d) = (ak.adjoint(), ak1.adjoint());
        let d = [
            operator_norm(&(&ak1d * &ak - &c1)).max(operator_norm(&(&ak * &ak1d - &c1))),
            operator_norm(&(&ak1d * seq.rho_tilde(k)? - seq.rho(k)? * &ak1d))
                .max(operator_norm(&(seq.rho_tilde(k)? * al(k - 1) - al(k - 1) * seq.rho(k)?))),
            operator_norm(&(&ak * al(k + 2).adjoint() + al(k - 1) * &ak1d - &c2)),
            operator_norm(&(&akd * &ak + &ak1d * &ak1 - &id * c(2.0 * a2, 0.0))),
            operator_norm(&(&ak1 + &ak * e)),
            operator_norm(&(&akd * &ak - &id * c(a2, 0.0))),
        ];
        for (w, x) in worst.iter_mut().zip(d) {
            *w = w.max(x);
        }
    }
    let names = [
        "adjacent_product",
        "rho_intertwining",
        "second_neighbour_sum",
        "norm_pair_sum",
        "phase_shift",
        "modulus",
    ];
    Ok(IdentityReport {
        k_range: (lo, hi),
        checks: names.iter().zip(worst).map(|(n, d)| (n.to_string(), d)).collect(),
    })
}

/// `Im m_{x0}(rζ, k)` along the gap, which should fall strictly.
#[derive(Debug, Clone, Serialize)]
pub struct GapMonotonicity {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    pub strictly_decreasing: bool,
}

pub fn gap_monotonicity(
    seq: &VerblunskySequence,
    arc: &ArcSpec,
    k: i64,
    x0: &[C64],
    r: f64,
    samples: usize,
) -> Result<GapMonotonicity> {
    let solver = SchurSolver::new(seq);
    let opts = SchurOptions::default();
    let gap = TAU - arc.length();
    let mut thetas = Vec::with_capacity(samples);
    let mut values = Vec::with_capacity(samples);
    for i in 0..samples {
        let th = arc.theta1 + gap * (i as f64 + 1.0) / (samples as f64 + 1.0);
        let m11 = m11_from_pair(&solver.pair(C64::from_polar(r, th), k, &opts)?)?;
        let mut v = c(0.0, 0.0);
        for p in 0..x0.len() {
            for q in 0..x0.len() {
                v += x0[p].conj() * m11[(p, q)] * x0[q];
            }
        }
        thetas.push(th);
        values.push(v.im);
    }
    let strictly_decreasing = values.windows(2).all(|w| w[1] < w[0]);
    Ok(GapMonotonicity { thetas, values, strictly_decreasing })
}

#[derive(Debug, Clone, Serialize)]
pub struct BorgVerifyOptions {
    /// Sites of the truncation whose spectrum is examined.
    pub n_sites: usize,
    pub grid: ThetaGrid,
    pub r: f64,
    /// Sites for the `Ξ` and trace computations; chosen from `r` when absent.
    pub xi_sites: Option<usize>,
    pub k0: i64,
    pub trace_orders: usize,
    pub collar: f64,
    pub identity_tol: f64,
    pub xi_tol: f64,
    pub trace_tol: f64,
    pub invariance_tol: f64,
    pub in_arc_min: f64,
    pub gap_ratio_max: f64,
}

impl Default for BorgVerifyOptions {
    fn default() -> Self {
        BorgVerifyOptions {
            n_sites: 512,
            grid: ThetaGrid::new(4096),
            r: 1.0 - 1e-3,
            xi_sites: None,
            k0: 0,
            trace_orders: 3,
            collar: 0.05,
            identity_tol: 1e-12,
            xi_tol: 0.05,
            trace_tol: 5e-3,
            invariance_tol: 1e-9,
            in_arc_min: 0.99,
            gap_ratio_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BorgReport {
    pub arc: ArcSpec,
    pub m: usize,
    pub identities: IdentityReport,
    pub coverage: CoverageStats,
    /// Largest `‖Ξ − Ξ_closed‖` at grid points off the collar around jumps.
    pub xi_max_deviation: f64,
    pub xi_normalization: f64,
    pub trace: TraceReport,
    /// Largest change of any scalar statistic when `γ` is replaced by `I`.
    pub gamma_invariance: f64,
    pub checks: Vec<(String, bool)>,
    pub pass: bool,
    #[serde(skip)]
    pub xi: XiProfile,
    #[serde(skip)]
    pub angles: Vec<f64>,
}

impl BorgReport {
    fn scalars(&self) -> Vec<f64> {
        let mut v = vec![
            self.coverage.in_arc_fraction,
            self.coverage.deep_gap_count as f64,
            self.coverage.gap_ratio,
            self.coverage.max_gap_in_arc,
            self.xi_max_deviation,
            self.xi_normalization,
        ];
        v.extend(&self.trace.deviations);
        v
    }
}

/// Full check of the Borg family on `arc`.
pub fn borg_verify(arc: &ArcSpec, gamma: &CMatrix, opts: &BorgVerifyOptions) -> Result<BorgReport> {
    let mut report = borg_stats(arc, gamma, opts)?;
    if operator_norm(&(gamma - identity(gamma.nrows()))) > 0.0 {
        let plain = borg_stats(arc, &identity(gamma.nrows()), opts)?;
        report.gamma_invariance = report
            .scalars()
            .iter()
            .zip(plain.scalars())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
    }
    let inv_ok = report.gamma_invariance <= opts.invariance_tol;
    report.checks.push(("gamma_invariance".into(), inv_ok));
    report.pass = report.checks.iter().all(|(_, ok)| *ok);
    Ok(report)
}

fn borg_stats(arc: &ArcSpec, gamma: &CMatrix, opts: &BorgVerifyOptions) -> Result<BorgReport> {
    let m = gamma.nrows();
    let seq = borg_sequence(arc.theta0, arc.theta1, gamma)?;
    let identities = coefficient_identities(&seq, arc, opts.k0 - 20, opts.k0 + 20)?;

    let t = CmvTruncation::centered(&seq, opts.k0, opts.n_sites)?;
    let angles = spectrum(&t, &Tolerances::default())?;
    let cov = coverage(&angles, arc, opts.collar, 0.2);

    let xi_sites = opts.xi_sites.unwrap_or_else(|| default_sites(opts.r));
    let tx = Arc::new(CmvTruncation::centered(&seq, opts.k0, xi_sites)?);
    let ms = moments(&tx, opts.k0, opts.trace_orders)?;
    let xi = xi_from_truncation(tx, opts.k0, opts.grid, &RadialSchedule::single(opts.r))?;
    let lhs = log_coeffs(&ms.values);
    let rhs = (1..=opts.trace_orders as i64).map(|j| trace_rhs(&xi, j)).collect();
    let trace = TraceReport::new(opts.k0, lhs, rhs, Some(opts.r), ms.closed_form_deviation);

    let mut xi_dev = 0.0f64;
    for (j, v) in xi.values.iter().enumerate() {
        let th = opts.grid.theta(j);
        if arc.distance_to_jumps(th) >= opts.collar {
            xi_dev = xi_dev.max(operator_norm(&(v - identity(m) * c(arc.xi_value(th), 0.0))));
        }
    }
    let xi_norm = operator_norm(&xi.mean());

    let checks = vec![
        ("coefficient_identities".to_string(), identities.max_deviation() <= opts.identity_tol),
        ("in_arc_fraction".to_string(), cov.in_arc_fraction >= opts.in_arc_min),
        ("deep_gap_modes".to_string(), cov.deep_gap_count <= 4 * m),
        ("arc_fill".to_string(), cov.gap_ratio <= opts.gap_ratio_max),
        ("xi_profile".to_string(), xi_dev <= opts.xi_tol),
        ("xi_normalization".to_string(), xi_norm < 1e-2),
        ("trace".to_string(), trace.max_deviation() <= opts.trace_tol),
    ];
    Ok(BorgReport {
        arc: *arc,
        m,
        identities,
        coverage: cov,
        xi_max_deviation: xi_dev,
        xi_normalization: xi_norm,
        trace,
        gamma_invariance: 0.0,
        checks,
        pass: false,
        xi,
        angles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmv::CmvTruncation;
    use crate::verblunsky::{random_arc, random_unitary};
    use rand::SeedableRng;

    #[test]
    fn half_circle_trace_values() {
        let arc = ArcSpec::new(FRAC_PI_2, 1.5 * PI).unwrap();
        let l1 = borg_trace_rhs(&arc, 1, 2);
        let l2 = borg_trace_rhs(&arc, 2, 2);
        assert!(operator_norm(&(l1 + identity(2))) < 1e-15);
        assert!(operator_norm(&(l2 + identity(2))) < 1e-15);
        assert_eq!(operator_norm(&borg_trace_rhs(&ArcSpec::full_circle(), 1, 1)), 0.0);
    }

    #[test]
    fn grid_quadrature_of_closed_profile() {
        // jumps on cell edges make the cell-exact quadrature exact
        let arc = ArcSpec::new(FRAC_PI_2, 1.5 * PI).unwrap();
        let xi = borg_xi(&arc, ThetaGrid::new(4096), 2);
        assert!(operator_norm(&xi.mean()) < 1e-12, "{}", operator_norm(&xi.mean()));
        for j in 1..=5 {
            let d = operator_norm(&(trace_rhs(&xi, j) - borg_trace_rhs(&arc, j, 2)));
            assert!(d < 1e-12, "{j}: {d}");
        }
        // unaligned jumps cost O(j h^2)
        let arc = ArcSpec::new(0.3, 2.9).unwrap();
        let xi = borg_xi(&arc, ThetaGrid::new(4096), 1);
        for j in 1..=5 {
            let d = operator_norm(&(trace_rhs(&xi, j) - borg_trace_rhs(&arc, j, 1)));
            assert!(d < 5e-7 * j as f64, "{j}: {d}");
        }
    }

    #[test]
    fn quarter_arc_first_log_coefficient() {
        let arc = ArcSpec::new(0.0, PI).unwrap();
        let l1 = borg_trace_rhs(&arc, 1, 1)[(0, 0)];
        assert!((l1 - c(0.0, -1.0)).norm() < 1e-15);
        let seq = borg_sequence(0.0, PI, &identity(1)).unwrap();
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..4 {
            let expect = c(0.0, -1.0).powi(k as i32) * s2;
            assert!((seq.alpha(k)[(0, 0)] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn closed_m11_matches_truncation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let (t0, t1) = random_arc(&mut rng);
            let arc = ArcSpec::new(t0, t1).unwrap();
            let g = random_unitary(&mut rng, 2);
            let seq = borg_sequence(t0, t1, &g).unwrap();
            let t = CmvTruncation::centered(&seq, 0, 256).unwrap();
            let f = borg_m11(&arc, 2);
            for z in [c(0.3, 0.1), c(-0.5, 0.2), c(0.0, -0.6)] {
                let d = operator_norm(&(f.eval(z).unwrap() - t.m11(z, 0).unwrap()));
                assert!(d < 1e-10, "{d}");
            }
        }
    }

    #[test]
    fn ladder_holds_for_generated_sequences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for m in 1..=4 {
            let (t0, t1) = random_arc(&mut rng);
            let arc = ArcSpec::new(t0, t1).unwrap();
            let seq = borg_sequence(t0, t1, &random_unitary(&mut rng, m)).unwrap();
            let r = coefficient_identities(&seq, &arc, -30, 30).unwrap();
            assert!(r.max_deviation() < 1e-12, "{:?}", r.checks);
        }
    }

    #[test]
    fn ladder_rejects_other_sequences() {
        let arc = ArcSpec::new(FRAC_PI_2, 1.5 * PI).unwrap();
        let seq = borg_sequence(0.2, 3.0, &identity(1)).unwrap();
        assert!(coefficient_identities(&seq, &arc, -3, 3).unwrap().max_deviation() > 0.1);
    }

    #[test]
    fn gap_profile_is_monotone() {
        let arc = ArcSpec::new(FRAC_PI_2, 1.5 * PI).unwrap();
        let seq = borg_sequence(arc.theta0, arc.theta1, &identity(2)).unwrap();
        let x0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let g = gap_monotonicity(&seq, &arc, 0, &x0, 1.0 - 1e-3, 60).unwrap();
        assert!(g.strictly_decreasing, "{:?}", g.values);
    }
}
