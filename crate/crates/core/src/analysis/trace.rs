use std::sync::Arc;

use serde::Serialize;

use super::borg::borg_trace_rhs;
use super::{ser_mats, ArcSpec};
use crate::cmv::CmvTruncation;
use crate::error::{CmvError, Result};
use crate::herglotz::{exp_herglotz, CaratheodoryEval, RadialSchedule, ThetaGrid, XiProfile};
use crate::linalg::{c, operator_norm, CMatrix};
use crate::verblunsky::VerblunskySequence;

/// Taylor coefficients `M_j(k0)` of `M_{1,1}(·, k0)`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSet {
    pub k0: i64,
    #[serde(serialize_with = "ser_mats")]
    pub values: Vec<CMatrix>,
    /// Largest gap between the first two computed moments and their
    /// expressions in the coefficients.
    pub closed_form_deviation: f64,
}

/// `M_1, M_2` written out in `α, ρ, ρ̃` around `k0`.
pub fn moment_closed_forms(seq: &VerblunskySequence, k0: i64) -> Result<(CMatrix, CMatrix)> {
    let a = |k: i64| seq.alpha(k);
    let ad = |k: i64| seq.alpha(k).adjoint();
    let rho = |k: i64| seq.rho(k);
    let rt = |k: i64| seq.rho_tilde(k);
    let two = c(2.0, 0.0);
    if k0.rem_euclid(2) == 1 {
        let p = a(k0) * ad(k0 + 1);
        let m1 = &p * c(-2.0, 0.0);
        let m2 = (&p * &p
            - a(k0) * rho(k0 + 1)? * ad(k0 + 2) * rt(k0 + 1)?
            - rt(k0)? * a(k0 - 1) * rho(k0)? * ad(k0 + 1))
            * two;
        Ok((m1, m2))
    } else {
        let p = ad(k0 + 1) * a(k0);
        let m1 = &p * c(-2.0, 0.0);
        let m2 = (&p * &p
            - rho(k0 + 1)? * ad(k0 + 2) * rt(k0 + 1)? * a(k0)
            - ad(k0 + 1) * rt(k0)? * a(k0 - 1) * rho(k0)?)
            * two;
        Ok((m1, m2))
    }
}

/// `M_j = 2 Δ_{k0} (U*)^j Δ_{k0}` for `j = 1..=j_max`.
pub fn moments(t: &CmvTruncation, k0: i64, j_max: usize) -> Result<MomentSet> {
    let values: Vec<CMatrix> = t.diagonal_moments(k0, j_max)?.into_iter().map(|x| x * c(2.0, 0.0)).collect();
    let (m1, m2) = moment_closed_forms(t.seq(), k0)?;
    let mut dev = 0.0f64;
    if let Some(v) = values.first() {
        dev = dev.max(operator_norm(&(v - m1)));
    }
    if let Some(v) = values.get(1) {
        dev = dev.max(operator_norm(&(v - m2)));
    }
    Ok(MomentSet { k0, values, closed_form_deviation: dev })
}

/// Coefficients of `ln(I + Σ M_j z^j)`: the noncommutative composition
/// `L_n = Σ_p ((−1)^{p+1}/p) Σ_{j_1+…+j_p=n} M_{j_1}⋯M_{j_p}`.
pub fn log_coeffs(ms: &[CMatrix]) -> Vec<CMatrix> {
    let n = ms.len();
    if n == 0 {
        return vec![];
    }
    let m = ms[0].nrows();
    // pw[q] = Σ over ordered compositions of q+1 into the current number of parts
    let mut pw: Vec<CMatrix> = ms.to_vec();
    let mut out: Vec<CMatrix> = ms.to_vec();
    for p in 2..=n {
        let mut next = vec![CMatrix::zeros(m, m); n];
        for total in p..=n {
            let mut s = CMatrix::zeros(m, m);
            for last in 1..=total - (p - 1) {
                s += &pw[total - last - 1] * &ms[last - 1];
            }
            next[total - 1] = s;
        }
        let coef = if p % 2 == 0 { -1.0 } else { 1.0 } / p as f64;
        for (o, v) in out.iter_mut().zip(&next) {
            *o += v * c(coef, 0.0);
        }
        pw = next;
    }
    out
}

/// `2i ∮ Ξ conj(ζ)^j dμ0`.
pub fn trace_rhs(xi: &XiProfile, j: i64) -> CMatrix {
    xi.fourier_coefficient(j) * c(0.0, 2.0)
}

/// Sites needed for pointwise `Ξ` at radius `r`: the truncation error at the
/// centre decays like `r^{N/2}`.
pub fn default_sites(r: f64) -> usize {
    let n = (2.0 * 1e-3f64.ln() / r.ln()).ceil().max(1.0) as usize;
    n.next_power_of_two().clamp(256, 1 << 16)
}

pub fn xi_of_operator(
    seq: &VerblunskySequence,
    k0: i64,
    grid: ThetaGrid,
    schedule: &RadialSchedule,
) -> Result<XiProfile> {
    xi_of_operator_with_sites(seq, k0, grid, schedule, default_sites(schedule.final_radius()))
}

/// `Ξ(θ) = Im ln M_{1,1}(r e^{iθ}, k0)` at the final radius, from a truncation
/// with `n_sites` sites centred on `k0`.
pub fn xi_of_operator_with_sites(
    seq: &VerblunskySequence,
    k0: i64,
    grid: ThetaGrid,
    schedule: &RadialSchedule,
    n_sites: usize,
) -> Result<XiProfile> {
    let t = Arc::new(CmvTruncation::centered(seq, k0, n_sites)?);
    xi_from_truncation(t, k0, grid, schedule)
}

pub(crate) fn xi_from_truncation(
    t: Arc<CmvTruncation>,
    k0: i64,
    grid: ThetaGrid,
    schedule: &RadialSchedule,
) -> Result<XiProfile> {
    let f = CaratheodoryEval::truncation_m11(t, k0);
    let eh = exp_herglotz(&f, grid, schedule)?;
    if let Some(&index) = eh.xi.skipped.first() {
        return Err(CmvError::LogDomainViolation { index });
    }
    Ok(eh.xi)
}

/// Largest pointwise change between two profiles on the same grid.
pub fn radial_drift(a: &XiProfile, b: &XiProfile) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| operator_norm(&(x - y))).fold(0.0, f64::max)
}

/// Both sides of the trace formulas for `j = 1..=j_max`.
#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub k0: i64,
    pub j_max: usize,
    /// Radius of the boundary values behind `rhs`; `None` for a closed form.
    pub radius: Option<f64>,
    #[serde(serialize_with = "ser_mats")]
    pub lhs: Vec<CMatrix>,
    #[serde(serialize_with = "ser_mats")]
    pub rhs: Vec<CMatrix>,
    pub deviations: Vec<f64>,
    /// `(1 − r^j)‖L_j‖`: the part of each deviation owed to the radius.
    pub radial_bias: Vec<f64>,
    pub moment_closed_form_deviation: f64,
}

impl TraceReport {
    pub fn new(k0: i64, lhs: Vec<CMatrix>, rhs: Vec<CMatrix>, radius: Option<f64>, closed: f64) -> Self {
        let deviations = lhs.iter().zip(&rhs).map(|(a, b)| operator_norm(&(a - b))).collect();
        let radial_bias = lhs
            .iter()
            .enumerate()
            .map(|(i, l)| radius.map_or(0.0, |r| (1.0 - r.powi(i as i32 + 1)) * operator_norm(l)))
            .collect();
        TraceReport {
            k0,
            j_max: lhs.len(),
            radius,
            lhs,
            rhs,
            deviations,
            radial_bias,
            moment_closed_form_deviation: closed,
        }
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }
}

/// Log coefficients from moments against quadrature of the computed `Ξ`,
/// both taken from one truncation with `n_sites` sites.
pub fn trace_check(
    seq: &VerblunskySequence,
    k0: i64,
    j_max: usize,
    grid: ThetaGrid,
    schedule: &RadialSchedule,
    n_sites: usize,
) -> Result<TraceReport> {
    let t = Arc::new(CmvTruncation::centered(seq, k0, n_sites)?);
    let ms = moments(&t, k0, j_max)?;
    let lhs = log_coeffs(&ms.values);
    let xi = xi_from_truncation(t, k0, grid, schedule)?;
    let rhs = (1..=j_max as i64).map(|j| trace_rhs(&xi, j)).collect();
    Ok(TraceReport::new(k0, lhs, rhs, Some(xi.r), ms.closed_form_deviation))
}

/// As [`trace_check`] with the exact Borg phase on the right.
pub fn trace_check_closed_form(
    seq: &VerblunskySequence,
    arc: &ArcSpec,
    k0: i64,
    j_max: usize,
) -> Result<TraceReport> {
    let t = CmvTruncation::centered(seq, k0, 4 * j_max + 16)?;
    let ms = moments(&t, k0, j_max)?;
    let lhs = log_coeffs(&ms.values);
    let rhs = (1..=j_max as i64).map(|j| borg_trace_rhs(arc, j, seq.m())).collect();
    Ok(TraceReport::new(k0, lhs, rhs, None, ms.closed_form_deviation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::verblunsky::{borg_sequence, random_contraction};
    use rand::SeedableRng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn scalar(x: f64) -> CMatrix {
        CMatrix::from_element(1, 1, c(x, 0.0))
    }

    #[test]
    fn low_orders_match_displayed_forms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let ms: Vec<CMatrix> = (0..3).map(|_| random_contraction(&mut rng, 3, 0.9)).collect();
        let l = log_coeffs(&ms);
        let half = c(0.5, 0.0);
        let third = c(1.0 / 3.0, 0.0);
        assert!(operator_norm(&(&l[0] - &ms[0])) < 1e-15);
        assert!(operator_norm(&(&l[1] - (&ms[1] - &ms[0] * &ms[0] * half))) < 1e-14);
        let l3 = &ms[2] - (&ms[0] * &ms[1] + &ms[1] * &ms[0]) * half + &ms[0] * &ms[0] * &ms[0] * third;
        assert!(operator_norm(&(&l[2] - l3)) < 1e-14);
    }

    #[test]
    fn scalar_series_oracle() {
        // n g_n = n a_n − Σ_{k<n} k g_k a_{n−k} for g = ln(1 + Σ a_n z^n)
        let cst: f64 = 0.37;
        let a: Vec<f64> = (1..=8).map(|j| cst.powi(j)).collect();
        let mut g = vec![0.0; 8];
        for n in 1..=8 {
            let mut s = n as f64 * a[n - 1];
            for k in 1..n {
                s -= k as f64 * g[k - 1] * a[n - k - 1];
            }
            g[n - 1] = s / n as f64;
        }
        let l = log_coeffs(&a.iter().map(|&x| scalar(x)).collect::<Vec<_>>());
        for n in 0..8 {
            assert!((l[n][(0, 0)].re - g[n]).abs() < 1e-15, "{n}");
        }
    }

    #[test]
    fn zero_moments_zero_logs() {
        let l = log_coeffs(&vec![CMatrix::zeros(2, 2); 6]);
        assert!(l.iter().all(|x| operator_norm(x) == 0.0));
    }

    #[test]
    fn borg_moments_and_logs() {
        let seq = borg_sequence(FRAC_PI_2, 1.5 * PI, &identity(1)).unwrap();
        let t = CmvTruncation::centered(&seq, 0, 64).unwrap();
        let ms = moments(&t, 0, 4).unwrap();
        assert!(ms.closed_form_deviation < 1e-12);
        assert!((ms.values[0][(0, 0)] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((ms.values[1][(0, 0)] - c(-0.5, 0.0)).norm() < 1e-12);
        let l = log_coeffs(&ms.values);
        assert!((l[0][(0, 0)] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((l[1][(0, 0)] - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn random_odd_site_first_moment() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let w: Vec<CMatrix> = (0..30).map(|_| random_contraction(&mut rng, 2, 0.8)).collect();
        let seq = VerblunskySequence::from_window(2, -15, w).unwrap();
        let t = CmvTruncation::build(&seq, -21, 20).unwrap();
        for k0 in [-3i64, 0, 1, 4] {
            let ms = moments(&t, k0, 3).unwrap();
            assert!(ms.closed_form_deviation < 1e-12, "{k0}: {}", ms.closed_form_deviation);
        }
        let ms = moments(&t, 1, 1).unwrap();
        let expect = seq.alpha(1) * seq.alpha(2).adjoint() * c(-2.0, 0.0);
        assert!(operator_norm(&(&ms.values[0] - expect)) < 1e-12);
    }

    #[test]
    fn moments_need_clearance() {
        let seq = VerblunskySequence::free(1);
        let t = CmvTruncation::build(&seq, -9, 10).unwrap();
        assert!(matches!(moments(&t, 0, 6), Err(CmvError::TooCloseToBoundary { .. })));
    }

    #[test]
    fn closed_form_trace_is_tight() {
        let seq = borg_sequence(FRAC_PI_2, 1.5 * PI, &identity(2)).unwrap();
        let arc = ArcSpec::new(FRAC_PI_2, 1.5 * PI).unwrap();
        for k0 in [0, 1] {
            let r = trace_check_closed_form(&seq, &arc, k0, 5).unwrap();
            assert!(r.max_deviation() < 1e-12, "{:?}", r.deviations);
        }
    }

    #[test]
    fn free_trace_is_zero() {
        let seq = VerblunskySequence::free(2);
        let r = trace_check(&seq, 0, 4, ThetaGrid::new(512), &RadialSchedule::single(0.99), 256).unwrap();
        assert!(r.max_deviation() < 1e-10);
    }

    #[test]
    fn default_sites_scale() {
        assert_eq!(default_sites(0.999), 16384);
        assert_eq!(default_sites(0.5), 256);
    }
}
