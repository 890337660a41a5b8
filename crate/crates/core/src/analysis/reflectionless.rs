use rayon::prelude::*;
use serde::Serialize;

use super::ArcSpec;
use crate::error::{CmvError, Result};
use crate::herglotz::ThetaGrid;
use crate::linalg::{im_part, min_hermitian_eigenvalue, operator_norm, principal_log, re_part, C64};
use crate::verblunsky::{Extension, VerblunskySequence};
use crate::weyl::{m11_from_pair, SchurOptions, SchurSolver};

#[derive(Debug, Clone, Serialize)]
pub struct BatteryOptions {
    /// Sites at which every sub-check is run.
    pub ks: Vec<i64>,
    /// Grid points closer than this to an arc endpoint are skipped.
    pub collar: f64,
    pub schur_tol: f64,
    /// Re-run at `1 − 2(1 − r)` to estimate the radial-limit error.
    pub radial_estimate: bool,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions { ks: vec![0, 1], collar: 0.05, schur_tol: 1e-10, radial_estimate: true }
    }
}

/// Sub-check values at one grid point and site.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BatteryRow {
    pub theta: f64,
    pub k: i64,
    /// `‖Φ_+* − Φ_-^{-1}‖`.
    pub v: f64,
    /// Smallest eigenvalue of `Re M_{1,1}`.
    pub vii: f64,
    /// `‖Ξ‖`.
    pub ix: f64,
    pub seed_change: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KBattery {
    pub k: i64,
    pub v_max: f64,
    pub vii_min: f64,
    pub ix_max: f64,
}

/// Error budget of the battery: the quadrature part is zero since every
/// sub-check is pointwise.
#[derive(Debug, Clone, Serialize)]
pub struct Budget {
    pub quadrature: f64,
    pub radial: Option<f64>,
    pub truncation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReflectionlessReport {
    pub arc: ArcSpec,
    pub r: f64,
    pub tol: f64,
    pub points: usize,
    pub per_k: Vec<KBattery>,
    pub v_max: f64,
    pub vii_min: f64,
    pub ix_max: f64,
    pub pass_v: bool,
    pub pass_vii: bool,
    pub pass_ix: bool,
    pub pass: bool,
    pub budget: Budget,
    #[serde(skip)]
    pub rows: Vec<BatteryRow>,
}

fn evaluate(solver: &SchurSolver, theta: f64, r: f64, k: i64, opts: &SchurOptions, index: usize) -> Result<BatteryRow> {
    let pair = solver.pair(C64::from_polar(r, theta), k, opts)?;
    let v = operator_norm(&(pair.phi_plus.adjoint() - &pair.phi_minus_inv));
    let m11 = m11_from_pair(&pair)?;
    let vii = min_hermitian_eigenvalue(&re_part(&m11));
    let ix = operator_norm(&im_part(&principal_log(&m11).map_err(|_| CmvError::LogDomainViolation { index })?));
    Ok(BatteryRow { theta, k, v, vii, ix, seed_change: pair.seed_change })
}

/// Runs sub-checks (v), (vii) and (ix) at radius `r` on grid points inside
/// `arc` (collar excluded), at each site in `opts.ks`.
pub fn reflectionless_check(
    seq: &VerblunskySequence,
    arc: &ArcSpec,
    grid: ThetaGrid,
    r: f64,
    tol: f64,
    opts: &BatteryOptions,
) -> Result<ReflectionlessReport> {
    if !(r > 0.0 && r <= 1.0 - 1e-3) {
        return Err(CmvError::InvalidInput(format!("battery radius {r} must lie in (0, 1 − 1e−3]")));
    }
    if opts.ks.is_empty() {
        return Err(CmvError::InvalidInput("battery needs at least one site".into()));
    }
    let schur = SchurOptions { tol: opts.schur_tol, ..SchurOptions::default() };
    let solver = match seq.extension() {
        Extension::Zero => SchurSolver::new(seq),
        _ => {
            let reach = ((0.01 * schur.tol).ln() / r.ln()).ceil() as i64 + 128;
            let lo = opts.ks.iter().min().copied().unwrap_or(0) - reach;
            let hi = opts.ks.iter().max().copied().unwrap_or(0) + reach;
            SchurSolver::with_sites(seq, lo, hi)?
        }
    };
    let idx: Vec<usize> = (0..grid.n).filter(|&j| arc.interior(grid.theta(j), opts.collar)).collect();
    let jobs: Vec<(usize, i64)> = idx.iter().flat_map(|&j| opts.ks.iter().map(move |&k| (j, k))).collect();
    let run = |rr: f64| -> Result<Vec<BatteryRow>> {
        jobs.par_iter().map(|&(j, k)| evaluate(&solver, grid.theta(j), rr, k, &schur, j)).collect()
    };
    let rows = run(r)?;
    let radial = if opts.radial_estimate {
        let r2 = 1.0 - 2.0 * (1.0 - r);
        let rows2 = run(r2)?;
        Some(
            rows.iter()
                .zip(&rows2)
                .map(|(a, b)| (a.v - b.v).abs().max((a.vii - b.vii).abs()).max((a.ix - b.ix).abs()))
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    let per_k: Vec<KBattery> = opts
        .ks
        .iter()
        .map(|&k| {
            let rs = rows.iter().filter(|row| row.k == k);
            KBattery {
                k,
                v_max: rs.clone().map(|x| x.v).fold(0.0, f64::max),
                vii_min: rs.clone().map(|x| x.vii).fold(f64::INFINITY, f64::min),
                ix_max: rs.map(|x| x.ix).fold(0.0, f64::max),
            }
        })
        .collect();
    let v_max = per_k.iter().map(|x| x.v_max).fold(0.0, f64::max);
    let vii_min = per_k.iter().map(|x| x.vii_min).fold(f64::INFINITY, f64::min);
    let ix_max = per_k.iter().map(|x| x.ix_max).fold(0.0, f64::max);
    let (pass_v, pass_vii, pass_ix) = (v_max < tol, vii_min > -tol, ix_max < tol);
    let truncation = rows.iter().map(|x| x.seed_change).fold(0.0, f64::max);
    Ok(ReflectionlessReport {
        arc: *arc,
        r,
        tol,
        points: idx.len(),
        per_k,
        v_max,
        vii_min,
        ix_max,
        pass_v,
        pass_vii,
        pass_ix,
        pass: pass_v && pass_vii && pass_ix,
        budget: Budget { quadrature: 0.0, radial, truncation },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_passes_tightly() {
        let seq = VerblunskySequence::free(2);
        let rep = reflectionless_check(
            &seq,
            &ArcSpec::full_circle(),
            ThetaGrid::new(64),
            1.0 - 1e-3,
            1e-3,
            &BatteryOptions::default(),
        )
        .unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.points, 64);
        assert!(rep.v_max < 1e-12 && rep.ix_max < 1e-12);
    }

    #[test]
    fn radius_is_bounded() {
        let seq = VerblunskySequence::free(1);
        let r = reflectionless_check(&seq, &ArcSpec::full_circle(), ThetaGrid::new(8), 0.9999, 1e-3, &BatteryOptions::default());
        assert!(matches!(r, Err(CmvError::InvalidInput(_))));
    }
}
