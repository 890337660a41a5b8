use std::f64::consts::{PI, TAU};

use serde::Serialize;

use super::{circular_distance, ser_mats, ArcSpec};
use crate::cmv::{CmvTruncation, Op};
use crate::error::{CmvError, Result};
use crate::herglotz::MatrixCircleMeasure;
use crate::linalg::{unitary_eig, CMatrix, Tolerances, C64};
use crate::verblunsky::{conjugate_sequence, VerblunskySequence};

/// Eigen-angles of the truncated `U`, sorted in `[0, 2π)`.
pub fn spectrum(t: &CmvTruncation, tol: &Tolerances) -> Result<Vec<f64>> {
    Ok(unitary_eig(&t.dense(Op::U), tol)?.angles())
}

/// `Δ_{k0}`-compression of the eigen-decomposition of a truncation.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecomposition {
    pub k0: i64,
    pub angles: Vec<f64>,
    /// `Ω_j = (Δ_{k0} v_j)(Δ_{k0} v_j)*`.
    #[serde(serialize_with = "ser_mats")]
    pub weights: Vec<CMatrix>,
}

impl SpectralDecomposition {
    pub fn m(&self) -> usize {
        self.weights.first().map(|w| w.nrows()).unwrap_or(0)
    }

    pub fn total_mass(&self) -> CMatrix {
        self.moment(0)
    }

    /// `Σ_j conj(λ_j)^p Ω_j`.
    pub fn moment(&self, p: i64) -> CMatrix {
        let m = self.m();
        self.angles
            .iter()
            .zip(&self.weights)
            .fold(CMatrix::zeros(m, m), |s, (&th, w)| s + w * C64::from_polar(1.0, -(p as f64) * th))
    }

    pub fn to_measure(&self) -> MatrixCircleMeasure {
        MatrixCircleMeasure::atoms(self.m(), self.angles.clone(), self.weights.clone())
    }
}

pub fn spectral_measure(t: &CmvTruncation, k0: i64, tol: &Tolerances) -> Result<SpectralDecomposition> {
    let i0 = t
        .local(k0)
        .ok_or_else(|| CmvError::InvalidRange(format!("site {k0} outside truncation")))?;
    let m = t.m();
    let eig = unitary_eig(&t.dense(Op::U), tol)?;
    let weights = (0..eig.values.len())
        .map(|j| {
            let x = eig.vectors.view((i0 * m, j), (m, 1));
            x * x.adjoint()
        })
        .collect();
    Ok(SpectralDecomposition { k0, angles: eig.angles(), weights })
}

/// How a set of eigen-angles sits on an arc.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageStats {
    pub count: usize,
    /// Fraction within `collar` of the closed arc.
    pub in_arc_fraction: f64,
    /// Angles more than `deep` into the gap.
    pub deep_gap_count: usize,
    /// Largest spacing between consecutive angles on the closed arc.
    pub max_gap_in_arc: f64,
    /// Arc length over the number of angles on it.
    pub mean_gap_in_arc: f64,
    pub gap_ratio: f64,
    /// Largest spacing around the whole circle.
    pub max_gap: f64,
}

pub fn coverage(angles: &[f64], arc: &ArcSpec, collar: f64, deep: f64) -> CoverageStats {
    let count = angles.len();
    let near = angles.iter().filter(|&&t| arc.depth_outside(t) <= collar).count();
    let deep_gap_count = angles.iter().filter(|&&t| arc.depth_outside(t) > deep).count();

    let mut on: Vec<f64> = angles.iter().map(|&t| arc.offset(t)).filter(|&t| t <= arc.length()).collect();
    on.sort_by(f64::total_cmp);
    let mut max_gap_in_arc = on.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if arc.is_full() && !on.is_empty() {
        max_gap_in_arc = max_gap_in_arc.max(TAU - on[on.len() - 1] + on[0]);
    }
    let mean_gap_in_arc = if on.is_empty() { f64::INFINITY } else { arc.length() / on.len() as f64 };

    let mut all: Vec<f64> = angles.iter().map(|&t| t.rem_euclid(TAU)).collect();
    all.sort_by(f64::total_cmp);
    let mut max_gap = all.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if !all.is_empty() {
        max_gap = max_gap.max(TAU - all[all.len() - 1] + all[0]);
    }
    CoverageStats {
        count,
        in_arc_fraction: if count == 0 { 0.0 } else { near as f64 / count as f64 },
        deep_gap_count,
        max_gap_in_arc,
        mean_gap_in_arc,
        gap_ratio: max_gap_in_arc / mean_gap_in_arc,
        max_gap,
    }
}

/// Largest adjacent gap expected of a free truncation with `n_sites` sites:
/// three times `2π·2m/N`.
pub fn free_gap_bound(m: usize, n_sites: usize) -> f64 {
    3.0 * (2.0 * PI * m as f64 * 2.0 / n_sites as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub max_deviation: f64,
}

/// Compares the spectra of truncations of `seq` and of `γ1 α γ2*` (cut
/// unitaries conjugated alongside).
pub fn equivalence_check(
    seq: &VerblunskySequence,
    g1: &CMatrix,
    g2: &CMatrix,
    n_sites: usize,
    k0: i64,
) -> Result<EquivalenceReport> {
    let tol = Tolerances::default();
    let other = conjugate_sequence(seq, g1, g2)?;
    let a = spectrum(&CmvTruncation::centered(seq, k0, n_sites)?, &tol)?;
    let b = spectrum(&CmvTruncation::centered(&other, k0, n_sites)?, &tol)?;
    Ok(EquivalenceReport { n: a.len(), max_deviation: sorted_angle_distance(&a, &b) })
}

/// Elementwise distance of two sorted angle lists; a few cyclic shifts are
/// tried so that angles straddling `0 = 2π` do not misalign the lists.
pub fn sorted_angle_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let shifts = 8.min(n);
    (0..=2 * shifts)
        .map(|s| {
            let s = (s + n - shifts) % n;
            (0..n).map(|i| circular_distance(a[i], b[(i + s) % n])).fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}
