//! Moments, trace formulas, Borg closed forms, the reflectionless battery and
//! spectra of truncations.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{CMatrix, C64};
use crate::verblunsky::validate_arc;

mod borg;
mod reflectionless;
mod spectral;
mod trace;

pub use borg::{
    borg_m11, borg_trace_rhs, borg_verify, borg_xi, coefficient_identities, gap_monotonicity, BorgReport,
    BorgVerifyOptions, GapMonotonicity, IdentityReport,
};
pub use reflectionless::{reflectionless_check, BatteryOptions, BatteryRow, KBattery, ReflectionlessReport};
pub use spectral::{
    coverage, equivalence_check, free_gap_bound, spectral_measure, spectrum, CoverageStats, EquivalenceReport,
    SpectralDecomposition,
};
pub use trace::{
    default_sites, log_coeffs, moment_closed_forms, moments, radial_drift, trace_check, trace_check_closed_form,
    trace_rhs, xi_of_operator, xi_of_operator_with_sites, MomentSet, TraceReport,
};

/// Closed arc `[θ0, θ1]` of the circle with `θ0 ∈ [0, 2π)` and
/// `θ0 < θ1 ≤ θ0 + 2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArcSpec {
    pub theta0: f64,
    pub theta1: f64,
}

impl ArcSpec {
    pub fn new(theta0: f64, theta1: f64) -> Result<Self> {
        validate_arc(theta0, theta1)?;
        Ok(ArcSpec { theta0, theta1 })
    }

    pub fn full_circle() -> Self {
        ArcSpec { theta0: 0.0, theta1: TAU }
    }

    pub fn length(&self) -> f64 {
        self.theta1 - self.theta0
    }

    pub fn is_full(&self) -> bool {
        self.length() >= TAU - 1e-12
    }

    /// Midpoint of the complementary gap.
    pub fn theta_star(&self) -> f64 {
        0.5 * (self.theta0 + self.theta1) + PI
    }

    /// Offset of `θ` from `θ0`, in `[0, 2π)`.
    pub fn offset(&self, theta: f64) -> f64 {
        (theta - self.theta0).rem_euclid(TAU)
    }

    /// Open-arc membership.
    pub fn contains(&self, theta: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let t = self.offset(theta);
        t > 0.0 && t < self.length()
    }

    /// Inside the arc and at least `collar` from both endpoints.
    pub fn interior(&self, theta: f64, collar: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let t = self.offset(theta);
        t > collar && t < self.length() - collar
    }

    /// Distance from `θ` to the closed arc (0 inside).
    pub fn depth_outside(&self, theta: f64) -> f64 {
        if self.is_full() {
            return 0.0;
        }
        let t = self.offset(theta);
        if t <= self.length() {
            0.0
        } else {
            (t - self.length()).min(TAU - t)
        }
    }

    /// Circular distance to the nearest jump of the Borg phase.
    pub fn distance_to_jumps(&self, theta: f64) -> f64 {
        if self.is_full() {
            return f64::INFINITY;
        }
        [self.theta0, self.theta1, self.theta_star()]
            .iter()
            .map(|&p| circular_distance(theta, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Scalar Borg phase at `θ`: 0 on the arc, `π/2` up to `θ_*`, then `−π/2`.
    pub fn xi_value(&self, theta: f64) -> f64 {
        if self.is_full() {
            return 0.0;
        }
        let t = self.offset(theta);
        let l = self.length();
        if t < l {
            0.0
        } else if t < self.theta_star() - self.theta0 {
            FRAC_PI_2
        } else {
            -FRAC_PI_2
        }
    }

    /// Constant pieces `(a, b, value)` of the Borg phase on `[θ0, θ0 + 2π)`.
    pub fn xi_pieces(&self) -> Vec<(f64, f64, f64)> {
        if self.is_full() {
            return vec![];
        }
        let ts = self.theta_star();
        vec![(self.theta1, ts, FRAC_PI_2), (ts, self.theta0 + TAU, -FRAC_PI_2)]
    }
}

pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Complex matrix in JSON: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(a: &CMatrix) -> Self {
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| f(&a[(i, j)])).collect()).collect()
        };
        MatrixJson { re: rows(|z| z.re), im: rows(|z| z.im) }
    }
}

pub(crate) fn ser_mats<S: serde::Serializer>(v: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(MatrixJson::from))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_geometry() {
        let a = ArcSpec::new(FRAC_PI_2, 1.5 * PI).unwrap();
        assert!((a.theta_star() - TAU).abs() < 1e-15);
        assert!(a.contains(PI) && !a.contains(0.1));
        assert_eq!(a.xi_value(PI), 0.0);
        assert_eq!(a.xi_value(1.6 * PI), FRAC_PI_2);
        assert_eq!(a.xi_value(0.2), -FRAC_PI_2);
        assert!((a.depth_outside(0.0) - FRAC_PI_2).abs() < 1e-15);
        assert!((a.depth_outside(1.6 * PI) - 0.1 * PI).abs() < 1e-12);
        assert!((a.distance_to_jumps(0.05) - 0.05).abs() < 1e-12);
        assert!(ArcSpec::new(1.0, 0.5).is_err());
    }

    #[test]
    fn full_circle_is_flat() {
        let a = ArcSpec::full_circle();
        assert!(a.contains(3.0) && a.interior(0.0, 0.1));
        assert_eq!(a.xi_value(1.0), 0.0);
        assert!(a.xi_pieces().is_empty());
    }
}
