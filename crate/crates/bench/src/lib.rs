//! Fixtures shared by the benchmarks.

use std::f64::consts::{FRAC_PI_2, PI};

use cmv_core::linalg::identity;
use cmv_core::{borg_sequence, VerblunskySequence};

/// Borg sequence on the arc `[π/2, 3π/2]` with `γ = I`.
pub fn half_arc_borg(m: usize) -> VerblunskySequence {
    borg_sequence(FRAC_PI_2, 1.5 * PI, &identity(m)).expect("valid arc")
}
