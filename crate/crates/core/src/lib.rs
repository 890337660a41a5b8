//! Matrix-valued CMV operators: truncations, Weyl–Titchmarsh functions,
//! trace formulas and the Borg-type reflectionless family.

pub mod analysis;
pub mod cmv;
pub mod error;
pub mod herglotz;
pub mod linalg;
pub mod verblunsky;
pub mod weyl;

pub use analysis::{ArcSpec, BorgReport, ReflectionlessReport, SpectralDecomposition, TraceReport};
pub use cmv::{CmvTruncation, Op};
pub use error::{CmvError, Result};
pub use herglotz::{CaratheodoryEval, RadialSchedule, SchurEval, ThetaGrid, XiProfile};
pub use linalg::{c, CMatrix, EigenPairs, Tolerances, C64};
pub use verblunsky::{borg_sequence, conjugate_sequence, Extension, VerblunskySequence};
pub use weyl::{SchurOptions, SchurPair};
