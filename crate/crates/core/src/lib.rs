//! Numerics for radially symmetric gradient k-Yamabe solitons on R^n:
//! sigma_k algebra, the planar phase system, local existence near the
//! origin and near A, orbit integration and classification, and profile
//! reconstruction.

// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod field;
pub mod local;
pub mod orbit;
pub mod phase;
pub mod profile;
pub mod sigma;

pub use error::{Error, Result};
pub use field::{LinearField, Mat2, VectorField};
pub use local::{picard_solve, picard_solve_at_a, LocalSolution, PicardConfig};
pub use orbit::{classify_orbit, integrate, OrbitClass, OrbitKind, OrbitTrace};
pub use phase::{make_params, Chart, CriticalPoint, PhaseState, SolitonParams};
pub use profile::{reconstruct_u, ProfileRow, ProfileTable};
pub use sigma::{EigenList, RadialEigenPair};
