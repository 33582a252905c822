//! Loop-group construction of Willmore surfaces in spheres.

pub mod error;
pub mod linalg;
pub mod factorization;
pub mod loops;
pub mod potentials;
pub mod frame;
pub mod reference;
pub mod surface;
pub mod homogeneous;
pub mod wu;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, RMat, RVec, C64};
pub use factorization::{Cell, FactorizationReport};
pub use loops::{LoopClass, TwistedLoop};
pub use potentials::{Potential, PotentialKind, RationalExpr};
