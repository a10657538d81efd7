//! Retractions on intersection manifolds of the form
//! `{R : A'R = b'e1^T, ||R_i||^2 = R_{i,1} for i in B}` computed with
//! alternating-projection-type methods, plus the instance builders, a
//! Riemannian BB-gradient optimizer and numerical verification tools.

pub mod error;
pub mod linalg;
pub mod manifold;
pub mod optimizer;
pub mod problems;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Mat, SchurPath, Vector};
pub use manifold::{angle_cosine, ConstraintResidual, IntersectionManifold, ProblemDims, TangentVector};
pub use solvers::{retract, retract_tol, RetractionConfig, RetractionKind, RetractionResult};
