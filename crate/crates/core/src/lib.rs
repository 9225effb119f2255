//! Strong approximation of SDEs whose drift jumps across a hypersurface.
//!
//! The crate provides the quasi-Milstein scheme, a transformation that
//! removes the drift discontinuity, and a Monte Carlo harness measuring
//! empirical `L_p` error rates against a fine-grid reference.

pub mod brownian;
pub mod coefficients;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod schemes;
pub mod transform;

pub use brownian::{generate_fine_path, CoarseDrivers, PathBundle};
pub use coefficients::{registry, Coefficients, MatrixField, SdeProblem, VectorField};
pub use error::{Error, Result};
pub use geometry::{HypersurfaceDescriptor, Side};
pub use schemes::{Scheme, Trajectory};
pub use transform::{TransformSettings, TransformedProblem};
