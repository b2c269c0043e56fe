//! Time-varying Lévy-driven state-space and CARMA processes: coefficient
//! models, transition matrices, moving-average kernels and their limits,
//! time-varying spectra, stability and controllability checks, and path
//! simulation.

pub mod error;
pub mod function;
pub mod kernels;
pub mod levy;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod spectral;
mod par;
mod serde_util;
pub mod stability;
pub mod transition;

pub use error::{Error, Result};
pub use function::{MatrixFunction, ScalarFunction, Side};
pub use levy::LevyModel;
pub use model::{CarmaModel, Model, StateSpaceModel};
