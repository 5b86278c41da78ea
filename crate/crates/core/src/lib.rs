pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fock_oracle;
pub mod kernel;
pub mod quasifree;
pub mod records;

pub use error::{Error, Result};
pub use kernel::{InverseTemperature, ModelParams, ModelSpec};
pub use num_complex::Complex64 as C64;
pub use quasifree::Covariance;
pub use records::{RunRecord, Value};
