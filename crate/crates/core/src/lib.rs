pub mod constants;
pub mod engine;
pub mod error;
pub mod fields;
pub mod filters;
pub mod interp;
pub mod kernel;
pub mod magnet;
pub mod quadrature;
pub mod specfun;
pub mod superconductor;
pub mod tomography;

pub use error::{Diagnostics, Error, Result, Warning};
