pub mod armax;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod identify;
pub mod imputer;
pub mod kernels;
pub mod linalg;
pub mod optim;
pub mod quadrature;

pub use error::{Error, Result};
