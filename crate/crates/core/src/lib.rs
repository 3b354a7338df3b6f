pub mod error;
pub mod grid;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod levy_basis;
pub mod kernels;
pub mod fourier;
pub mod simulate;
pub mod analytics;
pub mod lamperti;

pub use error::{Error, Result};
