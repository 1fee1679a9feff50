pub mod adjoint;
pub mod carleman_check;
pub mod error;
pub mod grid;
pub mod hum_control;
pub mod ks_model;
pub mod linalg;
pub mod nonlinear_control;
pub mod weights;

pub use error::{Error, Result};
