//! Bishop-Phelps-Bollobas correction constructions on finite `l_inf`-sums.

pub mod bilinear;
pub mod certify;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model_spaces;
pub mod moduli;
pub mod operators;
pub mod pipelines;
pub mod rng;

pub use error::{Error, Result};
