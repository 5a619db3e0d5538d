//! D-vine pair-copula models for multivariate longitudinal outcomes of mixed
//! scale: count, continuous and semi-continuous.

pub mod bicop;
pub mod crosscop;
pub mod data;
pub mod dvine;
pub mod error;
pub mod joint;
pub mod marginals;
pub mod numerics;
pub mod predict;

pub use error::{Error, Result};
