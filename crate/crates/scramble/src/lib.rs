//! Numerical laboratory for information scrambling: out-of-time-order
//! correlators, Loschmidt echoes, random-matrix and SYK models, and the
//! Gaussian dynamics of coupled inverted oscillators.

pub mod analysis;
pub mod correlators;
pub mod ensembles;
pub mod error;
pub mod iho;
pub mod linalg;
pub mod models;

pub use error::{Error, Result};
