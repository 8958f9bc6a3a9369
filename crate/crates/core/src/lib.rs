//! Analytic offloading metrics, caching-density optimizers and a Monte-Carlo
//! oracle for cache-enabled D2D networks whose user groups carry trust biases.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod model;
pub mod numerics;
pub mod opt;
pub mod sim;

pub use error::{Error, Result};
