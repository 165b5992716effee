//! Deep joint source-channel coding over SVD-precoded MIMO channels.
//!
//! See the crate's `examples/` directory for one runnable walkthrough per
//! capability.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod config;
pub mod data;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod scheme;
pub mod train;

pub use error::{Error, Result};
