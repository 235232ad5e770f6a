//! Adaptive Markov chain Monte Carlo for graphical models.
//!
//! Models are directed acyclic graphs of scalar or vector nodes declared in a
//! small description language. Sampling runs block-wise random-walk
//! Metropolis within Gibbs, with the proposal shape and scale adapted on the
//! fly (AM covariance estimation, acceptance-rate scaling, Rao-Blackwellised
//! variants, delayed rejection).

pub mod adapt;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod modelang;
pub mod proposals;
pub mod sampler;
pub mod special;

pub mod cli;

pub use error::{Error, Result};
