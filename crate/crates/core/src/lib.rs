//! Unbiased Monte Carlo for killed diffusions, their spatial derivatives and
//! their killed densities.
//!
//! The crate simulates a reflection chain on a random time grid, attaches
//! Malliavin-type weights to each interval and combines them into unbiased
//! estimators of `E[f(X_T) 1{τ > T}]`, of its derivative in the start point
//! and of the derivative of the killed density.

pub mod calculus;
pub mod chain;
pub mod cli;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod model;
pub mod oracles;
pub mod renewal;
pub mod weights;

pub use error::{Error, Result};
