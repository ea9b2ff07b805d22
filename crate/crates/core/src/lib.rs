//! Natural-gradient architecture search over categorical spaces.
//!
//! A search space is a product of categorical choices. Each regularization
//! coefficient ε gets its own factorized categorical distribution; all of
//! them are updated from one shared batch of samples drawn from their
//! uniform mixture, with likelihood ratios correcting for the proposal.
//!
//! Modules, bottom-up:
//! - [`model`]: spaces, distributions, sampling, Fisher geometry
//! - [`regularizer`]: complexity costs and their natural gradient
//! - [`utility`]: quantile utilities and mixture likelihood ratios
//! - [`optimizer`]: single and importance-sampled updates, projection
//! - [`objectives`]: evaluators (table objectives, toy weight-sharing network)
//! - [`runner`]: search procedures, config, logging and replay
//! - [`diagnostics`]: gradient self-checks

pub mod diagnostics;
pub mod error;
pub mod model;
pub mod objectives;
pub mod optimizer;
pub mod regularizer;
pub mod rng;
pub mod runner;
pub mod utility;

pub use error::{Error, Result};
