//! Natural-gradient evolutionary optimization under the Fisher-Rao metric,
//! with an exact replicator-dynamics oracle on finite supports and an online
//! Bayesian inference driver for continuous observations.
//!
//! The crate is organized around a small set of modules:
//!
//! - [`families`]: parametric distributions (softmax-tabular and Gaussian)
//!   providing log-density, score, sampling, and closed-form Fisher matrices.
//! - [`natgrad`]: the optimizer engine — Monte Carlo loss gradients,
//!   empirical Fisher estimation, pseudo-inverse flow solves, Euler stepping.
//! - [`replicator`]: exact replicator dynamics and Bayes updates on finite
//!   supports, plus the deviation functional that measures how far a
//!   parameterized flow is from the replicator target.
//! - [`bayes`]: surprisal losses, Gaussian KL divergences, Wiener-process
//!   simulation, and streaming parameter estimation.
//! - [`bench`]: benchmark losses and the reference experiments.
//! - [`verify`]: the end-to-end verification checks behind `frngd verify`.

pub mod bayes;
pub mod bench;
pub mod cli;
pub mod error;
pub mod export;
pub mod families;
pub mod natgrad;
pub mod quad;
pub mod replicator;
pub mod rng;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
