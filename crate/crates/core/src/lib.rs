//! Bivariate exchangeability models for randomised basket trials with a
//! binary toxicity endpoint and a continuous efficacy endpoint.
//!
//! The crate covers data generation, five analysis models (BHM, BiEXNEX,
//! E-BiEXNEX, IndEXNEX, SA), an adaptive Metropolis-within-Gibbs sampler,
//! Go/No-go decision rules and a replicated operating-characteristics harness.

pub mod datagen;
pub mod decisions;
pub mod error;
pub mod io;
pub mod mcmc;
pub mod models;
pub mod oc;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
