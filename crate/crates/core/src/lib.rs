//! Bayesian fault-detection models and prospect-theory decision analysis.
//!
//! The pipeline: simulate or load fault-count data, fit a Poisson (M1) or
//! zero-inflated multilevel Poisson (M2) regression by MCMC, compare models by
//! PSIS-LOO and WAIC, derive posterior-predictive fault distributions, and
//! turn them into cumulative-prospect-theory utilities for decision scenarios.

pub mod compare;
pub mod cpt;
pub mod distributions;
pub mod error;
pub mod io;
pub mod model;
pub mod posterior;
pub mod sampler;
pub mod scenarios;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
