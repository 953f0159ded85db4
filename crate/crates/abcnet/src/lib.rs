//! Likelihood-free Bayesian inference for agent-based network simulators.
//!
//! The crate couples approximate Bayesian computation engines (rejection
//! sampling, top-quantile rejection, sequential Monte Carlo with and without
//! adaptive data-driven resampling weights) and a Bayesian synthetic
//! likelihood evaluator to seeded, deterministic simulators: a Gaussian
//! sampler, a toy fork-network pedestrian model, and a city-intersection
//! pedestrian model driven by real counter data.
//!
//! Entry points:
//! - [`config`] parses experiment configuration files into [`inference::ExperimentConfig`].
//! - [`inference`] runs the samplers and returns a [`inference::RunRecord`].
//! - [`posterior`] summarizes populations (means, credible intervals,
//!   prediction intervals, regression adjustment).
//! - [`persistence`] writes and replays run artifacts.

pub mod config;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod ingest;
pub mod kernels;
pub mod linalg;
pub mod network;
pub mod params;
pub mod persistence;
pub mod posterior;
pub mod rng;
pub mod summaries;

pub use error::{AbcError, Result};
