//! Batch Bayesian optimal experimental design via entropy-regularised
//! particle gradient flows.
//!
//! The library optimises the expected information gain (EIG) of a batch of
//! `m` experiments by evolving a *population* of candidate designs with
//! Langevin-type interacting-particle dynamics, instead of running pointwise
//! gradient ascent. Four flow variants are provided (joint chains, per-slot
//! mean-field ensembles with optional coordinate subsampling, and a shared
//! single-marginal ensemble with optional pairwise repulsion), together with
//! nested Monte Carlo EIG estimation, five benchmark observation models,
//! eight classical baselines, best-of-n design extraction and a small suite
//! of independent verification oracles used by the tests.
//!
//! Entry points:
//! - [`models::build_model`] constructs a benchmark model by name.
//! - [`flows::Flow`] runs one particle algorithm against an EIG oracle.
//! - [`report::run_experiment`] reproduces a full multi-method comparison
//!   from a flat `key = value` config file.
//! - The `boedflows` binary exposes `run`, `score` and `landscape`
//!   subcommands; the `examples/` directory has one runnable program per
//!   major capability.

// Validation deliberately writes `!(x > 0.0)` instead of `x <= 0.0` so that
// NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod constraint;
pub mod design;
pub mod eig;
pub mod error;
pub mod extract;
pub mod flows;
pub mod models;
pub mod report;
pub mod stream;
pub mod util;
pub mod verify;

pub use design::{DesignBatch, ParticleEnsemble};
pub use error::{Error, Result};
