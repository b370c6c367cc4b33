//! Command-line front end: dataset generation, training, evaluation and
//! a one-shot benchmark.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod exit;
pub mod report;

pub use commands::{bench, eval, gen, train, RunSpec, Source};
pub use config::ExperimentConfig;
