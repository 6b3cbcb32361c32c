//! Pre-training carbon estimates for large model training runs.
//!
//! Throughput over accumulated GPU-time is modelled as `f(t) = ln(1 + αt)`
//! (TFLOP per GPU-second). Integrating it gives the compute delivered after
//! `T` GPU-seconds; inverting that integral turns a compute budget into
//! GPU-time, which then feeds the operational and embodied carbon equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod calibration;
pub mod cli;
pub mod devices;
pub mod emissions;
pub mod error;
pub mod pipeline;
pub mod throughput;
pub mod units;

pub use error::{Error, Result};
