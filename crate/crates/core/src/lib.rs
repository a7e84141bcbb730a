//! Generalized laboratory progress (GLP) pretraining.
//!
//! A per-parameter recurrent model is pretrained on irregular longitudinal lab
//! series in two stages: supervised training on interpolated windows, then
//! self-supervised autoregressive rollouts toward the last real observation.
//! The six frozen models are then concatenated to produce transfer features
//! for an episodic downstream classification task.
//!
//! Module map:
//!
//! - [`cohort`]: synthetic cohorts and their CSV schemas
//! - [`interp`]: linear, PCHIP and barycentric gap filling
//! - [`framing`]: Stage-1 / Stage-2 window construction
//! - [`encoding`]: the five-channel per-month feature vector
//! - [`net`]: the LIBC encoder, regressor, manual backprop, Adam, weight files
//! - [`pipeline`]: training procedures and the validation protocol
//! - [`transfer`]: frozen-model features and the downstream study
//! - [`stats`]: R², Pearson, t-tests
//! - [`config`], [`study`]: the run config and the end-to-end study

// `!(x > 0.0)` style checks are used so NaN fails validation; kernels index fixed-size arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cohort;
pub mod config;
pub mod encoding;
pub mod error;
pub mod framing;
pub mod interp;
pub mod net;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod study;
pub mod transfer;

pub use cohort::{EpisodicRecord, Gender, LabParameter, LabSeries, Observation, Patient};
pub use error::{GlpError, Result};
pub use framing::{Frame, WINDOW};
pub use interp::InterpMethod;
pub use net::GlpModel;
