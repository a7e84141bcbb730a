//! Training procedures and the validation protocol.
//!
//! Every method shares one loop: per epoch the frames are shuffled, grouped
//! by gap, cut into batches, and the batch order is shuffled. Stage-1 frames
//! all have gap 0, so Stage-2 training on gap-0 frames is the Stage-1
//! procedure, and hybrid training with no Stage-2 frames is supervised-only
//! training.

mod data;
mod train;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GlpError, Result};
use crate::framing::MAX_CERTAIN;
use crate::interp::InterpMethod;
use crate::net::AdamConfig;

pub use data::{prepare_parameter, FrameBank, PatientFrames};
pub use train::{
    evaluate_r2, predict_frames, train_hybrid, train_method, train_ssl_only, train_stage1, train_stage2,
    train_supervised_only, MethodOutcome, TrainOutcome,
};
pub use validate::{
    cross_validate, fold_partition, holdout_study, split_patients, sweep_certain, train_final_models, write_report_json,
    write_sweep_csv, FoldResult, HoldoutReport, ParameterHoldout, ParameterReport, PretrainReport, SweepRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ssl")]
    SslOnly,
    #[serde(rename = "supervised")]
    SupervisedOnly,
    #[serde(rename = "hybrid")]
    Hybrid,
    #[serde(rename = "two-stage")]
    TwoStage,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SslOnly, Method::SupervisedOnly, Method::Hybrid, Method::TwoStage];

    pub fn name(self) -> &'static str {
        match self {
            Method::SslOnly => "ssl",
            Method::SupervisedOnly => "supervised",
            Method::Hybrid => "hybrid",
            Method::TwoStage => "two-stage",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GlpError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GlpError::Config(format!("unknown method {s:?} (ssl|supervised|hybrid|two-stage)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub interp: InterpMethod,
    /// Minimum real months in a Stage-1 span. Chosen per run, not read
    /// from config.
    #[serde(skip)]
    pub certain: u8,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Only backpropagate through the last rollout pass.
    pub stop_gradient: bool,
    pub folds: usize,
    /// Fraction of patients in the training split.
    pub split_ratio: f64,
    /// Independent 80:20 splits, each with its own fold partition.
    pub repetitions: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::TwoStage,
            interp: InterpMethod::Pchip,
            certain: 0,
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            stop_gradient: false,
            folds: 5,
            split_ratio: 0.8,
            repetitions: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(GlpError::Config(m.into()));
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.folds < 2 {
            return fail("folds must be >= 2");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be >= 1");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return fail("split_ratio must lie in (0, 1)");
        }
        if self.certain > MAX_CERTAIN {
            return fail("certain must lie in 0..=5");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if !(a.epsilon > 0.0) {
            return fail("Adam epsilon must be positive");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
