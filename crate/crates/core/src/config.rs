//! Whole-run configuration and the per-component seed fan-out.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{DownstreamSpec, GeneratorSpec};
use crate::error::{GlpError, Result};
use crate::framing::MAX_CERTAIN;
use crate::pipeline::TrainConfig;
use crate::rng::derive;
use crate::transfer::DownstreamConfig;

/// A fixed certainty mask, or a cross-validated sweep over `0..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CertainRepr", into = "CertainRepr")]
pub enum CertainChoice {
    Fixed(u8),
    Sweep,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CertainRepr {
    Fixed(u8),
    Name(String),
}

impl TryFrom<CertainRepr> for CertainChoice {
    type Error = GlpError;
    fn try_from(r: CertainRepr) -> Result<Self> {
        match r {
            CertainRepr::Fixed(c) => CertainChoice::Fixed(c).checked(),
            CertainRepr::Name(s) => s.parse(),
        }
    }
}

impl From<CertainChoice> for CertainRepr {
    fn from(c: CertainChoice) -> Self {
        match c {
            CertainChoice::Fixed(c) => CertainRepr::Fixed(c),
            CertainChoice::Sweep => CertainRepr::Name("sweep".into()),
        }
    }
}

impl CertainChoice {
    fn checked(self) -> Result<Self> {
        match self {
            CertainChoice::Fixed(c) if c > MAX_CERTAIN => Err(GlpError::Config(format!("certain {c} outside 0..=5"))),
            ok => Ok(ok),
        }
    }
}

impl FromStr for CertainChoice {
    type Err = GlpError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "sweep" {
            return Ok(CertainChoice::Sweep);
        }
        let c: u8 = s.parse().map_err(|_| GlpError::Config(format!("certain must be 0..5 or \"sweep\", got {s:?}")))?;
        CertainChoice::Fixed(c).checked()
    }
}

impl fmt::Display for CertainChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertainChoice::Fixed(c) => write!(f, "{c}"),
            CertainChoice::Sweep => f.write_str("sweep"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; every component seed is derived from it.
    pub seed: u64,
    pub out: PathBuf,
    /// Pretext cohort CSV to use instead of generating one.
    pub pretext_csv: Option<PathBuf>,
    /// Episodic cohort CSV to use instead of generating one.
    pub episodic_csv: Option<PathBuf>,
    /// Worker threads for the training fan-out; 0 uses every core.
    pub jobs: usize,
    pub certain: CertainChoice,
    /// Pretext cohort generator.
    pub generator: GeneratorSpec,
    /// Episodic downstream cohort generator.
    pub downstream: DownstreamSpec,
    pub train: TrainConfig,
    /// Downstream classifier study.
    pub study: DownstreamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("glp-out"),
            pretext_csv: None,
            episodic_csv: None,
            jobs: 0,
            certain: CertainChoice::Fixed(0),
            generator: GeneratorSpec::default(),
            downstream: DownstreamSpec::default(),
            train: TrainConfig::default(),
            study: DownstreamConfig::default(),
        }
    }
}

/// Seeds handed to each stage of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSeeds {
    pub pretext_cohort: u64,
    pub downstream_cohort: u64,
    pub pretrain: u64,
    pub downstream_study: u64,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GlpError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| GlpError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.certain.checked()?;
        self.generator.validate()?;
        self.downstream.validate()?;
        self.train.validate()?;
        self.study.validate()
    }

    pub fn seeds(&self) -> ComponentSeeds {
        ComponentSeeds {
            pretext_cohort: derive(self.seed, "pretext-cohort", 0),
            downstream_cohort: derive(self.seed, "downstream-cohort", 0),
            pretrain: derive(self.seed, "pretrain", 0),
            downstream_study: derive(self.seed, "downstream-study", 0),
        }
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec { seed: self.seeds().pretext_cohort, ..self.generator.clone() }
    }

    pub fn downstream_spec(&self) -> DownstreamSpec {
        DownstreamSpec { seed: self.seeds().downstream_cohort, ..self.downstream.clone() }
    }

    /// Training settings with the pretrain seed and, for a fixed choice, the
    /// certain value filled in.
    pub fn train_config(&self) -> TrainConfig {
        let certain = match self.certain {
            CertainChoice::Fixed(c) => c,
            CertainChoice::Sweep => 0,
        };
        TrainConfig { certain, seed: self.seeds().pretrain, ..self.train.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_unknown_keys_fail() {
        let text = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), RunConfig::default());
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), RunConfig::default());
        assert!(RunConfig::from_json_str(r#"{"sed": 1}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"train": {"epochz": 1}}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"generator": {"seed": 1}}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"train": {"certain": 1}}"#).is_err());
    }

    #[test]
    fn certain_choice_forms() {
        let c = RunConfig::from_json_str(r#"{"certain": "sweep"}"#).unwrap();
        assert_eq!(c.certain, CertainChoice::Sweep);
        let c = RunConfig::from_json_str(r#"{"certain": 3}"#).unwrap();
        assert_eq!(c.certain, CertainChoice::Fixed(3));
        assert_eq!(c.train_config().certain, 3);
        assert!(RunConfig::from_json_str(r#"{"certain": 6}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"certain": "all"}"#).is_err());
        assert_eq!("sweep".parse::<CertainChoice>().unwrap().to_string(), "sweep");
        assert!("9".parse::<CertainChoice>().is_err());
    }

    #[test]
    fn component_seeds_are_distinct_and_stable() {
        let a = RunConfig { seed: 11, ..Default::default() }.seeds();
        let b = RunConfig { seed: 11, ..Default::default() }.seeds();
        assert_eq!(a, b);
        let all = [a.pretext_cohort, a.downstream_cohort, a.pretrain, a.downstream_study];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_ne!(a, RunConfig { seed: 12, ..Default::default() }.seeds());
    }
}
