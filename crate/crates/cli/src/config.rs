//! Experiment configuration.
//!
//! A config is one JSON document. Every section has defaults, so `{}` is a
//! valid config. Unknown keys are rejected and every error names the
//! dotted path of the field that caused it.

use std::fmt;
use std::path::{Path, PathBuf};

use crpo::optimizer::TrainConfig;
use crpo::types::{ObservationChannel, RewardConfig};
use crpo::world::WorldConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable that replaces the configured output root.
pub const OUTPUT_DIR_ENV: &str = "CRPO_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_pairs: usize,
    pub channels: Vec<ObservationChannel>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_pairs: 500,
            channels: vec![ObservationChannel::FullVideo],
        }
    }
}

/// Which reward coefficient a sweep varies. `lambda` sets both the dynamic
/// and the static CRR weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    WAug,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::WAug => "w_aug",
        }
    }

    /// `reward` with this parameter set to `value`.
    pub fn apply(self, reward: &RewardConfig, value: f64) -> RewardConfig {
        let mut out = *reward;
        match self {
            SweepParam::Lambda => {
                out.lambda_d = value;
                out.lambda_s = value;
            }
            SweepParam::WAug => out.w_aug = value,
        }
        out
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            output_dir: PathBuf::from("runs"),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a config document. `origin` only labels errors.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                field: if path == "." {
                    origin.display().to_string()
                } else {
                    path
                },
                reason: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.world.validate("world")?;
        self.reward.validate("reward")?;
        self.train.validate("train")?;
        if self.eval.n_pairs == 0 {
            return Err(CliError::config("eval.n_pairs", "must be at least 1"));
        }
        if self.eval.channels.is_empty() {
            return Err(CliError::config(
                "eval.channels",
                "must list at least one channel",
            ));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(CliError::config("output_dir", "must not be empty"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(CliError::config("sweep.values", "must not be empty"));
            }
            for (i, v) in sweep.values.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(CliError::config(
                        format!("sweep.values[{i}]"),
                        format!("{v} is outside [0, inf)"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The output root: the environment override if set, else `output_dir`.
    pub fn output_root(&self) -> PathBuf {
        output_root(Some(&self.output_dir))
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in
    /// the source file do not change the hash. The output location is left
    /// out: moving a run does not make it a different experiment.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&cfg).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

/// Resolves the output root from the environment, a configured directory,
/// or the `runs` default, in that order.
pub fn output_root(configured: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("runs")),
    }
}
