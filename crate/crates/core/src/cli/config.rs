use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::BaselineSpec;
use crate::curve::Scalarization;
use crate::error::{Error, Result};
use crate::kalman::KalmanConfig;
use crate::sgd::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        target_column: String,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
    Synthetic {
        n: usize,
        d: usize,
        true_weights: Vec<f64>,
        true_bias: f64,
        noise_std: f64,
        seed: u64,
    },
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    #[serde(default = "default_true")]
    pub standardize: bool,
    pub candidates: Vec<TrainConfig>,
    #[serde(default)]
    pub kalman: KalmanConfig,
    #[serde(default)]
    pub scalarization: Scalarization,
    #[serde(default = "BaselineSpec::defaults")]
    pub baselines: Vec<BaselineSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory relative dataset paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn config_error(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses JSON and range-checks every field. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            // serde names the offending key in backticks, e.g. "missing field `candidates`".
            let field = message
                .split('`')
                .nth(1)
                .map(str::to_owned)
                .unwrap_or_else(|| "<document>".into());
            config_error(field, message)
        })?;
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        match &self.dataset {
            DatasetSource::Csv {
                target_column,
                delimiter,
                ..
            } => {
                if target_column.is_empty() {
                    return Err(config_error("dataset.csv.target_column", "must not be empty"));
                }
                if !delimiter.is_ascii() {
                    return Err(config_error("dataset.csv.delimiter", "must be a single ASCII character"));
                }
            }
            DatasetSource::Synthetic {
                n,
                d,
                true_weights,
                noise_std,
                ..
            } => {
                if *n < 2 {
                    return Err(config_error("dataset.synthetic.n", "must be >= 2"));
                }
                if *d == 0 || true_weights.len() != *d {
                    return Err(config_error(
                        "dataset.synthetic.true_weights",
                        format!("needs exactly d = {d} entries (d >= 1)"),
                    ));
                }
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return Err(config_error("dataset.synthetic.noise_std", "must be finite and >= 0"));
                }
            }
        }
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(config_error(
                "split.test_fraction",
                format!("must lie in (0, 1), got {f}"),
            ));
        }
        if self.candidates.is_empty() {
            return Err(config_error("candidates", "at least one candidate is required"));
        }
        for (i, c) in self.candidates.iter().enumerate() {
            c.validate()
                .map_err(|e| config_error(format!("candidates[{i}]"), e.to_string()))?;
        }
        self.kalman
            .validate()
            .map_err(|e| config_error("kalman", e.to_string()))?;
        for (i, b) in self.baselines.iter().enumerate() {
            b.validate()
                .map_err(|e| config_error(format!("baselines[{i}]"), e.to_string()))?;
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(config_error("output_dir", "must not be empty"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, with `output_dir` excluded so
    /// the digest tracks inputs only.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn resolve_path(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }
}

/// Short digest of one candidate's training config.
pub fn train_config_digest(config: &TrainConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("train config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Reads and validates a config file; relative dataset paths resolve
/// against the file's directory.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    config.base_dir = Some(
        path.parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    );
    Ok(config)
}
