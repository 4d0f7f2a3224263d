//! Optional TOML configuration. Flags override it; it overrides defaults.

use std::path::{Path, PathBuf};

use bnmf::experiments::ArdMode;
use bnmf::{Engine, InitStrategy, Model};
use serde::Deserialize;

use crate::error::CliError;
use crate::krange::parse_k_list;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<Model>,
    pub engine: Option<Engine>,
    pub engines: Option<Vec<Engine>>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    /// `true`/`false` for fit; `"on"`, `"off"` or `"both"` for experiments.
    pub ard: Option<ArdSetting>,
    pub lambda: Option<f64>,
    pub alpha_tau: Option<f64>,
    pub beta_tau: Option<f64>,
    pub alpha0: Option<f64>,
    pub beta0: Option<f64>,
    pub init: Option<InitStrategy>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub experiment: ExperimentFileConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ArdSetting {
    Flag(bool),
    Mode(ArdMode),
}

impl ArdSetting {
    pub fn as_flag(self) -> Result<bool, CliError> {
        match self {
            ArdSetting::Flag(b) => Ok(b),
            ArdSetting::Mode(ArdMode::On) => Ok(true),
            ArdSetting::Mode(ArdMode::Off) => Ok(false),
            ArdSetting::Mode(ArdMode::Both) => Err(CliError::user(
                "`ard = \"both\"` only applies to experiments",
            )),
        }
    }

    pub fn as_mode(self) -> ArdMode {
        match self {
            ArdSetting::Flag(true) => ArdMode::On,
            ArdSetting::Flag(false) => ArdMode::Off,
            ArdSetting::Mode(m) => m,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    pub missing: Option<String>,
    pub header: Option<bool>,
    pub undo_natural_log: Option<bool>,
    pub cap: Option<f64>,
    pub drop_rows_with_fewer_than: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub factor_rate: Option<f64>,
    pub noise_variance: Option<f64>,
    pub nsr: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFileConfig {
    pub repeats: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub splits: Option<usize>,
    pub test_fraction: Option<f64>,
    pub fractions: Option<Vec<f64>>,
    pub k_values: Option<KValues>,
    pub folds: Option<usize>,
    pub inner_folds: Option<usize>,
    pub ard_k: Option<usize>,
}

/// Either an explicit array or a list string such as `"1..10"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum KValues {
    List(Vec<usize>),
    Spec(String),
}

impl KValues {
    pub fn resolve(&self) -> Result<Vec<usize>, CliError> {
        match self {
            KValues::List(v) if v.is_empty() || v.contains(&0) => {
                Err(CliError::user("k_values must be positive and nonempty"))
            }
            KValues::List(v) => Ok(v.clone()),
            KValues::Spec(s) => parse_k_list(s).map_err(|e| CliError::user(e.to_string())),
        }
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::user(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
