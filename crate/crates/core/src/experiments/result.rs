//! Result tables produced by the experiment protocols.

use serde::{Deserialize, Serialize};

use crate::fit::{Engine, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Convergence,
    Noise,
    Sparsity,
    Cv,
    ModelSelect,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Noise => "noise",
            ExperimentKind::Sparsity => "sparsity",
            ExperimentKind::Cv => "cv",
            ExperimentKind::ModelSelect => "model-select",
        }
    }

    /// Column name under which the setting value is written.
    pub fn setting_name(self) -> &'static str {
        match self {
            ExperimentKind::Noise => "nsr",
            ExperimentKind::Sparsity => "missing_fraction",
            ExperimentKind::ModelSelect => "k",
            ExperimentKind::Convergence | ExperimentKind::Cv => "setting",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            ExperimentKind::Convergence => 1,
            ExperimentKind::Noise => 2,
            ExperimentKind::Sparsity => 3,
            ExperimentKind::Cv => 4,
            ExperimentKind::ModelSelect => 5,
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "convergence" => Ok(Self::Convergence),
            "noise" => Ok(Self::Noise),
            "sparsity" => Ok(Self::Sparsity),
            "cv" => Ok(Self::Cv),
            "model-select" | "model_select" => Ok(Self::ModelSelect),
            other => Err(crate::error::Error::Config(format!(
                "unknown experiment `{other}`"
            ))),
        }
    }
}

/// One fitted model evaluated on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub model: Model,
    pub engine: Engine,
    pub ard: bool,
    /// Noise level, missing fraction or K, depending on the experiment.
    pub setting: Option<f64>,
    /// Fold, split or repeat index.
    pub fold: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub iterations: usize,
    pub chosen_k: Option<usize>,
    pub active_factors: Option<usize>,
    /// Wall-clock fitting time; excluded from the deterministic tables.
    #[serde(skip)]
    pub seconds: f64,
}

/// Per-iteration training error averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub model: Model,
    pub engine: Engine,
    pub ard: bool,
    pub train_mse: Vec<f64>,
    #[serde(skip)]
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub rows: Vec<ExperimentRow>,
    pub curves: Vec<ConvergenceCurve>,
}

impl ExperimentResult {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            rows: Vec::new(),
            curves: Vec::new(),
        }
    }

    /// Rows for one engine and ARD flag, optionally at one setting.
    pub fn select(
        &self,
        engine: Engine,
        ard: bool,
        setting: Option<f64>,
    ) -> impl Iterator<Item = &ExperimentRow> {
        self.rows.iter().filter(move |r| {
            r.engine == engine && r.ard == ard && (setting.is_none() || r.setting == setting)
        })
    }

    /// Mean test MSE over the selected rows.
    pub fn mean_test_mse(&self, engine: Engine, ard: bool, setting: Option<f64>) -> Option<f64> {
        mean(self.select(engine, ard, setting).filter_map(|r| r.test_mse))
    }

    pub fn mean_train_mse(&self, engine: Engine, ard: bool, setting: Option<f64>) -> Option<f64> {
        mean(self.select(engine, ard, setting).map(|r| r.train_mse))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}
