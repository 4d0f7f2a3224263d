//! One entry point over every model and engine.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{self, init_rng, ChainOptions};
use crate::icm;
use crate::masked::MaskedMatrix;
use crate::model::{
    HyperParams, InitStrategy, NmfState, NmtfState, Predict, VbNmfState, VbNmtfState,
};
use crate::np;
use crate::run::{Clamp, Schedule, StopRule, Trace};
use crate::vb::{self, VbOptions};

/// Relative size below which a factor column counts as switched off.
pub const ACTIVE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Nmf,
    Nmtf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Np,
    Gibbs,
    Icm,
    Vb,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::Nmf, Model::Nmtf];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Nmf => "nmf",
            Model::Nmtf => "nmtf",
        }
    }
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Np, Engine::Gibbs, Engine::Icm, Engine::Vb];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Np => "np",
            Engine::Gibbs => "gibbs",
            Engine::Icm => "icm",
            Engine::Vb => "vb",
        }
    }

    /// Iteration budget used when none is given.
    pub fn default_iterations(self) -> usize {
        match self {
            Engine::Vb => 500,
            _ => 1000,
        }
    }

    /// Whether the engine places a prior on the factors.
    pub fn is_bayesian(self) -> bool {
        self != Engine::Np
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nmf" => Ok(Model::Nmf),
            "nmtf" => Ok(Model::Nmtf),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "np" => Ok(Engine::Np),
            "gibbs" => Ok(Engine::Gibbs),
            "icm" => Ok(Engine::Icm),
            "vb" => Ok(Engine::Vb),
            other => Err(Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

/// Everything needed to fit one model to one matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: Model,
    pub engine: Engine,
    pub hyper: HyperParams,
    pub init: InitStrategy,
    pub iterations: usize,
    /// Sampling engines only; half the iterations when absent.
    pub burn_in: Option<usize>,
    pub thin: usize,
    /// Relative training-MSE change that stops NP and VB early.
    pub tolerance: Option<f64>,
    pub seed: u64,
    /// VB only: evaluate the ELBO every this many sweeps, 0 to skip it.
    pub elbo_every: usize,
}

impl FitConfig {
    pub fn new(model: Model, engine: Engine, hyper: HyperParams, seed: u64) -> Self {
        Self {
            model,
            engine,
            hyper,
            init: InitStrategy::RandomDraw,
            iterations: engine.default_iterations(),
            burn_in: None,
            thin: 2,
            tolerance: None,
            seed,
            elbo_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.engine == Engine::Np && self.hyper.ard {
            return Err(Error::Config(
                "ARD is a prior and the np engine has none".into(),
            ));
        }
        if self.model == Model::Nmf && self.init == InitStrategy::KMeans {
            return Err(Error::Config(
                "k-means initialisation needs the nmtf model".into(),
            ));
        }
        if matches!(self.engine, Engine::Gibbs | Engine::Icm) {
            self.schedule().validate()?;
        } else {
            self.stop_rule().validate()?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        let default = Schedule::with_defaults(self.iterations);
        Schedule {
            iterations: self.iterations,
            burn_in: self.burn_in.unwrap_or(default.burn_in),
            thin: self.thin,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        match self.tolerance {
            Some(t) => StopRule::with_tolerance(self.iterations, t, StopRule::default().window),
            None => StopRule::fixed(self.iterations),
        }
    }

    fn chain(&self) -> ChainOptions {
        ChainOptions {
            schedule: self.schedule(),
            init: self.init,
            seed: self.seed,
            clamp: Clamp::default(),
        }
    }

    fn vb(&self) -> VbOptions {
        VbOptions {
            init: self.init,
            elbo_every: self.elbo_every,
            ..VbOptions::new(self.stop_rule(), self.seed)
        }
    }
}

/// A fitted model. Sampling engines report the mean of their retained draws.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Fitted {
    Nmf(NmfState),
    Nmtf(NmtfState),
    VbNmf(VbNmfState),
    VbNmtf(VbNmtfState),
}

impl Predict for Fitted {
    fn predict(&self) -> Array2<f64> {
        match self {
            Fitted::Nmf(s) => s.predict(),
            Fitted::Nmtf(s) => s.predict(),
            Fitted::VbNmf(s) => s.predict(),
            Fitted::VbNmtf(s) => s.predict(),
        }
    }
}

impl Fitted {
    pub fn model(&self) -> Model {
        match self {
            Fitted::Nmf(_) | Fitted::VbNmf(_) => Model::Nmf,
            Fitted::Nmtf(_) | Fitted::VbNmtf(_) => Model::Nmtf,
        }
    }

    /// Point values (or expectations) of the row factor, `U` or `F`.
    pub fn row_factor(&self) -> &Array2<f64> {
        match self {
            Fitted::Nmf(s) => &s.u,
            Fitted::Nmtf(s) => &s.f,
            Fitted::VbNmf(s) => &s.u.mean,
            Fitted::VbNmtf(s) => &s.f.mean,
        }
    }

    /// Number of row-factor columns whose mean exceeds
    /// [`ACTIVE_THRESHOLD`] times the largest column mean.
    pub fn active_factors(&self) -> usize {
        active_columns(self.row_factor())
    }
}

pub(crate) fn active_columns(m: &Array2<f64>) -> usize {
    let means: Vec<f64> = m
        .columns()
        .into_iter()
        .map(|c| c.mean().unwrap_or(0.0))
        .collect();
    let max = means.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    means
        .iter()
        .filter(|&&x| x > ACTIVE_THRESHOLD * max)
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub fitted: Fitted,
    /// Reconstruction used for prediction; for the sampling engines this is
    /// the average over retained draws, not the product of averaged factors.
    pub prediction: Array2<f64>,
    pub trace: Trace,
}

impl FitOutput {
    pub fn train_mse(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.train_mse)
    }
}

/// Fits `config.model` to `data` with `config.engine`.
pub fn fit(data: &MaskedMatrix, config: &FitConfig) -> Result<FitOutput> {
    config.validate()?;
    let hyper = &config.hyper;
    let (fitted, prediction, trace) = match (config.model, config.engine) {
        (Model::Nmf, Engine::Np) => {
            let (s, t) = np::run_nmf(
                data,
                hyper,
                config.init,
                config.stop_rule(),
                &mut init_rng(config.seed),
            )?;
            {
                let f = Fitted::Nmf(s);
                let p = f.predict();
                (f, p, t)
            }
        }
        (Model::Nmtf, Engine::Np) => {
            let (s, t) = np::run_nmtf(
                data,
                hyper,
                config.init,
                config.stop_rule(),
                &mut init_rng(config.seed),
            )?;
            {
                let f = Fitted::Nmtf(s);
                let p = f.predict();
                (f, p, t)
            }
        }
        (Model::Nmf, Engine::Gibbs) => {
            let (e, t) = gibbs::run_nmf(data, hyper, &config.chain())?;
            (Fitted::Nmf(e.mean), e.prediction, t)
        }
        (Model::Nmtf, Engine::Gibbs) => {
            let (e, t) = gibbs::run_nmtf(data, hyper, &config.chain())?;
            (Fitted::Nmtf(e.mean), e.prediction, t)
        }
        (Model::Nmf, Engine::Icm) => {
            let (e, t) = icm::run_nmf(data, hyper, &config.chain())?;
            (Fitted::Nmf(e.mean), e.prediction, t)
        }
        (Model::Nmtf, Engine::Icm) => {
            let (e, t) = icm::run_nmtf(data, hyper, &config.chain())?;
            (Fitted::Nmtf(e.mean), e.prediction, t)
        }
        (Model::Nmf, Engine::Vb) => {
            let (s, t) = vb::run_nmf(data, hyper, &config.vb())?;
            {
                let f = Fitted::VbNmf(s);
                let p = f.predict();
                (f, p, t)
            }
        }
        (Model::Nmtf, Engine::Vb) => {
            let (s, t) = vb::run_nmtf(data, hyper, &config.vb())?;
            {
                let f = Fitted::VbNmtf(s);
                let p = f.predict();
                (f, p, t)
            }
        }
    };
    Ok(FitOutput {
        fitted,
        prediction,
        trace,
    })
}
