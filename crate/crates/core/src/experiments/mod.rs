//! Benchmark protocols: convergence, noise, sparsity, nested cross-validation
//! and model selection.
//!
//! Every protocol is a pure function of its configuration. Each fit gets its
//! own seed derived from the base seed and the fit's position in the grid, and
//! fits run in parallel with results collected in grid order, so the tables do
//! not depend on the number of threads.

pub mod result;
pub mod splits;
pub mod synthetic;

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{derive_seed, SeededRng};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit, Engine, FitConfig, Model};
use crate::masked::MaskedMatrix;
use crate::model::{HyperParams, InitStrategy};

pub use result::{ConvergenceCurve, ExperimentKind, ExperimentResult, ExperimentRow};
pub use splits::{k_folds, split_by_mask, split_train_test, MAX_SPLIT_ATTEMPTS};
pub use synthetic::{
    add_noise, generate_synthetic, generate_truth, std_dev, Noise, Synthetic, SyntheticSpec,
};

/// Which ARD settings to run for the Bayesian engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArdMode {
    Off,
    On,
    Both,
}

impl ArdMode {
    fn flags(self) -> &'static [bool] {
        match self {
            ArdMode::Off => &[false],
            ArdMode::On => &[true],
            ArdMode::Both => &[false, true],
        }
    }
}

impl std::str::FromStr for ArdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" | "false" => Ok(ArdMode::Off),
            "on" | "true" => Ok(ArdMode::On),
            "both" => Ok(ArdMode::Both),
            other => Err(Error::Config(format!(
                "unknown ARD mode `{other}` (expected on, off or both)"
            ))),
        }
    }
}

/// Settings shared by every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Model,
    pub engines: Vec<Engine>,
    /// Priors and the default dimensionality; the `ard` field is ignored in favour of `ard_mode`.
    pub hyper: HyperParams,
    pub ard_mode: ArdMode,
    pub init: InitStrategy,
    /// Overrides every engine's default iteration budget.
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub tolerance: Option<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    /// All four engines, no ARD, and the rank of the default synthetic data.
    pub fn new(model: Model, seed: u64) -> Self {
        let hyper = match model {
            Model::Nmf => HyperParams::with_rank(10, 10),
            Model::Nmtf => HyperParams::with_rank(5, 5),
        };
        Self {
            model,
            engines: Engine::ALL.to_vec(),
            hyper,
            ard_mode: ArdMode::Off,
            init: InitStrategy::RandomDraw,
            iterations: None,
            burn_in: None,
            thin: 2,
            tolerance: None,
            seed,
        }
    }

    /// (engine, ard) pairs to run; the np engine has no prior and only runs without ARD.
    pub fn variants(&self) -> Vec<(Engine, bool)> {
        let mut out = Vec::new();
        for &e in &self.engines {
            for &ard in self.ard_mode.flags() {
                if !(ard && !e.is_bayesian()) {
                    out.push((e, ard));
                }
            }
        }
        out
    }

    fn fit_config(&self, engine: Engine, ard: bool, k: Option<usize>, seed: u64) -> FitConfig {
        let mut hyper = HyperParams { ard, ..self.hyper };
        if let Some(k) = k {
            hyper.k = k;
            hyper.l = k;
        }
        let mut cfg = FitConfig::new(self.model, engine, hyper, seed);
        cfg.init = self.init;
        cfg.iterations = self.iterations.unwrap_or(engine.default_iterations());
        cfg.burn_in = self.burn_in;
        cfg.thin = self.thin;
        cfg.tolerance = self.tolerance;
        cfg.elbo_every = 0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.engines.is_empty() {
            return Err(invalid("engines", "at least one engine is required"));
        }
        for (e, ard) in self.variants() {
            self.fit_config(e, ard, None, 0).validate()?;
        }
        Ok(())
    }

    fn job_seed(&self, kind: ExperimentKind, path: &[u64]) -> u64 {
        let mut full = vec![kind.tag()];
        full.extend_from_slice(path);
        derive_seed(self.seed, &full)
    }
}

fn engine_index(e: Engine) -> u64 {
    Engine::ALL.iter().position(|&x| x == e).unwrap() as u64
}

fn rng(seed: u64) -> SeededRng {
    SeededRng::new(seed, 0)
}

struct Evaluation {
    train_mse: f64,
    test_mse: Option<f64>,
    iterations: usize,
    active_factors: usize,
    seconds: f64,
    trace: Vec<f64>,
    trace_seconds: Vec<f64>,
}

fn evaluate(
    cfg: &FitConfig,
    train: &MaskedMatrix,
    test: Option<&MaskedMatrix>,
) -> Result<Evaluation> {
    let start = Instant::now();
    let out = fit(train, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let test_mse = test.map(|t| t.mse(out.prediction.view())).transpose()?;
    Ok(Evaluation {
        train_mse: out.train_mse(),
        test_mse,
        iterations: out.trace.iterations(),
        active_factors: out.fitted.active_factors(),
        seconds,
        trace: out.trace.train_mse(),
        trace_seconds: out.trace.points.iter().map(|p| p.seconds).collect(),
    })
}

struct RowSpec {
    engine: Engine,
    ard: bool,
    setting: Option<f64>,
    fold: usize,
}

fn row(model: Model, spec: &RowSpec, ev: &Evaluation, chosen_k: Option<usize>) -> ExperimentRow {
    ExperimentRow {
        model,
        engine: spec.engine,
        ard: spec.ard,
        setting: spec.setting,
        fold: spec.fold,
        train_mse: ev.train_mse,
        test_mse: ev.test_mse,
        iterations: ev.iterations,
        chosen_k,
        active_factors: spec.ard.then_some(ev.active_factors),
        seconds: ev.seconds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub repeats: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { repeats: 20 }
    }
}

/// Fits every engine `repeats` times on all of `data` and averages the
/// training-error traces.
pub fn convergence_experiment(
    data: &MaskedMatrix,
    cfg: &ExperimentConfig,
    opts: &ConvergenceOptions,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if opts.repeats == 0 {
        return Err(invalid("repeats", "must be at least 1"));
    }
    let kind = ExperimentKind::Convergence;
    let jobs: Vec<RowSpec> = cfg
        .variants()
        .into_iter()
        .flat_map(|(engine, ard)| {
            (0..opts.repeats).map(move |fold| RowSpec {
                engine,
                ard,
                setting: None,
                fold,
            })
        })
        .collect();
    let evals = jobs
        .par_iter()
        .map(|j| {
            let seed = cfg.job_seed(kind, &[j.fold as u64, engine_index(j.engine), j.ard as u64]);
            evaluate(&cfg.fit_config(j.engine, j.ard, None, seed), data, None)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut result = ExperimentResult::new(kind);
    for (j, ev) in jobs.iter().zip(&evals) {
        result.rows.push(row(cfg.model, j, ev, None));
    }
    for (v, chunk) in cfg.variants().into_iter().zip(evals.chunks(opts.repeats)) {
        let len = chunk.iter().map(|e| e.trace.len()).min().unwrap_or(0);
        let n = chunk.len() as f64;
        let avg = |f: &dyn Fn(&Evaluation) -> &Vec<f64>| -> Vec<f64> {
            (0..len)
                .map(|t| chunk.iter().map(|e| f(e)[t]).sum::<f64>() / n)
                .collect()
        };
        result.curves.push(ConvergenceCurve {
            model: cfg.model,
            engine: v.0,
            ard: v.1,
            train_mse: avg(&|e| &e.trace),
            seconds: avg(&|e| &e.trace_seconds),
        });
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseOptions {
    /// Shape of the noise-free truth; its noise setting is replaced by each level in turn.
    pub synthetic: SyntheticSpec,
    /// Noise-to-signal ratios.
    pub levels: Vec<f64>,
    /// Random held-out splits per level.
    pub splits: usize,
    pub test_fraction: f64,
}

impl NoiseOptions {
    pub fn new(synthetic: SyntheticSpec) -> Self {
        Self {
            synthetic,
            levels: vec![0.0, 0.1, 0.2, 0.5, 1.0],
            splits: 1,
            test_fraction: 0.1,
        }
    }
}

/// Predictive error on held-out cells as the noise level grows.
///
/// One truth is drawn from `synthetic.seed`; each level adds its own noise
/// to it.
pub fn noise_test(cfg: &ExperimentConfig, opts: &NoiseOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    if opts.splits == 0 {
        return Err(invalid("splits", "must be at least 1"));
    }
    let kind = ExperimentKind::Noise;
    let truth = generate_truth(&opts.synthetic, &mut rng(opts.synthetic.seed))?;
    let mut datasets = Vec::with_capacity(opts.levels.len());
    for (li, &level) in opts.levels.iter().enumerate() {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(invalid(
                "levels",
                format!("noise levels must be nonnegative, got {level}"),
            ));
        }
        let noisy = add_noise(
            &truth,
            Noise::Nsr(level),
            &mut rng(derive_seed(opts.synthetic.seed, &[li as u64 + 1])),
        )?;
        let mut splits = Vec::with_capacity(opts.splits);
        for s in 0..opts.splits {
            let seed = cfg.job_seed(kind, &[0, li as u64, s as u64]);
            splits.push(split_train_test(
                &noisy.data,
                opts.test_fraction,
                &mut rng(seed),
            )?);
        }
        datasets.push(splits);
    }
    let levels: Vec<Option<f64>> = opts.levels.iter().map(|&l| Some(l)).collect();
    held_out_grid(cfg, kind, &levels, &datasets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityOptions {
    /// Fractions of the observed cells held out for testing.
    pub fractions: Vec<f64>,
    pub splits: usize,
}

impl Default for SparsityOptions {
    fn default() -> Self {
        Self {
            fractions: (1..=9).map(|i| i as f64 / 10.0).collect(),
            splits: 10,
        }
    }
}

/// Predictive error as the fraction of missing cells grows.
pub fn sparsity_test(
    data: &MaskedMatrix,
    cfg: &ExperimentConfig,
    opts: &SparsityOptions,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if opts.splits == 0 {
        return Err(invalid("splits", "must be at least 1"));
    }
    let kind = ExperimentKind::Sparsity;
    let mut datasets = Vec::with_capacity(opts.fractions.len());
    for (fi, &fraction) in opts.fractions.iter().enumerate() {
        let mut splits = Vec::with_capacity(opts.splits);
        for s in 0..opts.splits {
            let seed = cfg.job_seed(kind, &[0, fi as u64, s as u64]);
            splits.push(split_train_test(data, fraction, &mut rng(seed))?);
        }
        datasets.push(splits);
    }
    let settings: Vec<Option<f64>> = opts.fractions.iter().map(|&f| Some(f)).collect();
    held_out_grid(cfg, kind, &settings, &datasets)
}

// Fits every variant on every (setting, split) pair.
fn held_out_grid(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    settings: &[Option<f64>],
    datasets: &[Vec<(MaskedMatrix, MaskedMatrix)>],
) -> Result<ExperimentResult> {
    let mut jobs = Vec::new();
    for (si, (&setting, splits)) in settings.iter().zip(datasets).enumerate() {
        for fold in 0..splits.len() {
            for (engine, ard) in cfg.variants() {
                jobs.push((
                    si,
                    RowSpec {
                        engine,
                        ard,
                        setting,
                        fold,
                    },
                ));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(si, j)| {
            let seed = cfg.job_seed(
                kind,
                &[
                    1,
                    *si as u64,
                    j.fold as u64,
                    engine_index(j.engine),
                    j.ard as u64,
                ],
            );
            let (train, test) = &datasets[*si][j.fold];
            let ev = evaluate(
                &cfg.fit_config(j.engine, j.ard, None, seed),
                train,
                Some(test),
            )?;
            Ok(row(cfg.model, j, &ev, None))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        kind,
        rows,
        curves: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Candidate dimensionalities; the tri-factorisation uses `L = K`.
    pub k_grid: Vec<usize>,
    pub outer_folds: usize,
    pub inner_folds: usize,
    /// Dimensionality used by ARD runs instead of the inner search.
    pub ard_k: Option<usize>,
}

impl CvOptions {
    pub fn new(k_grid: Vec<usize>) -> Self {
        Self {
            k_grid,
            outer_folds: 10,
            inner_folds: 10,
            ard_k: None,
        }
    }

    fn ard_k(&self, model: Model) -> usize {
        self.ard_k.unwrap_or(match model {
            Model::Nmf => 20,
            Model::Nmtf => 10,
        })
    }
}

fn fold_splits(
    data: &MaskedMatrix,
    folds: usize,
    seed: u64,
) -> Result<Vec<(MaskedMatrix, MaskedMatrix)>> {
    k_folds(data, folds, &mut rng(seed))?
        .iter()
        .map(|m| split_by_mask(data, m))
        .collect()
}

/// Outer cross-validation with an inner cross-validated search over `k_grid`.
/// ARD runs skip the search and use a fixed, generous dimensionality.
pub fn nested_cross_validation(
    data: &MaskedMatrix,
    cfg: &ExperimentConfig,
    opts: &CvOptions,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if opts.k_grid.is_empty() || opts.k_grid.contains(&0) {
        return Err(invalid(
            "k_grid",
            "needs at least one positive dimensionality",
        ));
    }
    if opts.inner_folds < 2 && opts.k_grid.len() > 1 {
        return Err(invalid(
            "inner_folds",
            "the inner search needs at least 2 folds",
        ));
    }
    let kind = ExperimentKind::Cv;
    let outer = fold_splits(data, opts.outer_folds, cfg.job_seed(kind, &[0]))?;
    let mut jobs = Vec::new();
    for fold in 0..outer.len() {
        for (engine, ard) in cfg.variants() {
            jobs.push(RowSpec {
                engine,
                ard,
                setting: None,
                fold,
            });
        }
    }
    let rows = jobs
        .par_iter()
        .map(|j| {
            let (train, test) = &outer[j.fold];
            let tail = [j.fold as u64, engine_index(j.engine), j.ard as u64];
            let k = if j.ard {
                opts.ard_k(cfg.model)
            } else if opts.k_grid.len() == 1 {
                opts.k_grid[0]
            } else {
                let inner_seed = cfg.job_seed(kind, &[1, j.fold as u64]);
                select_k(train, cfg, opts, j, inner_seed, &tail)?
            };
            let seed = cfg.job_seed(kind, &[2, tail[0], tail[1], tail[2]]);
            let ev = evaluate(
                &cfg.fit_config(j.engine, j.ard, Some(k), seed),
                train,
                Some(test),
            )?;
            Ok(row(cfg.model, j, &ev, Some(k)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        kind,
        rows,
        curves: Vec::new(),
    })
}

// Smallest K with the lowest mean inner-fold test error.
fn select_k(
    train: &MaskedMatrix,
    cfg: &ExperimentConfig,
    opts: &CvOptions,
    j: &RowSpec,
    inner_seed: u64,
    tail: &[u64; 3],
) -> Result<usize> {
    let inner = fold_splits(train, opts.inner_folds, inner_seed)?;
    let pairs: Vec<(usize, usize)> = (0..opts.k_grid.len())
        .flat_map(|ki| (0..inner.len()).map(move |f| (ki, f)))
        .collect();
    let errors = pairs
        .par_iter()
        .map(|&(ki, f)| {
            let seed = cfg.job_seed(
                ExperimentKind::Cv,
                &[3, tail[0], tail[1], tail[2], ki as u64, f as u64],
            );
            let fc = cfg.fit_config(j.engine, j.ard, Some(opts.k_grid[ki]), seed);
            let (tr, te) = &inner[f];
            let ev = evaluate(&fc, tr, Some(te))?;
            Ok(ev.test_mse.unwrap_or(f64::NAN))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = (f64::INFINITY, opts.k_grid[0]);
    let mut sorted: Vec<(usize, f64)> = opts
        .k_grid
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            (
                k,
                errors[ki * inner.len()..(ki + 1) * inner.len()]
                    .iter()
                    .sum::<f64>()
                    / inner.len() as f64,
            )
        })
        .collect();
    sorted.sort_by_key(|&(k, _)| k);
    for (k, e) in sorted {
        if e < best.0 {
            best = (e, k);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelectOptions {
    pub k_values: Vec<usize>,
    pub folds: usize,
}

impl ModelSelectOptions {
    pub fn new(k_values: Vec<usize>) -> Self {
        Self {
            k_values,
            folds: 10,
        }
    }
}

/// Cross-validated predictive error for each dimensionality, with and
/// without ARD as configured. The same folds are used for every K.
pub fn model_selection_sweep(
    data: &MaskedMatrix,
    cfg: &ExperimentConfig,
    opts: &ModelSelectOptions,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if opts.k_values.is_empty() || opts.k_values.contains(&0) {
        return Err(invalid(
            "k_values",
            "needs at least one positive dimensionality",
        ));
    }
    let kind = ExperimentKind::ModelSelect;
    let folds = fold_splits(data, opts.folds, cfg.job_seed(kind, &[0]))?;
    let mut jobs = Vec::new();
    for &k in &opts.k_values {
        for (engine, ard) in cfg.variants() {
            for fold in 0..folds.len() {
                jobs.push((
                    k,
                    RowSpec {
                        engine,
                        ard,
                        setting: Some(k as f64),
                        fold,
                    },
                ));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(k, j)| {
            let seed = cfg.job_seed(
                kind,
                &[
                    1,
                    *k as u64,
                    j.fold as u64,
                    engine_index(j.engine),
                    j.ard as u64,
                ],
            );
            let (train, test) = &folds[j.fold];
            let ev = evaluate(
                &cfg.fit_config(j.engine, j.ard, Some(*k), seed),
                train,
                Some(test),
            )?;
            Ok(row(cfg.model, j, &ev, None))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        kind,
        rows,
        curves: Vec::new(),
    })
}

/// Indicator of the cells observed in `a` but not in `b`.
pub fn mask_difference(a: &MaskedMatrix, b: &MaskedMatrix) -> Array2<bool> {
    ndarray::Zip::from(&a.mask())
        .and(&b.mask())
        .map_collect(|&x, &y| x && !y)
}
