//! Conditional posteriors and the Gibbs sampler.
//!
//! The conditionals are also used, through their modes, by [`crate::icm`].

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::distributions::{GammaParams, SeededRng, TruncatedNormal};
use crate::error::{Error, Result};
use crate::kernels::{
    self, nmf_factors, nmtf_factors, residual, sum_sq_residual, NmtfRates, Rule, TAG_ARD_COLS,
    TAG_ARD_ROWS, TAG_TAU,
};
use crate::masked::MaskedMatrix;
use crate::model::{
    init_nmf, init_nmtf, HyperParams, InitStrategy, NmfState, NmtfState, Predict, KMEANS_SMOOTHING,
};
use crate::run::{Clamp, Recorder, Schedule, Trace};

/// Which two-factor matrix an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmfFactor {
    U,
    V,
}

/// Which tri-factor matrix an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmtfFactor {
    F,
    S,
    G,
}

/// Side of a tri-factorisation that carries an ARD prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArdSide {
    F,
    G,
}

/// Conditional posterior of one factor entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditional {
    TruncatedNormal(TruncatedNormal),
    /// No observed cell involves the entry; the conditional is the exponential prior.
    Prior {
        rate: f64,
    },
}

impl Conditional {
    fn from_terms(prec: f64, lin: f64, rate: f64) -> Self {
        if prec > 0.0 {
            Conditional::TruncatedNormal(TruncatedNormal {
                mu: lin / prec,
                tau: prec,
            })
        } else {
            Conditional::Prior { rate }
        }
    }

    pub fn mode(&self) -> f64 {
        match self {
            Conditional::TruncatedNormal(t) => t.mode(),
            Conditional::Prior { .. } => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Conditional::TruncatedNormal(t) => t.moments().0,
            Conditional::Prior { rate } => 1.0 / rate,
        }
    }
}

pub(crate) fn tau_posterior(hyper: &HyperParams, n_observed: usize, sum_sq: f64) -> GammaParams {
    GammaParams {
        shape: hyper.alpha_tau + n_observed as f64 / 2.0,
        rate: hyper.beta_tau + sum_sq / 2.0,
    }
}

fn ard_posterior(hyper: &HyperParams, count: usize, sum: f64) -> GammaParams {
    GammaParams {
        shape: hyper.alpha0 + count as f64,
        rate: hyper.beta0 + sum,
    }
}

/// `Gamma(α_τ + |Ω|/2, β_τ + ½ Σ_Ω (R_ij - U_i V_j)²)`.
pub fn cond_tau_nmf(state: &NmfState, data: &MaskedMatrix, hyper: &HyperParams) -> GammaParams {
    tau_posterior(
        hyper,
        data.n_observed(),
        data.sum_sq_error(state.predict().view()),
    )
}

pub fn cond_tau_nmtf(state: &NmtfState, data: &MaskedMatrix, hyper: &HyperParams) -> GammaParams {
    tau_posterior(
        hyper,
        data.n_observed(),
        data.sum_sq_error(state.predict().view()),
    )
}

fn rate_of(ard: Option<&Array1<f64>>, k: usize, lambda: f64) -> f64 {
    ard.map_or(lambda, |a| a[k])
}

/// Conditional of `U_ik` (`which = U`, `row = i`) or `V_jk` (`which = V`, `row = j`).
pub fn cond_nmf_entry(
    state: &NmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    which: NmfFactor,
    row: usize,
    k: usize,
) -> Conditional {
    let rate = rate_of(state.ard.as_ref(), k, hyper.lambda);
    let (own, other, idx): (&Array2<f64>, &Array2<f64>, &[usize]) = match which {
        NmfFactor::U => (&state.u, &state.v, data.row_indices(row)),
        NmfFactor::V => (&state.v, &state.u, data.col_indices(row)),
    };
    let mut prec = 0.0;
    let mut lin = 0.0;
    for &c in idx {
        let r = match which {
            NmfFactor::U => data.values()[[row, c]],
            NmfFactor::V => data.values()[[c, row]],
        };
        let rest: f64 = (0..own.ncols())
            .filter(|&k2| k2 != k)
            .map(|k2| own[[row, k2]] * other[[c, k2]])
            .sum();
        prec += other[[c, k]].powi(2);
        lin += (r - rest) * other[[c, k]];
    }
    Conditional::from_terms(state.tau * prec, state.tau * lin - rate, rate)
}

/// Conditional of `F_ik`, `S_kl` or `G_jl`. For S, `row` is `k` and `col` is `l`.
pub fn cond_nmtf_entry(
    state: &NmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    which: NmtfFactor,
    row: usize,
    col: usize,
) -> Conditional {
    let (f, s, g) = (&state.f, &state.s, &state.g);
    let pred = state.predict();
    let mut prec = 0.0;
    let mut lin = 0.0;
    let rate = match which {
        NmtfFactor::F => {
            let (i, k) = (row, col);
            for &j in data.row_indices(i) {
                let b: f64 = (0..s.ncols()).map(|l| s[[k, l]] * g[[j, l]]).sum();
                let rest = pred[[i, j]] - f[[i, k]] * b;
                prec += b * b;
                lin += (data.values()[[i, j]] - rest) * b;
            }
            rate_of(state.ard_f.as_ref(), k, hyper.lambda)
        }
        NmtfFactor::G => {
            let (j, l) = (row, col);
            for &i in data.col_indices(j) {
                let b: f64 = (0..s.nrows()).map(|k| f[[i, k]] * s[[k, l]]).sum();
                let rest = pred[[i, j]] - g[[j, l]] * b;
                prec += b * b;
                lin += (data.values()[[i, j]] - rest) * b;
            }
            rate_of(state.ard_g.as_ref(), l, hyper.lambda)
        }
        NmtfFactor::S => {
            let (k, l) = (row, col);
            for (i, j, r) in data.observed() {
                let b = f[[i, k]] * g[[j, l]];
                let rest = pred[[i, j]] - s[[k, l]] * b;
                prec += b * b;
                lin += (r - rest) * b;
            }
            hyper.lambda
        }
    };
    Conditional::from_terms(state.tau * prec, state.tau * lin - rate, rate)
}

/// `Gamma(α₀ + I + J, β₀ + Σ_i U_ik + Σ_j V_jk)` for every column `k`.
pub fn cond_ard_nmf(state: &NmfState, hyper: &HyperParams) -> Result<Vec<GammaParams>> {
    if state.ard.is_none() {
        return Err(Error::ArdDisabled);
    }
    Ok(ard_nmf(&state.u, &state.v, hyper))
}

pub(crate) fn ard_nmf(u: &Array2<f64>, v: &Array2<f64>, hyper: &HyperParams) -> Vec<GammaParams> {
    let su = kernels::column_sums(u);
    let sv = kernels::column_sums(v);
    (0..u.ncols())
        .map(|k| ard_posterior(hyper, u.nrows() + v.nrows(), su[k] + sv[k]))
        .collect()
}

/// `Gamma(α₀ + I, β₀ + Σ_i F_ik)` (or the G analogue) for every column.
pub fn cond_ard_nmtf(
    state: &NmtfState,
    hyper: &HyperParams,
    side: ArdSide,
) -> Result<Vec<GammaParams>> {
    let (present, m) = match side {
        ArdSide::F => (state.ard_f.is_some(), &state.f),
        ArdSide::G => (state.ard_g.is_some(), &state.g),
    };
    if !present {
        return Err(Error::ArdDisabled);
    }
    Ok(ard_single(m, hyper))
}

pub(crate) fn ard_single(m: &Array2<f64>, hyper: &HyperParams) -> Vec<GammaParams> {
    kernels::column_sums(m)
        .iter()
        .map(|&s| ard_posterior(hyper, m.nrows(), s))
        .collect()
}

impl Rule {
    pub(crate) fn resolve_gamma(&self, p: GammaParams, tag: u64, index: u64) -> f64 {
        match *self {
            Rule::Sample { seed, iteration } => {
                p.sample(&mut SeededRng::for_entry(seed, iteration, tag, index))
            }
            Rule::Mode => p.mode().expect("shape >= 1 checked before the run"),
            Rule::Variational => p.mean(),
        }
    }
}

fn rates(ard: Option<&Array1<f64>>, n: usize, lambda: f64) -> Vec<f64> {
    ard.map_or_else(|| vec![lambda; n], |a| a.to_vec())
}

/// One full update of U, V, τ and λ with either draws or modes.
pub(crate) fn point_sweep_nmf(
    state: &mut NmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    rule: Rule,
    clamp: Clamp,
) {
    let mut e = residual(data, &state.predict());
    let r = rates(state.ard.as_ref(), state.u.ncols(), hyper.lambda);
    nmf_factors(
        data,
        &mut e,
        &mut state.u,
        &mut state.v,
        state.tau,
        &r,
        rule,
        clamp,
    );
    if !clamp.tau {
        let p = tau_posterior(hyper, data.n_observed(), sum_sq_residual(data, &e));
        state.tau = rule.resolve_gamma(p, TAG_TAU, 0);
    }
    if let Some(ard) = state.ard.as_mut().filter(|_| !clamp.ard) {
        for (k, p) in ard_nmf(&state.u, &state.v, hyper).into_iter().enumerate() {
            ard[k] = rule.resolve_gamma(p, TAG_ARD_ROWS, k as u64);
        }
    }
}

pub(crate) fn point_sweep_nmtf(
    state: &mut NmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    rule: Rule,
    clamp: Clamp,
) {
    let mut e = residual(data, &state.predict());
    let rf = rates(state.ard_f.as_ref(), state.f.ncols(), hyper.lambda);
    let rg = rates(state.ard_g.as_ref(), state.g.ncols(), hyper.lambda);
    let r = NmtfRates {
        f: &rf,
        g: &rg,
        s: hyper.lambda,
    };
    nmtf_factors(
        data,
        &mut e,
        &mut state.f,
        &mut state.s,
        &mut state.g,
        state.tau,
        &r,
        rule,
        clamp,
    );
    if !clamp.tau {
        let p = tau_posterior(hyper, data.n_observed(), sum_sq_residual(data, &e));
        state.tau = rule.resolve_gamma(p, TAG_TAU, 0);
    }
    if let Some(ard) = state.ard_f.as_mut().filter(|_| !clamp.ard) {
        for (k, p) in ard_single(&state.f, hyper).into_iter().enumerate() {
            ard[k] = rule.resolve_gamma(p, TAG_ARD_ROWS, k as u64);
        }
    }
    if let Some(ard) = state.ard_g.as_mut().filter(|_| !clamp.ard) {
        for (l, p) in ard_single(&state.g, hyper).into_iter().enumerate() {
            ard[l] = rule.resolve_gamma(p, TAG_ARD_COLS, l as u64);
        }
    }
}

/// One Gibbs iteration: U (all rows, column by column), V, τ, then λ.
pub fn sweep_nmf(
    state: &mut NmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    seed: u64,
    iteration: u64,
    clamp: Clamp,
) {
    point_sweep_nmf(state, data, hyper, Rule::Sample { seed, iteration }, clamp);
}

/// One Gibbs iteration: F, S (entry by entry), G, τ, λ^F, λ^G.
pub fn sweep_nmtf(
    state: &mut NmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    seed: u64,
    iteration: u64,
    clamp: Clamp,
) {
    point_sweep_nmtf(state, data, hyper, Rule::Sample { seed, iteration }, clamp);
}

/// Element-wise averages of a set of states.
pub trait Average: Sized {
    fn average(states: &[Self]) -> Option<Self>;
}

fn mean_matrix<'a>(items: impl Iterator<Item = &'a Array2<f64>>, n: usize) -> Array2<f64> {
    let mut it = items;
    let mut acc = it.next().expect("nonempty").clone();
    for m in it {
        acc += m;
    }
    acc / n as f64
}

fn mean_vector<'a>(
    items: impl Iterator<Item = Option<&'a Array1<f64>>>,
    n: usize,
) -> Option<Array1<f64>> {
    let mut acc: Option<Array1<f64>> = None;
    for v in items {
        let v = v?;
        acc = Some(match acc {
            Some(a) => a + v,
            None => v.clone(),
        });
    }
    acc.map(|a| a / n as f64)
}

impl Average for NmfState {
    fn average(states: &[Self]) -> Option<Self> {
        if states.is_empty() {
            return None;
        }
        let n = states.len();
        Some(NmfState {
            u: mean_matrix(states.iter().map(|s| &s.u), n),
            v: mean_matrix(states.iter().map(|s| &s.v), n),
            tau: states.iter().map(|s| s.tau).sum::<f64>() / n as f64,
            ard: mean_vector(states.iter().map(|s| s.ard.as_ref()), n),
        })
    }
}

impl Average for NmtfState {
    fn average(states: &[Self]) -> Option<Self> {
        if states.is_empty() {
            return None;
        }
        let n = states.len();
        Some(NmtfState {
            f: mean_matrix(states.iter().map(|s| &s.f), n),
            s: mean_matrix(states.iter().map(|s| &s.s), n),
            g: mean_matrix(states.iter().map(|s| &s.g), n),
            tau: states.iter().map(|s| s.tau).sum::<f64>() / n as f64,
            ard_f: mean_vector(states.iter().map(|s| s.ard_f.as_ref()), n),
            ard_g: mean_vector(states.iter().map(|s| s.ard_g.as_ref()), n),
        })
    }
}

/// Retained draws of a chain, their element-wise mean and the mean of
/// their predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate<S> {
    pub draws: Vec<S>,
    pub mean: S,
    /// Average of `draw.predict()` over the retained draws.
    pub prediction: Array2<f64>,
    pub burn_in: usize,
    pub thin: usize,
}

impl<S> PosteriorEstimate<S> {
    /// Posterior predictive mean. Averaging products rather than factors
    /// keeps the estimate unaffected by the factors' scale and ordering
    /// freedom drifting between draws.
    pub fn predict(&self) -> Array2<f64> {
        self.prediction.clone()
    }
}

/// Settings shared by the Gibbs and ICM runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub schedule: Schedule,
    pub init: InitStrategy,
    pub seed: u64,
    pub clamp: Clamp,
}

impl ChainOptions {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            schedule: Schedule::with_defaults(iterations),
            init: InitStrategy::RandomDraw,
            seed,
            clamp: Clamp::default(),
        }
    }
}

pub(crate) fn run_chain<S, F>(
    mut state: S,
    data: &MaskedMatrix,
    schedule: Schedule,
    mut step: F,
) -> Result<(PosteriorEstimate<S>, Trace)>
where
    S: Predict + Average + Clone,
    F: FnMut(&mut S, u64),
{
    schedule.validate()?;
    let mut rec = Recorder::start();
    let mse = |s: &S| data.sum_sq_error(s.predict().view()) / data.n_observed() as f64;
    rec.record(mse(&state), None);
    let mut draws = Vec::with_capacity(schedule.retained());
    let mut prediction = Array2::zeros(data.dim());
    for t in 1..=schedule.iterations {
        step(&mut state, t as u64);
        let p = state.predict();
        rec.record(data.sum_sq_error(p.view()) / data.n_observed() as f64, None);
        if schedule.retains(t) {
            prediction += &p;
            draws.push(state.clone());
        }
    }
    let mean = S::average(&draws).expect("burn-in below iteration count leaves a draw");
    prediction /= draws.len() as f64;
    Ok((
        PosteriorEstimate {
            draws,
            mean,
            prediction,
            burn_in: schedule.burn_in,
            thin: schedule.thin,
        },
        rec.trace,
    ))
}

pub(crate) fn init_rng(seed: u64) -> SeededRng {
    SeededRng::new(crate::distributions::derive_seed(seed, &[0]), 0)
}

/// Runs a Gibbs chain from an initial state drawn with `opts.init`.
pub fn run_nmf(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmfState>, Trace)> {
    let state = init_nmf(data, hyper, opts.init, &mut init_rng(opts.seed))?;
    run_nmf_from(state, data, hyper, opts)
}

pub fn run_nmf_from(
    state: NmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmfState>, Trace)> {
    hyper.validate()?;
    let (seed, clamp) = (opts.seed, opts.clamp);
    run_chain(state, data, opts.schedule, |s, t| {
        sweep_nmf(s, data, hyper, seed, t, clamp)
    })
}

pub fn run_nmtf(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmtfState>, Trace)> {
    let state = init_nmtf(
        data,
        hyper,
        opts.init,
        KMEANS_SMOOTHING,
        &mut init_rng(opts.seed),
    )?;
    run_nmtf_from(state, data, hyper, opts)
}

pub fn run_nmtf_from(
    state: NmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmtfState>, Trace)> {
    hyper.validate()?;
    let (seed, clamp) = (opts.seed, opts.clamp);
    run_chain(state, data, opts.schedule, |s, t| {
        sweep_nmtf(s, data, hyper, seed, t, clamp)
    })
}
