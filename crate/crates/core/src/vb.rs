//! Mean-field variational Bayes with truncated-normal factors and Gamma
//! precision / ARD factors.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::distributions::{GammaParams, TruncatedNormal};
use crate::error::{Error, Result};
use crate::gibbs::{
    ard_nmf, ard_single, init_rng, tau_posterior, ArdSide, Conditional, NmfFactor, NmtfFactor,
};
use crate::kernels::{nmf_factors, nmtf_factors, ordered_sum, residual, NmtfRates, Rule};
use crate::masked::MaskedMatrix;
use crate::model::{
    init_vb_nmf, init_vb_nmtf, HyperParams, InitStrategy, Predict, VbFactor, VbNmfState,
    VbNmtfState,
};
use crate::run::{Clamp, Recorder, StopRule, Trace};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn expected_rates(ard: Option<&Vec<GammaParams>>, n: usize, lambda: f64) -> Vec<f64> {
    ard.map_or_else(
        || vec![lambda; n],
        |q| q.iter().map(GammaParams::mean).collect(),
    )
}

fn second(f: &VbFactor, idx: (usize, usize)) -> f64 {
    f.mean[idx] * f.mean[idx] + f.var[idx]
}

/// `E_q[(R_ij - U_i V_j)²]` for one observed cell.
pub fn expected_residual_sq_nmf(
    state: &VbNmfState,
    data: &MaskedMatrix,
    i: usize,
    j: usize,
) -> f64 {
    let (u, v) = (&state.u, &state.v);
    let mut point = data.values()[[i, j]];
    let mut spread = 0.0;
    for k in 0..u.mean.ncols() {
        point -= u.mean[[i, k]] * v.mean[[j, k]];
        spread += second(u, (i, k)) * second(v, (j, k)) - (u.mean[[i, k]] * v.mean[[j, k]]).powi(2);
    }
    point * point + spread
}

/// `E_q[(R_ij - F_i S G_j)²]` for one observed cell, including the covariance
/// terms that arise because each F and G entry appears in several products.
pub fn expected_residual_sq_nmtf(
    state: &VbNmtfState,
    data: &MaskedMatrix,
    i: usize,
    j: usize,
) -> f64 {
    let (f, s, g) = (&state.f, &state.s, &state.g);
    let (k_dim, l_dim) = s.mean.dim();
    let mut point = data.values()[[i, j]];
    let mut spread = 0.0;
    for k in 0..k_dim {
        for l in 0..l_dim {
            let m = f.mean[[i, k]] * s.mean[[k, l]] * g.mean[[j, l]];
            point -= m;
            spread += second(f, (i, k)) * second(s, (k, l)) * second(g, (j, l)) - m * m;
        }
    }
    for l in 0..l_dim {
        let terms: Vec<f64> = (0..k_dim)
            .map(|k| f.mean[[i, k]] * s.mean[[k, l]])
            .collect();
        let total: f64 = terms.iter().sum();
        spread += g.var[[j, l]] * (total * total - terms.iter().map(|t| t * t).sum::<f64>());
    }
    for k in 0..k_dim {
        let terms: Vec<f64> = (0..l_dim)
            .map(|l| s.mean[[k, l]] * g.mean[[j, l]])
            .collect();
        let total: f64 = terms.iter().sum();
        spread += f.var[[i, k]] * (total * total - terms.iter().map(|t| t * t).sum::<f64>());
    }
    point * point + spread
}

// Σ_Ω E_q[(R - U Vᵀ)²] given the mean residual `e`.
fn total_ers_nmf(data: &MaskedMatrix, e: &Array2<f64>, u: &VbFactor, v: &VbFactor) -> f64 {
    let u_sq = &u.mean * &u.mean;
    let v_sq = &v.mean * &v.mean;
    let v2 = &v_sq + &v.var;
    ordered_sum(data.nrows(), |i| {
        data.row_indices(i)
            .iter()
            .map(|&j| {
                let spread: f64 = (0..u.mean.ncols())
                    .map(|k| u.var[[i, k]] * v2[[j, k]] + u_sq[[i, k]] * v.var[[j, k]])
                    .sum();
                e[[i, j]].powi(2) + spread
            })
            .sum()
    })
}

fn total_ers_nmtf(
    data: &MaskedMatrix,
    e: &Array2<f64>,
    f: &VbFactor,
    s: &VbFactor,
    g: &VbFactor,
) -> f64 {
    let f_sq = &f.mean * &f.mean;
    let s_sq = &s.mean * &s.mean;
    let g_sq = &g.mean * &g.mean;
    let s2 = &s_sq + &s.var;
    let fs = f.mean.dot(&s.mean);
    let f2s2 = (&f_sq + &f.var).dot(&s2);
    let p1 = f_sq.dot(&s_sq);
    let d = f.var.dot(&s2) + f_sq.dot(&s.var);
    let sg = g.mean.dot(&s.mean.t());
    let p2 = g_sq.dot(&s_sq.t());
    let (k_dim, l_dim) = s.mean.dim();
    ordered_sum(data.nrows(), |i| {
        data.row_indices(i)
            .iter()
            .map(|&j| {
                let mut spread = 0.0;
                for l in 0..l_dim {
                    let vg = g.var[[j, l]];
                    spread += f2s2[[i, l]] * vg
                        + d[[i, l]] * g_sq[[j, l]]
                        + vg * (fs[[i, l]].powi(2) - p1[[i, l]]);
                }
                for k in 0..k_dim {
                    spread += f.var[[i, k]] * (sg[[j, k]].powi(2) - p2[[j, k]]);
                }
                e[[i, j]].powi(2) + spread
            })
            .sum()
    })
}

/// `Σ_Ω E_q[(R_ij - U_i V_j)²]`.
pub fn total_expected_residual_sq_nmf(state: &VbNmfState, data: &MaskedMatrix) -> f64 {
    total_ers_nmf(data, &residual(data, &state.predict()), &state.u, &state.v)
}

pub fn total_expected_residual_sq_nmtf(state: &VbNmtfState, data: &MaskedMatrix) -> f64 {
    total_ers_nmtf(
        data,
        &residual(data, &state.predict()),
        &state.f,
        &state.s,
        &state.g,
    )
}

/// Sets `q(τ)` to `Gamma(α_τ + |Ω|/2, β_τ + ½ Σ_Ω E_q[(R - U Vᵀ)²])`.
pub fn vb_update_tau_nmf(
    state: &mut VbNmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
) -> GammaParams {
    state.tau = tau_posterior(
        hyper,
        data.n_observed(),
        total_expected_residual_sq_nmf(state, data),
    );
    state.tau
}

pub fn vb_update_tau_nmtf(
    state: &mut VbNmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
) -> GammaParams {
    state.tau = tau_posterior(
        hyper,
        data.n_observed(),
        total_expected_residual_sq_nmtf(state, data),
    );
    state.tau
}

/// Sets the ARD factors to `Gamma(α₀ + I + J, β₀ + Σ_i Ẽ[U_ik] + Σ_j Ẽ[V_jk])`.
pub fn vb_update_ard_nmf(state: &mut VbNmfState, hyper: &HyperParams) -> Result<Vec<GammaParams>> {
    if state.ard.is_none() {
        return Err(Error::ArdDisabled);
    }
    let q = ard_nmf(&state.u.mean, &state.v.mean, hyper);
    state.ard = Some(q.clone());
    Ok(q)
}

pub fn vb_update_ard_nmtf(
    state: &mut VbNmtfState,
    hyper: &HyperParams,
    side: ArdSide,
) -> Result<Vec<GammaParams>> {
    let (slot, m) = match side {
        ArdSide::F => (&mut state.ard_f, &state.f.mean),
        ArdSide::G => (&mut state.ard_g, &state.g.mean),
    };
    if slot.is_none() {
        return Err(Error::ArdDisabled);
    }
    let q = ard_single(m, hyper);
    *slot = Some(q.clone());
    Ok(q)
}

/// Optimal truncated-normal factor for one entry of U or V given the rest of `state`.
pub fn vb_factor_nmf(
    state: &VbNmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    which: NmfFactor,
    row: usize,
    k: usize,
) -> Conditional {
    let rate = expected_rates(state.ard.as_ref(), state.u.mean.ncols(), hyper.lambda)[k];
    let (own, other, idx) = match which {
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
        let rest: f64 = (0..own.mean.ncols())
            .filter(|&k2| k2 != k)
            .map(|k2| own.mean[[row, k2]] * other.mean[[c, k2]])
            .sum();
        prec += second(other, (c, k));
        lin += (r - rest) * other.mean[[c, k]];
    }
    let tau = state.tau.mean();
    terms_to_conditional(tau * prec, tau * lin - rate, rate)
}

fn terms_to_conditional(prec: f64, lin: f64, rate: f64) -> Conditional {
    if prec > 0.0 {
        Conditional::TruncatedNormal(TruncatedNormal {
            mu: lin / prec,
            tau: prec,
        })
    } else {
        Conditional::Prior { rate }
    }
}

fn assign(f: &mut VbFactor, idx: (usize, usize), c: Conditional) -> TruncatedNormal {
    let dist = match c {
        Conditional::TruncatedNormal(t) => t,
        Conditional::Prior { rate } => TruncatedNormal::exponential_limit(rate),
    };
    let (mean, var) = dist.moments();
    f.mu[idx] = dist.mu;
    f.tau[idx] = dist.tau;
    f.mean[idx] = mean;
    f.var[idx] = var;
    dist
}

/// Updates one entry of U or V in place and returns its new parameters.
pub fn vb_update_factor_entry_nmf(
    state: &mut VbNmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    which: NmfFactor,
    row: usize,
    k: usize,
) -> TruncatedNormal {
    let c = vb_factor_nmf(state, data, hyper, which, row, k);
    let f = match which {
        NmfFactor::U => &mut state.u,
        NmfFactor::V => &mut state.v,
    };
    assign(f, (row, k), c)
}

/// Optimal truncated-normal factor for one entry of F, S or G. For S, `row` is `k` and `col` is `l`.
pub fn vb_factor_nmtf(
    state: &VbNmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    which: NmtfFactor,
    row: usize,
    col: usize,
) -> Conditional {
    let (f, s, g) = (&state.f, &state.s, &state.g);
    let (k_dim, l_dim) = s.mean.dim();
    let r = data.values();
    let mut prec = 0.0;
    let mut lin = 0.0;
    let rate = match which {
        NmtfFactor::F => {
            let (i, k) = (row, col);
            for &j in data.row_indices(i) {
                let b = |k2: usize| {
                    (0..l_dim)
                        .map(|l| s.mean[[k2, l]] * g.mean[[j, l]])
                        .sum::<f64>()
                };
                let bk = b(k);
                let mut rest = 0.0;
                let mut cov = 0.0;
                for k2 in (0..k_dim).filter(|&k2| k2 != k) {
                    rest += f.mean[[i, k2]] * b(k2);
                    cov += f.mean[[i, k2]]
                        * (0..l_dim)
                            .map(|l| s.mean[[k2, l]] * s.mean[[k, l]] * g.var[[j, l]])
                            .sum::<f64>();
                }
                let spread: f64 = (0..l_dim)
                    .map(|l| {
                        second(s, (k, l)) * second(g, (j, l))
                            - (s.mean[[k, l]] * g.mean[[j, l]]).powi(2)
                    })
                    .sum();
                prec += bk * bk + spread;
                lin += (r[[i, j]] - rest) * bk - cov;
            }
            expected_rates(state.ard_f.as_ref(), k_dim, hyper.lambda)[k]
        }
        NmtfFactor::G => {
            let (j, l) = (row, col);
            for &i in data.col_indices(j) {
                let b = |l2: usize| {
                    (0..k_dim)
                        .map(|k| f.mean[[i, k]] * s.mean[[k, l2]])
                        .sum::<f64>()
                };
                let bl = b(l);
                let mut rest = 0.0;
                let mut cov = 0.0;
                for l2 in (0..l_dim).filter(|&l2| l2 != l) {
                    rest += g.mean[[j, l2]] * b(l2);
                    cov += g.mean[[j, l2]]
                        * (0..k_dim)
                            .map(|k| s.mean[[k, l2]] * s.mean[[k, l]] * f.var[[i, k]])
                            .sum::<f64>();
                }
                let spread: f64 = (0..k_dim)
                    .map(|k| {
                        second(f, (i, k)) * second(s, (k, l))
                            - (f.mean[[i, k]] * s.mean[[k, l]]).powi(2)
                    })
                    .sum();
                prec += bl * bl + spread;
                lin += (r[[i, j]] - rest) * bl - cov;
            }
            expected_rates(state.ard_g.as_ref(), l_dim, hyper.lambda)[l]
        }
        NmtfFactor::S => {
            let (k, l) = (row, col);
            for (i, j, rij) in data.observed() {
                let (fi, gj) = (f.mean[[i, k]], g.mean[[j, l]]);
                let mut rest = 0.0;
                for k2 in 0..k_dim {
                    for l2 in 0..l_dim {
                        if (k2, l2) != (k, l) {
                            rest += f.mean[[i, k2]] * s.mean[[k2, l2]] * g.mean[[j, l2]];
                        }
                    }
                }
                let fs_other: f64 = (0..k_dim)
                    .filter(|&k2| k2 != k)
                    .map(|k2| f.mean[[i, k2]] * s.mean[[k2, l]])
                    .sum();
                let sg_other: f64 = (0..l_dim)
                    .filter(|&l2| l2 != l)
                    .map(|l2| s.mean[[k, l2]] * g.mean[[j, l2]])
                    .sum();
                prec += second(f, (i, k)) * second(g, (j, l));
                lin += (rij - rest) * fi * gj
                    - fi * g.var[[j, l]] * fs_other
                    - f.var[[i, k]] * gj * sg_other;
            }
            hyper.lambda
        }
    };
    let tau = state.tau.mean();
    terms_to_conditional(tau * prec, tau * lin - rate, rate)
}

pub fn vb_update_factor_entry_nmtf(
    state: &mut VbNmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    which: NmtfFactor,
    row: usize,
    col: usize,
) -> TruncatedNormal {
    let c = vb_factor_nmtf(state, data, hyper, which, row, col);
    let f = match which {
        NmtfFactor::F => &mut state.f,
        NmtfFactor::S => &mut state.s,
        NmtfFactor::G => &mut state.g,
    };
    assign(f, (row, col), c)
}

// Expected log prior plus entropy of every non-degenerate entry of a factor.
// `rates` holds (E[λ_k], E[ln λ_k]) per column.
fn factor_terms(f: &VbFactor, rates: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for ((idx, &mean), (&mu, &tau)) in f.mean.indexed_iter().zip(f.mu.iter().zip(f.tau.iter())) {
        if tau.is_infinite() {
            continue;
        }
        let (rate, ln_rate) = rates[idx.1];
        total += ln_rate - rate * mean + TruncatedNormal { mu, tau }.entropy();
    }
    total
}

fn rate_moments(ard: Option<&Vec<GammaParams>>, n: usize, lambda: f64) -> Vec<(f64, f64)> {
    match ard {
        Some(q) => q.iter().map(|p| (p.mean(), p.mean_ln())).collect(),
        None => vec![(lambda, lambda.ln()); n],
    }
}

fn gamma_terms(prior: GammaParams, q: &GammaParams) -> f64 {
    prior.expected_ln_density(q.mean(), q.mean_ln()) + q.entropy()
}

fn likelihood_terms(q_tau: &GammaParams, n: usize, ers: f64) -> f64 {
    0.5 * n as f64 * (q_tau.mean_ln() - LN_2PI) - 0.5 * q_tau.mean() * ers
}

/// Evidence lower bound `E_q[ln p(R, θ)] - E_q[ln q(θ)]`.
pub fn elbo_nmf(state: &VbNmfState, data: &MaskedMatrix, hyper: &HyperParams) -> f64 {
    let k_dim = state.u.mean.ncols();
    let rates = rate_moments(state.ard.as_ref(), k_dim, hyper.lambda);
    let mut total = likelihood_terms(
        &state.tau,
        data.n_observed(),
        total_expected_residual_sq_nmf(state, data),
    ) + gamma_terms(hyper.tau_prior(), &state.tau)
        + factor_terms(&state.u, &rates)
        + factor_terms(&state.v, &rates);
    if let Some(q) = &state.ard {
        total += q
            .iter()
            .map(|p| gamma_terms(hyper.ard_prior(), p))
            .sum::<f64>();
    }
    total
}

pub fn elbo_nmtf(state: &VbNmtfState, data: &MaskedMatrix, hyper: &HyperParams) -> f64 {
    let (k_dim, l_dim) = state.s.mean.dim();
    let rf = rate_moments(state.ard_f.as_ref(), k_dim, hyper.lambda);
    let rg = rate_moments(state.ard_g.as_ref(), l_dim, hyper.lambda);
    let rs = vec![(hyper.lambda, hyper.lambda.ln()); l_dim];
    let mut total = likelihood_terms(
        &state.tau,
        data.n_observed(),
        total_expected_residual_sq_nmtf(state, data),
    ) + gamma_terms(hyper.tau_prior(), &state.tau)
        + factor_terms(&state.f, &rf)
        + factor_terms(&state.s, &rs)
        + factor_terms(&state.g, &rg);
    for q in [&state.ard_f, &state.ard_g].into_iter().flatten() {
        total += q
            .iter()
            .map(|p| gamma_terms(hyper.ard_prior(), p))
            .sum::<f64>();
    }
    total
}

/// One coordinate-ascent sweep: U, V, τ, λ.
pub fn sweep_nmf(state: &mut VbNmfState, data: &MaskedMatrix, hyper: &HyperParams, clamp: Clamp) {
    let mut e = residual(data, &state.predict());
    let rates = expected_rates(state.ard.as_ref(), state.u.mean.ncols(), hyper.lambda);
    let tau = state.tau.mean();
    nmf_factors(
        data,
        &mut e,
        &mut state.u,
        &mut state.v,
        tau,
        &rates,
        Rule::Variational,
        clamp,
    );
    if !clamp.tau {
        state.tau = tau_posterior(
            hyper,
            data.n_observed(),
            total_ers_nmf(data, &e, &state.u, &state.v),
        );
    }
    if state.ard.is_some() && !clamp.ard {
        state.ard = Some(ard_nmf(&state.u.mean, &state.v.mean, hyper));
    }
}

/// One coordinate-ascent sweep: F, S, G, τ, λ^F, λ^G.
pub fn sweep_nmtf(state: &mut VbNmtfState, data: &MaskedMatrix, hyper: &HyperParams, clamp: Clamp) {
    let mut e = residual(data, &state.predict());
    let (k_dim, l_dim) = state.s.mean.dim();
    let rf = expected_rates(state.ard_f.as_ref(), k_dim, hyper.lambda);
    let rg = expected_rates(state.ard_g.as_ref(), l_dim, hyper.lambda);
    let rates = NmtfRates {
        f: &rf,
        g: &rg,
        s: hyper.lambda,
    };
    let tau = state.tau.mean();
    nmtf_factors(
        data,
        &mut e,
        &mut state.f,
        &mut state.s,
        &mut state.g,
        tau,
        &rates,
        Rule::Variational,
        clamp,
    );
    if !clamp.tau {
        let ers = total_ers_nmtf(data, &e, &state.f, &state.s, &state.g);
        state.tau = tau_posterior(hyper, data.n_observed(), ers);
    }
    if state.ard_f.is_some() && !clamp.ard {
        state.ard_f = Some(ard_single(&state.f.mean, hyper));
    }
    if state.ard_g.is_some() && !clamp.ard {
        state.ard_g = Some(ard_single(&state.g.mean, hyper));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbOptions {
    pub stop: StopRule,
    pub init: InitStrategy,
    pub seed: u64,
    pub clamp: Clamp,
    /// Evaluate the ELBO every this many sweeps; 0 disables it.
    pub elbo_every: usize,
}

impl VbOptions {
    pub fn new(stop: StopRule, seed: u64) -> Self {
        Self {
            stop,
            init: InitStrategy::RandomDraw,
            seed,
            clamp: Clamp::default(),
            elbo_every: 1,
        }
    }
}

fn run<S, Sw, El>(
    mut state: S,
    data: &MaskedMatrix,
    opts: &VbOptions,
    mut sweep: Sw,
    elbo: El,
) -> Result<(S, Trace)>
where
    S: Predict,
    Sw: FnMut(&mut S),
    El: Fn(&S) -> f64,
{
    opts.stop.validate()?;
    let mut rec = Recorder::start();
    let mse = |s: &S| data.sum_sq_error(s.predict().view()) / data.n_observed() as f64;
    let elbo_at = |s: &S, t: usize| {
        (opts.elbo_every > 0 && t.is_multiple_of(opts.elbo_every)).then(|| elbo(s))
    };
    rec.record(mse(&state), elbo_at(&state, 0));
    while !opts.stop.should_stop(&rec.trace) {
        sweep(&mut state);
        let t = rec.trace.points.len();
        rec.record(mse(&state), elbo_at(&state, t));
    }
    Ok((state, rec.trace))
}

pub fn run_nmf(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &VbOptions,
) -> Result<(VbNmfState, Trace)> {
    let state = init_vb_nmf(data, hyper, opts.init, &mut init_rng(opts.seed))?;
    run_nmf_from(state, data, hyper, opts)
}

pub fn run_nmf_from(
    state: VbNmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &VbOptions,
) -> Result<(VbNmfState, Trace)> {
    hyper.validate()?;
    let clamp = opts.clamp;
    run(
        state,
        data,
        opts,
        |s| sweep_nmf(s, data, hyper, clamp),
        |s| elbo_nmf(s, data, hyper),
    )
}

pub fn run_nmtf(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &VbOptions,
) -> Result<(VbNmtfState, Trace)> {
    let state = init_vb_nmtf(data, hyper, opts.init, &mut init_rng(opts.seed))?;
    run_nmtf_from(state, data, hyper, opts)
}

pub fn run_nmtf_from(
    state: VbNmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &VbOptions,
) -> Result<(VbNmtfState, Trace)> {
    hyper.validate()?;
    let clamp = opts.clamp;
    run(
        state,
        data,
        opts,
        |s| sweep_nmtf(s, data, hyper, clamp),
        |s| elbo_nmtf(s, data, hyper),
    )
}
