//! Column-at-a-time factor updates shared by Gibbs, ICM and VB.
//!
//! Updating column `k` of a factor touches one entry per row, and given the
//! other columns those entries are conditionally independent, so every row is
//! processed in parallel. The residual `E = R - prediction` over the observed
//! cells is kept up to date incrementally.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rayon::prelude::*;

use crate::distributions::{SeededRng, TruncatedNormal};
use crate::masked::{MaskedMatrix, MaskedView};
use crate::model::VbFactor;
use crate::run::Clamp;

pub(crate) const TAG_ROWS: u64 = 1;
pub(crate) const TAG_COLS: u64 = 2;
pub(crate) const TAG_MIDDLE: u64 = 3;
pub(crate) const TAG_TAU: u64 = 4;
pub(crate) const TAG_ARD_ROWS: u64 = 5;
pub(crate) const TAG_ARD_COLS: u64 = 6;

/// What to do with a truncated-normal conditional.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Rule {
    Sample { seed: u64, iteration: u64 },
    Mode,
    Variational,
}

/// New value of one factor entry.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub mean: f64,
    pub var: f64,
    pub dist: TruncatedNormal,
}

impl Rule {
    /// Resolves the conditional with precision `prec` and linear term `lin`
    /// (`μ = lin / prec`). A zero precision means no data touches the entry and
    /// the conditional is the exponential prior with `rate`.
    pub fn resolve(&self, prec: f64, lin: f64, rate: f64, tag: u64, index: u64) -> Entry {
        let dist = if prec > 0.0 {
            TruncatedNormal {
                mu: lin / prec,
                tau: prec,
            }
        } else {
            TruncatedNormal::exponential_limit(rate)
        };
        match *self {
            Rule::Sample { seed, iteration } => {
                let mut rng = SeededRng::for_entry(seed, iteration, tag, index);
                let x = if prec > 0.0 {
                    dist.sample(&mut rng)
                } else {
                    let e: f64 = rand::Rng::sample(&mut rng, rand_distr::Exp1);
                    e / rate
                };
                Entry {
                    mean: x,
                    var: 0.0,
                    dist,
                }
            }
            Rule::Mode => Entry {
                mean: if prec > 0.0 { dist.mode() } else { 0.0 },
                var: 0.0,
                dist,
            },
            Rule::Variational => {
                let (mean, var) = dist.moments();
                Entry { mean, var, dist }
            }
        }
    }
}

/// Residual `R - P` on observed cells, zero elsewhere.
pub(crate) fn residual(data: &MaskedMatrix, prediction: &Array2<f64>) -> Array2<f64> {
    let mut e = Array2::zeros(data.dim());
    Zip::from(&mut e)
        .and(&data.values())
        .and(&data.mask())
        .and(prediction)
        .par_for_each(|e, &r, &m, &p| {
            if m {
                *e = r - p;
            }
        });
    e
}

/// Extra linear-term correction for tri-factorisation: variance of the other
/// outer factor couples entries of the same row through the middle factor.
pub(crate) struct Coupling<'a> {
    /// Row-wise product with the middle factor (`F S` or `G Sᵀ`), kept current.
    pub fs: ArrayViewMut2<'a, f64>,
    /// Row `k` (or column `l`) of the middle factor's mean.
    pub s: ArrayView1<'a, f64>,
    /// Observed-cell sums of the other outer factor's variances.
    pub w: ArrayView2<'a, f64>,
}

/// Updates column `k` of a factor whose rows index the rows of `data`.
///
/// `b` is the effective partner column (one value per data column) and `sq`
/// its second moment. Returns the new entries; `resid` and the coupling's
/// `fs` are updated in place, the caller writes the entries into its factor.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_column(
    data: MaskedView<'_>,
    mut resid: ArrayViewMut2<'_, f64>,
    current: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    sq: ArrayView1<'_, f64>,
    coupling: Option<Coupling<'_>>,
    tau: f64,
    rate: f64,
    rule: Rule,
    tag: u64,
    k: usize,
    width: usize,
) -> Vec<Entry> {
    let n = data.nrows();
    let entries: Vec<Entry> = {
        let resid = resid.view();
        let coupling = coupling.as_ref();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let a = current[i];
                let mut prec = 0.0;
                let mut dot = 0.0;
                for &j in &data.rows[i] {
                    prec += sq[j];
                    dot += (resid[[i, j]] + a * b[j]) * b[j];
                }
                let corr = coupling.map_or(0.0, |c| {
                    c.s.iter()
                        .enumerate()
                        .map(|(m, &s)| s * (c.fs[[i, m]] - a * s) * c.w[[i, m]])
                        .sum()
                });
                rule.resolve(
                    tau * prec,
                    tau * (dot - corr) - rate,
                    rate,
                    tag,
                    (i * width + k) as u64,
                )
            })
            .collect()
    };

    match coupling {
        Some(mut c) => {
            let s = c.s;
            Zip::from(resid.rows_mut())
                .and(c.fs.rows_mut())
                .and(&current)
                .and(&entries[..])
                .and(data.rows)
                .par_for_each(|mut e, mut fs, &old, new, js| {
                    let delta = new.mean - old;
                    if delta != 0.0 {
                        for &j in js {
                            e[j] -= delta * b[j];
                        }
                        fs.scaled_add(delta, &s);
                    }
                });
        }
        None => {
            Zip::from(resid.rows_mut())
                .and(&current)
                .and(&entries[..])
                .and(data.rows)
                .par_for_each(|mut e, &old, new, js| {
                    let delta = new.mean - old;
                    if delta != 0.0 {
                        for &j in js {
                            e[j] -= delta * b[j];
                        }
                    }
                });
        }
    }
    entries
}

/// Per-row partial sums folded in row order, so the result does not depend on
/// how rows were scheduled across threads.
pub(crate) fn ordered_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    parts.iter().sum()
}

pub(crate) fn sum_sq_residual(data: &MaskedMatrix, resid: &Array2<f64>) -> f64 {
    ordered_sum(data.nrows(), |i| {
        data.row_indices(i)
            .iter()
            .map(|&j| resid[[i, j]].powi(2))
            .sum()
    })
}

/// `Σ_{j ∈ Ω_i} x_jk` for every row `i`: the mask times `x`.
pub(crate) fn masked_row_sums(data: MaskedView<'_>, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((data.nrows(), x.ncols()));
    Zip::from(out.rows_mut())
        .and(data.rows)
        .par_for_each(|mut row, js| {
            for &j in js {
                row += &x.row(j);
            }
        });
    out
}

pub(crate) fn column_sums(x: &Array2<f64>) -> Array1<f64> {
    x.sum_axis(Axis(0))
}

/// Storage for one factor matrix: point values, or variational parameters with moments.
pub(crate) trait Factor {
    fn mean(&self) -> &Array2<f64>;
    fn var(&self) -> Option<&Array2<f64>>;
    fn set(&mut self, idx: (usize, usize), entry: &Entry);

    fn set_column(&mut self, k: usize, entries: &[Entry]) {
        for (i, e) in entries.iter().enumerate() {
            self.set((i, k), e);
        }
    }

    fn second_moment(&self) -> Array2<f64> {
        let m = self.mean();
        match self.var() {
            Some(v) => m * m + v,
            None => m * m,
        }
    }
}

impl Factor for Array2<f64> {
    fn mean(&self) -> &Array2<f64> {
        self
    }

    fn var(&self) -> Option<&Array2<f64>> {
        None
    }

    fn set(&mut self, idx: (usize, usize), entry: &Entry) {
        self[idx] = entry.mean;
    }
}

impl Factor for VbFactor {
    fn mean(&self) -> &Array2<f64> {
        &self.mean
    }

    fn var(&self) -> Option<&Array2<f64>> {
        Some(&self.var)
    }

    fn set(&mut self, idx: (usize, usize), entry: &Entry) {
        self.mu[idx] = entry.dist.mu;
        self.tau[idx] = entry.dist.tau;
        self.mean[idx] = entry.mean;
        self.var[idx] = entry.var;
    }
}

/// One pass over U then V for a two-factor model.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub(crate) fn nmf_factors<T: Factor>(
    data: &MaskedMatrix,
    resid: &mut Array2<f64>,
    u: &mut T,
    v: &mut T,
    tau: f64,
    rates: &[f64],
    rule: Rule,
    clamp: Clamp,
) {
    let k_dim = u.mean().ncols();
    if !clamp.rows {
        let v2 = v.second_moment();
        for k in 0..k_dim {
            let entries = update_column(
                data.view(),
                resid.view_mut(),
                u.mean().column(k),
                v.mean().column(k),
                v2.column(k),
                None,
                tau,
                rates[k],
                rule,
                TAG_ROWS,
                k,
                k_dim,
            );
            u.set_column(k, &entries);
        }
    }
    if !clamp.cols {
        let u2 = u.second_moment();
        for k in 0..k_dim {
            let entries = update_column(
                data.view_t(),
                resid.view_mut().reversed_axes(),
                v.mean().column(k),
                u.mean().column(k),
                u2.column(k),
                None,
                tau,
                rates[k],
                rule,
                TAG_COLS,
                k,
                k_dim,
            );
            v.set_column(k, &entries);
        }
    }
}

/// Prior rates for a tri-factorisation sweep.
pub(crate) struct NmtfRates<'a> {
    pub f: &'a [f64],
    pub g: &'a [f64],
    pub s: f64,
}

/// One pass over F, S (entry by entry) and G for a tri-factor model.
#[allow(clippy::too_many_arguments)]
pub(crate) fn nmtf_factors<T: Factor>(
    data: &MaskedMatrix,
    resid: &mut Array2<f64>,
    f: &mut T,
    s: &mut T,
    g: &mut T,
    tau: f64,
    rates: &NmtfRates<'_>,
    rule: Rule,
    clamp: Clamp,
) {
    let (k_dim, l_dim) = s.mean().dim();
    if !clamp.rows {
        // Partner of F_ik is (G Sᵀ)_jk; its second moment adds Σ_l S2_kl VarG_jl + VarS_kl G_jl².
        let sg = g.mean().dot(&s.mean().t());
        let mut sq = &sg * &sg;
        if let Some(vg) = g.var() {
            sq += &vg.dot(&s.second_moment().t());
        }
        if let Some(vs) = s.var() {
            let g_sq = g.mean().mapv(|x| x * x);
            sq += &g_sq.dot(&vs.t());
        }
        let w = g.var().map(|vg| masked_row_sums(data.view(), vg.view()));
        let mut fs = f.mean().dot(s.mean());
        for k in 0..k_dim {
            let s_row = s.mean().row(k).to_owned();
            let coupling = w.as_ref().map(|w| Coupling {
                fs: fs.view_mut(),
                s: s_row.view(),
                w: w.view(),
            });
            let entries = update_column(
                data.view(),
                resid.view_mut(),
                f.mean().column(k),
                sg.column(k),
                sq.column(k),
                coupling,
                tau,
                rates.f[k],
                rule,
                TAG_ROWS,
                k,
                k_dim,
            );
            f.set_column(k, &entries);
        }
    }
    if !clamp.middle {
        let f2 = f.second_moment();
        let g2 = g.second_moment();
        let mut coupled = match (f.var(), g.var()) {
            (Some(vf), Some(vg)) => Some((
                vf.clone(),
                vg.clone(),
                f.mean().dot(s.mean()),
                g.mean().dot(&s.mean().t()),
            )),
            _ => None,
        };
        for k in 0..k_dim {
            for l in 0..l_dim {
                let var = coupled.as_mut().map(|(vf, vg, fs, sg)| MiddleCoupling {
                    vf: vf.view(),
                    vg: vg.view(),
                    fs,
                    sg,
                });
                let entry = update_middle_entry(
                    data,
                    resid,
                    f.mean().view(),
                    g.mean().view(),
                    f2.view(),
                    g2.view(),
                    var,
                    s.mean()[[k, l]],
                    (k, l),
                    tau,
                    rates.s,
                    rule,
                    l_dim,
                );
                s.set((k, l), &entry);
            }
        }
    }
    if !clamp.cols {
        let fs = f.mean().dot(s.mean());
        let mut sq = &fs * &fs;
        if let Some(vf) = f.var() {
            sq += &vf.dot(&s.second_moment());
        }
        if let Some(vs) = s.var() {
            let f_sq = f.mean().mapv(|x| x * x);
            sq += &f_sq.dot(vs);
        }
        let w = f.var().map(|vf| masked_row_sums(data.view_t(), vf.view()));
        let mut sg = g.mean().dot(&s.mean().t());
        for l in 0..l_dim {
            let s_col = s.mean().column(l).to_owned();
            let coupling = w.as_ref().map(|w| Coupling {
                fs: sg.view_mut(),
                s: s_col.view(),
                w: w.view(),
            });
            let entries = update_column(
                data.view_t(),
                resid.view_mut().reversed_axes(),
                g.mean().column(l),
                fs.column(l),
                sq.column(l),
                coupling,
                tau,
                rates.g[l],
                rule,
                TAG_COLS,
                l,
                l_dim,
            );
            g.set_column(l, &entries);
        }
    }
}

pub(crate) struct MiddleCoupling<'a> {
    pub vf: ArrayView2<'a, f64>,
    pub vg: ArrayView2<'a, f64>,
    /// Current `F S` (I x L) and `G Sᵀ` (J x K), updated in place.
    pub fs: &'a mut Array2<f64>,
    pub sg: &'a mut Array2<f64>,
}

/// Updates `S_kl`; every observed cell contributes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_middle_entry(
    data: &MaskedMatrix,
    resid: &mut Array2<f64>,
    f: ArrayView2<'_, f64>,
    g: ArrayView2<'_, f64>,
    f2: ArrayView2<'_, f64>,
    g2: ArrayView2<'_, f64>,
    coupling: Option<MiddleCoupling<'_>>,
    s_kl: f64,
    (k, l): (usize, usize),
    tau: f64,
    rate: f64,
    rule: Rule,
    width: usize,
) -> Entry {
    let parts: Vec<(f64, f64)> = {
        let resid = &*resid;
        let coupling = coupling.as_ref();
        (0..data.nrows())
            .into_par_iter()
            .map(|i| {
                let (fi, fi2) = (f[[i, k]], f2[[i, k]]);
                let mut prec = 0.0;
                let mut lin = 0.0;
                for &j in data.row_indices(i) {
                    let gj = g[[j, l]];
                    prec += fi2 * g2[[j, l]];
                    lin += (resid[[i, j]] + s_kl * fi * gj) * fi * gj;
                    if let Some(c) = coupling {
                        lin -= fi * c.vg[[j, l]] * (c.fs[[i, l]] - fi * s_kl)
                            + c.vf[[i, k]] * gj * (c.sg[[j, k]] - s_kl * gj);
                    }
                }
                (prec, lin)
            })
            .collect()
    };
    let (prec, lin) = parts
        .iter()
        .fold((0.0, 0.0), |(p, q), &(a, b)| (p + a, q + b));
    let entry = rule.resolve(
        tau * prec,
        tau * lin - rate,
        rate,
        TAG_MIDDLE,
        (k * width + l) as u64,
    );

    let delta = entry.mean - s_kl;
    if delta != 0.0 {
        Zip::from(resid.rows_mut())
            .and(f.column(k))
            .and(data.view().rows)
            .par_for_each(|mut e, &fi, js| {
                for &j in js {
                    e[j] -= delta * fi * g[[j, l]];
                }
            });
        if let Some(c) = coupling {
            c.fs.column_mut(l).scaled_add(delta, &f.column(k));
            c.sg.column_mut(k).scaled_add(delta, &g.column(l));
        }
    }
    entry
}
