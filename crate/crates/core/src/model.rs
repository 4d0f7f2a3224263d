//! Hyperparameters, factor-state containers and initialisation.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{GammaParams, TruncatedNormal};
use crate::error::{invalid, Error, Result};
use crate::kmeans::kmeans_rows;
use crate::masked::MaskedMatrix;

/// Value added to k-means indicators for the sampling-based engines.
pub const KMEANS_SMOOTHING: f64 = 0.2;

/// Prior hyperparameters and dimensionalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Rate of the exponential prior on every factor entry.
    pub lambda: f64,
    pub alpha_tau: f64,
    pub beta_tau: f64,
    /// Gamma hyperprior on the ARD rates.
    pub alpha0: f64,
    pub beta0: f64,
    pub k: usize,
    /// Column dimensionality of the tri-factorisation; unused by NMF.
    pub l: usize,
    pub ard: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            alpha_tau: 1.0,
            beta_tau: 1.0,
            alpha0: 1.0,
            beta0: 1.0,
            k: 10,
            l: 10,
            ard: false,
        }
    }
}

impl HyperParams {
    pub fn with_rank(k: usize, l: usize) -> Self {
        Self {
            k,
            l,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("alpha_tau", self.alpha_tau),
            ("beta_tau", self.beta_tau),
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if self.l == 0 {
            return Err(invalid("l", "must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn tau_prior(&self) -> GammaParams {
        GammaParams {
            shape: self.alpha_tau,
            rate: self.beta_tau,
        }
    }

    pub(crate) fn ard_prior(&self) -> GammaParams {
        GammaParams {
            shape: self.alpha0,
            rate: self.beta0,
        }
    }
}

/// How factor values are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    #[serde(alias = "prior-mean")]
    PriorMean,
    #[serde(alias = "random")]
    RandomDraw,
    /// Cluster indicators from k-means on rows (F) and columns (G); tri-factorisation only.
    #[serde(alias = "kmeans")]
    KMeans,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior_mean" | "prior-mean" | "exp" => Ok(Self::PriorMean),
            "random_draw" | "random-draw" | "random" => Ok(Self::RandomDraw),
            "kmeans" | "k-means" => Ok(Self::KMeans),
            other => Err(Error::Config(format!("unknown init strategy `{other}`"))),
        }
    }
}

/// Point estimate of a two-factor model `R ≈ U Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfState {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub tau: f64,
    /// Per-column ARD rates `λ_k`.
    pub ard: Option<Array1<f64>>,
}

/// Point estimate of a tri-factor model `R ≈ F S Gᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NmtfState {
    pub f: Array2<f64>,
    pub s: Array2<f64>,
    pub g: Array2<f64>,
    pub tau: f64,
    pub ard_f: Option<Array1<f64>>,
    pub ard_g: Option<Array1<f64>>,
}

/// Variational truncated-normal factors for one matrix, with cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct VbFactor {
    pub mu: Array2<f64>,
    pub tau: Array2<f64>,
    pub mean: Array2<f64>,
    pub var: Array2<f64>,
}

impl VbFactor {
    pub fn from_params(mu: Array2<f64>, tau: Array2<f64>) -> Result<Self> {
        if mu.dim() != tau.dim() {
            return Err(Error::ShapeMismatch {
                expected: mu.dim(),
                found: tau.dim(),
            });
        }
        let mut mean = Array2::zeros(mu.dim());
        let mut var = Array2::zeros(mu.dim());
        for ((idx, &m), &t) in mu.indexed_iter().zip(tau.iter()) {
            let (e, v) = TruncatedNormal::new(m, t)?.moments();
            mean[idx] = e;
            var[idx] = v;
        }
        Ok(Self { mu, tau, mean, var })
    }

    /// A factor held at fixed values: zero variance, infinite precision.
    pub fn point(values: Array2<f64>) -> Self {
        Self {
            mu: values.clone(),
            tau: Array2::from_elem(values.dim(), f64::INFINITY),
            var: Array2::zeros(values.dim()),
            mean: values,
        }
    }

    /// `Ẽ[X²] = Ẽ[X]² + Var[X]`.
    pub fn second_moment(&self) -> Array2<f64> {
        &self.mean * &self.mean + &self.var
    }

    pub fn dim(&self) -> (usize, usize) {
        self.mean.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VbNmfState {
    pub u: VbFactor,
    pub v: VbFactor,
    pub tau: GammaParams,
    pub ard: Option<Vec<GammaParams>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VbNmtfState {
    pub f: VbFactor,
    pub s: VbFactor,
    pub g: VbFactor,
    pub tau: GammaParams,
    pub ard_f: Option<Vec<GammaParams>>,
    pub ard_g: Option<Vec<GammaParams>>,
}

/// Anything that produces a dense `I x J` reconstruction.
pub trait Predict {
    fn predict(&self) -> Array2<f64>;
}

impl Predict for NmfState {
    fn predict(&self) -> Array2<f64> {
        self.u.dot(&self.v.t())
    }
}

impl Predict for NmtfState {
    fn predict(&self) -> Array2<f64> {
        self.f.dot(&self.s).dot(&self.g.t())
    }
}

impl Predict for VbNmfState {
    fn predict(&self) -> Array2<f64> {
        self.u.mean.dot(&self.v.mean.t())
    }
}

impl Predict for VbNmtfState {
    fn predict(&self) -> Array2<f64> {
        self.f.mean.dot(&self.s.mean).dot(&self.g.mean.t())
    }
}

impl NmfState {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.u.nrows(), self.v.nrows(), self.u.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.ncols() != self.v.ncols() {
            return Err(Error::InvalidState(
                "U and V have different column counts".into(),
            ));
        }
        check_nonnegative("U", &self.u)?;
        check_nonnegative("V", &self.v)?;
        check_rates("ard", self.ard.as_ref(), self.u.ncols())?;
        check_tau(self.tau)
    }
}

impl NmtfState {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.f.nrows(),
            self.g.nrows(),
            self.f.ncols(),
            self.g.ncols(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.s.dim() != (self.f.ncols(), self.g.ncols()) {
            return Err(Error::InvalidState("S must be K x L".into()));
        }
        check_nonnegative("F", &self.f)?;
        check_nonnegative("S", &self.s)?;
        check_nonnegative("G", &self.g)?;
        check_rates("ard_f", self.ard_f.as_ref(), self.f.ncols())?;
        check_rates("ard_g", self.ard_g.as_ref(), self.g.ncols())?;
        check_tau(self.tau)
    }
}

fn check_nonnegative(name: &str, m: &Array2<f64>) -> Result<()> {
    if m.iter().all(|&x| x >= 0.0 && x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "{name} has negative or non-finite entries"
        )))
    }
}

fn check_rates(name: &str, rates: Option<&Array1<f64>>, len: usize) -> Result<()> {
    match rates {
        Some(r) if r.len() != len => Err(Error::InvalidState(format!(
            "{name} has length {}, expected {len}",
            r.len()
        ))),
        Some(r) if !r.iter().all(|&x| x > 0.0 && x.is_finite()) => {
            Err(Error::InvalidState(format!("{name} must be positive")))
        }
        _ => Ok(()),
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "tau must be positive, got {tau}"
        )))
    }
}

// Rate used for the entries of one factor column at initialisation.
fn entry_rates(hyper: &HyperParams, n: usize) -> Vec<f64> {
    let rate = if hyper.ard {
        hyper.ard_prior().mean()
    } else {
        hyper.lambda
    };
    vec![rate; n]
}

fn ard_init(hyper: &HyperParams, n: usize) -> Option<Array1<f64>> {
    hyper
        .ard
        .then(|| Array1::from_elem(n, hyper.ard_prior().mean()))
}

fn factor_init<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rates: &[f64],
    strategy: InitStrategy,
    rng: &mut R,
) -> Array2<f64> {
    match strategy {
        InitStrategy::PriorMean => Array2::from_shape_fn((rows, cols), |(_, k)| 1.0 / rates[k]),
        _ => {
            let mut out = Array2::zeros((rows, cols));
            // Row-major draw order keeps the sequence independent of layout.
            for i in 0..rows {
                for k in 0..cols {
                    let e: f64 = rng.sample(rand_distr::Exp1);
                    out[[i, k]] = e / rates[k];
                }
            }
            out
        }
    }
}

/// Initialises a point-estimate NMF state. k-means initialisation is not
/// defined for two-factor models.
pub fn init_nmf<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    strategy: InitStrategy,
    rng: &mut R,
) -> Result<NmfState> {
    hyper.validate()?;
    if strategy == InitStrategy::KMeans {
        return Err(Error::Config(
            "k-means initialisation applies to tri-factorisation only".into(),
        ));
    }
    let (i, j) = data.dim();
    let rates = entry_rates(hyper, hyper.k);
    Ok(NmfState {
        u: factor_init(i, hyper.k, &rates, strategy, rng),
        v: factor_init(j, hyper.k, &rates, strategy, rng),
        tau: hyper.tau_prior().mean(),
        ard: ard_init(hyper, hyper.k),
    })
}

/// Initialises a point-estimate NMTF state. With k-means, `kmeans_offset` is
/// added to the indicators ([`KMEANS_SMOOTHING`] for the sampling engines, 0
/// for multiplicative updates) and S is drawn from its prior.
pub fn init_nmtf<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    strategy: InitStrategy,
    kmeans_offset: f64,
    rng: &mut R,
) -> Result<NmtfState> {
    hyper.validate()?;
    let (i, j) = data.dim();
    let (k, l) = (hyper.k, hyper.l);
    let s = factor_init(
        k,
        l,
        &vec![hyper.lambda; l],
        match strategy {
            InitStrategy::PriorMean => InitStrategy::PriorMean,
            _ => InitStrategy::RandomDraw,
        },
        rng,
    );
    let (f, g) = match strategy {
        InitStrategy::KMeans => {
            let f = kmeans_rows(data, k, rng)? + kmeans_offset;
            let g = kmeans_rows(&data.transposed(), l, rng)? + kmeans_offset;
            (f, g)
        }
        _ => (
            factor_init(i, k, &entry_rates(hyper, k), strategy, rng),
            factor_init(j, l, &entry_rates(hyper, l), strategy, rng),
        ),
    };
    Ok(NmtfState {
        f,
        s,
        g,
        tau: hyper.tau_prior().mean(),
        ard_f: ard_init(hyper, k),
        ard_g: ard_init(hyper, l),
    })
}

fn vb_factor_from_means(means: Array2<f64>) -> Result<VbFactor> {
    let tau = Array2::ones(means.dim());
    VbFactor::from_params(means, tau)
}

fn vb_ard(hyper: &HyperParams, n: usize) -> Option<Vec<GammaParams>> {
    hyper.ard.then(|| vec![hyper.ard_prior(); n])
}

/// Initialises a variational NMF state: location parameters from the strategy,
/// unit precisions, `q(τ)` and `q(λ)` at their priors.
pub fn init_vb_nmf<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    strategy: InitStrategy,
    rng: &mut R,
) -> Result<VbNmfState> {
    let point = init_nmf(data, hyper, strategy, rng)?;
    Ok(VbNmfState {
        u: vb_factor_from_means(point.u)?,
        v: vb_factor_from_means(point.v)?,
        tau: hyper.tau_prior(),
        ard: vb_ard(hyper, hyper.k),
    })
}

pub fn init_vb_nmtf<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    strategy: InitStrategy,
    rng: &mut R,
) -> Result<VbNmtfState> {
    let point = init_nmtf(data, hyper, strategy, 0.0, rng)?;
    Ok(VbNmtfState {
        f: vb_factor_from_means(point.f)?,
        s: vb_factor_from_means(point.s)?,
        g: vb_factor_from_means(point.g)?,
        tau: hyper.tau_prior(),
        ard_f: vb_ard(hyper, hyper.k),
        ard_g: vb_ard(hyper, hyper.l),
    })
}
