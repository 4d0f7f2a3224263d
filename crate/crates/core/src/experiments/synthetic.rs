//! Synthetic data drawn from the generative model.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::SeededRng;
use crate::error::{invalid, Result};
use crate::masked::MaskedMatrix;

/// How much Gaussian noise is added to the noise-free product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Fixed noise variance `σ²`.
    Variance(f64),
    /// Noise standard deviation as a multiple of the standard deviation of the truth.
    Nsr(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    /// Present for a tri-factor truth `F S Gᵀ`.
    pub l: Option<usize>,
    /// Rate of the exponential distribution of every factor entry.
    pub factor_rate: f64,
    pub noise: Noise,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 100 x 80 matrix of rank 10 with unit-variance noise.
    pub fn nmf(seed: u64) -> Self {
        Self {
            rows: 100,
            cols: 80,
            k: 10,
            l: None,
            factor_rate: 1.0,
            noise: Noise::Variance(1.0),
            seed,
        }
    }

    /// 100 x 80 tri-factor matrix with K = L = 5 and unit-variance noise.
    pub fn nmtf(seed: u64) -> Self {
        Self {
            k: 5,
            l: Some(5),
            ..Self::nmf(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.k == 0 || self.l == Some(0) {
            return Err(invalid("dimensions", "all dimensions must be positive"));
        }
        if !(self.factor_rate > 0.0 && self.factor_rate.is_finite()) {
            return Err(invalid("factor_rate", "must be positive"));
        }
        let level = match self.noise {
            Noise::Variance(v) | Noise::Nsr(v) => v,
        };
        if !(level >= 0.0 && level.is_finite()) {
            return Err(invalid("noise", "must be nonnegative"));
        }
        Ok(())
    }

    /// Generates with a generator seeded from `self.seed`.
    pub fn generate(&self) -> Result<Synthetic> {
        generate_synthetic(self, &mut SeededRng::new(self.seed, 0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    /// Fully observed noisy matrix.
    pub data: MaskedMatrix,
    /// Noise-free product of the factors.
    pub truth: Array2<f64>,
    pub noise_variance: f64,
}

/// Population standard deviation of every entry.
pub fn std_dev(m: &Array2<f64>) -> f64 {
    let n = m.len() as f64;
    let mean = m.sum() / n;
    (m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn draw_factor<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    exp: Exp<f64>,
    rng: &mut R,
) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for x in m.iter_mut() {
        *x = rng.sample(exp);
    }
    m
}

/// Draws the noise-free product of exponential factors.
pub fn generate_truth<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Array2<f64>> {
    spec.validate()?;
    let exp = Exp::new(spec.factor_rate).map_err(|e| invalid("factor_rate", e.to_string()))?;
    let a = draw_factor(spec.rows, spec.k, exp, rng);
    Ok(match spec.l {
        None => {
            let b = draw_factor(spec.cols, spec.k, exp, rng);
            a.dot(&b.t())
        }
        Some(l) => {
            let s = draw_factor(spec.k, l, exp, rng);
            let g = draw_factor(spec.cols, l, exp, rng);
            a.dot(&s).dot(&g.t())
        }
    })
}

/// Adds Gaussian noise of the requested level to `truth`.
pub fn add_noise<R: Rng + ?Sized>(
    truth: &Array2<f64>,
    noise: Noise,
    rng: &mut R,
) -> Result<Synthetic> {
    let sigma = match noise {
        Noise::Variance(v) => v.sqrt(),
        Noise::Nsr(rho) => rho * std_dev(truth),
    };
    let mut values = truth.clone();
    if sigma > 0.0 {
        for x in values.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma * z;
        }
    }
    Ok(Synthetic {
        data: MaskedMatrix::fully_observed(values)?,
        truth: truth.clone(),
        noise_variance: sigma * sigma,
    })
}

pub fn generate_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Synthetic> {
    let truth = generate_truth(spec, rng)?;
    add_noise(&truth, spec.noise, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rate_rank_ten_has_mean_near_ten() {
        let s = SyntheticSpec::nmf(5).generate().unwrap();
        assert_eq!(s.truth.dim(), (100, 80));
        let mean = s.truth.mean().unwrap();
        assert!((mean - 10.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn zero_nsr_leaves_truth_untouched() {
        let spec = SyntheticSpec {
            noise: Noise::Nsr(0.0),
            ..SyntheticSpec::nmtf(2)
        };
        let s = spec.generate().unwrap();
        assert_eq!(s.data.values(), s.truth.view());
        assert_eq!(s.noise_variance, 0.0);
    }

    #[test]
    fn nsr_scales_with_truth_spread() {
        let spec = SyntheticSpec {
            noise: Noise::Nsr(0.5),
            ..SyntheticSpec::nmf(3)
        };
        let s = spec.generate().unwrap();
        let expected = (0.5 * std_dev(&s.truth)).powi(2);
        assert!((s.noise_variance - expected).abs() < 1e-12);
    }
}
