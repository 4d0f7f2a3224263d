//! Seeded sampling and closed-form moments for the exponential, Gamma and
//! zero-truncated normal distributions.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{digamma_unchecked, inverse_mills, ln_gamma, ln_normal_upper_tail};

/// Above this value of `-μ√τ` the truncated normal is treated as the exponential
/// distribution with rate `|μτ|`; `Φ` is within a few hundred ulps of underflow there.
pub const TAIL_SWITCH: f64 = 30.0;

// Standardised truncation point below which plain normal rejection is efficient.
const NORMAL_REJECTION_LIMIT: f64 = 0.25;

/// Deterministic random stream identified by `(seed, stream)`.
///
/// Backed by ChaCha8, so sequences are identical on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Stream for a single parameter entry at one iteration. Entries drawn in
    /// parallel get independent streams regardless of scheduling.
    pub fn for_entry(seed: u64, iteration: u64, tag: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, &[iteration, tag]), index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of tags into a new seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Gamma distribution with shape `α` and rate `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(invalid("shape", format!("must be positive, got {shape}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", format!("must be positive, got {rate}")));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// `(α - 1) / β`; defined for `α >= 1`.
    pub fn mode(&self) -> Result<f64> {
        if self.shape < 1.0 {
            return Err(invalid(
                "shape",
                format!("Gamma mode needs shape >= 1, got {}", self.shape),
            ));
        }
        Ok((self.shape - 1.0) / self.rate)
    }

    /// `E[ln X] = ψ(α) - ln β`.
    pub fn mean_ln(&self) -> f64 {
        digamma_unchecked(self.shape) - self.rate.ln()
    }

    pub fn entropy(&self) -> f64 {
        let a = self.shape;
        a - self.rate.ln() + ln_gamma(a) + (1.0 - a) * digamma_unchecked(a)
    }

    /// `E[ln p(X)]` under this density when `X` has the given expectations.
    pub fn expected_ln_density(&self, mean: f64, mean_ln: f64) -> f64 {
        let a = self.shape;
        a * self.rate.ln() - ln_gamma(a) + (a - 1.0) * mean_ln - self.rate * mean
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0 / self.rate).expect("validated parameters");
        // Extremely small shapes can round a draw to zero; keep the support open.
        g.sample(rng).max(f64::MIN_POSITIVE)
    }
}

/// Normal distribution with mean `mu` and precision `tau`, truncated to `x >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub tau: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {tau}")));
        }
        if !mu.is_finite() {
            return Err(invalid("mu", format!("must be finite, got {mu}")));
        }
        Ok(Self { mu, tau })
    }

    /// Parameters whose distribution is (numerically) the exponential with `rate`.
    /// A normal with precision `τ → 0` and `μτ = -rate` converges to it.
    pub fn exponential_limit(rate: f64) -> Self {
        let tau = (rate * 1e-6).powi(2);
        Self {
            mu: -rate / tau,
            tau,
        }
    }

    /// Standardised truncation point `-μ√τ`.
    pub fn alpha(&self) -> f64 {
        -self.mu * self.tau.sqrt()
    }

    pub fn in_tail_regime(&self) -> bool {
        self.alpha() > TAIL_SWITCH
    }

    /// Mean and variance.
    pub fn moments(&self) -> (f64, f64) {
        let alpha = self.alpha();
        if alpha > TAIL_SWITCH {
            let rate = (self.mu * self.tau).abs();
            return (1.0 / rate, 1.0 / (rate * rate));
        }
        let lambda = inverse_mills(alpha);
        let sd = 1.0 / self.tau.sqrt();
        let mean = self.mu + lambda * sd;
        let delta = lambda * (lambda - alpha);
        let var = (1.0 - delta).max(0.0) / self.tau;
        (mean.max(0.0), var)
    }

    pub fn mode(&self) -> f64 {
        self.mu.max(0.0)
    }

    /// Differential entropy, consistent with [`moments`](Self::moments) in the tail regime.
    pub fn entropy(&self) -> f64 {
        let alpha = self.alpha();
        if alpha > TAIL_SWITCH {
            return 1.0 - (self.mu * self.tau).abs().ln();
        }
        let (mean, var) = self.moments();
        let centred = var + (mean - self.mu).powi(2);
        0.5 * (2.0 * std::f64::consts::PI / self.tau).ln()
            + 0.5 * self.tau * centred
            + ln_normal_upper_tail(alpha)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let alpha = self.alpha();
        let sd = 1.0 / self.tau.sqrt();
        if alpha < NORMAL_REJECTION_LIMIT {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z >= alpha {
                    return (self.mu + sd * z).max(0.0);
                }
            }
        }
        // Exponential-proposal rejection for the tail beyond alpha. The excess
        // over the truncation point is drawn directly, so x = sd * excess never
        // suffers cancellation between mu and sd * z.
        let rate = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let excess = e / rate;
            let z = alpha + excess;
            let u: f64 = rng.random();
            if u <= (-0.5 * (z - rate).powi(2)).exp() {
                return sd * excess;
            }
        }
    }
}

pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    let d = Exp::new(rate)
        .ok()
        .filter(|_| rate > 0.0 && rate.is_finite())
        .ok_or_else(|| invalid("rate", format!("must be positive, got {rate}")))?;
    Ok(d.sample(rng))
}

pub fn sample_gamma<R: Rng + ?Sized>(params: GammaParams, rng: &mut R) -> Result<f64> {
    let p = GammaParams::new(params.shape, params.rate)?;
    Ok(p.sample(rng))
}

pub fn sample_truncated_normal<R: Rng + ?Sized>(
    params: TruncatedNormal,
    rng: &mut R,
) -> Result<f64> {
    let p = TruncatedNormal::new(params.mu, params.tau)?;
    Ok(p.sample(rng))
}

pub fn tn_moments(params: TruncatedNormal) -> Result<(f64, f64)> {
    Ok(TruncatedNormal::new(params.mu, params.tau)?.moments())
}

pub fn tn_mode(params: TruncatedNormal) -> f64 {
    params.mode()
}

pub fn gamma_mode(params: GammaParams) -> Result<f64> {
    params.mode()
}

pub fn gamma_mean(params: GammaParams) -> f64 {
    params.mean()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn exponential_sample_means() {
        let mut rng = SeededRng::new(1, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_exponential(1.0, &mut rng).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 1.0).abs() < 0.02);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_exponential(0.1, &mut rng).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 10.0).abs() < 0.2);
        assert!(sample_exponential(0.0, &mut rng).is_err());
        assert!(sample_exponential(-1.0, &mut rng).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = SeededRng::new(42, 7);
        let mut b = SeededRng::new(42, 7);
        let mut c = SeededRng::new(42, 8);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        let mut e1 = SeededRng::for_entry(3, 10, 1, 5);
        let mut e2 = SeededRng::for_entry(3, 10, 1, 5);
        let t = TruncatedNormal::new(0.3, 2.0).unwrap();
        assert_eq!(t.sample(&mut e1).to_bits(), t.sample(&mut e2).to_bits());
    }

    #[test]
    fn gamma_sampling() {
        let mut rng = SeededRng::new(5, 0);
        let p = GammaParams::new(2.0, 4.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        assert!((mean_var(&xs).0 - 0.5).abs() < 0.01);
        assert!(GammaParams::new(0.0, 1.0).is_err());
        assert!(sample_gamma(
            GammaParams {
                shape: 0.0,
                rate: 1.0
            },
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn gamma_one_is_exponential_ks() {
        let mut rng = SeededRng::new(11, 0);
        let p = GammaParams::new(1.0, 1.0).unwrap();
        let mut xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-x).exp();
                (cdf - i as f64 / n)
                    .abs()
                    .max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn modes_and_means() {
        assert_eq!(tn_mode(TruncatedNormal { mu: -3.0, tau: 1.0 }), 0.0);
        assert_eq!(tn_mode(TruncatedNormal { mu: 2.5, tau: 1.0 }), 2.5);
        assert_eq!(
            gamma_mode(GammaParams {
                shape: 2.0,
                rate: 4.0
            })
            .unwrap(),
            0.25
        );
        assert!(gamma_mode(GammaParams {
            shape: 0.5,
            rate: 4.0
        })
        .is_err());
        assert_eq!(
            gamma_mean(GammaParams {
                shape: 3.0,
                rate: 6.0
            }),
            0.5
        );
    }

    #[test]
    fn truncated_normal_far_from_boundary() {
        let t = TruncatedNormal::new(10.0, 4.0).unwrap();
        let (m, v) = t.moments();
        assert!((m - 10.0).abs() < 1e-12);
        assert!((v - 0.25).abs() < 1e-12);

        let t = TruncatedNormal::new(5.0, 100.0).unwrap();
        let mut rng = SeededRng::new(3, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| t.sample(&mut rng)).collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 5.0).abs() < 0.01);
        assert!((v - 0.01).abs() < 0.001);
    }

    #[test]
    fn truncated_normal_half_normal() {
        let t = TruncatedNormal::new(0.0, 1.0).unwrap();
        let (m, v) = t.moments();
        let half_mean = (2.0 / std::f64::consts::PI).sqrt();
        assert!((m - half_mean).abs() < 1e-14);
        assert!((v - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-14);
        let mut rng = SeededRng::new(4, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| t.sample(&mut rng)).collect();
        assert!((mean_var(&xs).0 - half_mean).abs() < 0.01);
    }

    #[test]
    fn truncated_normal_exponential_tail() {
        let t = TruncatedNormal::new(-40.0, 1.0).unwrap();
        let (m, v) = t.moments();
        assert_eq!(m, 0.025);
        assert_eq!(v, 0.000625);

        let t = TruncatedNormal::new(-50.0, 1.0).unwrap();
        let mut rng = SeededRng::new(9, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| t.sample(&mut rng)).collect();
        let m = mean_var(&xs).0;
        assert!((m - 0.02).abs() < 0.002, "{m}");
        assert!(xs.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn exponential_limit_encoding() {
        let t = TruncatedNormal::exponential_limit(0.1);
        assert!(t.in_tail_regime());
        let (m, v) = t.moments();
        assert!((m - 10.0).abs() < 1e-9);
        assert!((v - 100.0).abs() < 1e-7);
        // Entropy of Exp(rate) is 1 - ln(rate).
        assert!((t.entropy() - (1.0 - 0.1f64.ln())).abs() < 1e-9);
        let mut rng = SeededRng::new(2, 0);
        let xs: Vec<f64> = (0..50_000).map(|_| t.sample(&mut rng)).collect();
        assert!((mean_var(&xs).0 - 10.0).abs() < 0.3);
    }

    #[test]
    fn invalid_truncated_normal() {
        assert!(TruncatedNormal::new(0.0, 0.0).is_err());
        assert!(tn_moments(TruncatedNormal { mu: 1.0, tau: -1.0 }).is_err());
        let mut rng = SeededRng::new(0, 0);
        assert!(sample_truncated_normal(
            TruncatedNormal {
                mu: 0.0,
                tau: f64::NAN
            },
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn gamma_entropy_of_exponential() {
        // Gamma(1, β) = Exp(β) with entropy 1 - ln β.
        let g = GammaParams::new(1.0, 3.0).unwrap();
        assert!((g.entropy() - (1.0 - 3f64.ln())).abs() < 1e-13);
        assert!((g.mean_ln() - (-0.577_215_664_901_532_9 - 3f64.ln())).abs() < 1e-13);
    }
}
