//! Numerical oracles shared by the integration tests.
#![allow(dead_code)]

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative accuracy
/// `rtol`, started from `panels` equal subintervals so narrow peaks are not
/// stepped over.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, rtol: f64) -> f64 {
    let h = (b - a) / panels as f64;
    let coarse: Vec<(f64, f64, f64, f64, f64)> = (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            (lo, hi, f(lo), f(0.5 * (lo + hi)), f(hi))
        })
        .collect();
    let scale: f64 = coarse
        .iter()
        .map(|&(_, _, fa, fm, fb)| h / 6.0 * (fa.abs() + 4.0 * fm.abs() + fb.abs()))
        .sum();
    let tol = rtol * scale / panels as f64;
    coarse
        .into_iter()
        .map(|(lo, hi, fa, fm, fb)| {
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, tol, 30)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Mean and variance of `N(mu, 1/tau)` truncated to `x >= 0`, by quadrature.
///
/// Works with the standardised value `t = x√τ`, whose
/// density is proportional to `exp(-αt - t²/2)` for `α = -μ√τ`.
pub fn tn_moments_quadrature(mu: f64, tau: f64) -> (f64, f64) {
    let alpha = -mu * tau.sqrt();
    let density = move |t: f64| {
        if alpha >= 0.0 {
            (-alpha * t - 0.5 * t * t).exp()
        } else {
            (-0.5 * (t + alpha).powi(2)).exp()
        }
    };
    let upper = alpha.min(0.0).abs() + 40.0;
    let tol = 1e-12;
    let z = integrate(&density, 0.0, upper, 400, tol);
    let m1 = integrate(&|t| t * density(t), 0.0, upper, 400, tol) / z;
    let m2 = integrate(&|t| t * t * density(t), 0.0, upper, 400, tol) / z;
    let sd = 1.0 / tau.sqrt();
    (m1 * sd, (m2 - m1 * m1) * sd * sd)
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Marginal posterior of a scalar factor `u` in `r_j ≈ u·x_j` under an
/// exponential prior with rate `lambda` and a `Gamma(a, b)` noise precision
/// integrated out: `p(u) ∝ exp(-λu) (b + ½ Σ (r_j - u x_j)²)^-(a + n/2)`.
pub struct ScalarPosterior {
    r: Vec<f64>,
    x: Vec<f64>,
    lambda: f64,
    a: f64,
    b: f64,
    log_peak: f64,
    pub z: f64,
}

impl ScalarPosterior {
    pub fn new(r: &[f64], x: &[f64], lambda: f64, a: f64, b: f64) -> Self {
        let mut p = Self {
            r: r.to_vec(),
            x: x.to_vec(),
            lambda,
            a,
            b,
            log_peak: 0.0,
            z: 1.0,
        };
        p.log_peak = (0..=20_000)
            .map(|i| p.log_unnormalised(i as f64 * 1e-3))
            .fold(f64::NEG_INFINITY, f64::max);
        p.z = p.integral(&|_| 1.0, f64::INFINITY);
        p
    }

    fn log_unnormalised(&self, u: f64) -> f64 {
        let ss: f64 = self
            .r
            .iter()
            .zip(&self.x)
            .map(|(r, x)| (r - u * x).powi(2))
            .sum();
        let shape = self.a + self.r.len() as f64 / 2.0;
        -self.lambda * u - shape * (self.b + 0.5 * ss).ln()
    }

    pub fn density(&self, u: f64) -> f64 {
        (self.log_unnormalised(u) - self.log_peak).exp() / self.z
    }

    // Integral of g(u)·density(u) over [0, upper], with the heavy tail split off.
    fn integral<G: Fn(f64) -> f64>(&self, g: &G, upper: f64) -> f64 {
        let f = |u: f64| g(u) * (self.log_unnormalised(u) - self.log_peak).exp() / self.z;
        let mut total = 0.0;
        let mut lo = 0.0;
        for hi in [20.0_f64, 200.0, 2000.0] {
            if lo >= upper {
                break;
            }
            let h = hi.min(upper);
            total += integrate(&f, lo, h, 400, 1e-12);
            lo = h;
        }
        total
    }

    pub fn mean(&self) -> f64 {
        self.integral(&|u| u, f64::INFINITY)
    }

    pub fn cdf(&self, u: f64) -> f64 {
        self.integral(&|_| 1.0, u)
    }

    /// Points splitting the distribution into `bins` equally likely intervals.
    pub fn quantiles(&self, bins: usize) -> Vec<f64> {
        (1..bins)
            .map(|q| {
                let target = q as f64 / bins as f64;
                let (mut lo, mut hi) = (0.0, 2000.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }
}

/// Standard error of the mean of a correlated series by non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    (mean_var(&means).1 / means.len() as f64).sqrt()
}

/// Pearson χ² statistic of `xs` against equiprobable bins with the given edges.
pub fn chi_square(xs: &[f64], edges: &[f64]) -> f64 {
    let bins = edges.len() + 1;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        counts[edges.partition_point(|&e| e < x)] += 1;
    }
    let expected = xs.len() as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}
