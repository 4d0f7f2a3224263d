mod common;

use bnmf::distributions::{
    sample_truncated_normal, tn_moments, GammaParams, SeededRng, TruncatedNormal, TAIL_SWITCH,
};
use bnmf::special::{digamma, ln_gamma};
use common::{mean_var, rel, tn_moments_quadrature};
use proptest::prelude::*;

#[test]
fn tn_moments_match_quadrature_below_the_switch() {
    for tau in [0.25, 1.0, 9.0] {
        for step in -50..=50 {
            let alpha = step as f64 * 0.5;
            let mu = -alpha / f64::sqrt(tau);
            let (m, v) = tn_moments(TruncatedNormal { mu, tau }).unwrap();
            let (qm, qv) = tn_moments_quadrature(mu, tau);
            assert!(rel(m, qm) < 1e-6, "mean at alpha {alpha}: {m} vs {qm}");
            assert!(rel(v, qv) < 1e-6, "variance at alpha {alpha}: {v} vs {qv}");
        }
    }
}

#[test]
fn tn_moments_are_close_to_the_exponential_form_at_the_switch() {
    // Just below the switch the exact moments apply, just above the
    // exponential ones. Their gap is of order 1/α².
    let tau = 4.0;
    let below = TruncatedNormal::new(-(TAIL_SWITCH - 1e-9) / 2.0, tau).unwrap();
    let above = TruncatedNormal::new(-(TAIL_SWITCH + 1e-9) / 2.0, tau).unwrap();
    assert!(!below.in_tail_regime());
    assert!(above.in_tail_regime());
    let (mb, vb) = below.moments();
    let (ma, va) = above.moments();
    let a2 = TAIL_SWITCH * TAIL_SWITCH;
    assert!(rel(mb, ma) < 3.0 / a2, "mean gap {}", rel(mb, ma));
    assert!(rel(vb, va) < 10.0 / a2, "variance gap {}", rel(vb, va));
}

#[test]
fn tn_monte_carlo_moments_within_three_standard_errors() {
    let n = 100_000;
    for (i, alpha) in [-40.0, -5.0, -1.0, 0.0, 1.0, 5.0, 40.0]
        .into_iter()
        .enumerate()
    {
        let tau = 2.0;
        let mu = -alpha / f64::sqrt(tau);
        let t = TruncatedNormal::new(mu, tau).unwrap();
        let (m, v) = t.moments();
        let mut rng = SeededRng::new(100 + i as u64, 0);
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_truncated_normal(t, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        let (sm, sv) = mean_var(&xs);
        let se_mean = (v / n as f64).sqrt();
        assert!(
            (sm - m).abs() < 3.0 * se_mean,
            "mean at {alpha}: {sm} vs {m}"
        );
        // Var of the sample variance is (μ4 - σ⁴)/n; use the sample fourth moment.
        let m4 = xs.iter().map(|x| (x - sm).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((m4 - sv * sv) / n as f64).sqrt();
        let target = if t.in_tail_regime() {
            // The tail approximation's variance is itself off by O(1/α²).
            let (qm, qv) = tn_moments_quadrature(mu, tau);
            assert!((sm - qm).abs() < 3.0 * se_mean);
            qv
        } else {
            v
        };
        assert!(
            (sv - target).abs() < 3.0 * se_var,
            "var at {alpha}: {sv} vs {target}"
        );
    }
}

#[test]
fn sampler_is_reproducible_per_stream() {
    let t = TruncatedNormal::new(-3.0, 2.0).unwrap();
    let draw = |seed, stream| {
        let mut rng = SeededRng::new(seed, stream);
        (0..100)
            .map(|_| t.sample(&mut rng).to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9, 1), draw(9, 1));
    assert_ne!(draw(9, 1), draw(9, 2));
}

#[test]
fn gamma_functions_match_statrs() {
    use statrs::function::gamma;
    for x in [1e-3, 0.01, 0.3, 1.0, 1.5, 2.0, 7.25, 30.0, 1e3] {
        assert!(
            rel(digamma(x).unwrap(), gamma::digamma(x)) < 1e-10,
            "digamma {x}"
        );
        assert!((ln_gamma(x) - gamma::ln_gamma(x)).abs() < 1e-12 * ln_gamma(x).abs().max(1.0));
    }
    let euler = 0.577_215_664_901_532_9;
    assert!((digamma(1.0).unwrap() + euler).abs() < 1e-12);
    assert!((digamma(2.0).unwrap() - (1.0 - euler)).abs() < 1e-12);
    assert!(digamma(0.0).is_err());
}

#[test]
fn gamma_expectations_match_statrs_moments() {
    use statrs::distribution::{Continuous, Gamma};
    use statrs::statistics::Distribution;
    let p = GammaParams::new(3.5, 2.0).unwrap();
    let reference = Gamma::new(3.5, 2.0).unwrap();
    assert!(rel(p.mean(), reference.mean().unwrap()) < 1e-14);
    assert!(rel(p.entropy(), reference.entropy().unwrap()) < 1e-10);
    // E[ln p(X)] at the distribution's own moments is minus its entropy.
    let own = p.expected_ln_density(p.mean(), p.mean_ln());
    assert!((own + p.entropy()).abs() < 1e-12);
    // ...and for a point mass it is the log density.
    let x = 1.3_f64;
    assert!((p.expected_ln_density(x, x.ln()) - reference.ln_pdf(x)).abs() < 1e-12);
}

#[test]
fn tn_entropy_matches_quadrature() {
    use common::integrate;
    for (mu, tau) in [(1.0, 1.0), (-2.0, 3.0), (0.0, 0.5)] {
        let t = TruncatedNormal::new(mu, tau).unwrap();
        let z = integrate(
            &|x: f64| (-0.5 * tau * (x - mu).powi(2)).exp(),
            0.0,
            60.0,
            400,
            1e-12,
        );
        let h = integrate(
            &|x: f64| {
                let p = (-0.5 * tau * (x - mu).powi(2)).exp() / z;
                if p > 0.0 {
                    -p * p.ln()
                } else {
                    0.0
                }
            },
            0.0,
            60.0,
            400,
            1e-12,
        );
        assert!(
            (t.entropy() - h).abs() < 1e-8,
            "{mu} {tau}: {} vs {h}",
            t.entropy()
        );
    }
}

proptest! {
    #[test]
    fn tn_second_moment_dominates_squared_mean(mu in -50.0..50.0f64, tau in 1e-3..1e3f64) {
        let (m, v) = tn_moments(TruncatedNormal { mu, tau }).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert!(v >= 0.0);
        prop_assert!(m * m + v >= m * m);
        prop_assert!(m + 1e-12 >= mu);
    }

    #[test]
    fn tn_draws_are_nonnegative(mu in -100.0..100.0f64, tau in 1e-3..1e3f64, seed in any::<u64>()) {
        let t = TruncatedNormal::new(mu, tau).unwrap();
        let mut rng = SeededRng::new(seed, 0);
        for _ in 0..20 {
            let x = t.sample(&mut rng);
            prop_assert!(x >= 0.0 && x.is_finite());
        }
    }

    #[test]
    fn gamma_draws_are_positive(shape in 1e-2..1e3f64, rate in 1e-3..1e3f64, seed in any::<u64>()) {
        let g = GammaParams::new(shape, rate).unwrap();
        let mut rng = SeededRng::new(seed, 0);
        for _ in 0..20 {
            let x = g.sample(&mut rng);
            prop_assert!(x > 0.0 && x.is_finite());
        }
    }
}
