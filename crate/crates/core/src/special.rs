//! Special functions used by the truncated-normal moments and the ELBO.

use crate::error::{invalid, Result};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Scaled complementary error function `exp(x^2) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 26.0 {
        // erfc is accurate to ~1 ulp up to its underflow point; exp(x^2) stays finite here.
        (x * x).exp() * libm::erfc(x)
    } else {
        erfcx_continued_fraction(x)
    }
}

// Lentz evaluation of erfc(x) e^{x^2} = (1/sqrt(pi)) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))).
fn erfcx_continued_fraction(x: f64) -> f64 {
    let mut tail = x;
    for n in (1..=60).rev() {
        tail = x + (n as f64 / 2.0) / tail;
    }
    FRAC_1_SQRT_PI / tail
}

/// Inverse Mills ratio `φ(x) / (1 - Φ(x))` for the standard normal.
pub fn inverse_mills(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if x >= 0.0 {
        SQRT_2_OVER_PI / erfcx(z)
    } else {
        let phi = (-0.5 * x * x - LN_SQRT_2PI).exp();
        phi / (0.5 * libm::erfc(z))
    }
}

/// `ln(1 - Φ(x))`, stable in the upper tail.
pub fn ln_normal_upper_tail(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if x >= 0.0 {
        (0.5 * erfcx(z)).ln() - z * z
    } else {
        (0.5 * libm::erfc(z)).ln()
    }
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma function `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid(
            "x",
            format!("digamma needs a positive finite argument, got {x}"),
        ));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Asymptotic expansion with Bernoulli-number coefficients.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    shift + x.ln() - 0.5 * inv - series
}
