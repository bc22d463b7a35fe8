//! Normal-distribution special functions that stay accurate far into the tails.
//!
//! Everything that can underflow is also available in log form. The scaled
//! complementary error function `erfcx(x) = exp(x²)·erfc(x)` is the workhorse:
//! it turns tail probabilities into `exp(-x²/2)` times a well-scaled factor.

use statrs::function::erf;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Scaled complementary error function `exp(x²)·erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // erfc(-y) = 2 - erfc(y)
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 2.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    if x > 1e8 {
        return FRAC_1_SQRT_PI / x;
    }
    // Laplace continued fraction erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))),
    // evaluated bottom-up.
    let depth = (20.0 + 400.0 / (x * x)).ceil() as usize;
    let mut t = x;
    for j in (1..=depth).rev() {
        t = x + 0.5 * j as f64 / t;
    }
    FRAC_1_SQRT_PI / t
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF with full relative accuracy in the lower tail.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, finite for arbitrarily negative `x`.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x < -5.0 {
        (0.5 * erfcx(-x * FRAC_1_SQRT_2)).ln() - 0.5 * x * x
    } else if x > 5.0 {
        (-norm_cdf(-x)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Mills ratio `Φ(-x)/φ(x)`.
pub fn mills_ratio(x: f64) -> f64 {
    (PI / 2.0).sqrt() * erfcx(x * FRAC_1_SQRT_2)
}

/// Standard normal quantile, accurate for probabilities down to the smallest normal f64.
pub fn norm_inv(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p < 0.5 {
        -SQRT_2 * erf::erfc_inv(2.0 * p)
    } else {
        SQRT_2 * erf::erfc_inv(2.0 * (1.0 - p))
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln Σ exp(xᵢ)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_matches_direct_evaluation_where_that_is_safe() {
        for &x in &[0.0f64, 0.3, 1.0, 1.99, 2.0, 2.5, 3.0, 4.0, 6.0, 9.0] {
            let direct = (x * x).exp() * libm::erfc(x);
            let rel = (erfcx(x) - direct).abs() / direct;
            assert!(rel < 1e-13, "x={x}: {} vs {direct} (rel {rel:e})", erfcx(x));
        }
    }

    #[test]
    fn erfcx_large_argument_asymptotics() {
        // erfcx(x) = 1/(x√π)·(1 - 1/(2x²) + 3/(4x⁴) - 15/(8x⁶) + …)
        for &x in &[30.0, 100.0, 1e3] {
            let z = 1.0 / (x * x);
            let series = FRAC_1_SQRT_PI / x * (1.0 - 0.5 * z + 0.75 * z * z - 1.875 * z * z * z);
            assert!((erfcx(x) / series - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn log_norm_cdf_deep_tail() {
        // ln Φ(-40) from the asymptotic series -x²/2 - ln x - ln√(2π) + ln(1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸)
        let x: f64 = 40.0;
        let expected = -0.5 * x * x - x.ln() - LN_SQRT_2PI
            + (1.0 - 1.0 / (x * x) + 3.0 / x.powi(4) - 15.0 / x.powi(6) + 105.0 / x.powi(8)).ln();
        assert!((log_norm_cdf(-x) - expected).abs() < 1e-9);
        assert!((log_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn norm_cdf_reference_values() {
        assert!((norm_cdf(0.1) - 0.539_827_837_277_028_9).abs() < 1e-15);
        assert!((norm_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn norm_inv_round_trip() {
        for &p in &[1e-300, 1e-24, 1e-12, 0.01, 0.5, 0.9, 0.999_999] {
            let x = norm_inv(p);
            assert!((norm_cdf(x) / p - 1.0).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn mills_ratio_identity() {
        for &x in &[-3.0, 0.0, 1.0, 7.0] {
            assert!((mills_ratio(x) * norm_pdf(x) / norm_cdf(-x) - 1.0).abs() < 1e-13);
        }
    }
}
