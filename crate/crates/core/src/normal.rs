//! Standard normal density, distribution function and quantile.
//!
//! `erfc` comes from `libm` (the FreeBSD msun implementation, under one ulp)
//! and its inverse from `statrs` (the Boost rational approximations);
//! everything on top of them is arranged so that tails keep relative
//! accuracy.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this the asymptotic expansion of `log Φ` is used.
const LOG_CDF_ASYMPTOTIC: f64 = -30.0;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Density of `N(mean, var)` at `x`.
pub fn gauss_pdf(x: f64, mean: f64, var: f64) -> f64 {
    gauss_log_pdf(x, mean, var).exp()
}

pub fn gauss_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Φ(z).
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// log Φ(z), finite for every finite `z`.
pub fn log_cdf(z: f64) -> f64 {
    if z < LOG_CDF_ASYMPTOTIC {
        let z2 = z * z;
        let inv = 1.0 / z2;
        // 1 - 1/z² + 3/z⁴ - 15/z⁶ + 105/z⁸
        let series = 1.0 - inv * (1.0 - inv * (3.0 - inv * (15.0 - 105.0 * inv)));
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + series.ln()
    } else if z > 5.0 {
        // Φ(z) = 1 - Φ(-z); ln_1p keeps the tiny complement.
        (-cdf(-z)).ln_1p()
    } else {
        erfc(-z * FRAC_1_SQRT_2).ln() - LN_2
    }
}

/// φ(z) / Φ(z) (inverse Mills ratio), stable in the lower tail.
pub fn pdf_over_cdf(z: f64) -> f64 {
    (log_pdf(z) - log_cdf(z)).exp()
}

/// Φ⁻¹(p) for p in (0, 1); ±∞ at the endpoints, NaN outside.
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        // Φ(1) to 16 digits
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((cdf(-3.0) - 1.349_898_031_630_094_5e-3).abs() < 1e-17);
        assert!((quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
        assert!((quantile(1.0 / 3.0) + 0.430_727_299_295_457_5).abs() < 1e-13);
        assert_eq!(quantile(0.5), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            assert!((cdf(quantile(p)) - p).abs() < 1e-14, "p = {p}");
        }
    }

    #[test]
    fn log_cdf_is_continuous_across_branches() {
        for &z in &[LOG_CDF_ASYMPTOTIC, 5.0] {
            let lo = log_cdf(z - 1e-9);
            let hi = log_cdf(z + 1e-9);
            assert!((lo - hi).abs() < 1e-6 * lo.abs().max(1e-12), "z = {z}");
        }
        assert!((log_cdf(-2.0) - cdf(-2.0).ln()).abs() < 1e-14);
        assert!(log_cdf(-1e3).is_finite());
        assert!(log_cdf(40.0) <= 0.0);
    }

    #[test]
    fn mills_ratio_tail_behaviour() {
        // φ(z)/Φ(z) ~ -z for z -> -inf
        let r = pdf_over_cdf(-50.0);
        assert!((r - 50.0).abs() / 50.0 < 1e-3);
        assert!((pdf_over_cdf(0.0) - 2.0 * pdf(0.0)).abs() < 1e-15);
    }
}
