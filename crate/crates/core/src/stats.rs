//! Wilcoxon signed-rank test (normal approximation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Smallest number of nonzero differences accepted by the test.
pub const MIN_NONZERO: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub n_nonzero: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub z: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Two-sided signed-rank test on paired differences. Zeros are dropped,
/// tied magnitudes get midranks, and the normal approximation uses a tie
/// correction and a continuity correction of 1/2. All-zero input yields
/// `p = 1`.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Ok(WilcoxonResult { n_nonzero: 0, w_plus: 0.0, w_minus: 0.0, z: 0.0, p_value: 1.0 });
    }
    if n < MIN_NONZERO {
        return Err(Error::TooFewSamples { needed: MIN_NONZERO, found: n });
    }
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let (mut w_plus, mut w_minus, mut tie_term) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let rank = 0.5 * ((i + 1) + (j + 1)) as f64;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        for d in &nz[i..=j] {
            if *d > 0.0 {
                w_plus += rank;
            } else {
                w_minus += rank;
            }
        }
        i = j + 1;
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let dev = ((w_plus - mean).abs() - 0.5).max(0.0);
    let z = if var > 0.0 { dev / var.sqrt() } else { 0.0 };
    let p_value = (2.0 * normal::cdf(-z)).min(1.0);
    Ok(WilcoxonResult { n_nonzero: n, w_plus, w_minus, z, p_value })
}

/// Bonferroni-adjusted p-value for `m` comparisons.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}
