//! Ground truth for the GPC decision problem: elliptical slice sampling from
//! the exact posterior, Monte Carlo predictive probabilities, Bayes-optimal
//! actions and the normalized utility metric.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gpc::{conditional_expected_utility, BinaryUtility4, GpcDataset, PredictiveSet};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssConfig {
    pub n_samples: usize,
    pub n_burnin: usize,
    pub seed: u64,
    /// Number of contiguous batches used for batch-means standard errors.
    pub n_batches: usize,
}

impl Default for EssConfig {
    fn default() -> Self {
        Self { n_samples: 20_000, n_burnin: 2_000, seed: 0, n_batches: 20 }
    }
}

impl EssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_batches == 0 || self.n_batches > self.n_samples {
            return Err(invalid("ESS needs n_samples >= n_batches >= 1"));
        }
        Ok(())
    }
}

/// Draws from `N(f; 0, LLᵀ)·exp(loglik(f))`, one sample per column.
pub fn ess_sample(
    prior_chol: &DMatrix<f64>,
    loglik: impl Fn(&DVector<f64>) -> f64,
    config: &EssConfig,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    let n = prior_chol.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut f = DVector::zeros(n);
    let mut ll = loglik(&f);
    if !ll.is_finite() {
        return Err(invalid("log-likelihood must be finite at the origin"));
    }
    let mut out = DMatrix::zeros(n, config.n_samples);
    for it in 0..config.n_burnin + config.n_samples {
        let nu = prior_chol * DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let threshold = ll + rng.random::<f64>().ln();
        let mut theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (mut lo, mut hi) = (theta - std::f64::consts::TAU, theta);
        loop {
            let prop = &f * theta.cos() + &nu * theta.sin();
            let lp = loglik(&prop);
            if lp > threshold {
                f = prop;
                ll = lp;
                break;
            }
            if theta < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            theta = rng.random_range(lo..hi);
        }
        if it >= config.n_burnin {
            out.set_column(it - config.n_burnin, &f);
        }
    }
    Ok(out)
}

/// Probit log-likelihood `Σ log Φ(yᵢfᵢ)`.
pub fn probit_loglik(data: &GpcDataset) -> impl Fn(&DVector<f64>) -> f64 + '_ {
    move |f| data.y.iter().zip(f.iter()).map(|(&y, &fi)| normal::log_cdf(f64::from(y) * fi)).sum()
}

/// Monte Carlo predictive probabilities with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEstimate {
    pub p: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `batch_p[b][c]`: the estimate at point `c` from batch `b` alone.
    pub batch_p: Vec<Vec<f64>>,
}

/// `p̂_c = mean over draws of Φ(α_cᵀf)`, which equals
/// `Φ(β_cᵀf / √(1 + v̄_c))` under the conditional `f* | f`.
pub fn mc_predictive_prob(samples: &DMatrix<f64>, pred: &PredictiveSet, n_batches: usize) -> Result<PredictiveEstimate> {
    let s = samples.ncols();
    if s == 0 || n_batches == 0 || n_batches > s {
        return Err(invalid("need at least one sample per batch"));
    }
    if samples.nrows() != pred.alpha.nrows() {
        return Err(Error::DimensionMismatch { expected: pred.alpha.nrows(), found: samples.nrows() });
    }
    let c = pred.len();
    let mut batch_p = vec![vec![0.0; c]; n_batches];
    let mut counts = vec![0usize; n_batches];
    let at = pred.alpha.transpose();
    let chunk = 512;
    let mut start = 0;
    while start < s {
        let width = chunk.min(s - start);
        let scores = &at * samples.columns(start, width);
        for j in 0..width {
            let b = (start + j) * n_batches / s;
            counts[b] += 1;
            for (acc, z) in batch_p[b].iter_mut().zip(scores.column(j).iter()) {
                *acc += normal::cdf(*z);
            }
        }
        start += width;
    }
    let mut p = vec![0.0; c];
    for (bp, &count) in batch_p.iter_mut().zip(&counts) {
        for (i, v) in bp.iter_mut().enumerate() {
            p[i] += *v;
            *v /= count as f64;
        }
    }
    for v in &mut p {
        *v /= s as f64;
    }
    let stderr = (0..c).map(|i| batch_stderr(batch_p.iter().map(|bp| bp[i]))).collect();
    Ok(PredictiveEstimate { p, stderr, batch_p })
}

/// Standard error of the mean of equally sized batch means.
pub fn batch_stderr(means: impl Iterator<Item = f64> + Clone) -> f64 {
    let b = means.clone().count();
    if b < 2 {
        return 0.0;
    }
    let mean = means.clone().sum::<f64>() / b as f64;
    let var = means.map(|m| (m - mean) * (m - mean)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// `+1` iff `p̂` is on the `+1` side of the utility threshold (ties to `+1`).
pub fn bayes_optimal_actions(p_hat: &[f64], u: &BinaryUtility4) -> Result<Vec<i8>> {
    p_hat.iter().map(|&p| u.action_for_prob(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityEvalReport {
    pub u_opt: f64,
    pub u_q: f64,
    pub u_antiopt: f64,
    pub discrepancy: f64,
    pub metric: f64,
    /// Batch-means standard error of `u_q` (zero without batches).
    pub mc_stderr: f64,
}

/// Full expected utilities of the Bayes-optimal, the given and the
/// anti-optimal actions, all under the same `p̂`, and the normalized
/// metric `(U(a_opt) - U(a_q)) / (U(a_opt) - U(-a_opt))`.
pub fn evaluate(
    q_actions: &[i8],
    p_hat: &[f64],
    u: &BinaryUtility4,
    batch_p: Option<&[Vec<f64>]>,
) -> Result<UtilityEvalReport> {
    if q_actions.len() != p_hat.len() {
        return Err(Error::DimensionMismatch { expected: p_hat.len(), found: q_actions.len() });
    }
    if p_hat.is_empty() {
        return Err(Error::DegenerateMetric);
    }
    let opt = bayes_optimal_actions(p_hat, u)?;
    let (mut u_opt, mut u_q, mut u_anti, mut gain, mut span) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&p, &a), &ao) in p_hat.iter().zip(q_actions).zip(&opt) {
        let best = conditional_expected_utility(p, u, ao);
        let mine = conditional_expected_utility(p, u, a);
        let worst = conditional_expected_utility(p, u, -ao);
        u_opt += best;
        u_q += mine;
        u_anti += worst;
        gain += best - mine;
        span += best - worst;
    }
    if !(span > 0.0) {
        return Err(Error::DegenerateMetric);
    }
    let c = p_hat.len() as f64;
    let mc_stderr = batch_p
        .map(|batches| {
            batch_stderr(batches.iter().map(|bp| {
                bp.iter().zip(q_actions).map(|(&p, &a)| conditional_expected_utility(p, u, a)).sum::<f64>() / c
            }))
        })
        .unwrap_or(0.0);
    Ok(UtilityEvalReport {
        u_opt: u_opt / c,
        u_q: u_q / c,
        u_antiopt: u_anti / c,
        discrepancy: gain / c,
        metric: gain / span,
        mc_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpc::{kernel_matrix, RbfKernel};
    use proptest::prelude::*;

    fn asym() -> BinaryUtility4 {
        BinaryUtility4::new(1.0, 0.0, 0.5, 1.0)
    }

    #[test]
    fn prior_recovery_without_likelihood() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
        let l = k.clone().cholesky().unwrap().l();
        let cfg = EssConfig { seed: 3, ..Default::default() };
        let s = ess_sample(&l, |_| 0.0, &cfg).unwrap();
        for i in 0..2 {
            let row: Vec<f64> = s.row(i).iter().copied().collect();
            let se = batch_stderr(row.chunks(1000).map(|c| c.iter().sum::<f64>() / c.len() as f64));
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
            let sq: Vec<f64> = row.iter().map(|v| v * v).collect();
            let se2 = batch_stderr(sq.chunks(1000).map(|c| c.iter().sum::<f64>() / c.len() as f64));
            let m2 = sq.iter().sum::<f64>() / sq.len() as f64;
            assert!((m2 - k[(i, i)]).abs() < 3.0 * se2);
        }
    }

    #[test]
    fn conjugate_gaussian_likelihood() {
        // prior N(0, 4), one observation y = 2 with noise 1: posterior N(1.6, 0.8)
        let l = DMatrix::from_element(1, 1, 2.0);
        let cfg = EssConfig { seed: 11, ..Default::default() };
        let s = ess_sample(&l, |f| -0.5 * (2.0 - f[0]) * (2.0 - f[0]), &cfg).unwrap();
        let row: Vec<f64> = s.row(0).iter().copied().collect();
        let batch = |v: &[f64]| batch_stderr(v.chunks(1000).map(|c| c.iter().sum::<f64>() / c.len() as f64));
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        assert!((mean - 1.6).abs() < 3.0 * batch(&row));
        let sq: Vec<f64> = row.iter().map(|v| (v - 1.6) * (v - 1.6)).collect();
        let var = sq.iter().sum::<f64>() / sq.len() as f64;
        assert!((var - 0.8).abs() < 3.0 * batch(&sq));
        // split-half drift
        let (a, b) = row.split_at(row.len() / 2);
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        assert!((ma - mb).abs() < 3.0 * (batch(a).powi(2) + batch(b).powi(2)).sqrt());
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = DMatrix::identity(2, 2);
        let cfg = EssConfig { n_samples: 500, n_burnin: 10, seed: 5, n_batches: 5 };
        let f = |x: &DVector<f64>| normal::log_cdf(x[0] - x[1]);
        assert_eq!(ess_sample(&l, f, &cfg).unwrap(), ess_sample(&l, f, &cfg).unwrap());
    }

    #[test]
    fn predictive_probability_edge_cases() {
        let data = GpcDataset::from_1d(&[-1.0, 1.0], vec![-1, 1]).unwrap();
        let k = RbfKernel::from_log(0.0, 0.0);
        let pred = PredictiveSet::from_1d(&data.x, &[0.5, 3.0], &k).unwrap();
        let zeros = DMatrix::zeros(2, 1000);
        let est = mc_predictive_prob(&zeros, &pred, 10).unwrap();
        assert_eq!(est.p, vec![0.5, 0.5]);
        let one = DMatrix::from_column_slice(2, 1, &[-0.4, 1.3]);
        let est = mc_predictive_prob(&one, &pred, 1).unwrap();
        for c in 0..2 {
            let m = pred.beta.column(c).dot(&one.column(0));
            assert!((est.p[c] - crate::gpc::predictive_prob(m, pred.vbar[c])).abs() < 1e-15);
        }
        let _ = kernel_matrix(&data.x, &k).unwrap();
    }

    #[test]
    fn threshold_and_brute_force() {
        let u = asym();
        assert_eq!(bayes_optimal_actions(&[0.34, 0.33, 1.0 / 3.0], &u).unwrap(), vec![1, -1, 1]);
        assert_eq!(bayes_optimal_actions(&[1.0; 4], &u).unwrap(), vec![1; 4]);
    }

    #[test]
    fn metric_extremes_and_single_flip() {
        let u = asym();
        let p = [0.1, 0.5, 0.9, 0.3, 0.7];
        let opt = bayes_optimal_actions(&p, &u).unwrap();
        assert_eq!(evaluate(&opt, &p, &u, None).unwrap().metric, 0.0);
        let anti: Vec<i8> = opt.iter().map(|a| -a).collect();
        assert_eq!(evaluate(&anti, &p, &u, None).unwrap().metric, 1.0);
        let mut one = opt.clone();
        one[1] = -one[1];
        let r = evaluate(&one, &p, &u, None).unwrap();
        let eu = |p: f64, a: i8| conditional_expected_utility(p, &u, a);
        let regret = eu(p[1], opt[1]) - eu(p[1], -opt[1]);
        let span: f64 = p.iter().zip(&opt).map(|(&pi, &a)| eu(pi, a) - eu(pi, -a)).sum();
        assert!((r.metric - regret / span).abs() < 1e-15);
        assert!(r.u_antiopt <= r.u_q && r.u_q <= r.u_opt);
    }

    #[test]
    fn degenerate_metric() {
        let u = asym();
        // p exactly at the threshold: both actions are equally good everywhere
        let p = [1.0 / 3.0; 3];
        assert_eq!(evaluate(&[1, 1, 1], &p, &u, None).unwrap_err(), Error::DegenerateMetric);
    }

    proptest! {
        #[test]
        fn metric_in_unit_interval_and_monotone(
            p in proptest::collection::vec(0.0f64..1.0, 1..30),
            flips in proptest::collection::vec(any::<bool>(), 30),
            u10 in 0.0f64..0.95,
        ) {
            let u = BinaryUtility4::new(1.0, 0.0, u10, 1.0);
            let opt = bayes_optimal_actions(&p, &u).unwrap();
            let acts: Vec<i8> = opt.iter().zip(&flips).map(|(&a, &f)| if f { -a } else { a }).collect();
            if let Ok(r) = evaluate(&acts, &p, &u, None) {
                prop_assert!((0.0..=1.0).contains(&r.metric));
                prop_assert!(r.discrepancy >= 0.0);
                // flipping one more action away from optimal never lowers the metric
                if let Some(i) = acts.iter().zip(&opt).position(|(a, o)| a == o) {
                    let mut worse = acts.clone();
                    worse[i] = -worse[i];
                    let r2 = evaluate(&worse, &p, &u, None).unwrap();
                    prop_assert!(r2.metric >= r.metric);
                }
            }
        }
    }
}
