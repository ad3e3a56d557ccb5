use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ep::EpConfig;
use crate::error::{invalid, Result};
use crate::gpc::{ep_gpc, kernel_matrix, loss_ep_gpc, posterior_predictive, q_action, BinaryUtility4, GpcDataset, GpcRun, PredictiveSet, RbfKernel};
use crate::normal;
use crate::oracle::{ess_sample, evaluate, mc_predictive_prob, probit_loglik, EssConfig, PredictiveEstimate};
use crate::seed::{derive_seed, tag};
use crate::stats::{bonferroni, wilcoxon_signed_rank};

use super::status_name;

/// Sweep settings. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_train: usize,
    pub train_range: [f64; 2],
    pub n_pred: usize,
    pub pred_ranges: Vec<[f64; 2]>,
    pub u00: f64,
    pub u01: f64,
    pub u11: f64,
    pub u10_grid: Vec<f64>,
    pub n_repeats: usize,
    pub base_seed: u64,
    pub log_sigma: f64,
    pub log_ell: f64,
    pub ess_samples: usize,
    pub ess_burnin: usize,
    pub ess_batches: usize,
    pub damping: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Significance level before the Bonferroni correction.
    pub alpha: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_train: 15,
            train_range: [-10.0, 10.0],
            n_pred: 1000,
            pred_ranges: vec![[-10.0, 10.0], [-8.0, 12.0], [-5.0, 15.0]],
            u00: 1.0,
            u01: 0.0,
            u11: 1.0,
            u10_grid: vec![0.0, 0.25, 0.5, 0.75, 0.95],
            n_repeats: 20,
            base_seed: 2019,
            log_sigma: 1.5,
            log_ell: 1.0,
            ess_samples: 20_000,
            ess_burnin: 2_000,
            ess_batches: 20,
            damping: 0.5,
            max_sweeps: 200,
            tol: 1e-8,
            alpha: 0.05,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if self.n_train == 0 || self.n_pred == 0 || self.n_repeats == 0 {
            return Err(invalid("n_train, n_pred and n_repeats must be positive"));
        }
        if !range_ok(&self.train_range) || self.pred_ranges.is_empty() || !self.pred_ranges.iter().all(range_ok) {
            return Err(invalid("ranges must be finite with lo < hi, and at least one predictive range given"));
        }
        if self.u10_grid.is_empty() {
            return Err(invalid("u10_grid is empty"));
        }
        for &u10 in &self.u10_grid {
            self.utility(u10).validate()?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha must lie in (0, 1)"));
        }
        self.kernel().validate()?;
        self.ess_config(0).validate()?;
        self.ep_config(0).validate()
    }

    pub fn kernel(&self) -> RbfKernel {
        RbfKernel::from_log(self.log_sigma, self.log_ell)
    }

    pub fn utility(&self, u10: f64) -> BinaryUtility4 {
        BinaryUtility4::new(self.u00, self.u01, u10, self.u11)
    }

    pub fn ep_config(&self, seed: u64) -> EpConfig {
        EpConfig { damping: self.damping, max_sweeps: self.max_sweeps, tol: self.tol, seed, shuffle: true }
    }

    pub fn ess_config(&self, seed: u64) -> EssConfig {
        EssConfig { n_samples: self.ess_samples, n_burnin: self.ess_burnin, seed, n_batches: self.ess_batches }
    }

    pub fn n_cells(&self) -> usize {
        self.u10_grid.len() * self.pred_ranges.len()
    }
}

/// Inputs uniform on the training range, latents from the GP prior, labels
/// `+1` with probability `Φ(fᵢ)`.
pub fn simulate_dataset(seed: u64, config: &SweepConfig) -> Result<GpcDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = config.train_range;
    let x: Vec<f64> = (0..config.n_train).map(|_| rng.random_range(lo..hi)).collect();
    let xm = DMatrix::from_column_slice(x.len(), 1, &x);
    let k = kernel_matrix(&xm, &config.kernel())?;
    let l = k.cholesky().expect("kernel_matrix checked the factorization").l();
    let f = l * DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = f.iter().map(|&fi| if rng.random::<f64>() < normal::cdf(fi) { 1 } else { -1 }).collect();
    GpcDataset::new(xm, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "EP")]
    Ep,
    #[serde(rename = "LossEP")]
    LossEp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ep => "EP",
            Self::LossEp => "LossEP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    MaxSweeps,
    Diverged,
    Stalled,
    Failed(String),
}

impl RunStatus {
    pub fn label(&self) -> String {
        match self {
            Self::Converged => "converged".into(),
            Self::MaxSweeps => "max_sweeps".into(),
            Self::Diverged => "diverged".into(),
            Self::Stalled => "stalled".into(),
            Self::Failed(e) => format!("failed: {e}"),
        }
    }

    /// Whether the row counts as a run failure.
    pub fn is_failure(&self) -> bool {
        !matches!(self, Self::Converged | Self::MaxSweeps)
    }
}

/// One (method, cell, repeat) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub u10: f64,
    pub range_index: usize,
    pub pred_range: [f64; 2],
    pub repeat: usize,
    /// Seed of the EP run that produced `q`.
    pub seed: u64,
    pub metric: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub status: RunStatus,
    pub sweeps: usize,
    pub skipped: usize,
    pub action_changes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub u10: f64,
    pub pred_range: [f64; 2],
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTest {
    pub u10: f64,
    pub pred_range: [f64; 2],
    pub n_pairs: usize,
    pub n_nonzero: usize,
    /// None when there were too few nonzero differences.
    pub p_value: Option<f64>,
    pub p_bonferroni: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellSummary>,
    pub tests: Vec<CellTest>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status.is_failure()).count()
    }
}

/// Data shared by every cell of one repeat.
struct RepeatData {
    data: GpcDataset,
    ep: std::result::Result<GpcRun, String>,
    ep_seed: u64,
    ranges: Vec<std::result::Result<(PredictiveSet, PredictiveEstimate), String>>,
}

fn prepare_repeat(config: &SweepConfig, r: usize) -> Result<RepeatData> {
    let base = config.base_seed;
    let data = simulate_dataset(derive_seed(base, tag::DATASET, &[r as u64]), config)?;
    let kernel = config.kernel();
    let ep_seed = derive_seed(base, tag::EP, &[r as u64]);
    let ep = ep_gpc(&data, &kernel, &config.ep_config(ep_seed)).map_err(|e| e.to_string());
    let chol = kernel_matrix(&data.x, &kernel)?.cholesky().expect("checked by kernel_matrix").l();
    let samples = ess_sample(&chol, probit_loglik(&data), &config.ess_config(derive_seed(base, tag::ORACLE, &[r as u64])))?;
    let ranges = config
        .pred_ranges
        .par_iter()
        .enumerate()
        .map(|(j, range)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, tag::PREDICTIVE, &[r as u64, j as u64]));
            let pts: Vec<f64> = (0..config.n_pred).map(|_| rng.random_range(range[0]..range[1])).collect();
            let pred = PredictiveSet::from_1d(&data.x, &pts, &kernel).map_err(|e| e.to_string())?;
            let est = mc_predictive_prob(&samples, &pred, config.ess_batches).map_err(|e| e.to_string())?;
            Ok((pred, est))
        })
        .collect();
    Ok(RepeatData { data, ep, ep_seed, ranges })
}

fn score(
    run: &GpcRun,
    pred: &PredictiveSet,
    est: &PredictiveEstimate,
    u: &BinaryUtility4,
) -> std::result::Result<(f64, f64), String> {
    let actions: Vec<i8> = posterior_predictive(&run.posterior, pred)
        .into_iter()
        .map(|(m, v)| q_action(m, v, u))
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    let report = evaluate(&actions, &est.p, u, Some(&est.batch_p)).map_err(|e| e.to_string())?;
    Ok((report.metric, report.mc_stderr))
}

fn run_status(run: &GpcRun) -> RunStatus {
    match status_name(&run.diagnostics.status) {
        "converged" => RunStatus::Converged,
        "max_sweeps" => RunStatus::MaxSweeps,
        "diverged" => RunStatus::Diverged,
        _ => RunStatus::Stalled,
    }
}

fn make_row(
    method: Method,
    config: &SweepConfig,
    (i, j, r): (usize, usize, usize),
    seed: u64,
    outcome: std::result::Result<(&GpcRun, (f64, f64)), String>,
) -> SweepRow {
    let mut row = SweepRow {
        method,
        u10: config.u10_grid[i],
        range_index: j,
        pred_range: config.pred_ranges[j],
        repeat: r,
        seed,
        metric: None,
        mc_stderr: None,
        status: RunStatus::Converged,
        sweeps: 0,
        skipped: 0,
        action_changes: 0,
    };
    match outcome {
        Ok((run, (metric, se))) => {
            row.metric = Some(metric);
            row.mc_stderr = Some(se);
            row.status = run_status(run);
            row.sweeps = run.diagnostics.sweeps;
            row.skipped = run.diagnostics.skipped_total;
            row.action_changes = run.diagnostics.action_changes;
        }
        Err(e) => row.status = RunStatus::Failed(e),
    }
    row
}

fn run_repeat(config: &SweepConfig, r: usize) -> Vec<SweepRow> {
    let n_u = config.u10_grid.len();
    let n_j = config.pred_ranges.len();
    let prepared = prepare_repeat(config, r).map_err(|e| e.to_string());
    let cells: Vec<(usize, usize)> = (0..n_u).flat_map(|i| (0..n_j).map(move |j| (i, j))).collect();
    cells
        .par_iter()
        .flat_map_iter(|&(i, j)| {
            let u = config.utility(config.u10_grid[i]);
            let loss_seed = derive_seed(config.base_seed, tag::LOSS_EP, &[i as u64, j as u64, r as u64]);
            let prep = match &prepared {
                Ok(p) => p,
                Err(e) => {
                    let ep_seed = derive_seed(config.base_seed, tag::EP, &[r as u64]);
                    return vec![
                        make_row(Method::Ep, config, (i, j, r), ep_seed, Err(e.clone())),
                        make_row(Method::LossEp, config, (i, j, r), loss_seed, Err(e.clone())),
                    ];
                }
            };
            let ranged = || prep.ranges[j].as_ref().map_err(Clone::clone);
            let ep_row = {
                let outcome = prep
                    .ep
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|run| ranged().and_then(|(pred, est)| Ok((run, score(run, pred, est, &u)?))));
                make_row(Method::Ep, config, (i, j, r), prep.ep_seed, outcome)
            };
            let loss_run = ranged().and_then(|(pred, _)| {
                loss_ep_gpc(&prep.data, &config.kernel(), &u, pred, &config.ep_config(loss_seed)).map_err(|e| e.to_string())
            });
            let loss_row = {
                let outcome = loss_run
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|run| ranged().and_then(|(pred, est)| Ok((run, score(run, pred, est, &u)?))));
                make_row(Method::LossEp, config, (i, j, r), loss_seed, outcome)
            };
            vec![ep_row, loss_row]
        })
        .collect()
}

/// Run every (utility, range, repeat) cell for both methods. Rows come out
/// ordered by repeat, then utility, then range, then method, regardless of
/// scheduling. Run failures are recorded in rows, never raised.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let rows: Vec<SweepRow> = (0..config.n_repeats).into_par_iter().flat_map_iter(|r| run_repeat(config, r)).collect();
    let (cells, tests) = summarize(config, &rows);
    Ok(SweepResult { rows, cells, tests })
}

fn summarize(config: &SweepConfig, rows: &[SweepRow]) -> (Vec<CellSummary>, Vec<CellTest>) {
    let mut cells = Vec::new();
    let mut tests = Vec::new();
    let n_cells = config.n_cells();
    for (i, &u10) in config.u10_grid.iter().enumerate() {
        for (j, &range) in config.pred_ranges.iter().enumerate() {
            let in_cell = |m: Method| -> Vec<(usize, f64)> {
                rows.iter()
                    .filter(|row| row.method == m && row.u10 == config.u10_grid[i] && row.range_index == j)
                    .filter_map(|row| row.metric.map(|v| (row.repeat, v)))
                    .collect()
            };
            let ep = in_cell(Method::Ep);
            let loss = in_cell(Method::LossEp);
            for (method, vals) in [(Method::Ep, &ep), (Method::LossEp, &loss)] {
                let n = vals.len();
                let mean = vals.iter().map(|v| v.1).sum::<f64>() / n.max(1) as f64;
                let var = if n > 1 { vals.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
                cells.push(CellSummary {
                    method,
                    u10,
                    pred_range: range,
                    n,
                    mean: if n == 0 { f64::NAN } else { mean },
                    stderr: (var / n.max(1) as f64).sqrt(),
                });
            }
            let diffs: Vec<f64> = ep
                .iter()
                .filter_map(|&(r, a)| loss.iter().find(|l| l.0 == r).map(|l| a - l.1))
                .collect();
            let (n_nonzero, p_value) = match wilcoxon_signed_rank(&diffs) {
                Ok(w) => (w.n_nonzero, Some(w.p_value)),
                Err(_) => (diffs.iter().filter(|d| **d != 0.0).count(), None),
            };
            let p_bonferroni = p_value.map(|p| bonferroni(p, n_cells));
            tests.push(CellTest {
                u10,
                pred_range: range,
                n_pairs: diffs.len(),
                n_nonzero,
                p_value,
                p_bonferroni,
                significant: p_bonferroni.is_some_and(|p| p < config.alpha),
            });
        }
    }
    (cells, tests)
}
