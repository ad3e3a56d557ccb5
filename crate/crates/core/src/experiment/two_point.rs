use serde::{Deserialize, Serialize};

use crate::ep::EpConfig;
use crate::error::Result;
use crate::gauss::GaussianMoment;
use crate::gpc::{ep_gpc, kernel_matrix, loss_ep_gpc, BinaryUtility4, GpcDataset, PredictiveSet, RbfKernel};
use crate::normal;
use crate::oracle::bayes_optimal_actions;
use crate::quadrature::{Grid2d, GridMoments2d};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPointConfig {
    pub log_sigma: f64,
    pub log_ell: f64,
    pub utility: BinaryUtility4,
    /// Predictive points, evenly spaced over this range.
    pub pred_range: [f64; 2],
    pub n_pred: usize,
    /// Nodes per axis of the latent grid.
    pub grid_n: usize,
    /// Grid half-width in prior standard deviations.
    pub grid_sds: f64,
    pub seed: u64,
}

impl Default for TwoPointConfig {
    fn default() -> Self {
        Self {
            log_sigma: 1.5,
            log_ell: 1.0,
            utility: BinaryUtility4::new(1.0, 0.0, 0.5, 1.0),
            pred_range: [-10.0, 10.0],
            n_pred: 200,
            grid_n: 401,
            grid_sds: 8.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointDemo {
    pub data: GpcDataset,
    pub pred: PredictiveSet,
    pub grid: Grid2d,
    /// Normalized log density of the exact posterior on the grid.
    pub log_posterior: Vec<f64>,
    /// Normalized log density of the utility-weighted posterior under the
    /// Bayes-optimal actions.
    pub log_weighted: Vec<f64>,
    pub posterior_moments: GridMoments2d,
    pub weighted_moments: GridMoments2d,
    /// Exact predictive probabilities at the predictive points.
    pub p_grid: Vec<f64>,
    pub bayes_actions: Vec<i8>,
    pub ep: GaussianMoment,
    /// Full Loss-EP approximation, utility site included.
    pub loss_ep: GaussianMoment,
    /// Loss-EP posterior: every site except the utility site.
    pub loss_ep_posterior: GaussianMoment,
    pub loss_ep_actions: Vec<i8>,
}

impl TwoPointDemo {
    pub fn trace_ep(&self) -> f64 {
        self.ep.cov().trace()
    }

    pub fn trace_loss_ep(&self) -> f64 {
        self.loss_ep.cov().trace()
    }

    /// Largest gap between Loss-EP and EP means.
    pub fn mean_gap(&self) -> f64 {
        (self.loss_ep.mean() - self.ep.mean()).amax()
    }

    /// Largest gap between EP and grid posterior moments (means and
    /// covariance entries).
    pub fn ep_vs_grid(&self) -> f64 {
        let g = &self.posterior_moments;
        let (m, c) = (self.ep.mean(), self.ep.cov());
        [m[0] - g.mean[0], m[1] - g.mean[1], c[(0, 0)] - g.cov[0], c[(0, 1)] - g.cov[1], c[(1, 1)] - g.cov[2]]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

pub fn two_point_data() -> GpcDataset {
    let r = 2f64.sqrt();
    GpcDataset::from_1d(&[-r, r], vec![-1, 1]).expect("valid constant dataset")
}

/// Log prior plus log likelihood of the two-point problem at `f`, up to a
/// constant.
fn log_joint(kinv: &[f64; 3], y: &[i8], f: [f64; 2]) -> f64 {
    let quad = kinv[0] * f[0] * f[0] + 2.0 * kinv[1] * f[0] * f[1] + kinv[2] * f[1] * f[1];
    -0.5 * quad + normal::log_cdf(f64::from(y[0]) * f[0]) + normal::log_cdf(f64::from(y[1]) * f[1])
}

fn normalize(grid: &Grid2d, log_values: &mut [f64]) -> GridMoments2d {
    let (m, max) = grid.moments(log_values);
    let log_mass = max + m.mass.ln();
    for v in log_values.iter_mut() {
        *v -= log_mass;
    }
    GridMoments2d { mass: 1.0, ..m }
}

pub fn two_point_demo(config: &TwoPointConfig) -> Result<TwoPointDemo> {
    let data = two_point_data();
    let kernel = RbfKernel::from_log(config.log_sigma, config.log_ell);
    let u = config.utility;
    u.validate()?;
    let k = kernel_matrix(&data.x, &kernel)?;
    let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
    let kinv = [k[(1, 1)] / det, -k[(0, 1)] / det, k[(0, 0)] / det];
    let half = config.grid_sds * kernel.sigma2.sqrt();
    let grid = Grid2d { lo: -half, hi: half, n: config.grid_n };

    let [lo, hi] = config.pred_range;
    let step = if config.n_pred > 1 { (hi - lo) / (config.n_pred - 1) as f64 } else { 0.0 };
    let pts: Vec<f64> = (0..config.n_pred).map(|c| lo + step * c as f64).collect();
    let pred = PredictiveSet::from_1d(&data.x, &pts, &kernel)?;

    let mut log_posterior = grid.evaluate(|a, b| log_joint(&kinv, &data.y, [a, b]));
    let posterior_moments = normalize(&grid, &mut log_posterior);

    // exact predictive probabilities: grid expectation of Φ(α_cᵀf)
    let h2 = grid.spacing() * grid.spacing();
    let weight = |k: usize| if k == 0 || k == grid.n - 1 { 0.5 } else { 1.0 };
    let mut p_grid = vec![0.0; pred.len()];
    for i in 0..grid.n {
        for j in 0..grid.n {
            let w = weight(i) * weight(j) * log_posterior[i * grid.n + j].exp() * h2;
            if w == 0.0 {
                continue;
            }
            let (a, b) = (grid.node(i), grid.node(j));
            for (c, p) in p_grid.iter_mut().enumerate() {
                *p += w * normal::cdf(pred.alpha[(0, c)] * a + pred.alpha[(1, c)] * b);
            }
        }
    }
    let bayes_actions = bayes_optimal_actions(&p_grid, &u)?;

    let n_pred = pred.len() as f64;
    let mut log_weighted = grid.evaluate(|a, b| {
        let util: f64 = bayes_actions
            .iter()
            .enumerate()
            .map(|(c, &act)| {
                let (base, w) = u.affine(act);
                base + w * normal::cdf(pred.alpha[(0, c)] * a + pred.alpha[(1, c)] * b)
            })
            .sum::<f64>()
            / n_pred;
        log_joint(&kinv, &data.y, [a, b]) + util.ln()
    });
    let weighted_moments = normalize(&grid, &mut log_weighted);

    let ep_cfg = EpConfig { seed: config.seed, ..EpConfig::default() };
    let ep = ep_gpc(&data, &kernel, &ep_cfg)?;
    let loss = loss_ep_gpc(&data, &kernel, &u, &pred, &ep_cfg)?;
    Ok(TwoPointDemo {
        data,
        pred,
        grid,
        log_posterior,
        log_weighted,
        posterior_moments,
        weighted_moments,
        p_grid,
        bayes_actions,
        ep: ep.posterior,
        loss_ep: loss.state.approximation().clone(),
        loss_ep_posterior: loss.posterior,
        loss_ep_actions: loss.actions.unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TwoPointConfig {
        TwoPointConfig { grid_n: 241, n_pred: 60, ..Default::default() }
    }

    #[test]
    fn grid_normalizes_and_is_antisymmetric() {
        let d = two_point_demo(&small()).unwrap();
        let (m, max) = d.grid.moments(&d.log_posterior);
        assert!((m.mass * max.exp() - 1.0).abs() < 1e-6);
        assert!(d.posterior_moments.mean[0] < 0.0);
        // swapping the labels negates the posterior mean
        let k = kernel_matrix(&d.data.x, &RbfKernel::from_log(1.5, 1.0)).unwrap();
        let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(0, 1)];
        let kinv = [k[(1, 1)] / det, -k[(0, 1)] / det, k[(0, 0)] / det];
        let mut swapped = d.grid.evaluate(|a, b| log_joint(&kinv, &[1, -1], [a, b]));
        let m = normalize(&d.grid, &mut swapped);
        for i in 0..2 {
            assert!((m.mean[i] + d.posterior_moments.mean[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn ep_close_to_grid() {
        let d = two_point_demo(&small()).unwrap();
        assert!(d.ep_vs_grid() < 0.15, "{}", d.ep_vs_grid());
    }

    #[test]
    fn loss_ep_tracks_the_weighted_grid() {
        let d = two_point_demo(&small()).unwrap();
        let g = &d.weighted_moments;
        let (m, c) = (d.loss_ep.mean(), d.loss_ep.cov());
        let gap = [m[0] - g.mean[0], m[1] - g.mean[1], c[(0, 0)] - g.cov[0], c[(0, 1)] - g.cov[1], c[(1, 1)] - g.cov[2]]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(gap < 0.15, "{gap}");
    }
}
