use nalgebra::{DMatrix, DVector};

use crate::ep::{run_ep, run_loss_ep, DecisionModel, Diagnostics, EpConfig, EpState, SiteSupport, TiltedModel};
use crate::error::{invalid, Error, Result};
use crate::gauss::{GaussianMoment, TiltedLogZ};
use crate::gpc::{kernel_matrix, q_action, BinaryUtility4, RbfKernel};
use crate::normal;

#[derive(Debug, Clone, PartialEq)]
pub struct GpcDataset {
    /// One input per row.
    pub x: DMatrix<f64>,
    pub y: Vec<i8>,
}

impl GpcDataset {
    pub fn new(x: DMatrix<f64>, y: Vec<i8>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
        }
        if y.iter().any(|&l| l != 1 && l != -1) {
            return Err(invalid("labels must be -1 or +1"));
        }
        Ok(Self { x, y })
    }

    /// One-dimensional inputs.
    pub fn from_1d(x: &[f64], y: Vec<i8>) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(x.len(), 1, x), y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Predictive inputs with their conditional geometry: for point `c`,
/// `β_c = K⁻¹k_c`, `v̄_c = k** - k_cᵀβ_c` and `α_c = β_c / √(1 + v̄_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSet {
    pub points: DMatrix<f64>,
    /// `β_c` as columns (N × C).
    pub beta: DMatrix<f64>,
    /// `α_c` as columns (N × C).
    pub alpha: DMatrix<f64>,
    pub vbar: Vec<f64>,
    /// Number of `v̄_c` that came out negative and were clamped to zero.
    pub clamped: usize,
}

impl PredictiveSet {
    pub fn new(train_x: &DMatrix<f64>, points: DMatrix<f64>, kernel: &RbfKernel) -> Result<Self> {
        if points.ncols() != train_x.ncols() {
            return Err(Error::DimensionMismatch { expected: train_x.ncols(), found: points.ncols() });
        }
        let k = kernel_matrix(train_x, kernel)?;
        let chol = k.cholesky().ok_or(Error::CholeskyFailure { jitter: kernel.jitter })?;
        let kx = kernel.cross(train_x, &points);
        let beta = chol.solve(&kx);
        let mut clamped = 0;
        let vbar: Vec<f64> = (0..points.nrows())
            .map(|c| {
                let v = kernel.diag() - kx.column(c).dot(&beta.column(c));
                if v < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let mut alpha = beta.clone();
        for (c, v) in vbar.iter().enumerate() {
            alpha.column_mut(c).scale_mut(1.0 / (1.0 + v).sqrt());
        }
        Ok(Self { points, beta, alpha, vbar, clamped })
    }

    pub fn from_1d(train_x: &DMatrix<f64>, points: &[f64], kernel: &RbfKernel) -> Result<Self> {
        Self::new(train_x, DMatrix::from_column_slice(points.len(), 1, points), kernel)
    }

    pub fn len(&self) -> usize {
        self.vbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vbar.is_empty()
    }
}

/// Predictive latent moments `(m_f*, v_f*)` at every point of `pred`:
/// `m = βᵀμ`, `v = v̄ + βᵀΣβ`.
pub fn posterior_predictive(q: &GaussianMoment, pred: &PredictiveSet) -> Vec<(f64, f64)> {
    let means = pred.beta.transpose() * q.mean();
    let sb = q.cov() * &pred.beta;
    (0..pred.len())
        .map(|c| (means[c], pred.vbar[c] + pred.beta.column(c).dot(&sb.column(c))))
        .collect()
}

/// `P(y* = +1) = Φ(m / √(1 + v))`.
pub fn predictive_prob(m: f64, v: f64) -> f64 {
    normal::cdf(m / (1.0 + v.max(0.0)).sqrt())
}

/// Probit site on coordinate `i` of an `n`-dimensional cavity:
/// `log Z = log Φ(y·m/√(1+v))`.
pub fn probit_site_log_z(m: f64, v: f64, y: i8, n: usize, i: usize) -> TiltedLogZ {
    let y = f64::from(y);
    let s = (1.0 + v).sqrt();
    let z = y * m / s;
    let rho = normal::pdf_over_cdf(z);
    TiltedLogZ::on_coordinate(n, i, normal::log_cdf(z), y * rho / s, -0.5 * rho * z / (s * s))
}

/// Utility site: `Z = (1/C) Σ_c [base_c + w_c Φ(z_c)]` with
/// `z_c = α_cᵀμ / √(1 + α_cᵀΣα_c)` and `(base_c, w_c)` from the action at
/// point `c`.
pub fn utility_site_log_z(
    cavity: &GaussianMoment,
    u: &BinaryUtility4,
    actions: &[i8],
    pred: &PredictiveSet,
) -> Result<TiltedLogZ> {
    if actions.len() != pred.len() {
        return Err(Error::DimensionMismatch { expected: pred.len(), found: actions.len() });
    }
    let n = cavity.dim();
    let c_count = pred.len() as f64;
    let means = pred.alpha.transpose() * cavity.mean();
    let sa = cavity.cov() * &pred.alpha;
    let mut z_sum = 0.0;
    let mut d_mean_coef = DVector::zeros(pred.len());
    let mut d_cov_coef = DVector::zeros(pred.len());
    for (c, &a) in actions.iter().enumerate() {
        let (base, w) = u.affine(a);
        let s = 1.0 + pred.alpha.column(c).dot(&sa.column(c));
        let root = s.sqrt();
        let z = means[c] / root;
        z_sum += base + w * normal::cdf(z);
        let wp = w * normal::pdf(z);
        d_mean_coef[c] = wp / root;
        d_cov_coef[c] = -0.5 * wp * means[c] / (s * root);
    }
    let z = z_sum / c_count;
    if !(z > 0.0) {
        return Err(Error::ZeroUtilityMass { value: z });
    }
    let scale = 1.0 / (c_count * z);
    let d_mean = &pred.alpha * d_mean_coef * scale;
    let mut weighted = pred.alpha.clone();
    for (c, coef) in d_cov_coef.iter().enumerate() {
        weighted.column_mut(c).scale_mut(*coef * scale);
    }
    let d_cov = crate::gauss::symmetrize(&weighted * pred.alpha.transpose());
    debug_assert_eq!(d_mean.len(), n);
    Ok(TiltedLogZ { log_z: z.ln(), d_mean, d_cov })
}

/// GP probit model with a decision problem at the predictive points.
#[derive(Debug, Clone)]
pub struct GpcModel {
    pub data: GpcDataset,
    pub prior: GaussianMoment,
    pub utility: BinaryUtility4,
    pub pred: PredictiveSet,
}

impl GpcModel {
    pub fn new(data: GpcDataset, kernel: &RbfKernel, utility: BinaryUtility4, pred: PredictiveSet) -> Result<Self> {
        let prior = gp_prior(&data, kernel)?;
        Ok(Self { data, prior, utility, pred })
    }
}

fn gp_prior(data: &GpcDataset, kernel: &RbfKernel) -> Result<GaussianMoment> {
    let k = kernel_matrix(&data.x, kernel)?;
    GaussianMoment::new(DVector::zeros(data.len()), k).map_err(|_| Error::CholeskyFailure { jitter: kernel.jitter })
}

/// Data sites only; used for standard EP.
struct ProbitSites<'a>(&'a GpcDataset);

impl TiltedModel for ProbitSites<'_> {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn n_data_sites(&self) -> usize {
        self.0.len()
    }

    fn data_log_z(&self, site: usize, cavity: &GaussianMoment) -> Result<TiltedLogZ> {
        let (m, v) = (cavity.mean()[site], cavity.cov()[(site, site)]);
        Ok(probit_site_log_z(m, v, self.0.y[site], self.0.len(), site))
    }

    fn data_site_support(&self, site: usize) -> SiteSupport {
        SiteSupport::Coordinate(site)
    }
}

impl TiltedModel for GpcModel {
    fn dim(&self) -> usize {
        self.data.len()
    }

    fn n_data_sites(&self) -> usize {
        self.data.len()
    }

    fn data_log_z(&self, site: usize, cavity: &GaussianMoment) -> Result<TiltedLogZ> {
        ProbitSites(&self.data).data_log_z(site, cavity)
    }

    fn data_site_support(&self, site: usize) -> SiteSupport {
        SiteSupport::Coordinate(site)
    }
}

impl DecisionModel for GpcModel {
    type Actions = Vec<i8>;

    fn select_actions(&self, cavity: &GaussianMoment) -> Result<Vec<i8>> {
        posterior_predictive(cavity, &self.pred).into_iter().map(|(m, v)| q_action(m, v, &self.utility)).collect()
    }

    fn utility_log_z(&self, cavity: &GaussianMoment, actions: &Vec<i8>) -> Result<TiltedLogZ> {
        utility_site_log_z(cavity, &self.utility, actions, &self.pred)
    }
}

/// Outcome of a GPC fit. `posterior` excludes the utility site.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcRun {
    pub posterior: GaussianMoment,
    pub actions: Option<Vec<i8>>,
    pub diagnostics: Diagnostics,
    pub state: EpState,
}

/// Standard EP for GP probit classification.
pub fn ep_gpc(data: &GpcDataset, kernel: &RbfKernel, config: &EpConfig) -> Result<GpcRun> {
    let prior = gp_prior(data, kernel)?;
    let run = run_ep(&ProbitSites(data), &prior, config)?;
    Ok(GpcRun { posterior: run.state.posterior()?, actions: None, diagnostics: run.diagnostics, state: run.state })
}

/// Loss-calibrated EP for GP probit classification.
pub fn loss_ep_gpc(
    data: &GpcDataset,
    kernel: &RbfKernel,
    u: &BinaryUtility4,
    pred: &PredictiveSet,
    config: &EpConfig,
) -> Result<GpcRun> {
    u.validate()?;
    let model = GpcModel::new(data.clone(), kernel, *u, pred.clone())?;
    let run = run_loss_ep(&model, &model.prior, config)?;
    Ok(GpcRun {
        posterior: run.state.posterior()?,
        actions: run.actions,
        diagnostics: run.diagnostics,
        state: run.state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ep::{data_fixed_point_residual, utility_fixed_point_residual};
    use crate::gauss::test_support::random_gaussian;
    use crate::quadrature::trapezoid;
    use crate::validation::{fd_natural_gradient, natural_grad_rel_err};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn kernel() -> RbfKernel {
        RbfKernel::from_log(1.5, 1.0)
    }

    fn two_point() -> GpcDataset {
        let r = 2f64.sqrt();
        GpcDataset::from_1d(&[-r, r], vec![-1, 1]).unwrap()
    }

    #[test]
    fn probit_examples() {
        for y in [-1, 1] {
            let t = probit_site_log_z(0.0, 3.0, y, 1, 0);
            assert!((t.log_z - 0.5f64.ln()).abs() < 1e-15);
        }
        assert!(probit_site_log_z(60.0, 1.0, 1, 1, 0).log_z.abs() < 1e-300);
    }

    #[test]
    fn probit_matches_quadrature_and_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (m, v): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(0.05..25.0));
            let y = if rng.random_bool(0.5) { 1 } else { -1 };
            let sd = v.sqrt();
            let z = trapezoid(|f| normal::gauss_pdf(f, m, v) * normal::cdf(f64::from(y) * f), m - 12.0 * sd, m + 12.0 * sd, 40001);
            let t = probit_site_log_z(m, v, y, 1, 0);
            assert!((t.log_z.exp() - z).abs() < 1e-8);
            let c = GaussianMoment::scalar(m, v).unwrap();
            let fd = fd_natural_gradient(|g| Ok(probit_site_log_z(g.scalar_mean(), g.scalar_var(), y, 1, 0).log_z), &c).unwrap();
            assert!(natural_grad_rel_err(&t.natural_gradient(&c), &fd) < 1e-5);
        }
    }

    #[test]
    fn predictive_examples() {
        assert_eq!(predictive_prob(0.0, 4.0), 0.5);
        assert!((predictive_prob(1.0, 0.0) - 0.8413447460685429).abs() < 1e-12);
        let data = two_point();
        let k = kernel();
        let prior = gp_prior(&data, &k).unwrap();
        let pred = PredictiveSet::from_1d(&data.x, &[-3.0, 0.0, 0.5, 2f64.sqrt(), 7.0], &k).unwrap();
        for (m, v) in posterior_predictive(&prior, &pred) {
            assert_eq!(m, 0.0);
            assert!((v - k.sigma2).abs() < 1e-10);
        }
        // at a training input the conditional variance vanishes
        assert!(pred.vbar[3] < 1e-6);
    }

    #[test]
    fn predictive_moments_match_monte_carlo() {
        let data = two_point();
        let k = kernel();
        let q = GaussianMoment::new(
            DVector::from_vec(vec![-1.0, 1.2]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.5]),
        )
        .unwrap();
        let kstar = [0.7];
        let pred = PredictiveSet::from_1d(&data.x, &kstar, &k).unwrap();
        let (m, v) = posterior_predictive(&q, &pred)[0];
        let l = q.cov().clone().cholesky().unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let e = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let f = q.mean() + &l * e;
            let fs = pred.beta.column(0).dot(&f) + pred.vbar[0].sqrt() * rng.sample::<f64, _>(StandardNormal);
            s1 += fs;
            s2 += fs * fs;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - m).abs() < 3.0 * (v / n as f64).sqrt());
        assert!((var - v).abs() < 3.0 * v * (2.0 / n as f64).sqrt());
    }

    fn random_pred(rng: &mut ChaCha8Rng, n: usize, c: usize) -> (GpcDataset, PredictiveSet) {
        let k = RbfKernel::from_log(0.5, 0.3);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let data = GpcDataset::from_1d(&x, vec![1; n]).unwrap();
        let pts: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
        let pred = PredictiveSet::from_1d(&data.x, &pts, &k).unwrap();
        (data, pred)
    }

    #[test]
    fn constant_utility_site_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, pred) = random_pred(&mut rng, 3, 4);
        let u = BinaryUtility4::new(0.4, 0.4, 0.4, 0.4);
        let cav = random_gaussian(3, 3);
        let t = utility_site_log_z(&cav, &u, &[1, -1, 1, 1], &pred).unwrap();
        assert!((t.log_z - 0.4f64.ln()).abs() < 1e-15);
        assert_eq!(t.d_mean.amax(), 0.0);
        assert_eq!(t.d_cov.amax(), 0.0);
    }

    #[test]
    fn utility_site_single_point_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = BinaryUtility4::new(1.0, 0.0, 0.5, 1.0);
        for _ in 0..10 {
            let (_, pred) = random_pred(&mut rng, 1, 1);
            let (m, v): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(0.2..3.0));
            let cav = GaussianMoment::scalar(m, v).unwrap();
            for a in [-1i8, 1] {
                let (base, w) = u.affine(a);
                let (beta, vbar) = (pred.beta[(0, 0)], pred.vbar[0]);
                let sd = v.sqrt();
                let integrand = |f: f64| normal::gauss_pdf(f, m, v) * (base + w * predictive_prob(beta * f, vbar));
                let z = trapezoid(integrand, m - 12.0 * sd, m + 12.0 * sd, 40001);
                let t = utility_site_log_z(&cav, &u, &[a], &pred).unwrap();
                assert!((t.log_z.exp() - z).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn utility_site_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, pred) = random_pred(&mut rng, 2, 3);
        let u = BinaryUtility4::new(1.0, 0.0, 0.5, 1.0);
        let cav = random_gaussian(8, 2);
        let actions = [1i8, -1, 1];
        let z = utility_site_log_z(&cav, &u, &actions, &pred).unwrap().log_z.exp();
        let l = cav.cov().clone().cholesky().unwrap().l();
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let f = cav.mean() + &l * DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let val: f64 = actions
                .iter()
                .enumerate()
                .map(|(c, &a)| {
                    let (base, w) = u.affine(a);
                    // latent plus the probit's own unit noise
                    let fs = pred.beta.column(c).dot(&f)
                        + (pred.vbar[c] + 1.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
                    base + w * if fs > 0.0 { 1.0 } else { 0.0 }
                })
                .sum::<f64>()
                / 3.0;
            s1 += val;
            s2 += val * val;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - z).abs() < 3.0 * se, "mc {mean} vs {z} (se {se})");
    }

    #[test]
    fn utility_site_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let u = BinaryUtility4::new(1.0, 0.0, 0.5, 1.0);
        for trial in 0..30 {
            let n = 1 + trial % 6;
            let (_, pred) = random_pred(&mut rng, n, 5);
            let cav = random_gaussian(100 + trial as u64, n);
            let actions: Vec<i8> = (0..5).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
            let t = utility_site_log_z(&cav, &u, &actions, &pred).unwrap();
            let fd = fd_natural_gradient(|g| Ok(utility_site_log_z(g, &u, &actions, &pred)?.log_z), &cav).unwrap();
            assert!(natural_grad_rel_err(&t.natural_gradient(&cav), &fd) < 1e-5);
        }
    }

    #[test]
    fn ep_sites_are_rank_one_and_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<i8> = x.iter().map(|&v| if v.sin() > 0.0 { 1 } else { -1 }).collect();
        let data = GpcDataset::from_1d(&x, y).unwrap();
        let run = ep_gpc(&data, &kernel(), &EpConfig::default()).unwrap();
        assert!(run.diagnostics.converged());
        for s in run.state.sites() {
            let t2 = s.params.theta2();
            for i in 0..8 {
                for j in 0..8 {
                    if (i, j) != (s.id, s.id) {
                        assert_eq!(t2[(i, j)], 0.0);
                    }
                }
            }
        }
        assert!(data_fixed_point_residual(&ProbitSites(&data), &run.state) < 1e-5);
    }

    #[test]
    fn constant_utility_loss_ep_equals_ep() {
        let data = two_point();
        let k = kernel();
        let pred = PredictiveSet::from_1d(&data.x, &[-1.0, 0.3, 2.0], &k).unwrap();
        let u = BinaryUtility4 { u00: 0.7, u01: 0.7, u10: 0.7, u11: 0.7 };
        let model = GpcModel::new(data.clone(), &k, u, pred.clone()).unwrap();
        let cfg = EpConfig::default();
        // a constant utility has no defined bias, so drive the engine with fixed actions
        struct Fixed<'a>(&'a GpcModel);
        impl TiltedModel for Fixed<'_> {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn n_data_sites(&self) -> usize {
                self.0.n_data_sites()
            }
            fn data_log_z(&self, s: usize, c: &GaussianMoment) -> Result<TiltedLogZ> {
                self.0.data_log_z(s, c)
            }
            fn data_site_support(&self, s: usize) -> SiteSupport {
                self.0.data_site_support(s)
            }
        }
        impl DecisionModel for Fixed<'_> {
            type Actions = Vec<i8>;
            fn select_actions(&self, _: &GaussianMoment) -> Result<Vec<i8>> {
                Ok(vec![1, -1, 1])
            }
            fn utility_log_z(&self, c: &GaussianMoment, a: &Vec<i8>) -> Result<TiltedLogZ> {
                self.0.utility_log_z(c, a)
            }
        }
        let loss = run_loss_ep(&Fixed(&model), &model.prior, &cfg).unwrap();
        let plain = ep_gpc(&data, &k, &cfg).unwrap();
        let a = loss.state.q_natural();
        let b = plain.state.q_natural();
        assert!(a.max_abs_diff(&b) < 10.0 * cfg.tol);
        assert!(utility_fixed_point_residual(&Fixed(&model), &loss.state, &vec![1, -1, 1]).unwrap() < 1e-12);
    }

    #[test]
    fn symmetric_utility_actions_follow_predictive_mean() {
        let data = two_point();
        let k = kernel();
        let pts: Vec<f64> = (0..41).map(|i| -10.0 + 0.5 * i as f64 + 0.25).collect();
        let pred = PredictiveSet::from_1d(&data.x, &pts, &k).unwrap();
        let u = BinaryUtility4::new(1.0, 0.0, 0.0, 1.0);
        let run = loss_ep_gpc(&data, &k, &u, &pred, &EpConfig::default()).unwrap();
        let q = run.state.cavity_moments(data.len()).unwrap();
        let signs: Vec<i8> =
            posterior_predictive(&q, &pred).iter().map(|&(m, _)| if m >= 0.0 { 1 } else { -1 }).collect();
        assert_eq!(run.actions.unwrap(), signs);
    }
}
