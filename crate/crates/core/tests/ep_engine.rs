use lossep_core::clutter::{ClutterDataset, ClutterModel, ClutterParams};
use lossep_core::ep::{run_ep, run_loss_ep, DecisionModel, EpConfig, Status, TiltedModel};
use lossep_core::{GaussianMoment, Result, TiltedLogZ};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn clutter(y: Vec<f64>) -> ClutterModel {
    ClutterModel { data: ClutterDataset::new(y).unwrap(), params: ClutterParams::default() }
}

/// Gaussian observations `y_i ~ N(phi, s2)`: EP is exact here.
struct GaussianObs {
    y: Vec<f64>,
    s2: f64,
}

impl TiltedModel for GaussianObs {
    fn dim(&self) -> usize {
        1
    }

    fn n_data_sites(&self) -> usize {
        self.y.len()
    }

    fn data_log_z(&self, site: usize, cavity: &GaussianMoment) -> Result<TiltedLogZ> {
        let (m, v) = (cavity.scalar_mean(), cavity.scalar_var());
        let s = v + self.s2;
        let r = self.y[site] - m;
        let log_z = -0.5 * (std::f64::consts::TAU * s).ln() - 0.5 * r * r / s;
        Ok(TiltedLogZ::scalar(log_z, r / s, 0.5 * (r * r / (s * s) - 1.0 / s)))
    }
}

/// A decision problem whose utility does not depend on the state.
struct ConstantUtility(ClutterModel);

impl TiltedModel for ConstantUtility {
    fn dim(&self) -> usize {
        1
    }

    fn n_data_sites(&self) -> usize {
        self.0.n_data_sites()
    }

    fn data_log_z(&self, site: usize, cavity: &GaussianMoment) -> Result<TiltedLogZ> {
        self.0.data_log_z(site, cavity)
    }
}

impl DecisionModel for ConstantUtility {
    type Actions = u8;

    fn select_actions(&self, _cavity: &GaussianMoment) -> Result<u8> {
        Ok(0)
    }

    fn utility_log_z(&self, _cavity: &GaussianMoment, _actions: &u8) -> Result<TiltedLogZ> {
        Ok(TiltedLogZ { log_z: 0.7f64.ln(), d_mean: DVector::zeros(1), d_cov: DMatrix::zeros(1, 1) })
    }
}

#[test]
fn gaussian_terms_are_fit_exactly_in_one_undamped_sweep() {
    let model = GaussianObs { y: vec![1.2, -0.3, 2.5, 0.8], s2: 0.7 };
    let prior = GaussianMoment::scalar(0.5, 4.0).unwrap();
    let config = EpConfig { damping: 1.0, ..EpConfig::default() };
    let run = run_ep(&model, &prior, &config).unwrap();
    assert_eq!(run.diagnostics.status, Status::Converged);
    assert!(run.diagnostics.sweeps <= 2, "{:?}", run.diagnostics);

    let precision = 1.0 / 4.0 + 4.0 / 0.7;
    let mean = (0.5 / 4.0 + model.y.iter().sum::<f64>() / 0.7) / precision;
    let q = run.state.approximation();
    assert!((q.scalar_mean() - mean).abs() < 1e-10);
    assert!((q.scalar_var() - 1.0 / precision).abs() < 1e-12);
}

#[test]
fn clutter_without_clutter_is_conjugate() {
    let y = vec![2.0, 3.5, 1.0, 2.7, 4.1];
    let params = ClutterParams { pi: 0.0, ..ClutterParams::default() };
    let model = ClutterModel { data: ClutterDataset::new(y.clone()).unwrap(), params };
    let run = run_ep(&model, &params.prior(), &EpConfig::default()).unwrap();
    assert!(run.diagnostics.converged());
    let precision = 1.0 / params.v_0 + y.len() as f64;
    let q = run.state.approximation();
    assert!((q.scalar_var() - 1.0 / precision).abs() < 1e-9);
    assert!((q.scalar_mean() - y.iter().sum::<f64>() / precision).abs() < 1e-8);
}

#[test]
fn constant_utility_leaves_ep_unchanged() {
    let base = clutter(vec![1.5, 2.2, -0.4, 3.1, 2.8, 0.9]);
    let prior = base.params.prior();
    let config = EpConfig { tol: 1e-12, max_sweeps: 2000, ..EpConfig::default() };
    let ep = run_ep(&base, &prior, &config).unwrap();
    let model = ConstantUtility(base.clone());
    let loss = run_loss_ep(&model, &prior, &config).unwrap();
    assert!(ep.diagnostics.converged() && loss.diagnostics.converged());
    assert!(loss.state.utility_site().unwrap().params.is_zero());
    assert_eq!(loss.actions, Some(0));
    let (a, b) = (ep.state.approximation(), loss.state.approximation());
    assert!((a.scalar_mean() - b.scalar_mean()).abs() < 1e-8);
    assert!((a.scalar_var() - b.scalar_var()).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cached_product_matches_the_sites(
        y in prop::collection::vec(-3.0f64..6.0, 1..9),
        seed in any::<u64>(),
        damping in 0.2f64..=1.0,
    ) {
        let model = clutter(y);
        let config = EpConfig { damping, seed, max_sweeps: 50, ..EpConfig::default() };
        let run = run_ep(&model, &model.params.prior(), &config).unwrap();
        prop_assert!(run.state.reconstruction_error() < 1e-13);
        prop_assert!(run.state.approximation().scalar_var() > 0.0);
    }

    #[test]
    fn runs_are_deterministic(y in prop::collection::vec(-3.0f64..6.0, 1..9), seed in any::<u64>()) {
        let model = clutter(y);
        let config = EpConfig { seed, max_sweeps: 50, ..EpConfig::default() };
        let a = run_ep(&model, &model.params.prior(), &config).unwrap();
        let b = run_ep(&model, &model.params.prior(), &config).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sweep_deltas_are_recorded_per_sweep(y in prop::collection::vec(-3.0f64..6.0, 1..9), seed in any::<u64>()) {
        let model = clutter(y);
        let config = EpConfig { seed, max_sweeps: 30, ..EpConfig::default() };
        let d = run_ep(&model, &model.params.prior(), &config).unwrap().diagnostics;
        prop_assert_eq!(d.sweep_deltas.len(), d.sweeps);
        prop_assert_eq!(d.skipped_per_sweep.len(), d.sweeps);
        prop_assert_eq!(d.skipped_per_sweep.iter().sum::<usize>(), d.skipped_total);
        if d.converged() {
            prop_assert!(*d.sweep_deltas.last().unwrap() < config.tol);
        }
    }
}

#[test]
fn bad_damping_is_rejected() {
    let model = clutter(vec![1.0]);
    for damping in [0.0, -0.5, 1.5, f64::NAN] {
        let config = EpConfig { damping, ..EpConfig::default() };
        assert!(run_ep(&model, &model.params.prior(), &config).is_err());
    }
}
