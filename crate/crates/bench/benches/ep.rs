use criterion::{criterion_group, criterion_main, Criterion};
use lossep_core::clutter::{ClutterModel, ClutterParams};
use lossep_core::ep::{run_ep, EpConfig};
use lossep_core::experiment::{simulate_dataset, SweepConfig};
use lossep_core::gauss::projection_delta;
use lossep_core::gpc::{ep_gpc, kernel_matrix, loss_ep_gpc, utility_site_log_z, PredictiveSet};
use lossep_core::oracle::{ess_sample, probit_loglik, EssConfig};
use lossep_core::validation::{simulate_clutter, PINNED_CLUTTER_DATASETS};

fn comb(config: &SweepConfig, data: &lossep_core::gpc::GpcDataset) -> PredictiveSet {
    let points: Vec<f64> = (0..config.n_pred).map(|k| -10.0 + 20.0 * (k as f64 + 0.5) / config.n_pred as f64).collect();
    PredictiveSet::from_1d(&data.x, &points, &config.kernel()).unwrap()
}

fn clutter(c: &mut Criterion) {
    let params = ClutterParams::default();
    let model = ClutterModel { data: simulate_clutter(PINNED_CLUTTER_DATASETS[0], 8, &params), params };
    c.bench_function("clutter_ep_n8", |b| b.iter(|| run_ep(&model, &params.prior(), &EpConfig::default()).unwrap()));
}

fn gpc(c: &mut Criterion) {
    let config = SweepConfig::default();
    let data = simulate_dataset(7, &config).unwrap();
    let kernel = config.kernel();
    let pred = comb(&config, &data);
    let u = config.utility(0.75);

    c.bench_function("gpc_ep_n15", |b| b.iter(|| ep_gpc(&data, &kernel, &EpConfig::default()).unwrap()));
    let mut g = c.benchmark_group("gpc_loss_ep");
    g.sample_size(20);
    g.bench_function("n15_c1000", |b| b.iter(|| loss_ep_gpc(&data, &kernel, &u, &pred, &EpConfig::default()).unwrap()));
    g.finish();

    let q = ep_gpc(&data, &kernel, &EpConfig::default()).unwrap().posterior;
    let actions = vec![1i8; pred.len()];
    c.bench_function("utility_site_projection_c1000", |b| {
        b.iter(|| {
            let t = utility_site_log_z(&q, &u, &actions, &pred).unwrap();
            projection_delta(&q, &t).unwrap()
        })
    });

    let chol = kernel_matrix(&data.x, &kernel).unwrap().cholesky().unwrap().l();
    let ess = EssConfig { n_samples: 2_000, n_burnin: 200, seed: 1, n_batches: 10 };
    let mut g = c.benchmark_group("ess");
    g.sample_size(10);
    g.bench_function("n15_2000_draws", |b| {
        b.iter(|| ess_sample(&chol, probit_loglik(&data), &ess).unwrap())
    });
    g.finish();
}

criterion_group!(benches, clutter, gpc);
criterion_main!(benches);
