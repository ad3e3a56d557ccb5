use std::fs;
use std::path::{Path, PathBuf};

use lossep_core::experiment::{
    clutter_demo, run_sweep, search_clutter_seed, two_point_demo, ClutterDemo, ClutterDemoConfig, SweepConfig,
    SweepResult, TwoPointConfig, TwoPointDemo, PINNED_CLUTTER_SEED,
};
use lossep_core::validation::{self, CheckResult};
use serde::Serialize;

use crate::svg::{contour, Plot};
use crate::tables::{self, action_label};
use crate::{CliError, Result};

const EXACT: &str = "#000000";
const EP: &str = "#e6917a";
const LOSS_EP: &str = "#a50f15";

/// What a command wrote and how many of its runs failed.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: usize,
    /// Human-readable summary, one line per entry.
    pub report: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    seeds: serde_json::Value,
    failures: usize,
    files: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn put(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }

    fn manifest<C: Serialize>(
        mut self,
        command: &str,
        config: &C,
        seeds: serde_json::Value,
        failures: usize,
    ) -> Result<Vec<PathBuf>> {
        let files = self.files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
        let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), config, seeds, failures, files };
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        self.put("manifest.json", json + "\n")?;
        Ok(self.files)
    }
}

/// Reads a JSON sweep config (defaults for absent fields) and validates it.
pub fn load_sweep_config(path: Option<&Path>) -> Result<SweepConfig> {
    let config = match path {
        None => SweepConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

pub fn run_clutter_demo(seed: Option<u64>, search: bool, out: &Path) -> Result<Outcome> {
    let config = ClutterDemoConfig::default();
    let seed = if search { search_clutter_seed(&config, 0)? } else { seed.unwrap_or(PINNED_CLUTTER_SEED) };
    let d = clutter_demo(seed, &config)?;
    let mut w = Writer::new(out)?;
    w.put("clutter_density.csv", tables::clutter_density(&d)?)?;
    w.put("clutter_summary.csv", tables::clutter_summary(&d)?)?;
    w.put("clutter_observations.csv", tables::clutter_observations(&d)?)?;
    w.put("clutter_demo.svg", clutter_svg(&d))?;
    let mut report = vec![format!("seed {seed}, {} observations, threshold {}", d.y.len(), d.utility.tau_crit)];
    for (name, s) in [("exact", &d.exact), ("EP", &d.ep), ("LossEP", &d.loss_ep)] {
        report.push(format!(
            "{name:>7}: mean {:8.4} var {:8.4} P(phi >= tau) {:.4} action {}",
            s.mean,
            s.var,
            s.p_high,
            action_label(s.action)
        ));
    }
    report.push(format!("decision flip reproduced: {}", d.qualifies()));
    let files = w.manifest("clutter-demo", &config, serde_json::json!({ "seed": seed, "searched": search }), 0)?;
    Ok(Outcome { files, failures: 0, report })
}

fn clutter_svg(d: &ClutterDemo) -> String {
    let lo = d.density.first().map_or(0.0, |r| r.phi);
    let hi = d.density.last().map_or(1.0, |r| r.phi);
    let top = d.density.iter().map(|r| r.exact.max(r.ep).max(r.loss_ep).max(r.loss_ep_tilted)).fold(0.0, f64::max);
    let mut p = Plot::new("Clutter posterior and reactor decision", [lo, hi], [0.0, 1.1 * top]);
    let curve = |f: fn(&lossep_core::experiment::DensityRow) -> f64| -> Vec<(f64, f64)> {
        d.density.iter().map(|r| (r.phi, f(r))).collect()
    };
    p.polyline(&curve(|r| r.exact), EXACT, false)
        .polyline(&curve(|r| r.ep), EP, false)
        .polyline(&curve(|r| r.loss_ep), LOSS_EP, false)
        .polyline(&curve(|r| r.loss_ep_tilted), LOSS_EP, true)
        .vline(d.utility.tau_crit, "#777777")
        .legend(&format!("exact ({})", action_label(d.exact.action)), EXACT, false)
        .legend(&format!("EP ({})", action_label(d.ep.action)), EP, false)
        .legend(&format!("LossEP ({})", action_label(d.loss_ep.action)), LOSS_EP, false)
        .legend("LossEP with utility site", LOSS_EP, true)
        .legend("threshold", "#777777", true);
    p.finish()
}

pub fn run_two_point(seed: u64, out: &Path) -> Result<Outcome> {
    let config = TwoPointConfig { seed, ..TwoPointConfig::default() };
    let d = two_point_demo(&config)?;
    let mut w = Writer::new(out)?;
    w.put("two_point_grid.csv", tables::two_point_grid(&d)?)?;
    w.put("two_point_summary.csv", tables::two_point_summary(&d)?)?;
    w.put("two_point_actions.csv", tables::two_point_actions(&d)?)?;
    w.put("two_point.svg", two_point_svg(&d))?;
    let report = vec![
        format!("trace: EP {:.4}, LossEP {:.4}, LossEP without utility site {:.4}", d.trace_ep(), d.trace_loss_ep(), d.loss_ep_posterior.cov().trace()),
        format!("max |LossEP mean - EP mean| {:.4}", d.mean_gap()),
        format!("max |EP - exact| over means and covariances {:.4}", d.ep_vs_grid()),
    ];
    let files = w.manifest("two-point", &config, serde_json::json!({ "seed": seed }), 0)?;
    Ok(Outcome { files, failures: 0, report })
}

fn two_point_svg(d: &TwoPointDemo) -> String {
    let g = &d.posterior_moments;
    let sd = [g.cov[0].sqrt(), g.cov[2].sqrt()];
    let lo = (g.mean[0] - 3.5 * sd[0]).min(g.mean[1] - 3.5 * sd[1]);
    let hi = (g.mean[0] + 3.5 * sd[0]).max(g.mean[1] + 3.5 * sd[1]);
    let mut p = Plot::new("Two-point GPC posterior", [lo, hi], [lo, hi]);
    let nodes: Vec<f64> = (0..d.grid.n).map(|k| d.grid.node(k)).collect();
    // levels where a Gaussian would sit at 1, 2 and 3 standard deviations
    for (vals, color) in [(&d.log_posterior, "#aaaaaa"), (&d.log_weighted, EXACT)] {
        let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for k in [1.0, 2.0, 3.0] {
            p.segments(&contour(vals, &nodes, top - 0.5 * k * k), color, false);
        }
    }
    let moments = |q: &lossep_core::GaussianMoment| {
        let (m, c) = (q.mean(), q.cov());
        ([m[0], m[1]], [c[(0, 0)], c[(0, 1)], c[(1, 1)]])
    };
    for (q, color) in [(&d.ep, EP), (&d.loss_ep, LOSS_EP)] {
        let (m, c) = moments(q);
        for k in [1.0, 2.0] {
            p.ellipse(m, c, k, color, false);
        }
    }
    p.legend("exact posterior", "#aaaaaa", false)
        .legend("utility-weighted", EXACT, false)
        .legend("EP", EP, false)
        .legend("LossEP", LOSS_EP, false);
    p.finish()
}

/// Runs the sweep on `jobs` threads (all cores when None).
pub fn run_sweep_command(config: &SweepConfig, out: &Path, jobs: Option<usize>) -> Result<Outcome> {
    let result = match jobs {
        None => run_sweep(config)?,
        Some(0) => return Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| run_sweep(config))?,
    };
    let mut w = Writer::new(out)?;
    write_sweep(&mut w, &result)?;
    let failures = result.failures();
    let files = w.manifest("sweep", config, serde_json::json!({ "base_seed": config.base_seed }), failures)?;
    Ok(Outcome { files, failures, report: sweep_report(&result) })
}

fn write_sweep(w: &mut Writer, result: &SweepResult) -> Result<()> {
    w.put("sweep_rows.csv", tables::sweep_rows(result)?)?;
    w.put("sweep_cells.csv", tables::sweep_cells(result)?)?;
    w.put("sweep_tests.csv", tables::sweep_tests(result)?)
}

fn sweep_report(result: &SweepResult) -> Vec<String> {
    let mut lines = vec![format!("{:>6} {:>12} {:>18} {:>18} {:>10}", "u10", "range", "EP", "LossEP", "p (Bonf.)")];
    for (t, pair) in result.tests.iter().zip(result.cells.chunks(2)) {
        let cell = |i: usize| format!("{:.5} ± {:.5}", pair[i].mean, pair[i].stderr);
        let p = t.p_bonferroni.map_or("n/a".to_string(), |p| format!("{p:.4}{}", if t.significant { "*" } else { "" }));
        lines.push(format!(
            "{:>6} {:>12} {:>18} {:>18} {:>10}",
            t.u10,
            format!("[{}, {}]", t.pred_range[0], t.pred_range[1]),
            cell(0),
            cell(1),
            p
        ));
    }
    lines.push(format!("run failures: {}", result.failures()));
    lines
}

/// Every oracle cross-check that does not need the full sweep.
pub fn validation_checks(seed: u64, ess_samples: usize) -> Result<Vec<CheckResult>> {
    let mut out = validation::gradient_suite(seed)?;
    out.extend(validation::closed_form_suite(seed.wrapping_add(1))?);
    out.extend(validation::oracle_suite(seed.wrapping_add(2), ess_samples)?);
    out.extend(validation::fixed_point_suite()?);
    out.extend(validation::action_rule_suite(seed.wrapping_add(3))?);
    out.push(validation::clutter_flip_check()?);
    out.extend(validation::two_point_check(&TwoPointConfig::default())?);
    out.extend(validation::metric_suite(seed.wrapping_add(4))?);
    Ok(out)
}

pub fn run_validate(seed: u64, out: Option<&Path>) -> Result<Outcome> {
    let checks = validation_checks(seed, 20_000)?;
    let failures = checks.iter().filter(|c| !c.passed).count();
    let report = checks.iter().map(CheckResult::line).collect();
    let files = match out {
        None => Vec::new(),
        Some(dir) => {
            let mut w = Writer::new(dir)?;
            w.put("validate.csv", tables::checks(&checks)?)?;
            w.manifest("validate", &serde_json::json!({ "ess_samples": 20_000 }), serde_json::json!({ "seed": seed }), failures)?
        }
    };
    Ok(Outcome { files, failures, report })
}
