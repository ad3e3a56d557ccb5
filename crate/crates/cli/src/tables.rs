//! RFC-4180 CSV tables (CRLF line ends, quoting only where needed). Floats
//! use Rust's shortest round-trip formatting, so identical results give
//! identical bytes.

use csv::{Terminator, WriterBuilder};
use lossep_core::clutter::ReactorAction;
use lossep_core::experiment::{ClutterDemo, SweepResult, TwoPointDemo};
use lossep_core::validation::CheckResult;
use lossep_core::GaussianMoment;

use crate::Result;

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = WriterBuilder::new().terminator(Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()).into())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn action_label(a: ReactorAction) -> &'static str {
    match a {
        ReactorAction::KeepOn => "keep_on",
        ReactorAction::ShutDown => "shut_down",
    }
}

/// One row per (method, cell, repeat).
pub fn sweep_rows(result: &SweepResult) -> Result<Vec<u8>> {
    table(
        &[
            "method", "u10", "range_index", "pred_lo", "pred_hi", "repeat", "seed", "metric", "mc_stderr", "status",
            "sweeps", "skipped", "action_changes",
        ],
        result.rows.iter().map(|r| {
            vec![
                r.method.name().into(),
                r.u10.to_string(),
                r.range_index.to_string(),
                r.pred_range[0].to_string(),
                r.pred_range[1].to_string(),
                r.repeat.to_string(),
                r.seed.to_string(),
                opt(r.metric),
                opt(r.mc_stderr),
                r.status.label(),
                r.sweeps.to_string(),
                r.skipped.to_string(),
                r.action_changes.to_string(),
            ]
        }),
    )
}

pub fn sweep_cells(result: &SweepResult) -> Result<Vec<u8>> {
    table(
        &["method", "u10", "pred_lo", "pred_hi", "n", "mean", "stderr"],
        result.cells.iter().map(|c| {
            vec![
                c.method.name().into(),
                c.u10.to_string(),
                c.pred_range[0].to_string(),
                c.pred_range[1].to_string(),
                c.n.to_string(),
                c.mean.to_string(),
                c.stderr.to_string(),
            ]
        }),
    )
}

pub fn sweep_tests(result: &SweepResult) -> Result<Vec<u8>> {
    table(
        &["u10", "pred_lo", "pred_hi", "n_pairs", "n_nonzero", "p_value", "p_bonferroni", "significant"],
        result.tests.iter().map(|t| {
            vec![
                t.u10.to_string(),
                t.pred_range[0].to_string(),
                t.pred_range[1].to_string(),
                t.n_pairs.to_string(),
                t.n_nonzero.to_string(),
                opt(t.p_value),
                opt(t.p_bonferroni),
                t.significant.to_string(),
            ]
        }),
    )
}

pub fn clutter_density(d: &ClutterDemo) -> Result<Vec<u8>> {
    table(
        &["phi", "exact", "ep", "loss_ep", "loss_ep_tilted"],
        d.density.iter().map(|r| {
            vec![r.phi.to_string(), r.exact.to_string(), r.ep.to_string(), r.loss_ep.to_string(), r.loss_ep_tilted.to_string()]
        }),
    )
}

pub fn clutter_summary(d: &ClutterDemo) -> Result<Vec<u8>> {
    let rows = [("exact", &d.exact), ("EP", &d.ep), ("LossEP", &d.loss_ep)].map(|(name, s)| {
        vec![name.into(), s.mean.to_string(), s.var.to_string(), s.p_high.to_string(), action_label(s.action).into()]
    });
    table(&["posterior", "mean", "var", "p_above_threshold", "action"], rows)
}

pub fn clutter_observations(d: &ClutterDemo) -> Result<Vec<u8>> {
    table(&["index", "y"], d.y.iter().enumerate().map(|(i, y)| vec![i.to_string(), y.to_string()]))
}

/// Both normalized log densities on the grid, row-major.
pub fn two_point_grid(d: &TwoPointDemo) -> Result<Vec<u8>> {
    let n = d.grid.n;
    table(
        &["f1", "f2", "log_posterior", "log_weighted"],
        (0..n * n).map(|k| {
            vec![
                d.grid.node(k / n).to_string(),
                d.grid.node(k % n).to_string(),
                d.log_posterior[k].to_string(),
                d.log_weighted[k].to_string(),
            ]
        }),
    )
}

pub fn two_point_summary(d: &TwoPointDemo) -> Result<Vec<u8>> {
    let gauss = |name: &str, q: &GaussianMoment| {
        let (m, c) = (q.mean(), q.cov());
        vec![
            name.into(),
            m[0].to_string(),
            m[1].to_string(),
            c[(0, 0)].to_string(),
            c[(0, 1)].to_string(),
            c[(1, 1)].to_string(),
            c.trace().to_string(),
        ]
    };
    let grid = |name: &str, g: &lossep_core::quadrature::GridMoments2d| {
        vec![
            name.into(),
            g.mean[0].to_string(),
            g.mean[1].to_string(),
            g.cov[0].to_string(),
            g.cov[1].to_string(),
            g.cov[2].to_string(),
            (g.cov[0] + g.cov[2]).to_string(),
        ]
    };
    table(
        &["approximation", "mean1", "mean2", "cov11", "cov12", "cov22", "trace"],
        [
            grid("exact", &d.posterior_moments),
            grid("exact_weighted", &d.weighted_moments),
            gauss("EP", &d.ep),
            gauss("LossEP", &d.loss_ep),
            gauss("LossEP_posterior", &d.loss_ep_posterior),
        ],
    )
}

pub fn two_point_actions(d: &TwoPointDemo) -> Result<Vec<u8>> {
    table(
        &["x", "p_exact", "bayes_action", "loss_ep_action"],
        (0..d.pred.points.nrows()).map(|c| {
            vec![
                d.pred.points[(c, 0)].to_string(),
                d.p_grid[c].to_string(),
                d.bayes_actions[c].to_string(),
                d.loss_ep_actions.get(c).map(|a| a.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn checks(results: &[CheckResult]) -> Result<Vec<u8>> {
    table(
        &["criterion", "name", "passed", "worst", "tolerance", "seconds", "detail"],
        results.iter().map(|c| {
            vec![
                c.criterion.to_string(),
                c.name.clone(),
                c.passed.to_string(),
                c.worst.to_string(),
                c.tolerance.to_string(),
                format!("{:.3}", c.seconds),
                c.detail.clone(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotes_only_where_needed_and_ends_lines_with_crlf() {
        let bytes = table(&["a", "b"], [vec!["x,y".into(), "plain".into()], vec!["say \"hi\"".into(), String::new()]]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\r\n\"x,y\",plain\r\n\"say \"\"hi\"\"\",\r\n");
    }

    #[test]
    fn missing_values_are_empty_fields() {
        assert_eq!(opt(None), "");
        assert_eq!(opt(Some(0.25)), "0.25");
    }
}
