//! Experiment harness: dataset simulation, the utility-asymmetry sweep and
//! the two illustrative demos.

mod clutter_demo;
mod sweep;
mod two_point;

pub use clutter_demo::{
    clutter_demo, search_clutter_seed, ClutterDemo, ClutterDemoConfig, DensityRow, PINNED_CLUTTER_SEED,
};
pub use sweep::{
    run_sweep, simulate_dataset, CellSummary, CellTest, Method, RunStatus, SweepConfig, SweepResult, SweepRow,
};
pub use two_point::{two_point_demo, TwoPointConfig, TwoPointDemo};

use crate::ep::Status;

pub(crate) fn status_name(s: &Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::MaxSweeps => "max_sweeps",
        Status::Diverged { .. } => "diverged",
        Status::Stalled { .. } => "stalled",
    }
}
