//! Event-driven simulation, experiment drivers and file outputs.

mod engine;
mod experiments;
mod metrics;
mod output;

pub use engine::{
    run_simulation, run_simulation_with, RuleChoice, SimEvent, SimEventKind, SimOptions, SimRun,
    EVENT_TIME_TOL,
};
pub use experiments::{
    compare_fixed_t, compare_fixed_t_with, sweep_csv, sweep_h, sweep_h_with, Comparison,
    PairComparison, RunSummary, SweepRow, DOMINANCE_SLACK,
};
pub use metrics::RunMetrics;
pub use output::{
    emit_outputs, events_jsonl, metrics_json, trace_csv, trace_len, trajectory_records,
    TrajectoryRecord,
};
