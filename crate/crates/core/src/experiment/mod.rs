//! Closed-loop scenarios, metrics and experiment configuration.

mod closed_loop;
mod config;
mod log;
mod metrics;
mod scenario;

pub use closed_loop::{ClosedLoop, ControllerKind, LoopSetup, PushSpec, ResidualSource, StepRecord, TickRecord};
pub use config::{config_hash, DisturbanceSection, ExperimentConfig, GaitSection, MetricsSection, Scenario};
pub use log::{log_columns, parse_log, read_log, write_log, LogRow, LogWriter};
pub use metrics::{compute_metrics, MetricsParams, MetricsReport};
pub use scenario::{
    compare_checks, eval_checks, metrics_params, residual_source, run_collect, run_comparison, run_eval,
    run_experiment, run_scenario, run_train, simulate, simulate_with, write_run, Check, CollectSummary, Comparison,
    EvalSummary, ExperimentOutcome, RunEnd, RunOutput, TrainSummary, Verdict, RECOVERY_DEADLINE,
};
