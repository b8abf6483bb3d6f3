//! Metrics, experiment harnesses and result files.

mod harness;
mod metrics;
mod report;

pub use harness::{
    run_centralized_baseline, run_global_generalization, run_local_generalization, run_plan,
    ExperimentPlan, Mode, RunResult, Scope, TrainingSettings,
};
pub use metrics::{macro_f1, ConfusionMatrix, MetricsRecord};
pub use report::{
    read_results_csv, summarize, summarize_points, write_final_table_csv, write_results_csv,
    write_summary_csv, ResultRow, RunMeta, Summary, RESULTS_HEADER,
};
