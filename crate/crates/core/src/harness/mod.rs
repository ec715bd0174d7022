//! Experiment orchestration: configs, the training loop, sampler
//! comparisons, metrics files, and statistics.

mod compare;
mod config;
mod gradcheck;
mod metrics;
mod run;
mod stats;

pub use compare::{
    compare_samplers, comparison_table_csv, loss_vs_iteration_csv, sample_counts_csv,
    write_comparison, AggregateRow, Comparison, ComparisonOutput,
};
pub use config::{
    parse_flat, parse_seeds, EvalConfig, ExperimentConfig, SamplerSettings, SelectionChoice,
};
pub use gradcheck::{gradcheck_suite, ComponentReport, GradCheckReport};
pub use metrics::{
    format_float, metrics_header, metrics_to_csv, parse_metrics_csv, record_to_csv_line,
    MetricsRecord,
};
pub use run::{
    evaluate_checkpoint, load_theta_checkpoint, max_deviation_from_uniform, mean_probs_tail,
    run_dir_name, run_experiment, target_names, EvalReportRow, RunOutput, RunSummary,
    ThetaCheckpoint, THETA_CHECKPOINT_VERSION,
};
pub use stats::{mean_std, median, spearman};
