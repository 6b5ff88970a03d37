//! Experiment orchestration: configs, datasets, method comparison, sweeps
//! and the command implementations behind the `ctxrank` binary.
//!
//! The initial ranker's order stands in for the production ranker
//! (`PROD-proxy`); every other method re-ranks the same candidate lists and
//! is reported relative to it.

mod commands;
mod config;
mod pipeline;
pub mod selftest;

pub use commands::{cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, load_dataset, TrainSummary};
pub use config::{
    parse_grid, ExperimentConfig, Method, MethodParams, MethodSpec, Paths, SweepParam, SweepSpec,
};
pub use pipeline::{
    evaluate_all, evaluate_ranker, run_comparison, run_sweep, spearman, train_method, Comparison,
    Dataset, Feedback, Ranker, SweepRow, SweepTable,
};
pub use selftest::{run_selftest, SelftestReport};
