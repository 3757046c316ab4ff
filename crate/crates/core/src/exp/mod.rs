//! Experiment orchestration: a declarative TOML config, the seeded
//! end-to-end pipeline, and the report it emits.

mod config;
mod report;
mod run;

pub use config::{
    ExperimentConfig, GbdtBlock, MetricsBlock, ModelBlock, PartitionBlock, PartitionScheme,
};
pub use report::{
    ClusterSummary, Comparison, DatasetSummary, ExperimentReport, GbdtSummary, LabelSource,
    RunResult, SystemSummary, TrainSummary,
};
pub use run::{compare_results, evaluate_orders, gbdt_orders, run_experiment};
