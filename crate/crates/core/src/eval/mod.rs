//! Ranking metrics, baselines, and statistical testing.

mod baselines;
mod distribution;
mod metrics;
mod stats;

pub use baselines::baseline_rank;
pub use distribution::{user_cluster_distribution, ClusterDistribution};
pub use metrics::{gain, mean_ndcg, ndcg_at_k, rank_by_scores, ranked_grades};
pub use stats::{paired_ttest, spearman, TTest};
