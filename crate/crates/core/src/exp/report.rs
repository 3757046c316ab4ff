//! Experiment report: a machine-readable JSON document plus a
//! human-readable table rendering, both stamped with the config hash.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Which grade column a metric was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Click-derived grades, available in production logs.
    Observed,
    /// Hidden simulator grades, available only on synthetic data.
    Truth,
}

impl LabelSource {
    pub fn label(self) -> &'static str {
        match self {
            LabelSource::Observed => "observed",
            LabelSource::Truth => "true",
        }
    }
}

/// Per-query metrics of one system on the test partition. `None` marks a
/// query with no relevant document, excluded from aggregate means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub system: String,
    pub config_hash: String,
    pub seed: u64,
    /// Cutoff → per-query NDCG on observed labels, in test order.
    pub observed: BTreeMap<usize, Vec<Option<f64>>>,
    /// Cutoff → per-query NDCG on hidden true labels; empty when the
    /// dataset carries none.
    pub truth: BTreeMap<usize, Vec<Option<f64>>>,
}

impl RunResult {
    pub fn per_query(&self, labels: LabelSource, cutoff: usize) -> Option<&[Option<f64>]> {
        let side = match labels {
            LabelSource::Observed => &self.observed,
            LabelSource::Truth => &self.truth,
        };
        side.get(&cutoff).map(Vec::as_slice)
    }
}

/// Aggregate means of one system, cutoff → mean NDCG.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSummary {
    pub system: String,
    pub observed: BTreeMap<usize, f64>,
    pub truth: BTreeMap<usize, f64>,
}

/// One paired significance test between two systems.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub system: String,
    pub reference: String,
    pub cutoff: usize,
    pub labels: LabelSource,
    pub t: f64,
    pub p: f64,
    /// (mean(system) − mean(reference)) / |mean(reference)|.
    pub mean_rel_improvement: f64,
    /// p < 0.05 on a non-degenerate test.
    pub significant: bool,
    pub degenerate: bool,
}

/// Neural-training bookkeeping worth surfacing.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub system: String,
    pub best_val_ndcg5: f64,
    pub skipped_queries: usize,
    pub steps: usize,
}

/// Boosted-tree bookkeeping and the strongest importance shares.
#[derive(Debug, Clone, Serialize)]
pub struct GbdtSummary {
    pub system: String,
    pub rounds_trained: usize,
    pub best_round: usize,
    pub trees_kept: usize,
    /// Top importance shares, descending.
    pub top_features: Vec<(String, f64)>,
    /// Share of each cluster block; empty for the plain model.
    pub cluster_block_shares: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub n_clusters: usize,
    pub final_inertia: f64,
    pub iterations: usize,
    /// Histograms over per-user distinct-cluster counts and entropies.
    pub user_count_bins: Vec<u64>,
    pub user_entropy_bins: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub n_users: usize,
    pub train_queries: usize,
    pub valid_queries: usize,
    pub test_queries: usize,
    pub mean_candidates: f64,
}

/// Everything one run produced.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub partition: String,
    pub dataset: DatasetSummary,
    pub systems: Vec<SystemSummary>,
    pub comparisons: Vec<Comparison>,
    pub training: Vec<TrainSummary>,
    pub gbdt: Vec<GbdtSummary>,
    pub clusters: Option<ClusterSummary>,
    pub results: Vec<RunResult>,
}

impl ExperimentReport {
    pub fn result(&self, system: &str) -> Option<&RunResult> {
        self.results.iter().find(|r| r.system == system)
    }

    pub fn comparison(
        &self,
        system: &str,
        reference: &str,
        cutoff: usize,
        labels: LabelSource,
    ) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| {
            c.system == system && c.reference == reference && c.cutoff == cutoff && c.labels == labels
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Human-readable tables mirroring the structure of the comparative
    /// results: systems by cutoff, then the significance tests.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "experiment {} seed {} partition {}\n",
            &self.config_hash[..12.min(self.config_hash.len())],
            self.seed,
            self.partition
        ));
        let d = &self.dataset;
        out.push_str(&format!(
            "dataset: {} users, {}/{}/{} train/valid/test queries, {:.1} candidates per query\n",
            d.n_users, d.train_queries, d.valid_queries, d.test_queries, d.mean_candidates
        ));
        let cutoffs: Vec<usize> = self
            .systems
            .first()
            .map(|s| s.observed.keys().copied().collect())
            .unwrap_or_default();
        for (labels, pick) in [
            (LabelSource::Truth, true),
            (LabelSource::Observed, false),
        ] {
            let any = self.systems.iter().any(|s| {
                let side = if pick { &s.truth } else { &s.observed };
                !side.is_empty()
            });
            if !any {
                continue;
            }
            out.push_str(&format!("\n{}-label NDCG on test\n", labels.label()));
            out.push_str(&format!("{:<22}", "system"));
            for k in &cutoffs {
                out.push_str(&format!("{:>10}", format!("@{k}")));
            }
            out.push('\n');
            for s in &self.systems {
                let side = if pick { &s.truth } else { &s.observed };
                if side.is_empty() {
                    continue;
                }
                out.push_str(&format!("{:<22}", s.system));
                for k in &cutoffs {
                    match side.get(k) {
                        Some(v) => out.push_str(&format!("{v:>10.4}")),
                        None => out.push_str(&format!("{:>10}", "-")),
                    }
                }
                out.push('\n');
            }
        }
        if !self.comparisons.is_empty() {
            out.push_str("\npaired t-tests (significance at p<0.05 marked *)\n");
            for c in &self.comparisons {
                out.push_str(&format!(
                    "{} vs {} @{} [{}]: {:+.2}%  t={:.3}  p={:.4}{}{}\n",
                    c.system,
                    c.reference,
                    c.cutoff,
                    c.labels.label(),
                    100.0 * c.mean_rel_improvement,
                    c.t,
                    c.p,
                    if c.significant { " *" } else { "" },
                    if c.degenerate { " (degenerate)" } else { "" },
                ));
            }
        }
        for t in &self.training {
            out.push_str(&format!(
                "\ntraining[{}]: best valid NDCG@5 {:.4}, {} steps, {} skipped queries",
                t.system, t.best_val_ndcg5, t.steps, t.skipped_queries
            ));
        }
        if !self.training.is_empty() {
            out.push('\n');
        }
        for g in &self.gbdt {
            out.push_str(&format!(
                "\ngbdt[{}]: kept {} trees (best round {}, ran {})\n",
                g.system, g.trees_kept, g.best_round, g.rounds_trained
            ));
            for (name, share) in &g.top_features {
                out.push_str(&format!("  {:<28}{:>7.2}%\n", name, 100.0 * share));
            }
        }
        if let Some(c) = &self.clusters {
            out.push_str(&format!(
                "\nclusters: {} centroids, inertia {:.4} after {} iterations\n",
                c.n_clusters, c.final_inertia, c.iterations
            ));
            out.push_str(&format!("  users per distinct-cluster-count bin: {:?}\n", c.user_count_bins));
            out.push_str(&format!("  users per entropy bin: {:?}\n", c.user_entropy_bins));
        }
        out
    }
}
