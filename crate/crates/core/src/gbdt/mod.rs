//! LambdaMART from first principles: gradient-boosted regression trees
//! driven by LambdaRank gradients, plus k-means clustering of context
//! vectors and the one-hot cluster feature bundling that injects query
//! context into the flat feature rows.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::data::{FeatureSchema, QueryRecord};
use crate::error::{Error, Result};
use crate::eval::{mean_ndcg, ndcg_at_k, rank_by_scores};

mod kmeans;
mod lambda;
mod tree;

pub use kmeans::{kmeans_assign, kmeans_assign_all, kmeans_fit, write_cluster_table, KMeansModel};
pub use lambda::lambdarank_gradients;
pub use tree::{Node, RegressionTree};

/// Continuous signals lifted into the bundled block, in block order.
pub const BUNDLE_SIGNALS: [&str; 3] = ["recency", "email_length", "bm25f"];

/// One flattened (query, candidate) pair: a dense feature vector plus the
/// labels needed for training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFeatureRow {
    pub query_id: String,
    pub features: Vec<f64>,
    /// Observed (click-derived) grade; the training signal.
    pub label: u8,
    /// Hidden simulator grade, for evaluation only.
    pub label_true: Option<u8>,
}

/// Location of the bundled cluster block inside a flat row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleInfo {
    /// First feature index of the block.
    pub offset: usize,
    pub n_clusters: usize,
}

/// Names every column of a flat row and records whether (and where) a
/// bundled cluster block is present.
#[derive(Debug, Clone, PartialEq)]
pub struct RowLayout {
    pub names: Vec<String>,
    pub bundled: Option<BundleInfo>,
}

impl RowLayout {
    pub fn width(&self) -> usize {
        self.names.len()
    }
}

/// Scatter the three bundled signals into a zero vector of length `3n` at
/// the block owned by `cluster_id` — the flattening of the outer product
/// of the signal vector with the cluster one-hot.
pub fn bundle_cluster_features(f_l: [f64; 3], cluster_id: usize, n: usize) -> Result<Vec<f64>> {
    if cluster_id >= n {
        return Err(Error::Index(format!("cluster id {cluster_id} out of range for {n} clusters")));
    }
    let mut out = vec![0.0; 3 * n];
    out[cluster_id * 3..cluster_id * 3 + 3].copy_from_slice(&f_l);
    Ok(out)
}

/// Flatten query records into per-candidate feature rows. Discrete
/// features enter as ordinal integers; when `clusters` maps each query to
/// a cluster, a one-hot-bundled block of the three bundled signals is
/// appended and the layout reports its position.
pub fn flatten_records(
    records: &[QueryRecord],
    schema: &FeatureSchema,
    clusters: Option<(&HashMap<String, usize>, usize)>,
) -> Result<(Vec<FlatFeatureRow>, RowLayout)> {
    let mut names: Vec<String> = Vec::new();
    names.extend(schema.q_cont_names.iter().cloned());
    names.extend((0..schema.q_disc_cards.len()).map(|i| format!("q_disc{i}")));
    names.extend(schema.d_cont_names.iter().cloned());
    names.extend((0..schema.d_disc_cards.len()).map(|i| format!("d_disc{i}")));
    names.extend(schema.qd_cont_names.iter().cloned());
    let plain_width = names.len();

    let bundled = match clusters {
        Some((_, n)) => {
            for c in 0..n {
                for sig in BUNDLE_SIGNALS {
                    names.push(format!("fc.c{c}.{sig}"));
                }
            }
            Some(BundleInfo { offset: plain_width, n_clusters: n })
        }
        None => None,
    };
    let signal_cols = if clusters.is_some() {
        Some([
            schema.continuous_column(BUNDLE_SIGNALS[0])?,
            schema.continuous_column(BUNDLE_SIGNALS[1])?,
            schema.continuous_column(BUNDLE_SIGNALS[2])?,
        ])
    } else {
        None
    };

    let width = names.len();
    let mut rows = Vec::new();
    for rec in records {
        let cluster = match clusters {
            Some((map, n)) => {
                let Some(&c) = map.get(&rec.query_id) else {
                    return Err(Error::Contract(format!(
                        "query {} has no cluster assignment",
                        rec.query_id
                    )));
                };
                Some((c, n))
            }
            None => None,
        };
        for cand in &rec.candidates {
            let mut f = Vec::with_capacity(width);
            f.extend_from_slice(&rec.q_cont);
            f.extend(rec.q_disc.iter().map(|&v| v as f64));
            f.extend_from_slice(&cand.d_cont);
            f.extend(cand.d_disc.iter().map(|&v| v as f64));
            f.extend_from_slice(&cand.qd_cont);
            if let (Some((c, n)), Some(cols)) = (cluster, &signal_cols) {
                let f_l = [
                    cols[0].value(rec, cand),
                    cols[1].value(rec, cand),
                    cols[2].value(rec, cand),
                ];
                f.extend(bundle_cluster_features(f_l, c, n)?);
            }
            debug_assert_eq!(f.len(), width);
            rows.push(FlatFeatureRow {
                query_id: rec.query_id.clone(),
                features: f,
                label: cand.label_obs,
                label_true: cand.label_true,
            });
        }
    }
    Ok((rows, RowLayout { names, bundled }))
}

/// Boosting hyperparameters. Defaults follow the reference setup:
/// 500 trees, 150 leaves, shrinkage 0.3, early stop after 30 stale
/// rounds, NDCG truncation 10 inside the λ gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtConfig {
    pub max_trees: usize,
    pub max_leaves: usize,
    pub shrinkage: f64,
    pub early_stop_rounds: usize,
    pub ndcg_truncation: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            max_trees: 500,
            max_leaves: 150,
            shrinkage: 0.3,
            early_stop_rounds: 30,
            ndcg_truncation: 10,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_trees == 0 || self.max_leaves < 2 {
            return Err(Error::Config("need >= 1 tree and >= 2 leaves".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::Config(format!("shrinkage {} must be positive", self.shrinkage)));
        }
        if self.ndcg_truncation == 0 {
            return Err(Error::Config("ndcg truncation must be >= 1".into()));
        }
        Ok(())
    }
}

/// A boosted ensemble; the prediction is the shrinkage-scaled sum of all
/// member trees.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub trees: Vec<RegressionTree>,
    pub shrinkage: f64,
    pub feature_names: Vec<String>,
    /// Total split gain accumulated per feature over the kept trees.
    pub importance_gain: Vec<f64>,
    /// Round index (0-based) whose validation NDCG@5 was best.
    pub best_round: usize,
    /// Rounds actually executed before early stopping cut training off.
    pub rounds_trained: usize,
    /// Training and validation NDCG@5 after each executed round.
    pub train_curve: Vec<f64>,
    pub valid_curve: Vec<f64>,
}

impl GbdtModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.trees.iter().map(|t| self.shrinkage * t.predict(features)).sum()
    }

    pub fn predict_rows(&self, rows: &[FlatFeatureRow]) -> Vec<f64> {
        rows.par_iter().map(|r| self.predict(&r.features)).collect()
    }
}

/// Start/end index of each run of consecutive rows sharing a query id.
pub(crate) fn group_ranges(rows: &[FlatFeatureRow]) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].query_id != rows[start].query_id {
            ranges.push((start, i));
            start = i;
        }
    }
    ranges
}

fn mean_group_ndcg5(rows: &[FlatFeatureRow], ranges: &[(usize, usize)], scores: &[f64]) -> f64 {
    let per_query: Vec<Option<f64>> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let order = rank_by_scores(&scores[s..e]);
            let grades: Vec<u8> = rows[s..e].iter().map(|r| r.label).collect();
            let ranked: Vec<u8> = order.iter().map(|&i| grades[i]).collect();
            ndcg_at_k(&ranked, 5).expect("k=5 is valid")
        })
        .collect();
    mean_ndcg(&per_query)
}

/// Train a LambdaMART ensemble on observed labels, early-stopping on
/// validation NDCG@5 and truncating to the best round. Rows must arrive
/// grouped by query. With an empty validation set, early stopping is
/// disabled and all rounds are kept.
pub fn gbdt_train(
    train: &[FlatFeatureRow],
    valid: &[FlatFeatureRow],
    names: &[String],
    cfg: &GbdtConfig,
) -> Result<GbdtModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("gbdt training needs at least one row".into()));
    }
    let width = train[0].features.len();
    if width != names.len() {
        return Err(Error::Dimension(format!(
            "rows carry {width} features but {} names were given",
            names.len()
        )));
    }
    if let Some(bad) = train.iter().chain(valid).find(|r| r.features.len() != width) {
        return Err(Error::Dimension(format!(
            "row for query {} has {} features, expected {width}",
            bad.query_id,
            bad.features.len()
        )));
    }

    let data: Vec<Vec<f64>> = train.iter().map(|r| r.features.clone()).collect();
    let sorted_lists = tree::presort_columns(&data);
    let train_ranges = group_ranges(train);
    let valid_ranges = group_ranges(valid);
    let labels: Vec<Vec<u8>> = train_ranges
        .iter()
        .map(|&(s, e)| train[s..e].iter().map(|r| r.label).collect())
        .collect();

    let mut train_scores = vec![0.0f64; train.len()];
    let mut valid_scores = vec![0.0f64; valid.len()];
    let mut trees: Vec<RegressionTree> = Vec::new();
    let mut train_curve = Vec::new();
    let mut valid_curve = Vec::new();
    let mut best_round = 0usize;
    let mut best_valid = f64::NEG_INFINITY;
    let track_validation = !valid.is_empty();

    for round in 0..cfg.max_trees {
        // LambdaRank gradients per query group, written into flat arrays.
        let per_group: Vec<(Vec<f64>, Vec<f64>)> = train_ranges
            .par_iter()
            .zip(&labels)
            .map(|(&(s, e), grades)| {
                lambdarank_gradients(&train_scores[s..e], grades, cfg.ndcg_truncation)
            })
            .collect();
        let mut lambdas = vec![0.0f64; train.len()];
        let mut weights = vec![0.0f64; train.len()];
        for (&(s, _), (l, w)) in train_ranges.iter().zip(&per_group) {
            lambdas[s..s + l.len()].copy_from_slice(l);
            weights[s..s + w.len()].copy_from_slice(w);
        }

        let tree = tree::fit_tree(&data, &sorted_lists, &lambdas, &weights, cfg.max_leaves);
        let train_deltas: Vec<f64> =
            data.par_iter().map(|x| cfg.shrinkage * tree.predict(x)).collect();
        for (s, d) in train_scores.iter_mut().zip(&train_deltas) {
            *s += d;
        }
        let valid_deltas: Vec<f64> =
            valid.par_iter().map(|r| cfg.shrinkage * tree.predict(&r.features)).collect();
        for (s, d) in valid_scores.iter_mut().zip(&valid_deltas) {
            *s += d;
        }
        trees.push(tree);

        train_curve.push(mean_group_ndcg5(train, &train_ranges, &train_scores));
        if track_validation {
            let val = mean_group_ndcg5(valid, &valid_ranges, &valid_scores);
            valid_curve.push(val);
            if val > best_valid {
                best_valid = val;
                best_round = round;
            } else if round - best_round >= cfg.early_stop_rounds {
                break;
            }
        } else {
            best_round = round;
        }
    }

    let rounds_trained = trees.len();
    trees.truncate(best_round + 1);
    let mut importance_gain = vec![0.0f64; width];
    for tree in &trees {
        for (feature, gain) in tree.split_gains() {
            importance_gain[feature] += gain;
        }
    }
    Ok(GbdtModel {
        trees,
        shrinkage: cfg.shrinkage,
        feature_names: names.to_vec(),
        importance_gain,
        best_round,
        rounds_trained,
        train_curve,
        valid_curve,
    })
}

/// Split-gain importance: each feature's share of the total gain, plus
/// the per-cluster-block aggregate when the layout carries a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    /// (feature name, share of total split gain), in layout order.
    pub shares: Vec<(String, f64)>,
    /// Summed shares of each cluster's 3-feature block, empty without a
    /// bundled layout.
    pub cluster_blocks: Vec<f64>,
}

pub fn feature_importance(model: &GbdtModel, bundled: Option<BundleInfo>) -> FeatureImportance {
    let total: f64 = model.importance_gain.iter().sum();
    let shares: Vec<(String, f64)> = model
        .feature_names
        .iter()
        .zip(&model.importance_gain)
        .map(|(n, &g)| (n.clone(), if total > 0.0 { g / total } else { 0.0 }))
        .collect();
    let cluster_blocks = match bundled {
        Some(info) => (0..info.n_clusters)
            .map(|c| {
                let start = info.offset + c * 3;
                shares[start..start + 3].iter().map(|(_, s)| s).sum()
            })
            .collect(),
        None => Vec::new(),
    };
    FeatureImportance { shares, cluster_blocks }
}

const MODEL_MAGIC: &str = "GBDT-LTR v1";

/// Serialize the ensemble as structured text with one record per node.
pub fn save_gbdt(model: &GbdtModel, w: &mut dyn Write) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = format!("{MODEL_MAGIC}\n");
    let _ = writeln!(text, "shrinkage {}", model.shrinkage);
    let _ = writeln!(text, "best_round {}", model.best_round);
    let _ = writeln!(text, "rounds_trained {}", model.rounds_trained);
    let _ = writeln!(text, "features {}", model.feature_names.len());
    for (name, gain) in model.feature_names.iter().zip(&model.importance_gain) {
        let _ = writeln!(text, "feature {name} {gain}");
    }
    let _ = writeln!(text, "trees {}", model.trees.len());
    for tree in &model.trees {
        let _ = writeln!(text, "tree {}", tree.nodes.len());
        for node in &tree.nodes {
            match node {
                Node::Split { feature, threshold, left, right, gain } => {
                    let _ = writeln!(text, "split {feature} {threshold} {left} {right} {gain}");
                }
                Node::Leaf { value } => {
                    let _ = writeln!(text, "leaf {value}");
                }
            }
        }
    }
    w.write_all(text.as_bytes())
        .map_err(|e| Error::Contract(format!("model export failed: {e}")))
}

fn parse_err(line_no: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line: line_no, msg: msg.into() }
}

/// Load an ensemble saved by [`save_gbdt`]. Curves are not serialized and
/// come back empty.
pub fn load_gbdt(r: &mut dyn BufRead) -> Result<GbdtModel> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(parse_err(i + 1, e.to_string())),
            None => Err(parse_err(0, format!("unexpected end of file, wanted {what}"))),
        }
    };
    let (no, magic) = next("header")?;
    if magic != MODEL_MAGIC {
        return Err(parse_err(no, format!("bad header {magic:?}")));
    }
    fn field<T: std::str::FromStr>(line: &str, no: usize, key: &str) -> Result<T> {
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| parse_err(no, format!("expected `{key} <value>`, got {line:?}")))?;
        rest.parse().map_err(|_| parse_err(no, format!("bad {key} value {rest:?}")))
    }
    let (no, l) = next("shrinkage")?;
    let shrinkage: f64 = field(&l, no, "shrinkage")?;
    let (no, l) = next("best_round")?;
    let best_round: usize = field(&l, no, "best_round")?;
    let (no, l) = next("rounds_trained")?;
    let rounds_trained: usize = field(&l, no, "rounds_trained")?;
    let (no, l) = next("features")?;
    let n_features: usize = field(&l, no, "features")?;
    let mut feature_names = Vec::with_capacity(n_features);
    let mut importance_gain = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        let (no, l) = next("feature")?;
        let mut parts = l.split(' ');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("feature"), Some(name), Some(gain), None) => {
                feature_names.push(name.to_string());
                importance_gain.push(
                    gain.parse().map_err(|_| parse_err(no, format!("bad gain {gain:?}")))?,
                );
            }
            _ => return Err(parse_err(no, format!("expected `feature <name> <gain>`, got {l:?}"))),
        }
    }
    let (no, l) = next("trees")?;
    let n_trees: usize = field(&l, no, "trees")?;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let (no, l) = next("tree")?;
        let n_nodes: usize = field(&l, no, "tree")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (no, l) = next("node")?;
            let parts: Vec<&str> = l.split(' ').collect();
            let node = match parts.as_slice() {
                ["leaf", v] => Node::Leaf {
                    value: v.parse().map_err(|_| parse_err(no, format!("bad leaf {v:?}")))?,
                },
                ["split", f, t, le, ri, g] => {
                    let bad = |what: &str| parse_err(no, format!("bad split {what} in {l:?}"));
                    Node::Split {
                        feature: f.parse().map_err(|_| bad("feature"))?,
                        threshold: t.parse().map_err(|_| bad("threshold"))?,
                        left: le.parse().map_err(|_| bad("left"))?,
                        right: ri.parse().map_err(|_| bad("right"))?,
                        gain: g.parse().map_err(|_| bad("gain"))?,
                    }
                }
                _ => return Err(parse_err(no, format!("unrecognized node record {l:?}"))),
            };
            nodes.push(node);
        }
        for node in &nodes {
            if let Node::Split { left, right, .. } = node {
                if *left >= nodes.len() || *right >= nodes.len() {
                    return Err(parse_err(no, "split child index out of range".to_string()));
                }
            }
        }
        trees.push(RegressionTree { nodes });
    }
    Ok(GbdtModel {
        trees,
        shrinkage,
        feature_names,
        importance_gain,
        best_round,
        rounds_trained,
        train_curve: Vec::new(),
        valid_curve: Vec::new(),
    })
}
