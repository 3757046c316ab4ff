//! Per-user cluster-usage statistics: how many distinct clusters a user's
//! queries land in, and the Shannon entropy of their cluster frequencies.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ClusterDistribution {
    /// Histogram over per-user distinct-cluster counts, 10 equal-width bins
    /// spanning [0, n_clusters].
    pub count_bins: Vec<u64>,
    /// Histogram over per-user entropies, 10 equal-width bins spanning
    /// [0, log2(n_clusters)].
    pub entropy_bins: Vec<u64>,
    /// (user_id, distinct clusters, entropy in bits), sorted by user_id.
    pub per_user: Vec<(String, usize, f64)>,
}

/// Summarize `(user_id, cluster_id)` rows (one row per query).
pub fn user_cluster_distribution(
    rows: &[(String, usize)],
    n_clusters: usize,
) -> Result<ClusterDistribution> {
    if n_clusters < 2 {
        return Err(Error::Contract("need at least 2 clusters".into()));
    }
    let mut freq: HashMap<&str, HashMap<usize, u64>> = HashMap::new();
    for (user, cluster) in rows {
        if *cluster >= n_clusters {
            return Err(Error::Index(format!(
                "cluster id {cluster} out of range for {n_clusters} clusters"
            )));
        }
        *freq.entry(user.as_str()).or_default().entry(*cluster).or_insert(0) += 1;
    }
    let mut per_user: Vec<(String, usize, f64)> = freq
        .into_iter()
        .map(|(user, counts)| {
            let total: u64 = counts.values().sum();
            let entropy = -counts
                .values()
                .map(|&c| {
                    let p = c as f64 / total as f64;
                    p * p.log2()
                })
                .sum::<f64>();
            (user.to_string(), counts.len(), entropy.max(0.0))
        })
        .collect();
    per_user.sort_by(|a, b| a.0.cmp(&b.0));

    let bin = |value: f64, max: f64| -> usize {
        let b = (value / max * 10.0).floor() as usize;
        b.min(9)
    };
    let mut count_bins = vec![0u64; 10];
    let mut entropy_bins = vec![0u64; 10];
    let max_entropy = (n_clusters as f64).log2();
    for (_, distinct, entropy) in &per_user {
        count_bins[bin(*distinct as f64, n_clusters as f64)] += 1;
        entropy_bins[bin(*entropy, max_entropy)] += 1;
    }
    Ok(ClusterDistribution { count_bins, entropy_bins, per_user })
}
