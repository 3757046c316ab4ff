//! Plain k-means over context vectors: k-means++ seeding, Lloyd
//! iterations with deterministic tie-breaking, and farthest-point
//! reseeding for clusters that empty out.

use std::io::Write;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Fitted clustering: centroids plus the inertia trace of the fit.
#[derive(Debug, Clone)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, lowest index on ties.
pub fn kmeans_assign(model: &KMeansModel, v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in model.centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Assign every vector (parallel across points).
pub fn kmeans_assign_all(model: &KMeansModel, vectors: &[Vec<f64>]) -> Vec<usize> {
    vectors.par_iter().map(|v| kmeans_assign(model, v)).collect()
}

fn plus_plus_init(vectors: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(n);
    centroids.push(vectors[rng.gen_range(0..vectors.len())].clone());
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < n {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // All remaining mass at distance zero: fall back to uniform.
            Err(_) => rng.gen_range(0..vectors.len()),
        };
        centroids.push(vectors[pick].clone());
        let last = centroids.last().unwrap();
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, last));
        }
    }
    centroids
}

/// Fit `n` clusters with k-means++ then Lloyd iterations, stopping when
/// inertia improves by less than 1e-6 or after 100 rounds.
pub fn kmeans_fit(vectors: &[Vec<f64>], n: usize, seed: u64) -> Result<KMeansModel> {
    if n == 0 {
        return Err(Error::Config("cluster count must be positive".into()));
    }
    if vectors.len() < n {
        return Err(Error::Config(format!(
            "{} vectors cannot form {n} clusters",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Dimension("clustering vectors must share a positive width".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = KMeansModel {
        centroids: plus_plus_init(vectors, n, &mut rng),
        seed,
        inertia_history: Vec::new(),
    };
    let mut assign = vec![0usize; vectors.len()];
    for _ in 0..100 {
        // Assignment step (parallel across points).
        assign = kmeans_assign_all(&model, vectors);
        // Reseed empty clusters from the globally worst-fit point.
        loop {
            let mut counts = vec![0usize; n];
            for &a in &assign {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let farthest = (0..vectors.len())
                .max_by(|&a, &b| {
                    let da = sq_dist(&vectors[a], &model.centroids[assign[a]]);
                    let db = sq_dist(&vectors[b], &model.centroids[assign[b]]);
                    da.total_cmp(&db)
                })
                .expect("at least n vectors present");
            model.centroids[empty] = vectors[farthest].clone();
            assign[farthest] = empty;
        }
        // Update step.
        let mut sums = vec![vec![0.0; dim]; n];
        let mut counts = vec![0usize; n];
        for (v, &a) in vectors.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for (c, (sum, cnt)) in model.centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            for (ci, si) in c.iter_mut().zip(sum) {
                *ci = si / *cnt as f64;
            }
        }
        let inertia: f64 = vectors
            .par_iter()
            .map(|v| model.centroids.iter().map(|c| sq_dist(v, c)).fold(f64::INFINITY, f64::min))
            .sum();
        let done = model
            .inertia_history
            .last()
            .is_some_and(|prev| prev - inertia < 1e-6);
        model.inertia_history.push(inertia);
        if done {
            break;
        }
    }
    if model.centroids.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("clustering produced non-finite centroids".into()));
    }
    Ok(model)
}

/// Cluster table as delimited text: query id and cluster id per row.
pub fn write_cluster_table(rows: &[(String, usize)], out: &mut impl Write) -> Result<()> {
    let mut text = String::from("query_id\tcluster_id\n");
    for (qid, cid) in rows {
        text.push_str(&format!("{qid}\t{cid}\n"));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| Error::Contract(format!("cluster table export failed: {e}")))
}
