//! Scratch probe (temporary).

use std::collections::HashMap;

use ctxrank_core::data::QueryRecord;
use ctxrank_core::eval::{baseline_rank, mean_ndcg, ndcg_at_k, ranked_grades};
use ctxrank_core::sim::{generate_log, SimConfig};

fn baseline_mean(records: &[QueryRecord], crit: &str, schema: &ctxrank_core::data::FeatureSchema) -> f64 {
    let per: Vec<Option<f64>> = records
        .iter()
        .map(|r| {
            let order = baseline_rank(r, crit, schema).unwrap();
            let grades = ranked_grades(r, &order, true).unwrap();
            ndcg_at_k(&grades, 5).unwrap()
        })
        .collect();
    mean_ndcg(&per)
}

#[test]
fn probe_seeds() {
    for seed in [1u64, 2, 3, 7] {
        let cfg = SimConfig { n_users: 300, seed, ..Default::default() };
        let (records, schema, _) = generate_log(&cfg).unwrap();
        println!(
            "seed {seed}: recency {:.4}  bm25f {:.4}",
            baseline_mean(&records, "recency", &schema),
            baseline_mean(&records, "bm25f", &schema),
        );
    }
    let cfg = SimConfig::default();
    let (records, schema, _) = generate_log(&cfg).unwrap();
    println!(
        "default scale: recency {:.4}  bm25f {:.4}",
        baseline_mean(&records, "recency", &schema),
        baseline_mean(&records, "bm25f", &schema),
    );
}

#[test]
fn probe_per_cohort_baselines() {
    let cfg = SimConfig { n_users: 400, seed: 1, ..Default::default() };
    let (records, schema, truth) = generate_log(&cfg).unwrap();
    let cohort_of: HashMap<&str, usize> =
        truth.cohorts.iter().map(|(u, c)| (u.as_str(), *c)).collect();

    for cohort in 0..4 {
        let subset: Vec<QueryRecord> = records
            .iter()
            .filter(|r| cohort_of[r.user_id.as_str()] == cohort)
            .cloned()
            .collect();
        println!(
            "cohort {cohort}: {} queries  recency {:.4}  bm25f {:.4}",
            subset.len(),
            baseline_mean(&subset, "recency", &schema),
            baseline_mean(&subset, "bm25f", &schema),
        );
    }
    println!(
        "all: recency {:.4}  bm25f {:.4}",
        baseline_mean(&records, "recency", &schema),
        baseline_mean(&records, "bm25f", &schema),
    );
}

#[test]
fn probe_cluster_cohort_purity() {
    use ctxrank_core::data::{apply_normalization, build_history, fit_normalization, split_by_time};
    use ctxrank_core::gbdt::{kmeans_assign_all, kmeans_fit};
    use ctxrank_core::model::{AblationMask, CnrmSwitches, Dims};
    use ctxrank_core::model::export_context_rows;
    use ctxrank_core::train::{train_dual, ModelKind, TrainConfig};

    let cfg = SimConfig {
        n_users: 450,
        seed: 1,
        cohort_mix: vec![0.25, 0.25, 0.25, 0.25],
        ..Default::default()
    };
    let (records, mut schema, truth) = generate_log(&cfg).unwrap();
    let cohort_of: HashMap<&str, usize> =
        truth.cohorts.iter().map(|(u, c)| (u.as_str(), *c)).collect();

    let (mut train, mut valid, mut test) = split_by_time(records);
    fit_normalization(&train, &mut schema).unwrap();
    apply_normalization(&mut train, &schema).unwrap();
    apply_normalization(&mut valid, &schema).unwrap();
    apply_normalization(&mut test, &schema).unwrap();
    let mut all = train.clone();
    all.extend(valid.iter().cloned());
    all.extend(test.iter().cloned());

    let dims = Dims { e: 4, m: 16, k: 10, layers: 1, heads: 2, ff: 32 };
    let histories = build_history(&all, dims.k);
    for mask in ["fqd", "full"] {
    let switches = CnrmSwitches {
        mask: AblationMask::parse(mask).unwrap(),
        posemb: true,
        substitute_qvec: false,
    };
    let tc = TrainConfig {
        batch_size: 64,
        epochs: 3,
        warmup_steps: 40,
        seed: 1,
        ..Default::default()
    };
    let model =
        train_dual(ModelKind::Cnrm, dims, &switches, &schema, &train, &valid, &histories, &tc)
            .unwrap();
    let ctx = model.ctx.as_ref().unwrap();

    let train_rows =
        export_context_rows(&model.enc, ctx, &model.store, &train, &histories, &switches).unwrap();
    let all_rows =
        export_context_rows(&model.enc, ctx, &model.store, &all, &histories, &switches).unwrap();
    let train_vecs: Vec<Vec<f64>> = train_rows.iter().map(|r| r.c.clone()).collect();
    let all_vecs: Vec<Vec<f64>> = all_rows.iter().map(|r| r.c.clone()).collect();

    println!("== mask {mask} ==");
    for k in [4usize, 6, 8, 10] {
        let km = kmeans_fit(&train_vecs, k, 1).unwrap();
        let assign = kmeans_assign_all(&km, &all_vecs);
        // rows: cluster, cols: cohort
        let mut table = vec![[0usize; 4]; k];
        for (row, cl) in all_rows.iter().zip(&assign) {
            table[*cl][cohort_of[row.user_id.as_str()]] += 1;
        }
        let total: usize = table.iter().map(|r| r.iter().sum::<usize>()).sum();
        let pure: usize = table.iter().map(|r| *r.iter().max().unwrap()).sum();
        println!("k={k}: purity {:.3}", pure as f64 / total as f64);
        for (c, row) in table.iter().enumerate() {
            println!("  cluster {c}: {row:?}");
        }
    }
    }
}
