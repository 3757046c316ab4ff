//! The end-to-end pipeline: simulate → partition → normalize → build
//! history → train → (export context → cluster → bundle → gbdt) →
//! evaluate → compare. Any stage failure aborts with the stage name; all
//! randomness flows from the config seeds.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;

use crate::data::{
    apply_normalization, build_history, fit_normalization, split_by_time, split_by_user,
    QueryRecord, UserHistory,
};
use crate::error::{Error, Result};
use crate::eval::{
    baseline_rank, mean_ndcg, ndcg_at_k, paired_ttest, rank_by_scores, ranked_grades,
    user_cluster_distribution,
};
use crate::exp::config::{ExperimentConfig, PartitionScheme};
use crate::exp::report::{
    ClusterSummary, Comparison, DatasetSummary, ExperimentReport, GbdtSummary, LabelSource,
    RunResult, SystemSummary, TrainSummary,
};
use crate::gbdt::{
    feature_importance, flatten_records, gbdt_train, kmeans_assign, kmeans_fit, FlatFeatureRow,
    GbdtModel, RowLayout,
};
use crate::model::export_context_rows;
use crate::train::{train_dual, ModelKind, TrainedModel};

/// One system's candidate ordering for every test record.
struct SystemOrders {
    system: String,
    orders: Vec<Vec<usize>>,
}

fn count_users(records: &[QueryRecord]) -> usize {
    records.iter().map(|r| r.user_id.as_str()).collect::<HashSet<_>>().len()
}

fn neural_orders(
    model: &TrainedModel,
    test: &[QueryRecord],
    histories: &HashMap<String, UserHistory>,
) -> Result<Vec<Vec<usize>>> {
    test.par_iter()
        .map(|r| Ok(rank_by_scores(&model.score_record(r, histories)?)))
        .collect()
}

/// Candidate orderings from a boosted model over pre-flattened rows; the
/// rows must align with `test` record by record.
pub fn gbdt_orders(model: &GbdtModel, rows: &[FlatFeatureRow], test: &[QueryRecord]) -> Vec<Vec<usize>> {
    let scores = model.predict_rows(rows);
    let mut by_query: HashMap<&str, &[f64]> = HashMap::new();
    let mut start = 0;
    for rec in test {
        let end = start + rec.candidates.len();
        by_query.insert(rec.query_id.as_str(), &scores[start..end]);
        start = end;
    }
    test.iter().map(|r| rank_by_scores(by_query[r.query_id.as_str()])).collect()
}

/// NDCG at every cutoff for one system's candidate orderings, on observed
/// and (when requested) hidden true labels.
pub fn evaluate_orders(
    system: &str,
    orders: &[Vec<usize>],
    test: &[QueryRecord],
    cutoffs: &[usize],
    has_truth: bool,
    config_hash: &str,
    seed: u64,
) -> Result<RunResult> {
    let per_record: Vec<(Vec<Option<f64>>, Vec<Option<f64>>)> = test
        .par_iter()
        .zip(orders)
        .map(|(rec, order)| {
            let obs_grades = ranked_grades(rec, order, false)?;
            let obs = cutoffs
                .iter()
                .map(|&k| ndcg_at_k(&obs_grades, k))
                .collect::<Result<Vec<_>>>()?;
            let truth = if has_truth {
                let true_grades = ranked_grades(rec, order, true)?;
                cutoffs
                    .iter()
                    .map(|&k| ndcg_at_k(&true_grades, k))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Ok((obs, truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut observed = BTreeMap::new();
    let mut truth = BTreeMap::new();
    for (ci, &k) in cutoffs.iter().enumerate() {
        observed.insert(k, per_record.iter().map(|(o, _)| o[ci]).collect());
        if has_truth {
            truth.insert(k, per_record.iter().map(|(_, t)| t[ci]).collect());
        }
    }
    Ok(RunResult {
        system: system.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        observed,
        truth,
    })
}

fn summarize(result: &RunResult) -> SystemSummary {
    let means = |side: &BTreeMap<usize, Vec<Option<f64>>>| {
        side.iter().map(|(&k, v)| (k, mean_ndcg(v))).collect::<BTreeMap<usize, f64>>()
    };
    SystemSummary {
        system: result.system.clone(),
        observed: means(&result.observed),
        truth: means(&result.truth),
    }
}

/// Paired test over the queries where both systems have a defined metric.
/// Returns `None` when fewer than two queries have the metric defined for
/// both sides, since a paired test needs at least two differences.
pub fn compare_results(
    results: &[RunResult],
    system: &str,
    reference: &str,
    cutoff: usize,
    labels: LabelSource,
) -> Result<Option<Comparison>> {
    let (Some(sys), Some(reference_run)) = (
        results.iter().find(|r| r.system == system),
        results.iter().find(|r| r.system == reference),
    ) else {
        return Ok(None);
    };
    let (Some(a), Some(b)) = (sys.per_query(labels, cutoff), reference_run.per_query(labels, cutoff))
    else {
        return Ok(None);
    };
    let paired: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if paired.len() < 2 {
        // Too few queries with a defined metric to test anything.
        return Ok(None);
    }
    let xs: Vec<f64> = paired.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = paired.iter().map(|p| p.1).collect();
    let test = paired_ttest(&xs, &ys).map_err(|e| e.in_stage("compare"))?;
    Ok(Some(Comparison {
        system: system.to_string(),
        reference: reference.to_string(),
        cutoff,
        labels,
        t: test.t,
        p: test.p,
        mean_rel_improvement: test.mean_rel_improvement,
        significant: test.p < 0.05 && !test.degenerate,
        degenerate: test.degenerate,
    }))
}

fn train_summary(system: &str, model: &TrainedModel) -> TrainSummary {
    TrainSummary {
        system: system.to_string(),
        best_val_ndcg5: model.best_val_ndcg5,
        skipped_queries: model.skipped_queries,
        steps: model.curve.len(),
    }
}

fn gbdt_summary(system: &str, model: &GbdtModel, layout: &RowLayout) -> GbdtSummary {
    let imp = feature_importance(model, layout.bundled);
    let mut ranked = imp.shares.clone();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(10);
    GbdtSummary {
        system: system.to_string(),
        rounds_trained: model.rounds_trained,
        best_round: model.best_round,
        trees_kept: model.trees.len(),
        top_features: ranked,
        cluster_block_shares: imp.cluster_blocks,
    }
}

/// Run one experiment end to end and assemble the full report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let config_hash = cfg.hash();
    let seed = cfg.simulator.seed;

    let (records, mut schema, _truth) =
        crate::sim::generate_log(&cfg.simulator).map_err(|e| e.in_stage("simulate"))?;

    let (mut train, mut valid, mut test) = match cfg.partition.scheme {
        PartitionScheme::Time => split_by_time(records),
        PartitionScheme::User => split_by_user(records, cfg.simulator.seed),
    };
    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(Error::Contract(format!(
            "partition left an empty split: {}/{}/{} train/valid/test",
            train.len(),
            valid.len(),
            test.len()
        ))
        .in_stage("partition"));
    }

    fit_normalization(&train, &mut schema).map_err(|e| e.in_stage("normalize"))?;
    for part in [&mut train, &mut valid, &mut test] {
        apply_normalization(part, &schema).map_err(|e| e.in_stage("normalize"))?;
    }

    let all: Vec<QueryRecord> =
        train.iter().chain(&valid).chain(&test).cloned().collect();
    let histories = build_history(&all, cfg.model.dims.k);

    let kind = cfg.model.model_kind()?;
    let switches = cfg.model.switches()?;
    let main = train_dual(
        kind,
        cfg.model.dims,
        &switches,
        &schema,
        &train,
        &valid,
        &histories,
        &cfg.trainer,
    )
    .map_err(|e| e.in_stage("train"))?;
    // A plain model trained alongside the context model anchors the
    // headline comparison.
    let nrm_ref = if kind == ModelKind::Cnrm {
        Some(
            train_dual(
                ModelKind::Nrm,
                cfg.model.dims,
                &Default::default(),
                &schema,
                &train,
                &valid,
                &histories,
                &cfg.trainer,
            )
            .map_err(|e| e.in_stage("train"))?,
        )
    } else {
        None
    };

    let mut gbdt_runs: Vec<(String, GbdtModel, RowLayout, Vec<FlatFeatureRow>)> = Vec::new();
    let mut clusters = None;
    if cfg.gbdt.enabled {
        let gcfg = cfg.gbdt.config();
        let (train_rows, layout) =
            flatten_records(&train, &schema, None).map_err(|e| e.in_stage("bundle"))?;
        let (valid_rows, _) =
            flatten_records(&valid, &schema, None).map_err(|e| e.in_stage("bundle"))?;
        let (test_rows, _) =
            flatten_records(&test, &schema, None).map_err(|e| e.in_stage("bundle"))?;
        let plain = gbdt_train(&train_rows, &valid_rows, &layout.names, &gcfg)
            .map_err(|e| e.in_stage("gbdt"))?;
        gbdt_runs.push(("lambdamart".into(), plain, layout, test_rows));

        if cfg.gbdt.context {
            let ctx = main
                .ctx
                .as_ref()
                .ok_or_else(|| Error::Contract("context model missing".into()))
                .map_err(|e| e.in_stage("export-context"))?;
            let rows = export_context_rows(&main.enc, ctx, &main.store, &all, &histories, &switches)
                .map_err(|e| e.in_stage("export-context"))?;
            let train_ids: HashSet<&str> = train.iter().map(|r| r.query_id.as_str()).collect();
            let train_vecs: Vec<Vec<f64>> = rows
                .iter()
                .filter(|r| train_ids.contains(r.query_id.as_str()))
                .map(|r| r.c.clone())
                .collect();
            let km = kmeans_fit(&train_vecs, cfg.gbdt.n_clusters, cfg.trainer.seed)
                .map_err(|e| e.in_stage("cluster"))?;
            let assignments: HashMap<String, usize> = rows
                .iter()
                .map(|r| (r.query_id.clone(), kmeans_assign(&km, &r.c)))
                .collect();
            let user_rows: Vec<(String, usize)> = rows
                .iter()
                .map(|r| (r.user_id.clone(), assignments[&r.query_id]))
                .collect();
            let dist = user_cluster_distribution(&user_rows, cfg.gbdt.n_clusters)
                .map_err(|e| e.in_stage("cluster"))?;
            clusters = Some(ClusterSummary {
                n_clusters: cfg.gbdt.n_clusters,
                final_inertia: km.inertia_history.last().copied().unwrap_or(f64::NAN),
                iterations: km.inertia_history.len(),
                user_count_bins: dist.count_bins,
                user_entropy_bins: dist.entropy_bins,
            });

            let bundle = Some((&assignments, cfg.gbdt.n_clusters));
            let (btrain, blayout) =
                flatten_records(&train, &schema, bundle).map_err(|e| e.in_stage("bundle"))?;
            let (bvalid, _) =
                flatten_records(&valid, &schema, bundle).map_err(|e| e.in_stage("bundle"))?;
            let (btest, _) =
                flatten_records(&test, &schema, bundle).map_err(|e| e.in_stage("bundle"))?;
            let bundled = gbdt_train(&btrain, &bvalid, &blayout.names, &gcfg)
                .map_err(|e| e.in_stage("gbdt"))?;
            gbdt_runs.push(("lambdamart+context".into(), bundled, blayout, btest));
        }
    }

    // Evaluate every system on the untouched test partition.
    let has_truth =
        test.iter().all(|r| r.candidates.iter().all(|c| c.label_true.is_some()));
    let mut ordered_systems: Vec<SystemOrders> = Vec::new();
    for criterion in ["bm25f", "recency"] {
        let orders = test
            .par_iter()
            .map(|r| baseline_rank(r, criterion, &schema))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("evaluate"))?;
        ordered_systems.push(SystemOrders { system: criterion.to_string(), orders });
    }
    if let Some(reference_model) = &nrm_ref {
        ordered_systems.push(SystemOrders {
            system: "nrm".into(),
            orders: neural_orders(reference_model, &test, &histories)
                .map_err(|e| e.in_stage("evaluate"))?,
        });
    }
    ordered_systems.push(SystemOrders {
        system: kind.label().to_string(),
        orders: neural_orders(&main, &test, &histories).map_err(|e| e.in_stage("evaluate"))?,
    });
    for (name, model, _, test_rows) in &gbdt_runs {
        ordered_systems.push(SystemOrders {
            system: name.clone(),
            orders: gbdt_orders(model, test_rows, &test),
        });
    }

    let results = ordered_systems
        .into_iter()
        .map(|sys| {
            evaluate_orders(
                &sys.system,
                &sys.orders,
                &test,
                &cfg.metrics.cutoffs,
                has_truth,
                &config_hash,
                seed,
            )
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("evaluate"))?;
    let systems = results.iter().map(summarize).collect();

    let mut comparisons = Vec::new();
    let main_label = kind.label();
    let mut pairs: Vec<(&str, &str)> = vec![
        ("recency", "bm25f"),
        (main_label, "bm25f"),
        (main_label, "recency"),
    ];
    if nrm_ref.is_some() {
        pairs.push(("cnrm", "nrm"));
    }
    if gbdt_runs.len() == 2 {
        pairs.push(("lambdamart+context", "lambdamart"));
    }
    let mut label_sources = vec![LabelSource::Observed];
    if has_truth {
        label_sources.push(LabelSource::Truth);
    }
    for (sys, reference) in pairs {
        for &labels in &label_sources {
            for &cutoff in &cfg.metrics.cutoffs {
                if let Some(c) = compare_results(&results, sys, reference, cutoff, labels)? {
                    comparisons.push(c);
                }
            }
        }
    }

    let mut training = vec![train_summary(kind.label(), &main)];
    if let Some(reference_model) = &nrm_ref {
        training.insert(0, train_summary("nrm", reference_model));
    }
    let gbdt_summaries = gbdt_runs
        .iter()
        .map(|(name, model, layout, _)| gbdt_summary(name, model, layout))
        .collect();

    Ok(ExperimentReport {
        config_hash,
        seed,
        partition: cfg.partition.scheme.label().to_string(),
        dataset: DatasetSummary {
            n_users: count_users(&all),
            train_queries: train.len(),
            valid_queries: valid.len(),
            test_queries: test.len(),
            mean_candidates: all.iter().map(|r| r.candidates.len() as f64).sum::<f64>()
                / all.len() as f64,
        },
        systems,
        comparisons,
        training,
        gbdt: gbdt_summaries,
        clusters,
        results,
    })
}
