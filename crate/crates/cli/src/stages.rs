//! Stage implementations behind the CLI subcommands.
//!
//! Every stage reads and writes files in one artifact directory (`--out`),
//! so a pipeline is a sequence of invocations sharing that directory:
//!
//! ```text
//! ctxrank --config exp.toml --out run simulate
//! ctxrank --config exp.toml --out run train --model cnrm
//! ctxrank --config exp.toml --out run export-context
//! ctxrank --config exp.toml --out run cluster
//! ctxrank --config exp.toml --out run train-gbdt --context on
//! ctxrank --config exp.toml --out run eval --system cnrm --labels true
//! ctxrank --config exp.toml --out run compare run/eval.cnrm.json run/eval.nrm.json
//! ```
//!
//! Partitions, normalization statistics and per-user histories are
//! re-derived from the config on every invocation, so stages only persist
//! what is expensive or stateful: the dataset, model parameters, context
//! vectors, cluster assignments, boosted trees and evaluation results.
//! Given the same config and artifacts, every stage writes byte-identical
//! outputs.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use ctxrank_core::data::{
    apply_normalization, build_history, fit_normalization, load_dataset, load_schema,
    save_dataset, save_schema, split_by_time, split_by_user, FeatureSchema, QueryRecord,
    UserHistory,
};
use ctxrank_core::eval::{baseline_rank, mean_ndcg, rank_by_scores};
use ctxrank_core::exp::{
    compare_results, evaluate_orders, gbdt_orders, run_experiment, ExperimentConfig, LabelSource,
    PartitionScheme, RunResult,
};
use ctxrank_core::gbdt::{
    flatten_records, gbdt_train, kmeans_assign, kmeans_fit, load_gbdt, save_gbdt,
    write_cluster_table,
};
use ctxrank_core::model::{export_context_rows, write_context_rows, AblationMask, CnrmSwitches};
use ctxrank_core::model::{ContextParams, Dims, EncoderParams};
use ctxrank_core::tensor::{load_checkpoint, save_checkpoint, ParameterStore};
use ctxrank_core::train::{init_model, score_with, train_dual, write_curve, ModelKind};
use ctxrank_core::{Error, Result};

/// Environment variable consulted for the config path when `--config` is
/// not given.
pub const CONFIG_ENV: &str = "CTXRANK_CONFIG";

const DATASET_FILE: &str = "dataset.jsonl";
const SCHEMA_FILE: &str = "schema.json";

fn ckpt_file(tag: &str) -> String {
    format!("model.{tag}.ckpt")
}

fn meta_file(tag: &str) -> String {
    format!("model.{tag}.meta.json")
}

fn curve_file(tag: &str) -> String {
    format!("curve.{tag}.tsv")
}

fn context_file(tag: &str) -> String {
    format!("context.{tag}.tsv")
}

fn clusters_file(tag: &str) -> String {
    format!("clusters.{tag}.tsv")
}

fn gbdt_file(context: bool) -> &'static str {
    if context {
        "gbdt.context.txt"
    } else {
        "gbdt.plain.txt"
    }
}

fn eval_file(system: &str) -> String {
    format!("eval.{system}.json")
}

/// Loaded config plus the artifact directory shared by all stages.
pub struct Env {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

impl Env {
    pub fn new(config: Option<PathBuf>, out: PathBuf) -> Result<Env> {
        let path = config
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
            .ok_or_else(|| {
                Error::Config(format!(
                    "no experiment config given (pass --config <file> or set {CONFIG_ENV})"
                ))
            })?;
        let cfg = ExperimentConfig::load(&path)?;
        Ok(Env { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate the synthetic click log and its feature schema.
    Simulate,
    /// Train a neural ranker and write its checkpoint, metadata and curve.
    Train(TrainArgs),
    /// Export per-query context vectors from a trained history model.
    ExportContext(TagArgs),
    /// Cluster exported context vectors (centroids fit on the train split).
    Cluster(TagArgs),
    /// Train a boosted-tree ranker on flat features.
    TrainGbdt(GbdtArgs),
    /// Rank the test split with one system and write per-query metrics.
    Eval(EvalArgs),
    /// Paired significance test between two eval result files.
    Compare(CompareArgs),
    /// Run the whole pipeline in-process and write the full report.
    Report,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Ranker kind; defaults to the config value.
    #[arg(long, value_parser = ["nrm", "cnrm"])]
    pub model: Option<String>,
    /// Joint examination model with inverse-propensity weighting.
    #[arg(long, value_parser = parse_on_off, value_name = "on|off")]
    pub unbiased: Option<bool>,
    /// History feature-group mask (full|fq|fd|fqd|fd+fqd).
    #[arg(long)]
    pub ablation: Option<String>,
    /// Learned position embeddings on history tokens.
    #[arg(long, value_parser = parse_on_off, value_name = "on|off")]
    pub posemb: Option<bool>,
    /// Replace the live query vector with a learned constant.
    #[arg(long, value_parser = parse_on_off, value_name = "on|off")]
    pub substitute_qvec: Option<bool>,
    /// Artifact tag; defaults to the model kind.
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Args)]
pub struct TagArgs {
    /// Tag of the trained model whose artifacts this stage reads or writes.
    #[arg(long, default_value = "cnrm")]
    pub tag: String,
}

#[derive(Args)]
pub struct GbdtArgs {
    /// Bundle clustered context features; defaults to the config value.
    #[arg(long, value_parser = parse_on_off, value_name = "on|off")]
    pub context: Option<bool>,
    /// Tag of the cluster table to bundle (from the cluster stage).
    #[arg(long, default_value = "cnrm")]
    pub tag: String,
}

#[derive(Args)]
pub struct EvalArgs {
    /// System to rank with: bm25f, recency, gbdt, gbdt-context, or the tag
    /// of a trained neural model.
    #[arg(long)]
    pub system: String,
    /// Comma-separated metric list, e.g. ndcg@3,ndcg@5,ndcg@10.
    #[arg(long, default_value = "ndcg@3,ndcg@5,ndcg@10")]
    pub metrics: String,
    /// Label side to report: obs (click-derived) or true (latent grades).
    #[arg(long, default_value = "obs", value_parser = ["obs", "true"])]
    pub labels: String,
    /// Tag of the cluster table used by gbdt-context.
    #[arg(long, default_value = "cnrm")]
    pub tag: String,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Eval result file for the candidate system.
    pub a: PathBuf,
    /// Eval result file for the reference system.
    pub b: PathBuf,
    /// Label side to test on.
    #[arg(long, default_value = "obs", value_parser = ["obs", "true"])]
    pub labels: String,
    /// Restrict to one cutoff; defaults to every cutoff both files share.
    #[arg(long)]
    pub cutoff: Option<usize>,
}

pub fn run(env: &Env, cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate => simulate(env),
        Cmd::Train(args) => train(env, args),
        Cmd::ExportContext(args) => export_context(env, args),
        Cmd::Cluster(args) => cluster(env, args),
        Cmd::TrainGbdt(args) => train_gbdt(env, args),
        Cmd::Eval(args) => eval(env, args),
        Cmd::Compare(args) => compare(env, args),
        Cmd::Report => report(env),
    }
}

fn simulate(env: &Env) -> Result<()> {
    let (records, schema, _) = ctxrank_core::sim::generate_log(&env.cfg.simulator)
        .map_err(|e| e.in_stage("simulate"))?;
    ensure_out(env)?;
    save_dataset(&records, &env.path(DATASET_FILE))?;
    save_schema(&schema, &env.path(SCHEMA_FILE))?;
    println!("simulated {} queries into {}", records.len(), env.path(DATASET_FILE).display());
    Ok(())
}

fn train(env: &Env, args: &TrainArgs) -> Result<()> {
    let mut cfg = env.cfg.clone();
    if let Some(kind) = &args.model {
        cfg.model.kind = kind.clone();
    }
    if let Some(v) = args.unbiased {
        cfg.trainer.unbiased = v;
    }
    if let Some(mask) = &args.ablation {
        cfg.model.ablation = mask.clone();
    }
    if let Some(v) = args.posemb {
        cfg.model.posemb = v;
    }
    if let Some(v) = args.substitute_qvec {
        cfg.model.substitute_qvec = v;
    }
    // Validate only what this stage uses: the cross-block rules (such as
    // gbdt.context requiring a history model) concern the full pipeline,
    // and training one model must not trip over them.
    cfg.trainer.validate()?;
    cfg.model.dims.validate()?;
    let kind = cfg.model.model_kind()?;
    let switches = cfg.model.switches()?;
    let tag = args.tag.clone().unwrap_or_else(|| kind.label().to_string());
    let p = prepare(env, &cfg)?;
    let model = train_dual(
        kind,
        cfg.model.dims,
        &switches,
        &p.schema,
        &p.train,
        &p.valid,
        &p.histories,
        &cfg.trainer,
    )
    .map_err(|e| e.in_stage("train"))?;
    ensure_out(env)?;
    save_checkpoint(&model.store, &env.path(&ckpt_file(&tag)))?;
    let meta = ModelMeta {
        kind: kind.label().to_string(),
        dims: cfg.model.dims,
        ablation: switches.mask.label().to_string(),
        posemb: switches.posemb,
        substitute_qvec: switches.substitute_qvec,
        unbiased: cfg.trainer.unbiased,
        seed: cfg.trainer.seed,
        best_val_ndcg5: model.best_val_ndcg5,
        skipped_queries: model.skipped_queries,
    };
    write_bytes(&env.path(&meta_file(&tag)), to_json(&meta)?.as_bytes())?;
    let mut curve = Vec::new();
    write_curve(&model.curve, &mut curve)?;
    write_bytes(&env.path(&curve_file(&tag)), &curve)?;
    println!(
        "trained {} as tag {tag}: best validation ndcg@5 {:.4} over {} steps ({} skipped queries)",
        kind.label(),
        model.best_val_ndcg5,
        model.curve.len(),
        model.skipped_queries
    );
    Ok(())
}

fn export_context(env: &Env, args: &TagArgs) -> Result<()> {
    let p = prepare(env, &env.cfg)?;
    let (_, model) = load_model(env, &args.tag, &p.schema)?;
    let ctx = model.ctx.as_ref().ok_or_else(|| {
        Error::Contract(format!("model {:?} has no history encoder to export from", args.tag))
    })?;
    let rows =
        export_context_rows(&model.enc, ctx, &model.store, &p.all, &p.histories, &model.switches)
            .map_err(|e| e.in_stage("export-context"))?;
    let mut buf = Vec::new();
    write_context_rows(&rows, &mut buf)?;
    let path = env.path(&context_file(&args.tag));
    write_bytes(&path, &buf)?;
    println!("exported {} context vectors to {}", rows.len(), path.display());
    Ok(())
}

fn cluster(env: &Env, args: &TagArgs) -> Result<()> {
    let p = prepare(env, &env.cfg)?;
    let rows = read_context_tsv(&env.path(&context_file(&args.tag)))?;
    let train_ids: HashSet<&str> = p.train.iter().map(|r| r.query_id.as_str()).collect();
    let train_vecs: Vec<Vec<f64>> = rows
        .iter()
        .filter(|(query_id, _)| train_ids.contains(query_id.as_str()))
        .map(|(_, c)| c.clone())
        .collect();
    let km = kmeans_fit(&train_vecs, env.cfg.gbdt.n_clusters, env.cfg.trainer.seed)
        .map_err(|e| e.in_stage("cluster"))?;
    let table: Vec<(String, usize)> =
        rows.iter().map(|(q, c)| (q.clone(), kmeans_assign(&km, c))).collect();
    let mut buf = Vec::new();
    write_cluster_table(&table, &mut buf)?;
    write_bytes(&env.path(&clusters_file(&args.tag)), &buf)?;
    println!(
        "assigned {} queries to {} clusters (fit on {} train vectors, inertia {:.4} after {} iterations)",
        table.len(),
        env.cfg.gbdt.n_clusters,
        train_vecs.len(),
        km.inertia_history.last().copied().unwrap_or(0.0),
        km.inertia_history.len()
    );
    Ok(())
}

fn train_gbdt(env: &Env, args: &GbdtArgs) -> Result<()> {
    let context = args.context.unwrap_or(env.cfg.gbdt.context);
    let p = prepare(env, &env.cfg)?;
    let clusters_map;
    let clusters = if context {
        clusters_map = read_cluster_table(&env.path(&clusters_file(&args.tag)))?;
        Some((&clusters_map, env.cfg.gbdt.n_clusters))
    } else {
        None
    };
    let (train_rows, layout) =
        flatten_records(&p.train, &p.schema, clusters).map_err(|e| e.in_stage("bundle"))?;
    let (valid_rows, _) =
        flatten_records(&p.valid, &p.schema, clusters).map_err(|e| e.in_stage("bundle"))?;
    let model = gbdt_train(&train_rows, &valid_rows, &layout.names, &env.cfg.gbdt.config())
        .map_err(|e| e.in_stage("gbdt"))?;
    let mut buf = Vec::new();
    save_gbdt(&model, &mut buf)?;
    write_bytes(&env.path(gbdt_file(context)), &buf)?;
    println!(
        "trained boosted ranker on {}: {} rounds, best round {}, {} trees kept, valid ndcg@5 {:.4}",
        if context { "bundled context features" } else { "plain features" },
        model.rounds_trained,
        model.best_round,
        model.trees.len(),
        model.valid_curve.get(model.best_round).copied().unwrap_or(f64::NAN),
    );
    Ok(())
}

fn eval(env: &Env, args: &EvalArgs) -> Result<()> {
    let cutoffs = parse_metrics(&args.metrics)?;
    let labels = parse_labels(&args.labels)?;
    let p = prepare(env, &env.cfg)?;
    let has_truth =
        p.test.iter().all(|r| r.candidates.iter().all(|c| c.label_true.is_some()));
    if labels == LabelSource::Truth && !has_truth {
        return Err(Error::Contract(
            "this dataset carries no true labels; evaluate with --labels obs".into(),
        ));
    }
    let orders = system_orders(env, args, &p)?;
    let result = evaluate_orders(
        &args.system,
        &orders,
        &p.test,
        &cutoffs,
        labels == LabelSource::Truth,
        &env.cfg.hash(),
        env.cfg.trainer.seed,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    write_bytes(&env.path(&eval_file(&args.system)), to_json(&result)?.as_bytes())?;
    let side = match labels {
        LabelSource::Observed => &result.observed,
        LabelSource::Truth => &result.truth,
    };
    for (k, per_query) in side {
        println!("{} ndcg@{k} [{}]: {:.4}", args.system, labels.label(), mean_ndcg(per_query));
    }
    Ok(())
}

/// Candidate orderings over the test split for one named system.
fn system_orders(env: &Env, args: &EvalArgs, p: &Prepared) -> Result<Vec<Vec<usize>>> {
    match args.system.as_str() {
        "bm25f" | "recency" => p
            .test
            .iter()
            .map(|r| baseline_rank(r, &args.system, &p.schema))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("evaluate")),
        "gbdt" | "gbdt-context" => {
            let context = args.system == "gbdt-context";
            let clusters_map;
            let clusters = if context {
                clusters_map = read_cluster_table(&env.path(&clusters_file(&args.tag)))?;
                Some((&clusters_map, env.cfg.gbdt.n_clusters))
            } else {
                None
            };
            let path = env.path(gbdt_file(context));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let model = load_gbdt(&mut bytes.as_slice())?;
            let (rows, _) =
                flatten_records(&p.test, &p.schema, clusters).map_err(|e| e.in_stage("bundle"))?;
            Ok(gbdt_orders(&model, &rows, &p.test))
        }
        tag => {
            let (_, model) = load_model(env, tag, &p.schema)?;
            p.test
                .iter()
                .map(|r| {
                    let scores = score_with(
                        model.kind,
                        &model.enc,
                        model.ctx.as_ref(),
                        &model.switches,
                        &model.store,
                        r,
                        &p.histories,
                    )?;
                    Ok(rank_by_scores(&scores))
                })
                .collect::<Result<_>>()
                .map_err(|e: Error| e.in_stage("evaluate"))
        }
    }
}

fn compare(env: &Env, args: &CompareArgs) -> Result<()> {
    let ra = read_run_result(&args.a)?;
    let rb = read_run_result(&args.b)?;
    let labels = parse_labels(&args.labels)?;
    let cutoffs_of = |r: &RunResult| -> Vec<usize> {
        match labels {
            LabelSource::Observed => r.observed.keys().copied().collect(),
            LabelSource::Truth => r.truth.keys().copied().collect(),
        }
    };
    let cutoffs: Vec<usize> = match args.cutoff {
        Some(k) => vec![k],
        None => {
            let in_b = cutoffs_of(&rb);
            cutoffs_of(&ra).into_iter().filter(|k| in_b.contains(k)).collect()
        }
    };
    if cutoffs.is_empty() {
        return Err(Error::Contract(format!(
            "no shared cutoffs between {} and {} on {} labels",
            args.a.display(),
            args.b.display(),
            labels.label()
        )));
    }
    let results = [ra.clone(), rb.clone()];
    let mut comparisons = Vec::new();
    for &k in &cutoffs {
        let test = compare_results(&results, &ra.system, &rb.system, k, labels)
            .map_err(|e| e.in_stage("compare"))?;
        match test {
            Some(c) => {
                println!(
                    "{} vs {} @{k} [{}]: {:+.2}%  t={:.3}  p={:.4}{}{}",
                    c.system,
                    c.reference,
                    labels.label(),
                    100.0 * c.mean_rel_improvement,
                    c.t,
                    c.p,
                    if c.significant { "  *" } else { "" },
                    if c.degenerate { "  (degenerate)" } else { "" },
                );
                comparisons.push(c);
            }
            None => println!(
                "{} vs {} @{k} [{}]: skipped (fewer than two queries with the metric defined on both sides)",
                ra.system,
                rb.system,
                labels.label()
            ),
        }
    }
    let name = format!("compare.{}.vs.{}.json", ra.system, rb.system);
    write_bytes(&env.path(&name), to_json(&comparisons)?.as_bytes())?;
    Ok(())
}

fn report(env: &Env) -> Result<()> {
    let rep = run_experiment(&env.cfg)?;
    write_bytes(&env.path("report.json"), rep.to_json().as_bytes())?;
    let text = rep.render_text();
    write_bytes(&env.path("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

/// Dataset plus everything re-derived from it: partitions, normalization,
/// and per-user histories keyed by query id.
struct Prepared {
    schema: FeatureSchema,
    train: Vec<QueryRecord>,
    valid: Vec<QueryRecord>,
    test: Vec<QueryRecord>,
    all: Vec<QueryRecord>,
    histories: HashMap<String, UserHistory>,
}

fn prepare(env: &Env, cfg: &ExperimentConfig) -> Result<Prepared> {
    let mut schema = load_schema(&env.path(SCHEMA_FILE))?;
    let records = load_dataset(&env.path(DATASET_FILE), &schema)?;
    let (mut train, mut valid, mut test) = match cfg.partition.scheme {
        PartitionScheme::Time => split_by_time(records),
        PartitionScheme::User => split_by_user(records, cfg.simulator.seed),
    };
    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(Error::Contract("a partition is empty at this dataset size".into())
            .in_stage("partition"));
    }
    fit_normalization(&train, &mut schema).map_err(|e| e.in_stage("normalize"))?;
    apply_normalization(&mut train, &schema).map_err(|e| e.in_stage("normalize"))?;
    apply_normalization(&mut valid, &schema).map_err(|e| e.in_stage("normalize"))?;
    apply_normalization(&mut test, &schema).map_err(|e| e.in_stage("normalize"))?;
    let all: Vec<QueryRecord> =
        train.iter().chain(valid.iter()).chain(test.iter()).cloned().collect();
    let histories = build_history(&all, cfg.model.dims.k);
    Ok(Prepared { schema, train, valid, test, all, histories })
}

/// Checkpoint sidecar describing how to rebuild an identically-shaped
/// parameter store before loading the saved values into it.
#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: String,
    dims: Dims,
    ablation: String,
    posemb: bool,
    substitute_qvec: bool,
    unbiased: bool,
    seed: u64,
    best_val_ndcg5: f64,
    skipped_queries: usize,
}

struct LoadedModel {
    kind: ModelKind,
    switches: CnrmSwitches,
    store: ParameterStore,
    enc: EncoderParams,
    ctx: Option<ContextParams>,
}

fn load_model(env: &Env, tag: &str, schema: &FeatureSchema) -> Result<(ModelMeta, LoadedModel)> {
    let meta_path = env.path(&meta_file(tag));
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: format!("{}: {e}", meta_path.display()),
    })?;
    let kind = match meta.kind.as_str() {
        "nrm" => ModelKind::Nrm,
        "cnrm" => ModelKind::Cnrm,
        other => {
            return Err(Error::Checkpoint(format!(
                "unknown model kind {other:?} in {}",
                meta_path.display()
            )))
        }
    };
    let switches = CnrmSwitches {
        mask: AblationMask::parse(&meta.ablation)?,
        posemb: meta.posemb,
        substitute_qvec: meta.substitute_qvec,
    };
    let (mut store, enc, ctx, _) = init_model(kind, meta.dims, schema, meta.unbiased, meta.seed)?;
    let values = load_checkpoint(&env.path(&ckpt_file(tag)))?;
    store.load_values(&values)?;
    Ok((meta, LoadedModel { kind, switches, store, enc, ctx }))
}

fn ensure_out(env: &Env) -> Result<()> {
    fs::create_dir_all(&env.out).map_err(|e| Error::io(&env.out, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Contract(format!("json export failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Context vectors written by the export stage: query id, user id, then
/// the vector components.
fn read_context_tsv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split('\t');
        let query_id = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Parse { line: i + 1, msg: "missing query id".into() })?;
        parts
            .next()
            .ok_or_else(|| Error::Parse { line: i + 1, msg: "missing user id".into() })?;
        let c: Vec<f64> = parts
            .map(|v| {
                v.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("bad vector component {v:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if c.is_empty() {
            return Err(Error::Parse { line: i + 1, msg: "empty context vector".into() });
        }
        rows.push((query_id.to_string(), c));
    }
    if rows.is_empty() {
        return Err(Error::Contract(format!("no context vectors in {}", path.display())));
    }
    Ok(rows)
}

fn read_cluster_table(path: &Path) -> Result<HashMap<String, usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "query_id\tcluster_id" {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("bad cluster table header {line:?}"),
                });
            }
            continue;
        }
        let (q, c) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected two columns".into() })?;
        let c = c.parse::<usize>().map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("bad cluster id {c:?}: {e}"),
        })?;
        map.insert(q.to_string(), c);
    }
    if map.is_empty() {
        return Err(Error::Contract(format!("no cluster assignments in {}", path.display())));
    }
    Ok(map)
}

fn read_run_result(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: e.line(), msg: format!("{}: {e}", path.display()) })
}

fn parse_on_off(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on|off, got {other:?}")),
    }
}

fn parse_metrics(spec: &str) -> Result<Vec<usize>> {
    let mut cutoffs = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let k = part
            .strip_prefix("ndcg@")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::Config(format!("bad metric {part:?} (expected ndcg@<k>)")))?;
        cutoffs.push(k);
    }
    cutoffs.sort_unstable();
    cutoffs.dedup();
    Ok(cutoffs)
}

fn parse_labels(s: &str) -> Result<LabelSource> {
    match s {
        "obs" => Ok(LabelSource::Observed),
        "true" => Ok(LabelSource::Truth),
        other => Err(Error::Config(format!("bad label source {other:?} (expected obs|true)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_lists_parse_sorted_and_deduplicated() {
        assert_eq!(parse_metrics("ndcg@3,ndcg@5,ndcg@10").unwrap(), vec![3, 5, 10]);
        assert_eq!(parse_metrics("ndcg@10, ndcg@3, ndcg@3").unwrap(), vec![3, 10]);
        assert!(matches!(parse_metrics("ndcg@0"), Err(Error::Config(_))));
        assert!(matches!(parse_metrics("map@5"), Err(Error::Config(_))));
        assert!(matches!(parse_metrics("ndcg@"), Err(Error::Config(_))));
    }

    #[test]
    fn switch_values_parse_as_booleans() {
        assert_eq!(parse_on_off("on"), Ok(true));
        assert_eq!(parse_on_off("off"), Ok(false));
        assert!(parse_on_off("yes").is_err());
    }

    #[test]
    fn label_sides_parse() {
        assert_eq!(parse_labels("obs").unwrap(), LabelSource::Observed);
        assert_eq!(parse_labels("true").unwrap(), LabelSource::Truth);
        assert!(matches!(parse_labels("latent"), Err(Error::Config(_))));
    }

    #[test]
    fn context_rows_roundtrip_through_the_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("context.tsv");
        let rows = vec![
            ctxrank_core::model::ContextVector {
                query_id: "q1".into(),
                user_id: "u1".into(),
                c: vec![0.25, -1.5, 3e-4],
                cluster_id: None,
            },
            ctxrank_core::model::ContextVector {
                query_id: "q2".into(),
                user_id: "u2".into(),
                c: vec![1e9, 0.0, -2.0],
                cluster_id: None,
            },
        ];
        let mut buf = Vec::new();
        write_context_rows(&rows, &mut buf).unwrap();
        fs::write(&path, &buf).unwrap();

        let back = read_context_tsv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "q1");
        assert_eq!(back[1].0, "q2");
        for (got, want) in back[0].1.iter().zip(&rows[0].c) {
            assert!((got - want).abs() <= 1e-4 * want.abs().max(1.0));
        }
    }

    #[test]
    fn cluster_tables_roundtrip_and_reject_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clusters.tsv");
        let table = vec![("q1".to_string(), 3usize), ("q2".to_string(), 0)];
        let mut buf = Vec::new();
        write_cluster_table(&table, &mut buf).unwrap();
        fs::write(&path, &buf).unwrap();

        let map = read_cluster_table(&path).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["q1"], 3);
        assert_eq!(map["q2"], 0);

        fs::write(&path, "nope\tnope\nq1\t3\n").unwrap();
        assert!(matches!(read_cluster_table(&path), Err(Error::Parse { line: 1, .. })));

        fs::write(&path, "query_id\tcluster_id\nq1\tthree\n").unwrap();
        assert!(matches!(read_cluster_table(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn a_missing_config_is_a_config_error() {
        let err = Env::new(None, PathBuf::from("run"));
        // The test environment may or may not carry the variable; only
        // assert when it is absent.
        if std::env::var_os(CONFIG_ENV).is_none() {
            assert!(matches!(err, Err(Error::Config(_))));
        }
    }
}
