//! End-to-end exercises of the staged command-line pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const CONFIG: &str = r#"
[simulator]
n_users = 10
queries_per_user = [11, 12]
candidates_mean = 10.0
candidates_min = 6
candidates_max = 14
seed = 9

[model]
kind = "cnrm"

[model.dims]
e = 3
m = 4
k = 4
layers = 1
heads = 2
ff = 8

[trainer]
batch_size = 8
epochs = 2
warmup_steps = 4
seed = 9

[gbdt]
enabled = true
context = true
n_clusters = 3
max_trees = 8
max_leaves = 6

[metrics]
cutoffs = [3, 5]
"#;

struct Workbench {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Workbench {
    fn new() -> Workbench {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("exp.toml");
        let out = dir.path().join("run");
        fs::write(&config, CONFIG).unwrap();
        Workbench { _dir: dir, config, out }
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctxrank"));
        cmd.arg("--config").arg(&self.config).arg("--out").arg(&self.out).args(args);
        cmd
    }

    fn ok(&self, args: &[&str]) -> String {
        let output = self.cmd(args).output().unwrap();
        assert!(
            output.status.success(),
            "{args:?} failed:\n{}",
            String::from_utf8_lossy(&output.stderr)
        );
        String::from_utf8(output.stdout).unwrap()
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn bytes(&self, name: &str) -> Vec<u8> {
        fs::read(self.artifact(name)).unwrap()
    }
}

#[test]
fn the_staged_pipeline_runs_end_to_end_and_reruns_byte_identically() {
    let wb = Workbench::new();

    let stages: &[&[&str]] = &[
        &["simulate"],
        &["train", "--model", "cnrm"],
        &["train", "--model", "nrm"],
        &["export-context"],
        &["cluster"],
        &["train-gbdt", "--context", "off"],
        &["train-gbdt", "--context", "on"],
        &["eval", "--system", "cnrm", "--labels", "true"],
        &["eval", "--system", "nrm", "--labels", "true"],
        &["eval", "--system", "bm25f"],
        &["eval", "--system", "gbdt-context", "--metrics", "ndcg@5"],
    ];
    for stage in stages {
        wb.ok(stage);
    }

    for name in [
        "dataset.jsonl",
        "schema.json",
        "model.cnrm.ckpt",
        "model.cnrm.meta.json",
        "curve.cnrm.tsv",
        "model.nrm.ckpt",
        "context.cnrm.tsv",
        "clusters.cnrm.tsv",
        "gbdt.plain.txt",
        "gbdt.context.txt",
        "eval.cnrm.json",
        "eval.bm25f.json",
        "eval.gbdt-context.json",
    ] {
        assert!(wb.artifact(name).exists(), "missing artifact {name}");
    }

    let stdout = wb.ok(&[
        "compare",
        wb.artifact("eval.cnrm.json").to_str().unwrap(),
        wb.artifact("eval.nrm.json").to_str().unwrap(),
        "--labels",
        "true",
    ]);
    assert!(stdout.contains("cnrm vs nrm @3 [true]"), "unexpected compare output:\n{stdout}");
    assert!(stdout.contains("cnrm vs nrm @5 [true]"), "unexpected compare output:\n{stdout}");
    assert!(wb.artifact("compare.cnrm.vs.nrm.json").exists());

    // Rerunning every stage with the same config and seed must reproduce
    // each artifact byte for byte.
    let snapshot: Vec<(&str, Vec<u8>)> = [
        "dataset.jsonl",
        "model.cnrm.ckpt",
        "curve.cnrm.tsv",
        "context.cnrm.tsv",
        "clusters.cnrm.tsv",
        "gbdt.context.txt",
        "eval.cnrm.json",
    ]
    .into_iter()
    .map(|name| (name, wb.bytes(name)))
    .collect();

    for stage in stages {
        wb.ok(stage);
    }
    for (name, before) in &snapshot {
        assert_eq!(&wb.bytes(name), before, "{name} changed across identical reruns");
    }
}

#[test]
fn a_missing_config_fails_with_a_pointer_to_the_env_var() {
    let output = Command::new(env!("CARGO_BIN_EXE_ctxrank"))
        .env_remove("CTXRANK_CONFIG")
        .arg("simulate")
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("CTXRANK_CONFIG"), "unhelpful error:\n{stderr}");
}

#[test]
fn the_env_var_supplies_the_config_path() {
    let wb = Workbench::new();
    let output = Command::new(env!("CARGO_BIN_EXE_ctxrank"))
        .env("CTXRANK_CONFIG", &wb.config)
        .arg("--out")
        .arg(&wb.out)
        .arg("simulate")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(wb.artifact("dataset.jsonl").exists());
}

#[test]
fn evaluating_an_untrained_model_reports_the_missing_artifact() {
    let wb = Workbench::new();
    wb.ok(&["simulate"]);
    let output = wb.cmd(&["eval", "--system", "cnrm"]).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("model.cnrm.meta.json"), "unhelpful error:\n{stderr}");
}

#[test]
fn bad_switch_values_are_rejected_by_the_parser() {
    let wb = Workbench::new();
    let output = wb.cmd(&["train", "--unbiased", "maybe"]).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("on|off"), "unhelpful error:\n{stderr}");
}

fn read_tsv_column(path: &Path, column: usize) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').nth(column).unwrap().to_string())
        .collect()
}

#[test]
fn context_vectors_cover_every_simulated_query() {
    let wb = Workbench::new();
    wb.ok(&["simulate"]);
    wb.ok(&["train", "--model", "cnrm"]);
    wb.ok(&["export-context"]);
    wb.ok(&["cluster"]);

    let n_queries = fs::read_to_string(wb.artifact("dataset.jsonl")).unwrap().lines().count();
    let context_ids = read_tsv_column(&wb.artifact("context.cnrm.tsv"), 0);
    assert_eq!(context_ids.len(), n_queries);

    let cluster_ids = read_tsv_column(&wb.artifact("clusters.cnrm.tsv"), 0);
    assert_eq!(cluster_ids.len(), n_queries + 1, "header plus one row per query");
    for cid in read_tsv_column(&wb.artifact("clusters.cnrm.tsv"), 1).iter().skip(1) {
        let cid: usize = cid.parse().unwrap();
        assert!(cid < 3, "cluster id {cid} out of range");
    }
}
