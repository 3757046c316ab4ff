//! Experiment configuration: one TOML file describing the simulator, the
//! partition scheme, the model under test, the trainer, the boosted-tree
//! stage, and the metrics to report.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gbdt::GbdtConfig;
use crate::model::{AblationMask, CnrmSwitches, Dims};
use crate::sim::SimConfig;
use crate::train::{ModelKind, TrainConfig};

/// How queries are routed into train/valid/test: chronologically, or by
/// disjoint user sets. Exactly one scheme per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    Time,
    User,
}

impl PartitionScheme {
    pub fn label(self) -> &'static str {
        match self {
            PartitionScheme::Time => "time",
            PartitionScheme::User => "user",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionBlock {
    pub scheme: PartitionScheme,
}

impl Default for PartitionBlock {
    fn default() -> Self {
        PartitionBlock { scheme: PartitionScheme::Time }
    }
}

/// Which ranker to train and its architecture/context switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    /// `nrm` or `cnrm`.
    pub kind: String,
    pub dims: Dims,
    /// Feature groups entering the history summary:
    /// `full|fq|fd|fqd|fd+fqd`.
    pub ablation: String,
    pub posemb: bool,
    pub substitute_qvec: bool,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            kind: "cnrm".into(),
            dims: Dims::default(),
            ablation: "full".into(),
            posemb: true,
            substitute_qvec: false,
        }
    }
}

impl ModelBlock {
    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.kind)
    }

    pub fn switches(&self) -> Result<CnrmSwitches> {
        Ok(CnrmSwitches {
            mask: AblationMask::parse(&self.ablation)?,
            posemb: self.posemb,
            substitute_qvec: self.substitute_qvec,
        })
    }
}

/// The boosted-tree stage. When `context` is on, the pipeline clusters the
/// trained context vectors and trains a second, bundle-augmented model next
/// to the plain one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtBlock {
    pub enabled: bool,
    pub context: bool,
    pub n_clusters: usize,
    pub max_trees: usize,
    pub max_leaves: usize,
    pub shrinkage: f64,
    pub early_stop_rounds: usize,
    pub ndcg_truncation: usize,
}

impl Default for GbdtBlock {
    fn default() -> Self {
        let g = GbdtConfig::default();
        GbdtBlock {
            enabled: false,
            context: true,
            n_clusters: 10,
            max_trees: g.max_trees,
            max_leaves: g.max_leaves,
            shrinkage: g.shrinkage,
            early_stop_rounds: g.early_stop_rounds,
            ndcg_truncation: g.ndcg_truncation,
        }
    }
}

impl GbdtBlock {
    pub fn config(&self) -> GbdtConfig {
        GbdtConfig {
            max_trees: self.max_trees,
            max_leaves: self.max_leaves,
            shrinkage: self.shrinkage,
            early_stop_rounds: self.early_stop_rounds,
            ndcg_truncation: self.ndcg_truncation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsBlock {
    /// NDCG cutoffs to report, e.g. `[3, 5, 10]`.
    pub cutoffs: Vec<usize>,
}

impl Default for MetricsBlock {
    fn default() -> Self {
        MetricsBlock { cutoffs: vec![3, 5, 10] }
    }
}

/// Everything one experiment run needs; every field has a default, so a
/// config file only spells out what it changes.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub simulator: SimConfig,
    pub partition: PartitionBlock,
    pub model: ModelBlock,
    pub trainer: TrainConfig,
    pub gbdt: GbdtBlock,
    pub metrics: MetricsBlock,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.simulator.validate()?;
        self.trainer.validate()?;
        self.model.dims.validate()?;
        let kind = self.model.model_kind()?;
        self.model.switches()?;
        if self.gbdt.enabled {
            self.gbdt.config().validate()?;
            if self.gbdt.n_clusters < 2 {
                return Err(Error::Config("gbdt.n_clusters must be >= 2".into()));
            }
            if self.gbdt.context && kind != ModelKind::Cnrm {
                return Err(Error::Config(
                    "gbdt.context needs context vectors, so model.kind must be \"cnrm\"".into(),
                ));
            }
        }
        if self.metrics.cutoffs.is_empty() || self.metrics.cutoffs.iter().any(|&k| k == 0) {
            return Err(Error::Config("metrics.cutoffs must list cutoffs >= 1".into()));
        }
        Ok(())
    }

    /// Canonical serialized form; hashing it gives run provenance.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn an_empty_file_yields_the_default_config() {
        let cfg = ExperimentConfig::from_toml("").expect("defaults are valid");
        assert_eq!(cfg.partition.scheme, PartitionScheme::Time);
        assert_eq!(cfg.model.kind, "cnrm");
        assert_eq!(cfg.trainer.batch_size, 128);
        assert!(!cfg.gbdt.enabled);
        assert_eq!(cfg.metrics.cutoffs, vec![3, 5, 10]);
    }

    #[test]
    fn partial_blocks_override_only_their_fields() {
        let text = r#"
[partition]
scheme = "user"

[model]
kind = "nrm"

[model.dims]
m = 16
heads = 2

[trainer]
epochs = 3
"#;
        let cfg = ExperimentConfig::from_toml(text).expect("parse");
        assert_eq!(cfg.partition.scheme, PartitionScheme::User);
        assert_eq!(cfg.model.kind, "nrm");
        assert_eq!(cfg.model.dims.m, 16);
        assert_eq!(cfg.model.dims.e, Dims::default().e, "untouched dim keeps default");
        assert_eq!(cfg.trainer.epochs, 3);
        assert_eq!(cfg.trainer.lr, TrainConfig::default().lr);
    }

    #[test]
    fn unknown_keys_and_bad_labels_are_rejected() {
        match ExperimentConfig::from_toml("[model]\nkindd = \"nrm\"\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("kindd"), "{msg}"),
            other => panic!("unknown key should fail, got {other:?}"),
        }
        match ExperimentConfig::from_toml("[partition]\nscheme = \"both\"\n") {
            Err(Error::Config(_)) => {}
            other => panic!("bad scheme should fail, got {other:?}"),
        }
        match ExperimentConfig::from_toml("[model]\nablation = \"fz\"\n") {
            Err(Error::Config(msg)) => assert!(msg.contains("fz"), "{msg}"),
            other => panic!("bad ablation should fail, got {other:?}"),
        }
    }

    #[test]
    fn context_bundling_requires_the_context_model() {
        let text = "[model]\nkind = \"nrm\"\n[gbdt]\nenabled = true\ncontext = true\n";
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("cnrm"), "{msg}"),
            other => panic!("nrm + context bundling should fail, got {other:?}"),
        }
        let plain = "[model]\nkind = \"nrm\"\n[gbdt]\nenabled = true\ncontext = false\n";
        ExperimentConfig::from_toml(plain).expect("plain gbdt under nrm is fine");
    }

    #[test]
    fn the_hash_tracks_content_not_formatting() {
        let a = ExperimentConfig::from_toml("[trainer]\nepochs = 10\n").unwrap();
        let b = ExperimentConfig::from_toml("\n# comment\n[trainer]\n\nepochs   =  10\n").unwrap();
        let c = ExperimentConfig::from_toml("[trainer]\nepochs = 11\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
        // Reparsing the canonical form is a fixed point.
        let re = ExperimentConfig::from_toml(&a.canonical_toml()).unwrap();
        assert_eq!(re.hash(), a.hash());
    }
}
