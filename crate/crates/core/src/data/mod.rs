//! Dataset schema, records, normalization, partitioning, and history building.
//!
//! Records are newline-delimited JSON objects; the schema travels in a
//! separate JSON file and pins feature-group dimensions plus (once fitted)
//! the normalization statistics.

mod history;
mod io;
mod normalize;
mod split;

pub use history::{build_history, HistoryEntry, PositiveDoc, UserHistory};
pub use io::{load_dataset, load_schema, save_dataset, save_schema};
pub use normalize::{apply_normalization, fit_normalization, FeatStat};
pub use split::{split_by_time, split_by_user};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on candidates per query; also bounds the position tables.
pub const MAX_CANDIDATES: usize = 50;

/// Declares the cardinalities/dimensions of the three feature groups, the
/// names of the continuous columns (baselines and feature bundling select
/// columns by name), and the frozen normalization statistics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureSchema {
    /// Vocabulary sizes of the discrete query-level features.
    pub q_disc_cards: Vec<usize>,
    /// Vocabulary sizes of the discrete document-level features.
    pub d_disc_cards: Vec<usize>,
    pub q_cont_names: Vec<String>,
    pub d_cont_names: Vec<String>,
    pub qd_cont_names: Vec<String>,
    /// Per-continuous-feature mean/std over `q_cont ++ d_cont ++ qd_cont`,
    /// fitted on the training partition only.
    #[serde(default)]
    pub norm_stats: Option<Vec<FeatStat>>,
}

impl FeatureSchema {
    pub fn q_cont_dim(&self) -> usize {
        self.q_cont_names.len()
    }

    pub fn d_cont_dim(&self) -> usize {
        self.d_cont_names.len()
    }

    pub fn qd_cont_dim(&self) -> usize {
        self.qd_cont_names.len()
    }

    pub fn cont_dim(&self) -> usize {
        self.q_cont_dim() + self.d_cont_dim() + self.qd_cont_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_disc_cards.iter().chain(&self.d_disc_cards).any(|&c| c < 2) {
            return Err(Error::Schema("discrete feature cardinalities must be >= 2".into()));
        }
        if self.q_cont_dim() == 0 || self.d_cont_dim() == 0 || self.qd_cont_dim() == 0 {
            return Err(Error::Schema("every continuous feature group needs >= 1 feature".into()));
        }
        if let Some(stats) = &self.norm_stats {
            if stats.len() != self.cont_dim() {
                return Err(Error::Schema(format!(
                    "norm_stats length {} != total continuous features {}",
                    stats.len(),
                    self.cont_dim()
                )));
            }
        }
        Ok(())
    }

    /// Locate a continuous feature by name across the three groups.
    pub fn continuous_column(&self, name: &str) -> Result<ContColumn> {
        if let Some(i) = self.q_cont_names.iter().position(|n| n == name) {
            return Ok(ContColumn::Query(i));
        }
        if let Some(i) = self.d_cont_names.iter().position(|n| n == name) {
            return Ok(ContColumn::Doc(i));
        }
        if let Some(i) = self.qd_cont_names.iter().position(|n| n == name) {
            return Ok(ContColumn::QueryDoc(i));
        }
        Err(Error::Schema(format!("no continuous feature named {name:?} in schema")))
    }
}

/// Address of a continuous feature within a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContColumn {
    Query(usize),
    Doc(usize),
    QueryDoc(usize),
}

impl ContColumn {
    /// Feature value for one candidate of a record.
    pub fn value(self, record: &QueryRecord, cand: &CandidateDoc) -> f64 {
        match self {
            ContColumn::Query(i) => record.q_cont[i],
            ContColumn::Doc(i) => cand.d_cont[i],
            ContColumn::QueryDoc(i) => cand.qd_cont[i],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateDoc {
    pub doc_id: String,
    pub d_disc: Vec<usize>,
    pub d_cont: Vec<f64>,
    pub qd_cont: Vec<f64>,
    /// 1-based position in the relevance panel.
    pub pos_r: usize,
    /// 1-based position in the time panel.
    pub pos_t: usize,
    pub label_obs: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_true: Option<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub user_id: String,
    /// Seconds; only ordering matters.
    pub timestamp: i64,
    pub q_disc: Vec<usize>,
    pub q_cont: Vec<f64>,
    pub candidates: Vec<CandidateDoc>,
}

impl QueryRecord {
    /// Check every structural invariant against the schema.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.candidates.is_empty() || self.candidates.len() > MAX_CANDIDATES {
            return Err(Error::Schema(format!(
                "query {} has {} candidates (must be 1..={MAX_CANDIDATES})",
                self.query_id,
                self.candidates.len()
            )));
        }
        check_disc(&self.q_disc, &schema.q_disc_cards, &self.query_id, "q_disc")?;
        if self.q_cont.len() != schema.q_cont_dim() {
            return Err(Error::Schema(format!(
                "query {}: q_cont has {} values, schema expects {}",
                self.query_id,
                self.q_cont.len(),
                schema.q_cont_dim()
            )));
        }
        let mut seen_r = vec![false; MAX_CANDIDATES + 1];
        let mut seen_t = vec![false; MAX_CANDIDATES + 1];
        for c in &self.candidates {
            check_disc(&c.d_disc, &schema.d_disc_cards, &self.query_id, "d_disc")?;
            if c.d_cont.len() != schema.d_cont_dim() || c.qd_cont.len() != schema.qd_cont_dim() {
                return Err(Error::Schema(format!(
                    "query {} doc {}: continuous feature lengths do not match schema",
                    self.query_id, c.doc_id
                )));
            }
            if c.label_obs > 4 || c.label_true.is_some_and(|g| g > 4) {
                return Err(Error::Schema(format!(
                    "query {} doc {}: grades must be in 0..=4",
                    self.query_id, c.doc_id
                )));
            }
            for (pos, seen, panel) in
                [(c.pos_r, &mut seen_r, "pos_r"), (c.pos_t, &mut seen_t, "pos_t")]
            {
                if pos == 0 || pos > MAX_CANDIDATES {
                    return Err(Error::Schema(format!(
                        "query {} doc {}: {panel}={pos} outside 1..={MAX_CANDIDATES}",
                        self.query_id, c.doc_id
                    )));
                }
                if seen[pos] {
                    return Err(Error::Schema(format!(
                        "query {}: duplicate {panel}={pos}",
                        self.query_id
                    )));
                }
                seen[pos] = true;
            }
        }
        Ok(())
    }

    /// Indices of candidates with an observed positive label.
    pub fn observed_positives(&self) -> Vec<usize> {
        (0..self.candidates.len()).filter(|&i| self.candidates[i].label_obs > 0).collect()
    }
}

fn check_disc(ids: &[usize], cards: &[usize], query_id: &str, group: &str) -> Result<()> {
    if ids.len() != cards.len() {
        return Err(Error::Schema(format!(
            "query {query_id}: {group} has {} ids, schema expects {}",
            ids.len(),
            cards.len()
        )));
    }
    for (i, (&id, &card)) in ids.iter().zip(cards).enumerate() {
        if id >= card {
            return Err(Error::Schema(format!(
                "query {query_id}: {group}[{i}]={id} exceeds vocabulary size {card}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) fn tiny_schema() -> FeatureSchema {
    FeatureSchema {
        q_disc_cards: vec![3, 2],
        d_disc_cards: vec![2, 2],
        q_cont_names: vec!["q_len".into(), "hour".into()],
        d_cont_names: vec!["recency".into(), "email_length".into()],
        qd_cont_names: vec!["bm25f".into(), "subject_match".into(), "to_cc_match".into()],
        norm_stats: None,
    }
}

#[cfg(test)]
pub(crate) fn tiny_record(query_id: &str, user_id: &str, timestamp: i64) -> QueryRecord {
    QueryRecord {
        query_id: query_id.into(),
        user_id: user_id.into(),
        timestamp,
        q_disc: vec![1, 0],
        q_cont: vec![3.0, 14.0],
        candidates: vec![
            CandidateDoc {
                doc_id: format!("{query_id}-d0"),
                d_disc: vec![0, 1],
                d_cont: vec![0.9, 120.0],
                qd_cont: vec![0.7, 1.0, 0.0],
                pos_r: 1,
                pos_t: 2,
                label_obs: 2,
                label_true: Some(2),
            },
            CandidateDoc {
                doc_id: format!("{query_id}-d1"),
                d_disc: vec![1, 0],
                d_cont: vec![0.2, 40.0],
                qd_cont: vec![0.1, 0.0, 0.0],
                pos_r: 2,
                pos_t: 1,
                label_obs: 0,
                label_true: Some(0),
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_validation_catches_bad_cardinalities_and_stats() {
        let mut s = tiny_schema();
        s.validate().unwrap();
        s.q_disc_cards[0] = 1;
        assert!(s.validate().is_err());
        let mut s = tiny_schema();
        s.norm_stats = Some(vec![FeatStat { mean: 0.0, std: 1.0 }; 3]);
        assert!(s.validate().is_err());
        s.norm_stats = Some(vec![FeatStat { mean: 0.0, std: 1.0 }; 7]);
        s.validate().unwrap();
    }

    #[test]
    fn record_validation_enforces_invariants() {
        let schema = tiny_schema();
        let good = tiny_record("q1", "u1", 100);
        good.validate(&schema).unwrap();

        let mut too_many = good.clone();
        let c = too_many.candidates[0].clone();
        for i in 0..50 {
            let mut c = c.clone();
            c.pos_r = i + 3;
            c.pos_t = i + 3;
            too_many.candidates.push(c);
        }
        assert!(too_many.validate(&schema).is_err());

        let mut dup_pos = good.clone();
        dup_pos.candidates[1].pos_r = 1;
        assert!(dup_pos.validate(&schema).is_err());

        let mut bad_id = good.clone();
        bad_id.q_disc[0] = 3;
        assert!(bad_id.validate(&schema).is_err());

        let mut bad_grade = good.clone();
        bad_grade.candidates[0].label_obs = 5;
        assert!(bad_grade.validate(&schema).is_err());
    }

    #[test]
    fn continuous_column_lookup_spans_groups() {
        let schema = tiny_schema();
        let rec = tiny_record("q1", "u1", 1);
        let col = schema.continuous_column("bm25f").unwrap();
        assert_eq!(col.value(&rec, &rec.candidates[0]), 0.7);
        let col = schema.continuous_column("recency").unwrap();
        assert_eq!(col.value(&rec, &rec.candidates[1]), 0.2);
        let col = schema.continuous_column("hour").unwrap();
        assert_eq!(col.value(&rec, &rec.candidates[0]), 14.0);
        assert!(schema.continuous_column("nope").is_err());
    }
}
