//! Per-query search history: the user's k most recent earlier queries that
//! received at least one positive label, with their positive documents.

use std::collections::HashMap;

use crate::data::QueryRecord;

/// Feature triple of one positively-labeled document from a past query.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveDoc {
    pub d_disc: Vec<usize>,
    pub d_cont: Vec<f64>,
    pub qd_cont: Vec<f64>,
}

/// One past query together with its positive documents (never empty).
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub q_disc: Vec<usize>,
    pub q_cont: Vec<f64>,
    pub positives: Vec<PositiveDoc>,
}

/// Up to k entries ordered oldest first; empty for a user's first queries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserHistory {
    pub entries: Vec<HistoryEntry>,
}

impl UserHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Build the history of every query in `records` from the same record set.
///
/// Entries are strictly older than the query (by timestamp), carry at least
/// one observed positive, and only the latest `k` qualifying queries are
/// kept, ordered oldest to newest.
pub fn build_history(records: &[QueryRecord], k: usize) -> HashMap<String, UserHistory> {
    // Group record indices per user, ordered by (timestamp, query_id).
    let mut per_user: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        per_user.entry(r.user_id.as_str()).or_default().push(i);
    }
    let mut out = HashMap::with_capacity(records.len());
    for idxs in per_user.values_mut() {
        idxs.sort_by(|&a, &b| {
            (records[a].timestamp, &records[a].query_id)
                .cmp(&(records[b].timestamp, &records[b].query_id))
        });
        for (pos, &i) in idxs.iter().enumerate() {
            let current = &records[i];
            // Walk backwards collecting qualifying earlier queries.
            let mut picked: Vec<&QueryRecord> = Vec::with_capacity(k);
            for &j in idxs[..pos].iter().rev() {
                let prior = &records[j];
                if prior.timestamp >= current.timestamp {
                    continue; // same-second queries are not strictly older
                }
                if prior.observed_positives().is_empty() {
                    continue;
                }
                picked.push(prior);
                if picked.len() == k {
                    break;
                }
            }
            picked.reverse();
            let entries = picked
                .into_iter()
                .map(|r| HistoryEntry {
                    q_disc: r.q_disc.clone(),
                    q_cont: r.q_cont.clone(),
                    positives: r
                        .observed_positives()
                        .into_iter()
                        .map(|ci| {
                            let c = &r.candidates[ci];
                            PositiveDoc {
                                d_disc: c.d_disc.clone(),
                                d_cont: c.d_cont.clone(),
                                qd_cont: c.qd_cont.clone(),
                            }
                        })
                        .collect(),
                })
                .collect();
            out.insert(current.query_id.clone(), UserHistory { entries });
        }
    }
    out
}
