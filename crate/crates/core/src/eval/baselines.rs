//! Single-feature baseline rankers (BM25f, recency).

use crate::data::{FeatureSchema, QueryRecord};
use crate::error::Result;

/// Candidate ordering by one named continuous feature, descending; ties
/// break by doc_id. The feature name must exist in the schema.
pub fn baseline_rank(
    record: &QueryRecord,
    criterion: &str,
    schema: &FeatureSchema,
) -> Result<Vec<usize>> {
    let col = schema.continuous_column(criterion)?;
    let mut idx: Vec<usize> = (0..record.candidates.len()).collect();
    idx.sort_by(|&a, &b| {
        let va = col.value(record, &record.candidates[a]);
        let vb = col.value(record, &record.candidates[b]);
        vb.partial_cmp(&va)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| record.candidates[a].doc_id.cmp(&record.candidates[b].doc_id))
    });
    Ok(idx)
}
