//! Normalized discounted cumulative gain over 5-level graded labels.

use crate::data::{CandidateDoc, QueryRecord};
use crate::error::{Error, Result};

/// Exponential gain used throughout: grade g contributes 2^g - 1.
pub fn gain(g: u8) -> f64 {
    ((1u32 << g) - 1) as f64
}

/// NDCG at cutoff `k` for grades listed in ranked order.
///
/// Returns `Ok(None)` for all-zero lists: such queries have no defined ideal
/// and are excluded from aggregate means.
pub fn ndcg_at_k(ranked_grades: &[u8], k: usize) -> Result<Option<f64>> {
    if k == 0 {
        return Err(Error::Contract("NDCG cutoff must be positive".into()));
    }
    if ranked_grades.iter().all(|&g| g == 0) {
        return Ok(None);
    }
    let dcg: f64 = ranked_grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal = ranked_grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum();
    Ok(Some(dcg / idcg))
}

/// Mean over defined per-query values; 0.0 when every query is excluded.
pub fn mean_ndcg(per_query: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = per_query.iter().flatten().copied().collect();
    if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Candidate indices ordered by descending score; ties keep input order.
pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

/// Grades of a record's candidates in the given order. With `use_true`,
/// reads `label_true` and errors if any candidate lacks it.
pub fn ranked_grades(record: &QueryRecord, order: &[usize], use_true: bool) -> Result<Vec<u8>> {
    order
        .iter()
        .map(|&i| {
            let c: &CandidateDoc = &record.candidates[i];
            if use_true {
                c.label_true.ok_or_else(|| {
                    Error::Contract(format!(
                        "query {} doc {} has no true label",
                        record.query_id, c.doc_id
                    ))
                })
            } else {
                Ok(c.label_obs)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force reference: DCG over all positions with explicit ideal.
    fn ndcg_reference(grades: &[u8], k: usize) -> Option<f64> {
        if grades.iter().all(|&g| g == 0) {
            return None;
        }
        let dcg = |gs: &[u8]| -> f64 {
            let mut total = 0.0;
            for (i, &g) in gs.iter().enumerate() {
                if i + 1 > k {
                    break;
                }
                let gain = (2.0f64.powi(g as i32)) - 1.0;
                total += gain / ((i as f64) + 2.0).log2();
            }
            total
        };
        let mut ideal = grades.to_vec();
        ideal.sort_by(|a, b| b.cmp(a));
        Some(dcg(grades) / dcg(&ideal))
    }

    #[test]
    fn ideal_ordering_scores_one() {
        assert_eq!(ndcg_at_k(&[4, 3, 2, 1, 0], 5).unwrap(), Some(1.0));
        assert_eq!(ndcg_at_k(&[4, 4, 0], 3).unwrap(), Some(1.0));
    }

    #[test]
    fn hand_case_single_relevant_at_rank_two() {
        let got = ndcg_at_k(&[0, 4, 0], 3).unwrap().unwrap();
        assert!((got - 0.6309).abs() < 1e-4, "got {got}");
        // Exact value: (15/log2(3)) / 15 = 1/log2(3).
        assert!((got - 1.0 / 3.0f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn all_zero_queries_are_excluded() {
        assert_eq!(ndcg_at_k(&[0, 0, 0], 3).unwrap(), None);
        assert_eq!(mean_ndcg(&[None, Some(0.5), Some(1.0), None]), 0.75);
        assert_eq!(mean_ndcg(&[None, None]), 0.0);
    }

    #[test]
    fn zero_cutoff_is_a_contract_error() {
        assert!(ndcg_at_k(&[1, 0], 0).is_err());
    }

    #[test]
    fn matches_brute_force_on_thousand_random_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=50);
            let grades: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=4)).collect();
            let k = *[3usize, 5, 10].iter().nth(rng.gen_range(0..3)).unwrap();
            let got = ndcg_at_k(&grades, k).unwrap();
            let want = ndcg_reference(&grades, k);
            match (got, want) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
                other => panic!("sentinel mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn rank_by_scores_is_descending_and_stable() {
        assert_eq!(rank_by_scores(&[0.1, 0.9, 0.5]), vec![1, 2, 0]);
        assert_eq!(rank_by_scores(&[0.5, 0.5, 0.9]), vec![2, 0, 1]);
    }

    proptest! {
        /// NDCG is invariant under strictly monotone score transforms.
        #[test]
        fn monotone_transform_invariance(
            scores in proptest::collection::vec(-5.0f64..5.0, 2..20),
            grades in proptest::collection::vec(0u8..=4, 2..20),
        ) {
            let n = scores.len().min(grades.len());
            let (scores, grades) = (&scores[..n], &grades[..n]);
            let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.5).exp() + 3.0).collect();
            let a = rank_by_scores(scores);
            let b = rank_by_scores(&transformed);
            let ga: Vec<u8> = a.iter().map(|&i| grades[i]).collect();
            let gb: Vec<u8> = b.iter().map(|&i| grades[i]).collect();
            prop_assert_eq!(ndcg_at_k(&ga, 5).unwrap(), ndcg_at_k(&gb, 5).unwrap());
        }

        /// NDCG stays within [0, 1] whenever defined.
        #[test]
        fn ndcg_bounded(grades in proptest::collection::vec(0u8..=4, 1..50)) {
            for k in [1usize, 3, 5, 10] {
                if let Some(v) = ndcg_at_k(&grades, k).unwrap() {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
                }
            }
        }
    }
}
