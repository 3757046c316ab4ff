//! LambdaRank gradients for one query group: every mis-ordered-by-label
//! pair contributes a sigmoid-scaled push weighted by how much swapping
//! the two documents would move NDCG at the configured truncation.

use crate::eval::gain;

/// Discount of a zero-based rank under truncation, 0 beyond the cutoff.
fn discount(rank: usize, truncation: usize) -> f64 {
    if rank < truncation {
        1.0 / ((rank + 2) as f64).log2()
    } else {
        0.0
    }
}

/// Ideal DCG of a label multiset at `truncation`.
fn ideal_dcg(labels: &[u8], truncation: usize) -> f64 {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .iter()
        .take(truncation)
        .enumerate()
        .map(|(i, &g)| gain(g) * discount(i, truncation))
        .sum()
}

/// Per-document λ and Newton weights for one query group.
///
/// Groups without label variation (in particular, all-zero groups with
/// ideal DCG 0) contribute exactly zero gradients.
pub fn lambdarank_gradients(
    scores: &[f64],
    labels: &[u8],
    truncation: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = scores.len();
    debug_assert_eq!(n, labels.len());
    let mut lambdas = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let idcg = ideal_dcg(labels, truncation);
    if idcg <= 0.0 {
        return (lambdas, weights);
    }
    // Current ranking positions under the model scores (stable on ties).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rank_of = vec![0usize; n];
    for (rank, &doc) in order.iter().enumerate() {
        rank_of[doc] = rank;
    }
    for i in 0..n {
        for j in 0..n {
            if labels[i] <= labels[j] {
                continue;
            }
            let rho = 1.0 / (1.0 + (scores[i] - scores[j]).exp());
            let delta = ((gain(labels[i]) - gain(labels[j]))
                * (discount(rank_of[i], truncation) - discount(rank_of[j], truncation)))
            .abs()
                / idcg;
            lambdas[i] += rho * delta;
            lambdas[j] -= rho * delta;
            let w = rho * (1.0 - rho) * delta;
            weights[i] += w;
            weights[j] += w;
        }
    }
    (lambdas, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_scores_contribute_half_the_ndcg_swap() {
        // Two documents, grades (1, 0), identical scores: ρ = 1/2 and the
        // swap moves NDCG by |(2^1−1)−0| · |1/log2(2) − 1/log2(3)| / IDCG.
        let (lambdas, weights) = lambdarank_gradients(&[0.4, 0.4], &[1, 0], 10);
        let idcg = 1.0;
        let delta = ((1.0 - 0.0) * (1.0 / 2.0f64.log2() - 1.0 / 3.0f64.log2())).abs() / idcg;
        assert!((lambdas[0] - 0.5 * delta).abs() < 1e-12);
        assert!((lambdas[1] + 0.5 * delta).abs() < 1e-12);
        assert!((weights[0] - 0.25 * delta).abs() < 1e-12);
        assert_eq!(weights[0], weights[1]);
    }

    #[test]
    fn uniform_labels_give_zero_gradients() {
        for grade in [0u8, 3] {
            let (lambdas, weights) =
                lambdarank_gradients(&[0.9, -0.2, 0.5], &[grade; 3], 10);
            assert!(lambdas.iter().all(|&l| l == 0.0));
            assert!(weights.iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn reversed_pair_pushes_the_positive_document_up() {
        // The relevant document scores lower, so its λ must be positive
        // (raise me) and the irrelevant one's negative, and the mis-ordered
        // pair pushes harder than a correctly-ordered one would.
        let (wrong, _) = lambdarank_gradients(&[-1.0, 1.0], &[1, 0], 10);
        assert!(wrong[0] > 0.0 && wrong[1] < 0.0);
        let (right, _) = lambdarank_gradients(&[1.0, -1.0], &[1, 0], 10);
        assert!(right[0] > 0.0);
        assert!(wrong[0] > right[0]);
    }

    #[test]
    fn lambdas_conserve_within_a_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            let (lambdas, weights) = lambdarank_gradients(&scores, &labels, 10);
            let total: f64 = lambdas.iter().sum();
            assert!(total.abs() < 1e-6, "lambda sum {total}");
            assert!(weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn documents_beyond_the_truncation_still_get_pulled_in() {
        // A relevant document parked at rank 11 has zero discount itself,
        // but swapping with a top document changes NDCG, so λ is nonzero.
        let mut scores: Vec<f64> = (0..12).map(|i| -(i as f64)).collect();
        let mut labels = vec![0u8; 12];
        labels[11] = 3;
        scores[11] = -11.0;
        let (lambdas, _) = lambdarank_gradients(&scores, &labels, 10);
        assert!(lambdas[11] > 0.0);
        assert!(lambdas[0] < 0.0);
    }
}
