//! Listwise losses for the dual training scheme. The ranking loss weights
//! observed grades by inverse examination propensity relative to the top
//! relevance slot; the examination loss is the literal swap of the two
//! score lists. Whichever list supplies the weights enters as detached
//! values, so each loss can only move its own model.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Plain softmax cross-entropy over one candidate list; grades are used
/// as coefficients exactly as logged.
pub fn listwise_loss(tape: &mut Tape, scores: Var, y: &[u8]) -> Result<Var> {
    let coeffs: Vec<f64> = y.iter().map(|&g| g as f64).collect();
    tape.listwise_ce(scores, &coeffs)
}

/// Relative propensity of the top relevance slot against every document:
/// `w(d) = g(d_r1)/g(d)` under a softmax `g`, which reduces to
/// `exp(s(d_r1) − s(d))`, clipped from above. Returns `None` when no
/// document sits at relevance position 1.
fn relative_weights(
    ref_scores: &[f64],
    pos_r: &[usize],
    clip: f64,
) -> Result<Option<Vec<f64>>> {
    if ref_scores.len() != pos_r.len() {
        return Err(Error::Dimension(format!(
            "{} reference scores against {} positions",
            ref_scores.len(),
            pos_r.len()
        )));
    }
    let Some(r1) = pos_r.iter().position(|&p| p == 1) else {
        return Ok(None);
    };
    let s_r1 = ref_scores[r1];
    Ok(Some(ref_scores.iter().map(|&s| (s_r1 - s).exp().min(clip)).collect()))
}

/// Shared body of the two dual losses: a weighted listwise cross-entropy
/// where `scored` receives gradient and `ref_scores` (already detached)
/// only shapes the per-document weights.
fn weighted_listwise(
    tape: &mut Tape,
    scored: Var,
    ref_scores: &[f64],
    y: &[u8],
    pos_r: &[usize],
    clip: f64,
) -> Result<Option<Var>> {
    let n = tape.value(scored).rows();
    if y.len() != n || pos_r.len() != n || ref_scores.len() != n {
        return Err(Error::Dimension(format!(
            "scores [{n}], {} grades, {} positions, {} reference scores",
            y.len(),
            pos_r.len(),
            ref_scores.len()
        )));
    }
    let Some(weights) = relative_weights(ref_scores, pos_r, clip)? else {
        return Ok(None);
    };
    let coeffs: Vec<f64> =
        y.iter().zip(&weights).map(|(&g, &w)| g as f64 * w).collect();
    Ok(Some(tape.listwise_ce(scored, &coeffs)?))
}

/// Ranking loss with inverse-propensity weights from the examination
/// scores. `s_e` must be detached values so the examination model stays
/// fixed under this loss's gradient.
pub fn ipw_ranking_loss(
    tape: &mut Tape,
    s_r: Var,
    s_e: &[f64],
    y: &[u8],
    pos_r: &[usize],
    clip: f64,
) -> Result<Option<Var>> {
    weighted_listwise(tape, s_r, s_e, y, pos_r, clip)
}

/// Examination loss: the same formula with the two score lists swapped —
/// weights come from the (detached) ranking scores, gradient flows into
/// the examination scores.
pub fn examination_loss(
    tape: &mut Tape,
    s_e: Var,
    s_r: &[f64],
    y: &[u8],
    pos_r: &[usize],
    clip: f64,
) -> Result<Option<Var>> {
    weighted_listwise(tape, s_e, s_r, y, pos_r, clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParameterStore, Tensor};

    fn scalar_loss(
        f: impl FnOnce(&mut Tape, Var) -> Result<Option<Var>>,
        scored: &[f64],
    ) -> f64 {
        let store = ParameterStore::new();
        let mut tape = Tape::new(&store);
        let s = tape.constant(Tensor::col_vec(scored));
        let l = f(&mut tape, s).unwrap().unwrap();
        tape.value(l).item()
    }

    #[test]
    fn uniform_scores_with_one_unit_label_cost_ln_n() {
        for n in [2usize, 5, 17] {
            let store = ParameterStore::new();
            let mut tape = Tape::new(&store);
            let s = tape.constant(Tensor::col_vec(&vec![0.25; n]));
            let mut y = vec![0u8; n];
            y[n / 2] = 1;
            let l = listwise_loss(&mut tape, s, &y).unwrap();
            assert!((tape.value(l).item() - (n as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_grades_cost_nothing() {
        let store = ParameterStore::new();
        let mut tape = Tape::new(&store);
        let s = tape.constant(Tensor::col_vec(&[3.0, -1.0, 0.5]));
        let l = listwise_loss(&mut tape, s, &[0, 0, 0]).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn confident_correct_scores_cost_two_softplus() {
        let store = ParameterStore::new();
        let mut tape = Tape::new(&store);
        let s = tape.constant(Tensor::col_vec(&[10.0, -10.0]));
        let l = listwise_loss(&mut tape, s, &[2, 0]).unwrap();
        let want = 2.0 * (1.0 + (-20.0f64).exp()).ln();
        assert!((tape.value(l).item() - want).abs() < 1e-12);
    }

    #[test]
    fn equal_examination_scores_reduce_to_the_plain_loss() {
        let scores = [1.0, -0.5, 2.0];
        let y = [0u8, 2, 1];
        let pos_r = [1usize, 2, 3];
        let weighted = scalar_loss(
            |tape, s| ipw_ranking_loss(tape, s, &[0.7, 0.7, 0.7], &y, &pos_r, 10.0),
            &scores,
        );
        let plain = {
            let store = ParameterStore::new();
            let mut tape = Tape::new(&store);
            let s = tape.constant(Tensor::col_vec(&scores));
            let l = listwise_loss(&mut tape, s, &y).unwrap();
            tape.value(l).item()
        };
        assert!((weighted - plain).abs() < 1e-12);
    }

    #[test]
    fn propensity_ratio_four_weights_the_deep_positive_fourfold() {
        // softmax([ln 4, 0]) = [0.8, 0.2]; the positive at relevance
        // position 2 gets weight 0.8/0.2 = 4.
        let scores = [0.3, 1.1];
        let s_e = [4.0f64.ln(), 0.0];
        let y = [0u8, 1];
        let pos_r = [1usize, 2];
        let got = scalar_loss(|tape, s| ipw_ranking_loss(tape, s, &s_e, &y, &pos_r, 10.0), &scores);
        let lse = (scores[0].exp() + scores[1].exp()).ln();
        let want = -4.0 * (scores[1] - lse);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn weights_clip_at_the_configured_ceiling() {
        let s_e = [(99.0f64).ln(), 0.0];
        let w = relative_weights(&s_e, &[1, 2], 10.0).unwrap().unwrap();
        assert_eq!(w, vec![1.0, 10.0]);
    }

    #[test]
    fn reference_document_always_has_weight_one() {
        let w = relative_weights(&[0.4, -1.0, 2.2], &[3, 1, 2], 10.0).unwrap().unwrap();
        assert_eq!(w[1], 1.0);
        // Any document scoring equal to the reference also gets exactly 1.
        let w = relative_weights(&[-1.0, -1.0, 2.2], &[3, 1, 2], 10.0).unwrap().unwrap();
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn missing_top_slot_skips_the_query() {
        let store = ParameterStore::new();
        let mut tape = Tape::new(&store);
        let s = tape.constant(Tensor::col_vec(&[0.1, 0.2]));
        let out = ipw_ranking_loss(&mut tape, s, &[0.0, 0.0], &[1, 0], &[2, 3], 10.0).unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn swapping_score_lists_exchanges_the_two_losses() {
        let a = [0.9, -0.3, 0.1];
        let b = [-1.2, 0.8, 0.4];
        let y = [1u8, 0, 2];
        let pos_r = [2usize, 1, 3];
        let l_r_ab = scalar_loss(|tape, s| ipw_ranking_loss(tape, s, &b, &y, &pos_r, 10.0), &a);
        let l_e_ba = scalar_loss(|tape, s| examination_loss(tape, s, &b, &y, &pos_r, 10.0), &a);
        let l_r_ba = scalar_loss(|tape, s| ipw_ranking_loss(tape, s, &a, &y, &pos_r, 10.0), &b);
        let l_e_ab = scalar_loss(|tape, s| examination_loss(tape, s, &a, &y, &pos_r, 10.0), &b);
        assert_eq!(l_r_ab, l_e_ba);
        assert_eq!(l_r_ba, l_e_ab);
        assert_ne!(l_r_ab, l_r_ba);
    }

    #[test]
    fn gradient_reaches_only_the_scored_list() {
        // The weight side is plain numbers, so the tape cannot route
        // gradient into whatever produced them; probe via a parameter on
        // the scored side only.
        let mut store = ParameterStore::new();
        let sp = store.register("probe.s", Tensor::col_vec(&[0.2, -0.4]), true).unwrap();
        let mut tape = Tape::new(&store);
        let s = tape.param(sp);
        let l = ipw_ranking_loss(&mut tape, s, &[1.0, 0.0], &[2, 1], &[1, 2], 10.0)
            .unwrap()
            .unwrap();
        let grads = tape.backward(l, 1.0).unwrap();
        let g = grads.get(sp).unwrap();
        assert!(g.data().iter().any(|v| v.abs() > 1e-9));
    }
}
