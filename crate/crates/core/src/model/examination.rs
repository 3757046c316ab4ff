//! Position-only examination model: two lookup tables over the relevance
//! and time panel positions feed a small scoring head. Its scores drive
//! the inverse-propensity weights during unbiased training; it never sees
//! document or query features.

use crate::data::MAX_CANDIDATES;
use crate::error::{Error, Result};
use crate::model::encoder::{init_embedding, init_weight};
use crate::tensor::{ParamId, ParameterStore, Tape, Var};

/// Lookup tables (one per panel) plus the two projection matrices.
pub struct ExaminationParams {
    pub m: usize,
    pos_r_table: ParamId,
    pos_t_table: ParamId,
    w_p1: ParamId,
    w_p2: ParamId,
}

impl ExaminationParams {
    pub fn new(store: &mut ParameterStore, m: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("examination width m must be positive".into()));
        }
        Ok(ExaminationParams {
            m,
            pos_r_table: init_embedding(store, "exam.pos_r", MAX_CANDIDATES, m, rng)?,
            pos_t_table: init_embedding(store, "exam.pos_t", MAX_CANDIDATES, m, rng)?,
            w_p1: init_weight(store, "exam.w_p1", m, 2 * m, rng)?,
            w_p2: init_weight(store, "exam.w_p2", 1, m, rng)?,
        })
    }

    /// Score one (relevance position, time position) pair; positions are
    /// one-based ranks as logged.
    pub fn examination_score(&self, tape: &mut Tape, pos_r: usize, pos_t: usize) -> Result<Var> {
        for (label, pos) in [("relevance", pos_r), ("time", pos_t)] {
            if pos == 0 || pos > MAX_CANDIDATES {
                return Err(Error::Index(format!(
                    "{label} position {pos} outside 1..={MAX_CANDIDATES}"
                )));
            }
        }
        let r_table = tape.param(self.pos_r_table);
        let t_table = tape.param(self.pos_t_table);
        let emb_r = tape.embed(r_table, pos_r - 1)?;
        let emb_t = tape.embed(t_table, pos_t - 1)?;
        let both = tape.concat_rows(&[emb_r, emb_t])?;
        let w_p1 = tape.param(self.w_p1);
        let hidden = tape.matmul(w_p1, both)?;
        let hidden = tape.tanh(hidden);
        let w_p2 = tape.param(self.w_p2);
        tape.matmul(w_p2, hidden)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ParameterStore, ExaminationParams) {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = ExaminationParams::new(&mut store, 6, &mut rng).unwrap();
        (store, params)
    }

    #[test]
    fn zero_output_weights_score_all_positions_zero() {
        let (mut store, params) = setup();
        let id = store.id("exam.w_p2").unwrap();
        store.value_mut(id).data_mut().fill(0.0);
        let mut tape = Tape::new(&store);
        for (r, t) in [(1, 1), (3, 20), (50, 50)] {
            let s = params.examination_score(&mut tape, r, t).unwrap();
            assert_eq!(tape.value(s).item(), 0.0);
        }
    }

    #[test]
    fn scores_depend_only_on_positions() {
        let (store, params) = setup();
        let mut tape = Tape::new(&store);
        let a = params.examination_score(&mut tape, 2, 7).unwrap();
        let b = params.examination_score(&mut tape, 2, 7).unwrap();
        let c = params.examination_score(&mut tape, 3, 7).unwrap();
        assert_eq!(tape.value(a).item(), tape.value(b).item());
        assert_ne!(tape.value(a).item(), tape.value(c).item());
    }

    #[test]
    fn positions_outside_the_tables_are_index_errors() {
        let (store, params) = setup();
        let mut tape = Tape::new(&store);
        for (r, t) in [(0, 1), (1, 0), (51, 1), (1, 51)] {
            assert!(matches!(
                params.examination_score(&mut tape, r, t),
                Err(Error::Index(_))
            ));
        }
    }

    #[test]
    fn examination_gradients_match_finite_differences() {
        let (mut store, params) = setup();
        // Listwise loss over a few position scores as the probe.
        let pairs = [(1, 2), (4, 4), (9, 1)];
        crate::model::fd::assert_grads_match(&mut store, |tape| {
            let scores: Vec<Var> = pairs
                .iter()
                .map(|&(r, t)| params.examination_score(tape, r, t).unwrap())
                .collect();
            let stacked = tape.concat_rows(&scores).unwrap();
            tape.listwise_ce(stacked, &[1.0, 0.0, 1.0]).unwrap()
        });
    }
}
