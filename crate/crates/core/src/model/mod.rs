//! Neural ranking models: the per-document ranker, its history-aware
//! variant, and the position-only examination model.

mod context;
mod encoder;
mod examination;

pub use context::{
    encode_context, export_context_rows, score_cnrm, score_cnrm_record, write_context_rows,
    CnrmSwitches, ContextParams, ContextVector,
};
pub use encoder::{score_nrm_record, AblationMask, EncoderParams};
pub use examination::ExaminationParams;

use crate::error::{Error, Result};

/// Shared width/depth settings for the neural models.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dims {
    /// Embedding width of each discrete feature.
    pub e: usize,
    /// Half the group-vector width; group vectors are 2m long.
    pub m: usize,
    /// Maximum history length.
    pub k: usize,
    /// Transformer depth, head count, and feed-forward width.
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { e: 10, m: 64, k: 10, layers: 2, heads: 4, ff: 256 }
    }
}

impl Dims {
    pub fn validate(self) -> Result<()> {
        if self.e == 0 || self.m == 0 || self.k == 0 || self.layers == 0 || self.ff == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if (2 * self.m) % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention width 2m = {} must be divisible by {} heads",
                2 * self.m,
                self.heads
            )));
        }
        Ok(())
    }

    pub fn width(self) -> usize {
        2 * self.m
    }
}

/// Shared finite-difference harness for the model gradient tests.
#[cfg(test)]
pub(crate) mod fd {
    use crate::tensor::{ParameterStore, Tape, Var};

    /// Assert analytic gradients match a fourth-order central difference
    /// (h = 1e-3) within relative error 1e-3 for every parameter element.
    /// The higher-order stencil keeps truncation error far below the
    /// tolerance so only genuine gradient bugs can trip it.
    pub(crate) fn assert_grads_match(
        store: &mut ParameterStore,
        build: impl Fn(&mut Tape) -> Var,
    ) {
        let analytic = {
            let mut tape = Tape::new(store);
            let loss = build(&mut tape);
            tape.backward(loss, 1.0).unwrap()
        };
        let eval = |store: &ParameterStore| {
            let mut tape = Tape::new(store);
            let l = build(&mut tape);
            tape.value(l).item()
        };
        let h = 1e-3;
        for id in store.ids().collect::<Vec<_>>() {
            for k in 0..store.value(id).numel() {
                let orig = store.value(id).data()[k];
                let mut probe = |delta: f64| {
                    store.value_mut(id).data_mut()[k] = orig + delta;
                    let v = eval(store);
                    store.value_mut(id).data_mut()[k] = orig;
                    v
                };
                let (f_m2, f_m1, f_p1, f_p2) =
                    (probe(-2.0 * h), probe(-h), probe(h), probe(2.0 * h));
                let fd = (f_m2 - 8.0 * f_m1 + 8.0 * f_p1 - f_p2) / (12.0 * h);
                let an = analytic.get(id).map_or(0.0, |g| g.data()[k]);
                let denom = fd.abs().max(an.abs()).max(1e-4);
                assert!(
                    ((fd - an) / denom).abs() < 1e-3,
                    "{} elem {k}: fd={fd} analytic={an}",
                    store.name(id)
                );
            }
        }
    }
}
