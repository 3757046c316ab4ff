//! The vanilla neural ranker: grouped feature encoding, shared-weight
//! self-attention over the three group vectors, and a two-layer scoring
//! head. One candidate is scored independently of its siblings.

use rand::Rng;

use crate::data::{CandidateDoc, FeatureSchema, QueryRecord};
use crate::error::{Error, Result};
use crate::model::Dims;
use crate::tensor::{ParamId, ParameterStore, Tape, Tensor, Var};

/// Which feature groups participate when building history context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationMask {
    pub f_q: bool,
    pub f_d: bool,
    pub f_qd: bool,
}

impl AblationMask {
    pub const FULL: AblationMask = AblationMask { f_q: true, f_d: true, f_qd: true };

    pub fn parse(name: &str) -> Result<AblationMask> {
        Ok(match name {
            "full" => AblationMask::FULL,
            "fq" => AblationMask { f_q: true, f_d: false, f_qd: false },
            "fd" => AblationMask { f_q: false, f_d: true, f_qd: false },
            "fqd" => AblationMask { f_q: false, f_d: false, f_qd: true },
            "fd+fqd" => AblationMask { f_q: false, f_d: true, f_qd: true },
            other => {
                return Err(Error::Config(format!(
                    "unknown feature mask {other:?} (expected full|fq|fd|fqd|fd+fqd)"
                )))
            }
        })
    }

    pub fn label(self) -> &'static str {
        match (self.f_q, self.f_d, self.f_qd) {
            (true, true, true) => "full",
            (true, false, false) => "fq",
            (false, true, false) => "fd",
            (false, false, true) => "fqd",
            (false, true, true) => "fd+fqd",
            _ => "custom",
        }
    }
}

/// Parameters of the per-document ranker (embedding tables, group
/// projections, shared attention map, scoring head).
pub struct EncoderParams {
    pub dims: Dims,
    q_emb: Vec<ParamId>,
    d_emb: Vec<ParamId>,
    w_q_disc: ParamId,
    b_q_disc: ParamId,
    w_q_cont: ParamId,
    b_q_cont: ParamId,
    w_d_disc: ParamId,
    b_d_disc: ParamId,
    w_d_cont: ParamId,
    b_d_cont: ParamId,
    w_qd: ParamId,
    b_qd: ParamId,
    w_a: ParamId,
    b_a: ParamId,
    w_s1: ParamId,
    b_s1: ParamId,
    w_s2: ParamId,
    b_s2: ParamId,
}

/// Register a weight matrix initialized uniform(-1/sqrt(fan_in), +).
pub(crate) fn init_weight(
    store: &mut ParameterStore,
    name: &str,
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> Result<ParamId> {
    store.register(name, Tensor::uniform_fan_in(rows, cols, cols, rng), true)
}

pub(crate) fn init_bias(store: &mut ParameterStore, name: &str, rows: usize) -> Result<ParamId> {
    store.register(name, Tensor::zeros(rows, 1), true)
}

/// Embedding tables are exempt from weight decay.
pub(crate) fn init_embedding(
    store: &mut ParameterStore,
    name: &str,
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> Result<ParamId> {
    store.register(name, Tensor::uniform_fan_in(rows, cols, cols, rng), false)
}

impl EncoderParams {
    pub fn new(
        store: &mut ParameterStore,
        schema: &FeatureSchema,
        dims: Dims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        dims.validate()?;
        schema.validate()?;
        if schema.q_disc_cards.is_empty() || schema.d_disc_cards.is_empty() {
            return Err(Error::Config(
                "the encoder needs at least one discrete feature per group".into(),
            ));
        }
        let (e, m) = (dims.e, dims.m);
        let mut q_emb = Vec::new();
        for (i, &card) in schema.q_disc_cards.iter().enumerate() {
            q_emb.push(init_embedding(store, &format!("enc.q_emb{i}"), card, e, rng)?);
        }
        let mut d_emb = Vec::new();
        for (i, &card) in schema.d_disc_cards.iter().enumerate() {
            d_emb.push(init_embedding(store, &format!("enc.d_emb{i}"), card, e, rng)?);
        }
        Ok(EncoderParams {
            dims,
            w_q_disc: init_weight(store, "enc.w_q_disc", m, e * schema.q_disc_cards.len(), rng)?,
            b_q_disc: init_bias(store, "enc.b_q_disc", m)?,
            w_q_cont: init_weight(store, "enc.w_q_cont", m, schema.q_cont_dim(), rng)?,
            b_q_cont: init_bias(store, "enc.b_q_cont", m)?,
            w_d_disc: init_weight(store, "enc.w_d_disc", m, e * schema.d_disc_cards.len(), rng)?,
            b_d_disc: init_bias(store, "enc.b_d_disc", m)?,
            w_d_cont: init_weight(store, "enc.w_d_cont", m, schema.d_cont_dim(), rng)?,
            b_d_cont: init_bias(store, "enc.b_d_cont", m)?,
            w_qd: init_weight(store, "enc.w_qd", 2 * m, schema.qd_cont_dim(), rng)?,
            b_qd: init_bias(store, "enc.b_qd", 2 * m)?,
            w_a: init_weight(store, "enc.w_a", 2 * m, 2 * m, rng)?,
            b_a: init_bias(store, "enc.b_a", 2 * m)?,
            w_s1: init_weight(store, "enc.w_s1", m, 2 * m, rng)?,
            b_s1: init_bias(store, "enc.b_s1", m)?,
            w_s2: init_weight(store, "enc.w_s2", 1, m, rng)?,
            b_s2: init_bias(store, "enc.b_s2", 1)?,
            q_emb,
            d_emb,
        })
    }

    /// Discrete half: embeddings concatenated, projected, squashed.
    fn encode_disc(
        &self,
        tape: &mut Tape,
        tables: &[ParamId],
        ids: &[usize],
        w: ParamId,
        b: ParamId,
    ) -> Result<Var> {
        if ids.len() != tables.len() {
            return Err(Error::Dimension(format!(
                "{} discrete ids for {} embedding tables",
                ids.len(),
                tables.len()
            )));
        }
        let embs: Vec<Var> = tables
            .iter()
            .zip(ids)
            .map(|(&t, &id)| {
                let table = tape.param(t);
                tape.embed(table, id)
            })
            .collect::<Result<_>>()?;
        let stacked = tape.concat_rows(&embs)?;
        let w = tape.param(w);
        let b = tape.param(b);
        let lin = tape.matmul(w, stacked)?;
        let lin = tape.add(lin, b)?;
        Ok(tape.tanh(lin))
    }

    fn encode_cont(&self, tape: &mut Tape, values: &[f64], w: ParamId, b: ParamId) -> Result<Var> {
        let x = tape.constant(Tensor::col_vec(values));
        let w = tape.param(w);
        let b = tape.param(b);
        let lin = tape.matmul(w, x)?;
        let lin = tape.add(lin, b)?;
        Ok(tape.tanh(lin))
    }

    /// Query-group vector: concat of the discrete and continuous halves.
    pub fn encode_query(&self, tape: &mut Tape, q_disc: &[usize], q_cont: &[f64]) -> Result<Var> {
        let disc = self.encode_disc(tape, &self.q_emb, q_disc, self.w_q_disc, self.b_q_disc)?;
        let cont = self.encode_cont(tape, q_cont, self.w_q_cont, self.b_q_cont)?;
        tape.concat_rows(&[disc, cont])
    }

    /// Document-group vector, same shape with its own tables/projections.
    pub fn encode_doc(&self, tape: &mut Tape, d_disc: &[usize], d_cont: &[f64]) -> Result<Var> {
        let disc = self.encode_disc(tape, &self.d_emb, d_disc, self.w_d_disc, self.b_d_disc)?;
        let cont = self.encode_cont(tape, d_cont, self.w_d_cont, self.b_d_cont)?;
        tape.concat_rows(&[disc, cont])
    }

    /// Matching-group vector (continuous only).
    pub fn encode_qd(&self, tape: &mut Tape, qd_cont: &[f64]) -> Result<Var> {
        self.encode_cont(tape, qd_cont, self.w_qd, self.b_qd)
    }

    /// Fuse the three group vectors: each is mapped through the shared
    /// attention projection, the 3x3 column-softmaxed Gram matrix mixes
    /// them, and the mixed columns are averaged into one vector.
    pub fn self_attention_aggregate(
        &self,
        tape: &mut Tape,
        h_q: Var,
        h_d: Var,
        h_qd: Var,
    ) -> Result<Var> {
        let w_a = tape.param(self.w_a);
        let b_a = tape.param(self.b_a);
        let mut projected = Vec::with_capacity(3);
        for h in [h_q, h_d, h_qd] {
            let lin = tape.matmul(w_a, h)?;
            let lin = tape.add(lin, b_a)?;
            projected.push(tape.tanh(lin));
        }
        let o_c = tape.concat_cols(&projected)?;
        let o_t = tape.transpose(o_c);
        let gram = tape.matmul(o_t, o_c)?;
        let attn = tape.softmax_cols(gram, None)?;
        let mixed = tape.matmul(o_c, attn)?;
        tape.mean_cols(mixed)
    }

    /// Scoring head over an aggregated vector.
    pub fn score_nrm(&self, tape: &mut Tape, o: Var) -> Result<Var> {
        let w_s1 = tape.param(self.w_s1);
        let b_s1 = tape.param(self.b_s1);
        let hidden = tape.matmul(w_s1, o)?;
        let hidden = tape.add(hidden, b_s1)?;
        let hidden = tape.tanh(hidden);
        let w_s2 = tape.param(self.w_s2);
        let b_s2 = tape.param(self.b_s2);
        let s = tape.matmul(w_s2, hidden)?;
        tape.add(s, b_s2)
    }

    /// The full aggregate vector o(q, d) for one candidate.
    pub fn aggregate_candidate(
        &self,
        tape: &mut Tape,
        record: &QueryRecord,
        cand: &CandidateDoc,
    ) -> Result<Var> {
        let h_q = self.encode_query(tape, &record.q_disc, &record.q_cont)?;
        let h_d = self.encode_doc(tape, &cand.d_disc, &cand.d_cont)?;
        let h_qd = self.encode_qd(tape, &cand.qd_cont)?;
        self.self_attention_aggregate(tape, h_q, h_d, h_qd)
    }
}

/// End-to-end per-document scores for every candidate of a record.
pub fn score_nrm_record(
    params: &EncoderParams,
    tape: &mut Tape,
    record: &QueryRecord,
) -> Result<Var> {
    let scores: Vec<Var> = record
        .candidates
        .iter()
        .map(|cand| {
            let o = params.aggregate_candidate(tape, record, cand)?;
            params.score_nrm(tape, o)
        })
        .collect::<Result<_>>()?;
    tape.concat_rows(&scores)
}
