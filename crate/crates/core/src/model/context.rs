//! The history-aware ranker: each past query's positive documents are
//! averaged into group vectors, fused with the shared per-document
//! aggregation, run through a masked pre-norm transformer alongside the
//! current query token, and matched against candidates bilinearly.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;

use crate::data::{HistoryEntry, QueryRecord, UserHistory};
use crate::error::{Error, Result};
use crate::model::encoder::{init_bias, init_embedding, init_weight, AblationMask};
use crate::model::{Dims, EncoderParams};
use crate::tensor::{ParamId, ParameterStore, Tape, Tensor, Var};

/// Dropout applied to sublayer outputs while training.
pub(crate) const DROPOUT_RATE: f64 = 0.1;

/// Inference/training switches for the history-aware model.
#[derive(Debug, Clone, Copy)]
pub struct CnrmSwitches {
    /// Which feature groups enter the history representation.
    pub mask: AblationMask,
    /// Add learned position embeddings to sequence tokens.
    pub posemb: bool,
    /// Replace the current query's feature vector with a learned constant.
    pub substitute_qvec: bool,
}

impl Default for CnrmSwitches {
    fn default() -> Self {
        CnrmSwitches { mask: AblationMask::FULL, posemb: true, substitute_qvec: false }
    }
}

/// One encoded query context, optionally tagged with a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    pub query_id: String,
    pub user_id: String,
    pub c: Vec<f64>,
    pub cluster_id: Option<usize>,
}

struct HeadParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
}

struct LayerParams {
    ln1_g: ParamId,
    ln1_b: ParamId,
    heads: Vec<HeadParams>,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
}

/// Parameters owned by the history-aware model (the per-document encoder
/// is shared with the vanilla ranker and passed in separately).
pub struct ContextParams {
    pub dims: Dims,
    w_d: ParamId,
    b_d: ParamId,
    w_qd: ParamId,
    b_qd: ParamId,
    layers: Vec<LayerParams>,
    lnf_g: ParamId,
    lnf_b: ParamId,
    pos_emb: ParamId,
    w_b: ParamId,
    substitute: ParamId,
}

fn init_gain(store: &mut ParameterStore, name: &str, rows: usize) -> Result<ParamId> {
    let ones = Tensor::from_vec(rows, 1, vec![1.0; rows])?;
    store.register(name, ones, true)
}

impl ContextParams {
    pub fn new(store: &mut ParameterStore, dims: Dims, rng: &mut impl rand::Rng) -> Result<Self> {
        dims.validate()?;
        let w = dims.width();
        let dh = w / dims.heads;
        let mut layers = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let mut heads = Vec::with_capacity(dims.heads);
            for h in 0..dims.heads {
                let p = format!("ctx.l{l}.h{h}");
                heads.push(HeadParams {
                    wq: init_weight(store, &format!("{p}.wq"), dh, w, rng)?,
                    bq: init_bias(store, &format!("{p}.bq"), dh)?,
                    wk: init_weight(store, &format!("{p}.wk"), dh, w, rng)?,
                    bk: init_bias(store, &format!("{p}.bk"), dh)?,
                    wv: init_weight(store, &format!("{p}.wv"), dh, w, rng)?,
                    bv: init_bias(store, &format!("{p}.bv"), dh)?,
                });
            }
            layers.push(LayerParams {
                ln1_g: init_gain(store, &format!("ctx.l{l}.ln1.g"), w)?,
                ln1_b: init_bias(store, &format!("ctx.l{l}.ln1.b"), w)?,
                heads,
                wo: init_weight(store, &format!("ctx.l{l}.wo"), w, w, rng)?,
                bo: init_bias(store, &format!("ctx.l{l}.bo"), w)?,
                ln2_g: init_gain(store, &format!("ctx.l{l}.ln2.g"), w)?,
                ln2_b: init_bias(store, &format!("ctx.l{l}.ln2.b"), w)?,
                ff1_w: init_weight(store, &format!("ctx.l{l}.ff1.w"), dims.ff, w, rng)?,
                ff1_b: init_bias(store, &format!("ctx.l{l}.ff1.b"), dims.ff)?,
                ff2_w: init_weight(store, &format!("ctx.l{l}.ff2.w"), w, dims.ff, rng)?,
                ff2_b: init_bias(store, &format!("ctx.l{l}.ff2.b"), w)?,
            });
        }
        Ok(ContextParams {
            dims,
            w_d: init_weight(store, "ctx.w_d", w, w, rng)?,
            b_d: init_bias(store, "ctx.b_d", w)?,
            w_qd: init_weight(store, "ctx.w_qd", w, w, rng)?,
            b_qd: init_bias(store, "ctx.b_qd", w)?,
            layers,
            lnf_g: init_gain(store, "ctx.lnf.g", w)?,
            lnf_b: init_bias(store, "ctx.lnf.b", w)?,
            pos_emb: init_embedding(store, "ctx.posemb", dims.k + 1, w, rng)?,
            w_b: init_weight(store, "ctx.w_b", w, w, rng)?,
            substitute: store.register(
                "ctx.subst",
                Tensor::uniform_fan_in(w, 1, w, rng),
                false,
            )?,
        })
    }

    /// Average the positive documents of one past query into document and
    /// matching group vectors, reusing the candidate encoder's parameters.
    pub fn aggregate_positives(
        &self,
        enc: &EncoderParams,
        tape: &mut Tape,
        entry: &HistoryEntry,
    ) -> Result<(Var, Var)> {
        if entry.positives.is_empty() {
            return Err(Error::Contract("history entry has no positive documents".into()));
        }
        let d_vecs: Vec<Var> = entry
            .positives
            .iter()
            .map(|p| enc.encode_doc(tape, &p.d_disc, &p.d_cont))
            .collect::<Result<_>>()?;
        let qd_vecs: Vec<Var> = entry
            .positives
            .iter()
            .map(|p| enc.encode_qd(tape, &p.qd_cont))
            .collect::<Result<_>>()?;
        let d_stack = tape.concat_cols(&d_vecs)?;
        let d_avg = tape.mean_cols(d_stack)?;
        let qd_stack = tape.concat_cols(&qd_vecs)?;
        let qd_avg = tape.mean_cols(qd_stack)?;
        let w_d = tape.param(self.w_d);
        let b_d = tape.param(self.b_d);
        let d_lin = tape.matmul(w_d, d_avg)?;
        let d_lin = tape.add(d_lin, b_d)?;
        let h_d = tape.tanh(d_lin);
        let w_qd = tape.param(self.w_qd);
        let b_qd = tape.param(self.b_qd);
        let qd_lin = tape.matmul(w_qd, qd_avg)?;
        let qd_lin = tape.add(qd_lin, b_qd)?;
        let h_qd = tape.tanh(qd_lin);
        Ok((h_d, h_qd))
    }

    /// The overall vector of one past query: its group vectors fused by
    /// the shared aggregation, with masked-out groups zeroed beforehand.
    pub fn history_overall_vector(
        &self,
        enc: &EncoderParams,
        tape: &mut Tape,
        entry: &HistoryEntry,
        mask: AblationMask,
    ) -> Result<Var> {
        let w = self.dims.width();
        let zero = |tape: &mut Tape| tape.constant(Tensor::zeros(w, 1));
        let h_q = if mask.f_q {
            enc.encode_query(tape, &entry.q_disc, &entry.q_cont)?
        } else {
            zero(tape)
        };
        let (h_d, h_qd) = if mask.f_d || mask.f_qd {
            let (d, qd) = self.aggregate_positives(enc, tape, entry)?;
            (
                if mask.f_d { d } else { zero(tape) },
                if mask.f_qd { qd } else { zero(tape) },
            )
        } else {
            (zero(tape), zero(tape))
        };
        enc.self_attention_aggregate(tape, h_q, h_d, h_qd)
    }
}

fn maybe_dropout(tape: &mut Tape, x: Var, rng: &mut Option<&mut dyn RngCore>) -> Result<Var> {
    match rng {
        Some(r) => {
            let mut reborrow: &mut dyn RngCore = &mut **r;
            tape.dropout(x, DROPOUT_RATE, &mut reborrow)
        }
        None => Ok(x),
    }
}

/// Encode the behavior sequence into the current query's context vector.
///
/// The token sequence is `[oldest history … newest history, current query]`,
/// each history token the query's overall vector plus (optionally) the
/// position embedding of its distance from the current query; the current
/// query token is its query-group vector (or the learned substitute) plus
/// position 0. `pad_to` lengthens the history side with attention-masked
/// zero tokens, which must not change the result. The returned vector is
/// the current query's column after the final transformer layer.
#[allow(clippy::too_many_arguments)]
pub fn encode_context(
    enc: &EncoderParams,
    ctx: &ContextParams,
    tape: &mut Tape,
    history: &UserHistory,
    q_disc: &[usize],
    q_cont: &[f64],
    switches: &CnrmSwitches,
    pad_to: Option<usize>,
    mut dropout_rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let hlen = history.len();
    let k = ctx.dims.k;
    if hlen > k {
        return Err(Error::Contract(format!(
            "history length {hlen} exceeds the configured maximum {k}"
        )));
    }
    let slots = match pad_to {
        Some(p) if p < hlen => {
            return Err(Error::Dimension(format!(
                "cannot pad a history of length {hlen} down to {p}"
            )))
        }
        Some(p) if p > k => {
            return Err(Error::Contract(format!("padded length {p} exceeds the maximum {k}")))
        }
        Some(p) => p,
        None => hlen,
    };
    let w = ctx.dims.width();
    let n_pad = slots - hlen;
    let mut tokens = Vec::with_capacity(slots + 1);
    let mut valid = vec![true; slots + 1];
    for v in valid.iter_mut().take(n_pad) {
        *v = false;
    }
    tokens.resize_with(n_pad, || tape.constant(Tensor::zeros(w, 1)));
    let pos_table = tape.param(ctx.pos_emb);
    for (j, entry) in history.entries.iter().enumerate() {
        let o = ctx.history_overall_vector(enc, tape, entry, switches.mask)?;
        tokens.push(if switches.posemb {
            let pe = tape.embed(pos_table, hlen - j)?;
            tape.add(o, pe)?
        } else {
            o
        });
    }
    let q0 = if switches.substitute_qvec {
        tape.param(ctx.substitute)
    } else {
        enc.encode_query(tape, q_disc, q_cont)?
    };
    tokens.push(if switches.posemb {
        let pe = tape.embed(pos_table, 0)?;
        tape.add(q0, pe)?
    } else {
        q0
    });

    let mut x = tape.concat_cols(&tokens)?;
    let key_mask = if n_pad > 0 { Some(valid.as_slice()) } else { None };
    let dh = w / ctx.dims.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    for layer in &ctx.layers {
        let g1 = tape.param(layer.ln1_g);
        let b1 = tape.param(layer.ln1_b);
        let xn = tape.layer_norm_cols(x, g1, b1)?;
        let mut head_outs = Vec::with_capacity(ctx.dims.heads);
        for head in &layer.heads {
            let wq = tape.param(head.wq);
            let bq = tape.param(head.bq);
            let q = tape.matmul(wq, xn)?;
            let q = tape.add_col_broadcast(q, bq)?;
            let wk = tape.param(head.wk);
            let bk = tape.param(head.bk);
            let kk = tape.matmul(wk, xn)?;
            let kk = tape.add_col_broadcast(kk, bk)?;
            let wv = tape.param(head.wv);
            let bv = tape.param(head.bv);
            let v = tape.matmul(wv, xn)?;
            let v = tape.add_col_broadcast(v, bv)?;
            // scores[i, j] = key_i · query_j, so masking rows masks keys.
            let kt = tape.transpose(kk);
            let scores = tape.matmul(kt, q)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_cols(scores, key_mask)?;
            head_outs.push(tape.matmul(v, attn)?);
        }
        let merged = tape.concat_rows(&head_outs)?;
        let wo = tape.param(layer.wo);
        let bo = tape.param(layer.bo);
        let proj = tape.matmul(wo, merged)?;
        let proj = tape.add_col_broadcast(proj, bo)?;
        let proj = maybe_dropout(tape, proj, &mut dropout_rng)?;
        x = tape.add(x, proj)?;

        let g2 = tape.param(layer.ln2_g);
        let b2 = tape.param(layer.ln2_b);
        let xn2 = tape.layer_norm_cols(x, g2, b2)?;
        let f1w = tape.param(layer.ff1_w);
        let f1b = tape.param(layer.ff1_b);
        let hidden = tape.matmul(f1w, xn2)?;
        let hidden = tape.add_col_broadcast(hidden, f1b)?;
        let hidden = tape.relu(hidden);
        let f2w = tape.param(layer.ff2_w);
        let f2b = tape.param(layer.ff2_b);
        let ff = tape.matmul(f2w, hidden)?;
        let ff = tape.add_col_broadcast(ff, f2b)?;
        let ff = maybe_dropout(tape, ff, &mut dropout_rng)?;
        x = tape.add(x, ff)?;
    }
    let gf = tape.param(ctx.lnf_g);
    let bf = tape.param(ctx.lnf_b);
    let xf = tape.layer_norm_cols(x, gf, bf)?;
    tape.col(xf, slots)
}

/// Bilinear match between a candidate's aggregate vector and the context.
pub fn score_cnrm(ctx: &ContextParams, tape: &mut Tape, o: Var, c: Var) -> Result<Var> {
    let w_b = tape.param(ctx.w_b);
    let wc = tape.matmul(w_b, c)?;
    let ot = tape.transpose(o);
    tape.matmul(ot, wc)
}

/// Scores for every candidate of a record; the context is encoded once
/// and shared across candidates.
#[allow(clippy::too_many_arguments)]
pub fn score_cnrm_record(
    enc: &EncoderParams,
    ctx: &ContextParams,
    tape: &mut Tape,
    record: &QueryRecord,
    history: &UserHistory,
    switches: &CnrmSwitches,
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let c = encode_context(
        enc,
        ctx,
        tape,
        history,
        &record.q_disc,
        &record.q_cont,
        switches,
        None,
        dropout_rng,
    )?;
    let scores: Vec<Var> = record
        .candidates
        .iter()
        .map(|cand| {
            let o = enc.aggregate_candidate(tape, record, cand)?;
            score_cnrm(ctx, tape, o, c)
        })
        .collect::<Result<_>>()?;
    tape.concat_rows(&scores)
}

/// Context vectors for every record, in input order (deterministic).
pub fn export_context_rows(
    enc: &EncoderParams,
    ctx: &ContextParams,
    store: &ParameterStore,
    records: &[QueryRecord],
    histories: &std::collections::HashMap<String, UserHistory>,
    switches: &CnrmSwitches,
) -> Result<Vec<ContextVector>> {
    let empty = UserHistory::default();
    records
        .par_iter()
        .map(|rec| {
            let history = histories.get(&rec.query_id).unwrap_or(&empty);
            let mut tape = Tape::new(store);
            let c = encode_context(
                enc,
                ctx,
                &mut tape,
                history,
                &rec.q_disc,
                &rec.q_cont,
                switches,
                None,
                None,
            )?;
            let c = tape.detach(c);
            if !c.is_finite() {
                return Err(Error::Contract(format!(
                    "non-finite context vector for query {}",
                    rec.query_id
                )));
            }
            Ok(ContextVector {
                query_id: rec.query_id.clone(),
                user_id: rec.user_id.clone(),
                c: c.data().to_vec(),
                cluster_id: None,
            })
        })
        .collect()
}

/// Write context vectors as tab-separated text: query id, user id, then
/// the vector with six significant digits per component.
pub fn write_context_rows(rows: &[ContextVector], out: &mut impl Write) -> Result<()> {
    for row in rows {
        let mut line = format!("{}\t{}", row.query_id, row.user_id);
        for v in &row.c {
            line.push('\t');
            line.push_str(&format!("{v:.5e}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes())
            .map_err(|e| Error::Contract(format!("context export failed: {e}")))?;
    }
    Ok(())
}
