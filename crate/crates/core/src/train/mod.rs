//! Dual training loop: the ranking model learns from propensity-weighted
//! clicks while the examination model learns from relevance-weighted
//! clicks, both updated in the same optimizer step. Batches shuffle per
//! epoch, the learning rate warms up linearly then decays as inverse
//! square root, and the best checkpoint is chosen by validation NDCG@5
//! on observed labels.

mod loss;

pub use loss::{examination_loss, ipw_ranking_loss, listwise_loss};

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{FeatureSchema, QueryRecord, UserHistory};
use crate::error::{Error, Result};
use crate::eval::{mean_ndcg, ndcg_at_k, rank_by_scores, ranked_grades};
use crate::model::{
    score_cnrm_record, score_nrm_record, CnrmSwitches, ContextParams, Dims, EncoderParams,
    ExaminationParams,
};
use crate::tensor::{AdamConfig, Gradients, ParameterStore, Tape};

/// Which ranking model to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Per-document ranker without history.
    Nrm,
    /// History-aware ranker.
    Cnrm,
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<ModelKind> {
        match name {
            "nrm" => Ok(ModelKind::Nrm),
            "cnrm" => Ok(ModelKind::Cnrm),
            other => Err(Error::Config(format!("unknown model {other:?} (expected nrm|cnrm)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Nrm => "nrm",
            ModelKind::Cnrm => "cnrm",
        }
    }
}

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub l2: f64,
    /// Learn an examination model and weight clicks by inverse propensity.
    pub unbiased: bool,
    /// Upper bound on any propensity/relevance ratio weight.
    pub weight_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 10,
            lr: 0.002,
            warmup_steps: 2000,
            beta1: 0.9,
            beta2: 0.999,
            l2: 1e-5,
            unbiased: true,
            weight_clip: 10.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if self.lr <= 0.0 || self.weight_clip <= 0.0 || self.l2 < 0.0 {
            return Err(Error::Config(
                "learning rate and weight clip must be positive, l2 non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup must cover at least one step".into()));
        }
        Ok(())
    }
}

/// Linear warmup to `base` over `warmup` steps, then inverse-square-root
/// decay; `step` is one-based.
pub fn lr_at(step: u64, base: f64, warmup: u64) -> f64 {
    let t = step.max(1) as f64;
    let w = warmup.max(1) as f64;
    base * (t / w).min((w / t).sqrt())
}

/// One curve row per optimizer step; the validation column is `NaN`
/// except on the step that closed an epoch.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub step: u64,
    pub l_r: f64,
    pub l_e: f64,
    pub lr: f64,
    pub val_ndcg5: f64,
}

/// Write the training curve as tab-separated text with a header.
pub fn write_curve(points: &[CurvePoint], out: &mut impl Write) -> Result<()> {
    let mut text = String::from("step\tl_r\tl_e\tlr\tval_ndcg5\n");
    for p in points {
        text.push_str(&format!(
            "{}\t{:.8}\t{:.8}\t{:.8}\t{}\n",
            p.step, p.l_r, p.l_e, p.lr, p.val_ndcg5
        ));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| Error::Contract(format!("curve export failed: {e}")))
}

/// A trained ranker: parameter store plus the handles to read it, the
/// training curve, and bookkeeping from the loop.
pub struct TrainedModel {
    pub kind: ModelKind,
    pub dims: Dims,
    pub switches: CnrmSwitches,
    pub store: ParameterStore,
    pub enc: EncoderParams,
    pub ctx: Option<ContextParams>,
    pub exam: Option<ExaminationParams>,
    pub best_val_ndcg5: f64,
    pub curve: Vec<CurvePoint>,
    pub skipped_queries: usize,
}

impl TrainedModel {
    /// Inference scores for one record (no dropout).
    pub fn score_record(
        &self,
        record: &QueryRecord,
        histories: &HashMap<String, UserHistory>,
    ) -> Result<Vec<f64>> {
        score_with(
            self.kind,
            &self.enc,
            self.ctx.as_ref(),
            &self.switches,
            &self.store,
            record,
            histories,
        )
    }
}

/// Fresh parameter store with all models registered in a fixed order, so
/// checkpoints can be reloaded into an identically-shaped store.
pub fn init_model(
    kind: ModelKind,
    dims: Dims,
    schema: &FeatureSchema,
    with_exam: bool,
    seed: u64,
) -> Result<(ParameterStore, EncoderParams, Option<ContextParams>, Option<ExaminationParams>)> {
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x1217]));
    let enc = EncoderParams::new(&mut store, schema, dims, &mut rng)?;
    let ctx = match kind {
        ModelKind::Cnrm => Some(ContextParams::new(&mut store, dims, &mut rng)?),
        ModelKind::Nrm => None,
    };
    let exam = if with_exam {
        Some(ExaminationParams::new(&mut store, dims.m, &mut rng)?)
    } else {
        None
    };
    Ok((store, enc, ctx, exam))
}

/// Score one record with either model kind against a given store.
pub fn score_with(
    kind: ModelKind,
    enc: &EncoderParams,
    ctx: Option<&ContextParams>,
    switches: &CnrmSwitches,
    store: &ParameterStore,
    record: &QueryRecord,
    histories: &HashMap<String, UserHistory>,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new(store);
    let s = match kind {
        ModelKind::Nrm => score_nrm_record(enc, &mut tape, record)?,
        ModelKind::Cnrm => {
            let ctx = ctx.ok_or_else(|| {
                Error::Contract("history model scoring without context parameters".into())
            })?;
            let empty = UserHistory::default();
            let hist = histories.get(&record.query_id).unwrap_or(&empty);
            score_cnrm_record(enc, ctx, &mut tape, record, hist, switches, None)?
        }
    };
    Ok(tape.detach(s).data().to_vec())
}

/// Mean NDCG@5 on observed labels over a record set.
pub fn observed_ndcg5(
    kind: ModelKind,
    enc: &EncoderParams,
    ctx: Option<&ContextParams>,
    switches: &CnrmSwitches,
    store: &ParameterStore,
    records: &[QueryRecord],
    histories: &HashMap<String, UserHistory>,
) -> Result<f64> {
    let per_query: Vec<Option<f64>> = records
        .par_iter()
        .map(|r| {
            let scores = score_with(kind, enc, ctx, switches, store, r, histories)?;
            let order = rank_by_scores(&scores);
            let grades = ranked_grades(r, &order, false)?;
            ndcg_at_k(&grades, 5)
        })
        .collect::<Result<_>>()?;
    Ok(mean_ndcg(&per_query))
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed derivation for independent random streams.
fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243f_6a88_85a3_08d3, |acc, &p| mix(acc ^ mix(p)))
}

fn ensure_finite(step: u64, l_r: f64, l_e: f64) -> Result<()> {
    if l_r.is_finite() && l_e.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(format!(
            "non-finite loss at step {step}: ranking {l_r}, examination {l_e}"
        )))
    }
}

struct QueryPass {
    grads: Option<Gradients>,
    l_r: f64,
    l_e: f64,
    skipped: bool,
}

#[allow(clippy::too_many_arguments)]
fn query_pass(
    kind: ModelKind,
    enc: &EncoderParams,
    ctx: Option<&ContextParams>,
    exam: Option<&ExaminationParams>,
    switches: &CnrmSwitches,
    store: &ParameterStore,
    record: &QueryRecord,
    histories: &HashMap<String, UserHistory>,
    cfg: &TrainConfig,
    dropout_seed: u64,
    grad_seed: f64,
) -> Result<QueryPass> {
    let mut tape = Tape::new(store);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let s_r = match kind {
        ModelKind::Nrm => score_nrm_record(enc, &mut tape, record)?,
        ModelKind::Cnrm => {
            let ctx = ctx.ok_or_else(|| {
                Error::Contract("history model training without context parameters".into())
            })?;
            let empty = UserHistory::default();
            let hist = histories.get(&record.query_id).unwrap_or(&empty);
            score_cnrm_record(
                enc,
                ctx,
                &mut tape,
                record,
                hist,
                switches,
                Some(&mut dropout_rng),
            )?
        }
    };
    let y: Vec<u8> = record.candidates.iter().map(|c| c.label_obs).collect();
    let pos_r: Vec<usize> = record.candidates.iter().map(|c| c.pos_r).collect();

    let (loss, l_r, l_e) = match exam {
        Some(exam) => {
            let s_e_parts: Vec<_> = record
                .candidates
                .iter()
                .map(|c| exam.examination_score(&mut tape, c.pos_r, c.pos_t))
                .collect::<Result<_>>()?;
            let s_e = tape.concat_rows(&s_e_parts)?;
            let s_e_vals = tape.detach(s_e).data().to_vec();
            let s_r_vals = tape.detach(s_r).data().to_vec();
            let Some(l_r) =
                ipw_ranking_loss(&mut tape, s_r, &s_e_vals, &y, &pos_r, cfg.weight_clip)?
            else {
                return Ok(QueryPass { grads: None, l_r: 0.0, l_e: 0.0, skipped: true });
            };
            let l_e = examination_loss(&mut tape, s_e, &s_r_vals, &y, &pos_r, cfg.weight_clip)?
                .expect("reference document found by the ranking loss");
            let combined = tape.add(l_r, l_e)?;
            (combined, tape.value(l_r).item(), tape.value(l_e).item())
        }
        None => {
            let l_r = listwise_loss(&mut tape, s_r, &y)?;
            (l_r, tape.value(l_r).item(), 0.0)
        }
    };
    let grads = tape.backward(loss, grad_seed)?;
    Ok(QueryPass { grads: Some(grads), l_r, l_e, skipped: false })
}

/// Train a ranker (and, when unbiased, its examination model) and return
/// the parameters that scored best on validation.
#[allow(clippy::too_many_arguments)]
pub fn train_dual(
    kind: ModelKind,
    dims: Dims,
    switches: &CnrmSwitches,
    schema: &FeatureSchema,
    train: &[QueryRecord],
    valid: &[QueryRecord],
    histories: &HashMap<String, UserHistory>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("no training queries".into()));
    }
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = (batches_per_epoch * cfg.epochs) as u64;
    if cfg.warmup_steps >= total_steps {
        return Err(Error::Config(format!(
            "warmup of {} steps must stay below the {total_steps} total steps",
            cfg.warmup_steps
        )));
    }
    let (mut store, enc, ctx, exam) =
        init_model(kind, dims, schema, cfg.unbiased, cfg.seed)?;

    let mut curve = Vec::with_capacity(total_steps as usize);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_snapshot: Option<Vec<crate::tensor::Tensor>> = None;
    let mut skipped_total = 0usize;
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let shuffle_seed = derive_seed(&[cfg.seed, 0x5, epoch as u64]);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));

        for (batch_i, chunk) in order.chunks(cfg.batch_size).enumerate() {
            step += 1;
            let grad_seed = 1.0 / chunk.len() as f64;
            let passes: Vec<QueryPass> = chunk
                .par_iter()
                .enumerate()
                .map(|(slot, &qi)| {
                    let dropout_seed = derive_seed(&[
                        cfg.seed,
                        0xD0,
                        epoch as u64,
                        batch_i as u64,
                        slot as u64,
                    ]);
                    query_pass(
                        kind,
                        &enc,
                        ctx.as_ref(),
                        exam.as_ref(),
                        switches,
                        &store,
                        &train[qi],
                        histories,
                        cfg,
                        dropout_seed,
                        grad_seed,
                    )
                })
                .collect::<Result<_>>()?;

            let used = passes.iter().filter(|p| !p.skipped).count();
            skipped_total += passes.len() - used;
            if used == 0 {
                continue;
            }
            let l_r = passes.iter().filter(|p| !p.skipped).map(|p| p.l_r).sum::<f64>()
                / used as f64;
            let l_e = passes.iter().filter(|p| !p.skipped).map(|p| p.l_e).sum::<f64>()
                / used as f64;
            ensure_finite(step, l_r, l_e)?;
            for pass in passes {
                if let Some(g) = pass.grads {
                    store.accumulate(g);
                }
            }
            let lr_now = lr_at(step, cfg.lr, cfg.warmup_steps);
            store.adam_step(&AdamConfig {
                lr: lr_now,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eps: 1e-8,
                l2: cfg.l2,
            });
            store.zero_grad();
            curve.push(CurvePoint { step, l_r, l_e, lr: lr_now, val_ndcg5: f64::NAN });
        }

        let val =
            observed_ndcg5(kind, &enc, ctx.as_ref(), switches, &store, valid, histories)?;
        if let Some(last) = curve.last_mut() {
            last.val_ndcg5 = val;
        }
        if val > best_val {
            best_val = val;
            best_snapshot = Some(store.snapshot());
        }
    }
    if let Some(snap) = &best_snapshot {
        store.restore(snap)?;
    }
    Ok(TrainedModel {
        kind,
        dims,
        switches: *switches,
        store,
        enc,
        ctx,
        exam,
        best_val_ndcg5: best_val,
        curve,
        skipped_queries: skipped_total,
    })
}
