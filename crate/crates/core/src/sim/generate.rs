//! Synthetic click-log generation.
//!
//! Pass 1 draws users, cohorts, and candidate features, and computes each
//! candidate's latent utility under its user's (slowly drifting) preference
//! weights. Pass 2 assigns relevance grades by global utility quantiles so
//! the realized grade shares hit the configured targets exactly, then lays
//! out the two display panels and samples clicks.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Exp, LogNormal, Normal, Poisson};
use rayon::prelude::*;

use crate::data::{CandidateDoc, FeatureSchema, QueryRecord};
use crate::error::{Error, Result};
use crate::sim::config::{default_cohorts, ClickModelConfig, SimConfig, N_SIGNALS};
use crate::sim::truth::Truth;

const EPOCH: i64 = 1_600_000_000;
const HORIZON_SECS: i64 = 120 * 24 * 3600;

/// Signal indices within the per-candidate signal vector.
pub const SIG_RECENCY: usize = 0;
pub const SIG_BM25F: usize = 1;
pub const SIG_SUBJECT: usize = 2;
pub const SIG_TO_CC: usize = 3;
pub const SIG_LENGTH: usize = 4;
pub const SIG_IS_READ: usize = 5;
pub const SIG_FLAGGED: usize = 6;

/// The schema every generated log conforms to.
pub fn simulator_schema() -> FeatureSchema {
    FeatureSchema {
        q_disc_cards: vec![4, 3], // user_type, query_language
        d_disc_cards: vec![2, 2], // is_read, flagged
        q_cont_names: vec!["query_length".into(), "hour_of_day".into()],
        d_cont_names: vec!["recency".into(), "email_length".into()],
        qd_cont_names: vec!["bm25f".into(), "subject_match".into(), "to_cc_match".into()],
        norm_stats: None,
    }
}

/// Raw signal values of one candidate, in [`super::config::SIGNAL_NAMES`]
/// order, read back out of a record's feature groups.
pub fn candidate_signals(c: &CandidateDoc) -> [f64; N_SIGNALS] {
    [
        c.d_cont[0],
        c.qd_cont[0],
        c.qd_cont[1],
        c.qd_cont[2],
        c.d_cont[1],
        c.d_disc[0] as f64,
        c.d_disc[1] as f64,
    ]
}

/// Per-query min-max normalization of each signal to [0, 1]; constant
/// signals map to 0.5. This is the scale utilities are computed on.
pub fn normalized_signals(record: &QueryRecord) -> Vec<[f64; N_SIGNALS]> {
    let raw: Vec<[f64; N_SIGNALS]> = record.candidates.iter().map(candidate_signals).collect();
    normalize_rows(&raw)
}

fn normalize_rows(raw: &[[f64; N_SIGNALS]]) -> Vec<[f64; N_SIGNALS]> {
    let mut out = vec![[0.5; N_SIGNALS]; raw.len()];
    for s in 0..N_SIGNALS {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in raw {
            lo = lo.min(row[s]);
            hi = hi.max(row[s]);
        }
        if hi > lo {
            for (o, row) in out.iter_mut().zip(raw) {
                o[s] = (row[s] - lo) / (hi - lo);
            }
        }
    }
    out
}

/// Deterministic independent RNG stream for (seed, purpose, user, query).
fn stream(seed: u64, purpose: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut x = seed;
    for v in [purpose, a, b] {
        // splitmix64 step keyed by each coordinate.
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(v);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    ChaCha8Rng::seed_from_u64(x)
}

struct PendingCandidate {
    signals: [f64; N_SIGNALS],
    utility: f64,
    grade: u8,
}

struct PendingQuery {
    user: usize,
    index: usize,
    timestamp: i64,
    q_disc: Vec<usize>,
    q_cont: Vec<f64>,
    candidates: Vec<PendingCandidate>,
}

/// Generate a full click log: records (with positions, true grades, and
/// sampled observed labels), the schema, and the ground-truth side channel.
pub fn generate_log(cfg: &SimConfig) -> Result<(Vec<QueryRecord>, FeatureSchema, Truth)> {
    cfg.validate()?;
    let cohorts = default_cohorts();

    // Pass 1: per-user feature and utility generation. The indexed parallel
    // collect preserves user order, so cohort_of[u] lines up with user u.
    let per_user: Vec<(usize, Vec<PendingQuery>)> = (0..cfg.n_users)
        .into_par_iter()
        .map(|u| generate_user(cfg, &cohorts, u))
        .collect();
    let cohort_of: Vec<usize> = per_user.iter().map(|(c, _)| *c).collect();
    let mut queries: Vec<PendingQuery> =
        per_user.into_iter().flat_map(|(_, qs)| qs).collect();

    // Pass 2: exact quantile calibration of grades over all candidates.
    let thresholds = calibrate_grades(cfg, &mut queries)?;

    // Materialize records, lay out panels, sample clicks.
    let mut records: Vec<QueryRecord> = queries
        .par_iter()
        .map(|q| {
            let mut rec = materialize(q);
            assign_positions(
                &mut rec,
                cfg.ranker_noise,
                &mut stream(cfg.seed, 2, q.user as u64, q.index as u64),
            );
            simulate_clicks(
                &mut rec,
                &cfg.click,
                &mut stream(cfg.seed, 3, q.user as u64, q.index as u64),
            )
            .expect("generated records carry true grades");
            rec
        })
        .collect();
    records.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let truth = Truth {
        click: cfg.click.clone(),
        max_pos: cfg.candidates_max,
        cohorts: records
            .iter()
            .map(|r| r.user_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|uid| {
                let idx: usize = uid[1..].parse().expect("generated user id");
                (uid, cohort_of[idx])
            })
            .collect(),
        grade_thresholds: thresholds,
    };
    Ok((records, simulator_schema(), truth))
}

fn generate_user(
    cfg: &SimConfig,
    cohorts: &[crate::sim::config::CohortProfile],
    u: usize,
) -> (usize, Vec<PendingQuery>) {
    let mut rng = stream(cfg.seed, 1, u as u64, 0);
    let cohort = sample_categorical(&cfg.cohort_mix, &mut rng);
    let center = &cohorts[cohort].utility_weights;
    let noise_std = cohorts[cohort].noise_std;
    let user_type = rng.gen_range(0..4usize);
    let language = rng.gen_range(0..3usize);

    let n_q = rng.gen_range(cfg.queries_per_user.0..=cfg.queries_per_user.1);
    let mut timestamps: Vec<i64> =
        (0..n_q).map(|_| EPOCH + rng.gen_range(0..HORIZON_SECS)).collect();
    timestamps.sort_unstable();
    for i in 1..timestamps.len() {
        if timestamps[i] <= timestamps[i - 1] {
            timestamps[i] = timestamps[i - 1] + 1;
        }
    }

    // Start near the cohort center with a small personal tilt, then random-
    // walk with mean reversion so recent behavior stays most informative.
    let mut weights: Vec<f64> = center.iter().map(|w| w + rng.gen_range(-0.03..0.03)).collect();
    renormalize(&mut weights);

    let poisson = Poisson::new(cfg.candidates_mean).expect("validated mean");
    let recency_age = Exp::new(1.0 / 30.0).expect("positive rate");
    let length_dist = LogNormal::new(5.0, 1.0).expect("valid lognormal");
    let utility_noise = Normal::new(0.0, noise_std.max(1e-12)).expect("valid normal");

    let queries = timestamps
        .into_iter()
        .enumerate()
        .map(|(qi, timestamp)| {
            for w in weights.iter_mut() {
                *w += cfg.drift_rate * rng.gen_range(-1.0..1.0);
            }
            for (w, c) in weights.iter_mut().zip(center) {
                *w += 0.1 * (c - *w);
            }
            renormalize(&mut weights);

            let n_c = (poisson.sample(&mut rng) as usize)
                .clamp(cfg.candidates_min, cfg.candidates_max);
            let raw: Vec<[f64; N_SIGNALS]> = (0..n_c)
                .map(|_| {
                    let target = rng.gen_bool(0.15);
                    let beta = |a: f64, b: f64, rng: &mut ChaCha8Rng| {
                        Beta::new(a, b).expect("valid beta").sample(rng)
                    };
                    let mut s = [0.0; N_SIGNALS];
                    let age_days: f64 = recency_age.sample(&mut rng);
                    s[SIG_RECENCY] = (-age_days / 30.0).exp();
                    s[SIG_BM25F] =
                        if target { beta(5.0, 2.0, &mut rng) } else { beta(2.0, 5.0, &mut rng) };
                    s[SIG_SUBJECT] =
                        if target { beta(4.0, 2.0, &mut rng) } else { beta(1.5, 4.0, &mut rng) };
                    s[SIG_TO_CC] =
                        if target { beta(3.0, 2.0, &mut rng) } else { beta(1.0, 5.0, &mut rng) };
                    s[SIG_LENGTH] = length_dist.sample(&mut rng);
                    s[SIG_IS_READ] = f64::from(rng.gen_bool(0.4));
                    s[SIG_FLAGGED] = f64::from(rng.gen_bool(0.15));
                    s
                })
                .collect();
            let normalized = normalize_rows(&raw);
            let candidates = raw
                .into_iter()
                .zip(&normalized)
                .map(|(signals, norm)| {
                    let base: f64 =
                        weights.iter().zip(norm).map(|(w, s)| w * s).sum();
                    PendingCandidate {
                        signals,
                        utility: base + utility_noise.sample(&mut rng),
                        grade: 0,
                    }
                })
                .collect();
            PendingQuery {
                user: u,
                index: qi,
                timestamp,
                q_disc: vec![user_type, language],
                q_cont: vec![
                    rng.gen_range(1.0f64..9.0).round(),
                    rng.gen_range(0.0f64..24.0),
                ],
                candidates,
            }
        })
        .collect();
    (cohort, queries)
}

/// Grade assignment by global utility rank: the top `f4·N` candidates get
/// grade 4, the next `f3·N` grade 3, and so on. Returns the utility
/// thresholds separating the bands (grade 4 lower bound first).
fn calibrate_grades(cfg: &SimConfig, queries: &mut [PendingQuery]) -> Result<[f64; 4]> {
    let total: usize = queries.iter().map(|q| q.candidates.len()).sum();
    let mut band_sizes = [0usize; 5];
    for g in 1..=4 {
        band_sizes[g] = (cfg.grade_fractions[g] * total as f64).round() as usize;
        if band_sizes[g] == 0 {
            return Err(Error::Config(format!(
                "grade band {g} is empty at this scale ({total} candidates); \
                 raise the corpus size or the grade fraction"
            )));
        }
    }
    let top: usize = band_sizes[1..].iter().sum();
    if top >= total {
        return Err(Error::Config("nonzero grade bands cover the whole corpus".into()));
    }

    let mut order: Vec<(usize, usize)> = Vec::with_capacity(total);
    for (qi, q) in queries.iter().enumerate() {
        for ci in 0..q.candidates.len() {
            order.push((qi, ci));
        }
    }
    order.sort_by(|&(qa, ca), &(qb, cb)| {
        let ua = queries[qa].candidates[ca].utility;
        let ub = queries[qb].candidates[cb].utility;
        ub.partial_cmp(&ua).unwrap_or(std::cmp::Ordering::Equal).then((qa, ca).cmp(&(qb, cb)))
    });

    let mut thresholds = [f64::NEG_INFINITY; 4];
    let mut cursor = 0;
    for grade in (1..=4).rev() {
        let band = band_sizes[grade];
        for &(qi, ci) in &order[cursor..cursor + band] {
            queries[qi].candidates[ci].grade = grade as u8;
        }
        cursor += band;
        let (qi, ci) = order[cursor - 1];
        thresholds[grade - 1] = queries[qi].candidates[ci].utility;
    }
    Ok(thresholds)
}

fn materialize(q: &PendingQuery) -> QueryRecord {
    let query_id = format!("q{:05}_{:03}", q.user, q.index);
    QueryRecord {
        user_id: format!("u{:05}", q.user),
        timestamp: q.timestamp,
        q_disc: q.q_disc.clone(),
        q_cont: q.q_cont.clone(),
        candidates: q
            .candidates
            .iter()
            .enumerate()
            .map(|(ci, c)| CandidateDoc {
                doc_id: format!("{query_id}_d{ci:02}"),
                d_disc: vec![c.signals[SIG_IS_READ] as usize, c.signals[SIG_FLAGGED] as usize],
                d_cont: vec![c.signals[SIG_RECENCY], c.signals[SIG_LENGTH]],
                qd_cont: vec![c.signals[SIG_BM25F], c.signals[SIG_SUBJECT], c.signals[SIG_TO_CC]],
                pos_r: 0,
                pos_t: 0,
                label_obs: 0,
                label_true: Some(c.grade),
            })
            .collect(),
        query_id,
    }
}

/// Lay out the two panels: the time panel ranks by recency, the relevance
/// panel by an intentionally imperfect production score.
pub fn assign_positions(record: &mut QueryRecord, ranker_noise: f64, rng: &mut ChaCha8Rng) {
    let raw: Vec<[f64; N_SIGNALS]> = record.candidates.iter().map(candidate_signals).collect();
    let norm = normalize_rows(&raw);
    let noise = Normal::new(0.0, ranker_noise.max(1e-12)).expect("non-negative noise");
    let prod_scores: Vec<f64> = norm
        .iter()
        .map(|s| 0.5 * s[SIG_BM25F] + 0.5 * s[SIG_RECENCY] + noise.sample(rng))
        .collect();
    let recency: Vec<f64> = raw.iter().map(|s| s[SIG_RECENCY]).collect();
    for (rank, idx) in crate::eval::rank_by_scores(&prod_scores).into_iter().enumerate() {
        record.candidates[idx].pos_r = rank + 1;
    }
    for (rank, idx) in crate::eval::rank_by_scores(&recency).into_iter().enumerate() {
        record.candidates[idx].pos_t = rank + 1;
    }
}

/// Sample observed labels through the two-panel examination model: a click
/// reveals the true grade, anything unclicked reads as grade 0.
pub fn simulate_clicks(
    record: &mut QueryRecord,
    cm: &ClickModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for c in &mut record.candidates {
        let grade = c.label_true.ok_or_else(|| {
            Error::Contract(format!("doc {} has no true grade to click on", c.doc_id))
        })?;
        let p = cm.examination(c.pos_r, c.pos_t) * cm.perception[grade as usize];
        c.label_obs = if rng.gen_bool(p.clamp(0.0, 1.0)) { grade } else { 0 };
    }
    Ok(())
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let x: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn renormalize(weights: &mut [f64]) {
    for w in weights.iter_mut() {
        *w = w.max(0.005);
    }
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{mean_ndcg, ndcg_at_k, paired_ttest, rank_by_scores, ranked_grades, spearman};
    use crate::sim::config::SIGNAL_NAMES;

    fn small_cfg(seed: u64) -> SimConfig {
        SimConfig { n_users: 120, seed, ..Default::default() }
    }

    #[test]
    fn generated_log_validates_and_is_deterministic() {
        let cfg = small_cfg(5);
        let (records, schema, _) = generate_log(&cfg).unwrap();
        for r in &records {
            r.validate(&schema).unwrap();
        }
        let (records2, _, _) = generate_log(&cfg).unwrap();
        assert_eq!(records, records2);
        let (records3, _, _) = generate_log(&small_cfg(6)).unwrap();
        assert_ne!(records, records3);
    }

    #[test]
    fn grade_shares_match_reference_counts() {
        let cfg = SimConfig { n_users: 300, seed: 11, ..Default::default() };
        let (records, _, _) = generate_log(&cfg).unwrap();
        let n_q = records.len() as f64;
        let mut counts = [0.0f64; 5];
        let mut cands = 0.0;
        for r in &records {
            cands += r.candidates.len() as f64;
            for c in &r.candidates {
                counts[c.label_true.unwrap() as usize] += 1.0;
            }
        }
        let mean_cands = cands / n_q;
        assert!((27.0..=33.0).contains(&mean_cands), "mean candidates {mean_cands}");
        let targets = [26.91, 1.87, 0.03, 0.55, 0.64];
        for (g, &target) in targets.iter().enumerate() {
            let got = counts[g] / n_q;
            let rel = (got - target).abs() / target;
            assert!(rel <= 0.25, "grade {g}: mean count {got} vs target {target}");
        }
    }

    #[test]
    fn positions_are_permutations_and_degenerate_case_matches_panels() {
        let cfg = small_cfg(7);
        let (records, _, _) = generate_log(&cfg).unwrap();
        for r in &records {
            let n = r.candidates.len();
            let mut seen_r = vec![false; n + 1];
            let mut seen_t = vec![false; n + 1];
            for c in &r.candidates {
                assert!(c.pos_r >= 1 && c.pos_r <= n && !seen_r[c.pos_r]);
                assert!(c.pos_t >= 1 && c.pos_t <= n && !seen_t[c.pos_t]);
                seen_r[c.pos_r] = true;
                seen_t[c.pos_t] = true;
            }
        }
        // Zero ranker noise + constant bm25f: the production score reduces
        // to recency, so the two panels agree.
        let mut rec = records[0].clone();
        for c in &mut rec.candidates {
            c.qd_cont[0] = 0.5;
        }
        assign_positions(&mut rec, 0.0, &mut stream(1, 9, 0, 0));
        for c in &rec.candidates {
            assert_eq!(c.pos_r, c.pos_t);
        }
    }

    #[test]
    fn ranker_noise_degrades_position_grade_correlation() {
        let corr_at = |noise: f64| -> f64 {
            let cfg = SimConfig { n_users: 80, ranker_noise: noise, seed: 3, ..Default::default() };
            let (records, _, _) = generate_log(&cfg).unwrap();
            let mut pos = Vec::new();
            let mut grade = Vec::new();
            for r in records.iter().take(1000) {
                for c in &r.candidates {
                    pos.push(c.pos_r as f64);
                    grade.push(c.label_true.unwrap() as f64);
                }
            }
            spearman(&pos, &grade).unwrap()
        };
        // Correlation is negative (position 1 is best); less noise = stronger.
        let tight = corr_at(0.05);
        let loose = corr_at(2.0);
        assert!(tight < loose, "tight {tight} vs loose {loose}");
        assert!(tight < -0.15, "tight correlation too weak: {tight}");
    }

    #[test]
    fn labels_never_inflate_and_grade_zero_never_clicks() {
        let (records, _, _) = generate_log(&small_cfg(13)).unwrap();
        for r in &records {
            for c in &r.candidates {
                assert!(c.label_obs <= c.label_true.unwrap());
                if c.label_true.unwrap() == 0 {
                    assert_eq!(c.label_obs, 0);
                }
            }
        }
    }

    #[test]
    fn no_bias_limit_reveals_every_perceived_label() {
        let mut cfg = small_cfg(17);
        cfg.click =
            ClickModelConfig { eta_r: 0.0, eta_t: 0.0, rho_r: 1.0, rho_t: 0.0, perception: [0.0, 1.0, 1.0, 1.0, 1.0] };
        let (records, _, _) = generate_log(&cfg).unwrap();
        for r in &records {
            for c in &r.candidates {
                assert_eq!(c.label_obs, c.label_true.unwrap());
            }
        }
    }

    #[test]
    fn click_rate_halves_from_position_one_to_two() {
        let cm = ClickModelConfig {
            eta_r: 1.0,
            eta_t: 0.0,
            rho_r: 0.8,
            rho_t: 0.0,
            perception: [0.0, 1.0, 1.0, 1.0, 1.0],
        };
        let mut rec = crate::data::tiny_record("q", "u", 1);
        for (i, c) in rec.candidates.iter_mut().enumerate() {
            c.label_true = Some(4);
            c.pos_r = i + 1;
            c.pos_t = i + 1;
        }
        let mut clicks = [0u32; 2];
        let trials: u64 = 100_000;
        for t in 0..trials {
            let mut r = rec.clone();
            simulate_clicks(&mut r, &cm, &mut stream(42, 4, t, 0)).unwrap();
            for (i, c) in r.candidates.iter().enumerate() {
                if c.label_obs > 0 {
                    clicks[i] += 1;
                }
            }
        }
        let ratio = clicks[1] as f64 / clicks[0] as f64;
        assert!((ratio - 0.5).abs() < 0.05, "pos2/pos1 click ratio {ratio}");
    }

    #[test]
    fn observed_positive_rate_drops_with_position() {
        let (records, _, _) =
            generate_log(&SimConfig { n_users: 300, seed: 23, ..Default::default() }).unwrap();
        let mut impressions = 0u32;
        let mut hits = [0u32; 2]; // [pos_r=1, pos_r=10] with true grade >= 3
        let mut seen = [0u32; 2];
        for r in &records {
            impressions += r.candidates.len() as u32;
            for c in &r.candidates {
                if c.label_true.unwrap() >= 3 {
                    let slot = match c.pos_r {
                        1 => 0,
                        10 => 1,
                        _ => continue,
                    };
                    seen[slot] += 1;
                    if c.label_obs > 0 {
                        hits[slot] += 1;
                    }
                }
            }
        }
        assert!(impressions >= 10_000);
        assert!(seen[0] > 50 && seen[1] > 50, "need matched grades at both depths");
        let rate1 = hits[0] as f64 / seen[0] as f64;
        let rate10 = hits[1] as f64 / seen[1] as f64;
        assert!(rate1 >= rate10, "positive rate at pos 1 ({rate1}) < pos 10 ({rate10})");
    }

    #[test]
    fn cohort_oracle_beats_global_average_weights() {
        let cfg = SimConfig { n_users: 250, seed: 31, ..Default::default() };
        let (records, _, truth) = generate_log(&cfg).unwrap();
        let cohorts = default_cohorts();
        let cohort_by_user: std::collections::HashMap<&str, usize> =
            truth.cohorts.iter().map(|(u, c)| (u.as_str(), *c)).collect();
        let mut global = vec![0.0; N_SIGNALS];
        for (mix, profile) in cfg.cohort_mix.iter().zip(&cohorts) {
            for (g, w) in global.iter_mut().zip(&profile.utility_weights) {
                *g += mix * w;
            }
        }
        let score_with = |weights: &[f64], r: &QueryRecord| -> Option<f64> {
            let norm = normalized_signals(r);
            let scores: Vec<f64> = norm
                .iter()
                .map(|s| weights.iter().zip(s).map(|(w, v)| w * v).sum())
                .collect();
            let order = rank_by_scores(&scores);
            let grades = ranked_grades(r, &order, true).unwrap();
            ndcg_at_k(&grades, 5).unwrap()
        };
        let mut oracle = Vec::new();
        let mut blended = Vec::new();
        for r in &records {
            let cohort = cohort_by_user[r.user_id.as_str()];
            let (a, b) = (
                score_with(&cohorts[cohort].utility_weights, r),
                score_with(&global, r),
            );
            if let (Some(a), Some(b)) = (a, b) {
                oracle.push(a);
                blended.push(b);
            }
        }
        let t = paired_ttest(&oracle, &blended).unwrap();
        assert!(
            mean_ndcg(&oracle.iter().copied().map(Some).collect::<Vec<_>>())
                > mean_ndcg(&blended.iter().copied().map(Some).collect::<Vec<_>>())
        );
        assert!(t.p < 0.05, "cohort oracle not separable: p = {}", t.p);
        assert!(t.t > 0.0);
    }

    #[test]
    fn signal_names_align_with_record_layout() {
        let schema = simulator_schema();
        assert_eq!(SIGNAL_NAMES[SIG_RECENCY], schema.d_cont_names[0]);
        assert_eq!(SIGNAL_NAMES[SIG_LENGTH], schema.d_cont_names[1]);
        assert_eq!(SIGNAL_NAMES[SIG_BM25F], schema.qd_cont_names[0]);
        assert_eq!(SIGNAL_NAMES[SIG_SUBJECT], schema.qd_cont_names[1]);
        assert_eq!(SIGNAL_NAMES[SIG_TO_CC], schema.qd_cont_names[2]);
    }

    #[test]
    fn infeasible_grade_bands_error_out() {
        // 1 user x 11 queries x ~12 candidates ~= 130 candidates: the 0.1%
        // grade-2 band rounds to zero documents -> config error.
        let cfg = SimConfig {
            n_users: 1,
            queries_per_user: (11, 11),
            candidates_mean: 12.0,
            candidates_min: 5,
            candidates_max: 20,
            ..Default::default()
        };
        match generate_log(&cfg) {
            Err(Error::Config(msg)) => assert!(msg.contains("grade band")),
            other => panic!("expected config error, got {:?}", other.map(|_| "ok")),
        }
    }
}
