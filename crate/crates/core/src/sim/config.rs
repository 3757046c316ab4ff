//! Simulator configuration: user cohorts, click model, and corpus shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranking signals a cohort can care about, in weight-vector order.
pub const SIGNAL_NAMES: [&str; 7] =
    ["recency", "bm25f", "subject_match", "to_cc_match", "email_length", "is_read", "flagged"];

pub const N_SIGNALS: usize = 7;

/// One latent user group: how strongly each signal drives its members'
/// perceived utility, plus idiosyncratic noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortProfile {
    pub cohort_id: usize,
    /// Non-negative weights over [`SIGNAL_NAMES`], summing to 1.
    pub utility_weights: Vec<f64>,
    pub noise_std: f64,
}

impl CohortProfile {
    pub fn validate(&self) -> Result<()> {
        if self.utility_weights.len() != N_SIGNALS {
            return Err(Error::Config(format!(
                "cohort {} has {} weights, expected {N_SIGNALS}",
                self.cohort_id,
                self.utility_weights.len()
            )));
        }
        if self.utility_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config(format!("cohort {} has negative weights", self.cohort_id)));
        }
        let sum: f64 = self.utility_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "cohort {} weights sum to {sum}, expected 1",
                self.cohort_id
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Default cohorts: recency-driven, relevance-driven, sender/field-match
/// driven, and recency-plus-length readers. Email search skews towards
/// recent mail, so the first and last cohorts are recency-heavy while
/// text-match weight concentrates in cohort 1 and field matches in
/// cohort 2.
pub fn default_cohorts() -> Vec<CohortProfile> {
    let weights = [
        vec![0.72, 0.07, 0.04, 0.03, 0.03, 0.05, 0.06],
        vec![0.15, 0.45, 0.15, 0.10, 0.05, 0.05, 0.05],
        vec![0.10, 0.12, 0.36, 0.26, 0.05, 0.04, 0.07],
        vec![0.45, 0.08, 0.05, 0.03, 0.25, 0.05, 0.09],
    ];
    weights
        .into_iter()
        .enumerate()
        .map(|(cohort_id, utility_weights)| CohortProfile {
            cohort_id,
            utility_weights,
            noise_std: 0.05,
        })
        .collect()
}

/// Two-panel position-biased examination plus graded perception.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClickModelConfig {
    /// Position-decay exponents for the relevance and time panels.
    pub eta_r: f64,
    pub eta_t: f64,
    /// Panel attention weights in [0, 1].
    pub rho_r: f64,
    pub rho_t: f64,
    /// P(click | examined, grade), indexed by grade 0..=4.
    pub perception: [f64; 5],
}

impl ClickModelConfig {
    /// Probability that a document at `(pos_r, pos_t)` is examined at all:
    /// one minus the probability both panels miss it.
    pub fn examination(&self, pos_r: usize, pos_t: usize) -> f64 {
        let miss_r = 1.0 - self.rho_r * (pos_r as f64).powf(-self.eta_r);
        let miss_t = 1.0 - self.rho_t * (pos_t as f64).powf(-self.eta_t);
        1.0 - miss_r * miss_t
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta_r < 0.0 || self.eta_t < 0.0 {
            return Err(Error::Config("position-decay exponents must be >= 0".into()));
        }
        for (name, rho) in [("rho_r", self.rho_r), ("rho_t", self.rho_t)] {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {rho}")));
            }
        }
        if self.perception[0] != 0.0 {
            return Err(Error::Config("perception of grade 0 must be 0".into()));
        }
        for w in self.perception.windows(2) {
            if w[1] < w[0] {
                return Err(Error::Config("perception must be non-decreasing in grade".into()));
            }
        }
        if self.perception.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Config("perception values must be probabilities".into()));
        }
        Ok(())
    }
}

impl Default for ClickModelConfig {
    fn default() -> Self {
        // Perception ties click propensity to the exponential-gain scale.
        ClickModelConfig {
            eta_r: 1.0,
            eta_t: 1.0,
            rho_r: 0.85,
            rho_t: 0.35,
            perception: [0.0, 1.0 / 15.0, 3.0 / 15.0, 7.0 / 15.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    /// Inclusive range; the minimum must exceed 10 so every simulated user
    /// passes the activity filter the corpus statistics assume.
    pub queries_per_user: (usize, usize),
    /// Candidate-count distribution: Poisson(mean) clamped to [min, max].
    pub candidates_mean: f64,
    pub candidates_min: usize,
    pub candidates_max: usize,
    pub n_cohorts: usize,
    /// Mixture over cohorts; must sum to 1.
    pub cohort_mix: Vec<f64>,
    /// Target share of candidates per grade 0..=4; grades are calibrated by
    /// global utility quantiles to hit these shares exactly.
    pub grade_fractions: [f64; 5],
    /// Per-query random-walk step of each user's preference weights.
    pub drift_rate: f64,
    /// Gaussian noise in the production ranker that assigns pos_r.
    pub ranker_noise: f64,
    pub click: ClickModelConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        // Grade shares follow the reference per-query averages
        // 26.91/1.87/0.03/0.55/0.64 out of 30 candidates.
        SimConfig {
            n_users: 2000,
            queries_per_user: (11, 14),
            candidates_mean: 30.0,
            candidates_min: 10,
            candidates_max: 50,
            n_cohorts: 4,
            cohort_mix: vec![0.45, 0.22, 0.13, 0.20],
            grade_fractions: [
                26.91 / 30.0,
                1.87 / 30.0,
                0.03 / 30.0,
                0.55 / 30.0,
                0.64 / 30.0,
            ],
            drift_rate: 0.02,
            ranker_noise: 0.35,
            click: ClickModelConfig::default(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        let (lo, hi) = self.queries_per_user;
        if lo < 11 || hi < lo {
            return Err(Error::Config(format!(
                "queries_per_user range ({lo}, {hi}) must satisfy 11 <= min <= max"
            )));
        }
        if self.candidates_max > 50 || self.candidates_min < 1 {
            return Err(Error::Config("candidate counts must lie within 1..=50".into()));
        }
        if self.candidates_min > self.candidates_max
            || self.candidates_mean < self.candidates_min as f64
            || self.candidates_mean > self.candidates_max as f64
        {
            return Err(Error::Config("candidate mean must lie within [min, max]".into()));
        }
        if self.n_cohorts == 0 || self.n_cohorts > default_cohorts().len() {
            return Err(Error::Config(format!(
                "n_cohorts must be in 1..={}",
                default_cohorts().len()
            )));
        }
        if self.cohort_mix.len() != self.n_cohorts {
            return Err(Error::Config("cohort_mix length must equal n_cohorts".into()));
        }
        if self.cohort_mix.iter().any(|&p| p < 0.0)
            || (self.cohort_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config("cohort_mix must be a probability vector".into()));
        }
        if self.grade_fractions.iter().any(|&f| f <= 0.0)
            || (self.grade_fractions.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return Err(Error::Config("grade_fractions must be positive and sum to 1".into()));
        }
        if self.drift_rate < 0.0 || self.ranker_noise < 0.0 {
            return Err(Error::Config("drift_rate and ranker_noise must be >= 0".into()));
        }
        self.click.validate()?;
        for profile in default_cohorts().iter().take(self.n_cohorts) {
            profile.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SimConfig::default().validate().unwrap();
        for c in default_cohorts() {
            c.validate().unwrap();
        }
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut c = SimConfig { queries_per_user: (5, 20), ..Default::default() };
        assert!(c.validate().is_err());
        c.queries_per_user = (11, 14);
        c.candidates_max = 51;
        assert!(c.validate().is_err());
        c.candidates_max = 50;
        c.cohort_mix = vec![0.5, 0.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn click_model_rejects_non_monotone_perception() {
        let mut cm = ClickModelConfig::default();
        cm.perception = [0.0, 0.5, 0.3, 0.7, 1.0];
        assert!(cm.validate().is_err());
        cm.perception = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert!(cm.validate().is_err(), "perception(0) must be zero");
    }

    #[test]
    fn examination_limits_behave() {
        let cm = ClickModelConfig { eta_r: 0.0, eta_t: 0.0, rho_r: 1.0, rho_t: 0.0, ..Default::default() };
        // Flat full-attention relevance panel examines everything.
        assert_eq!(cm.examination(1, 50), 1.0);
        assert_eq!(cm.examination(37, 2), 1.0);
        let cm = ClickModelConfig::default();
        assert!(cm.examination(1, 1) > cm.examination(10, 10));
    }
}
