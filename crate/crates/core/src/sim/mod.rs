//! Synthetic two-panel email-search click-log simulator.
//!
//! Users belong to latent cohorts with distinct preferences over seven
//! ranking signals; relevance grades are calibrated to reference per-grade
//! frequencies; observed labels pass through a position-biased two-panel
//! examination model. Ground truth (cohorts, propensities) is exported on
//! the side for audits only.

mod config;
mod generate;
mod truth;

pub use config::{
    default_cohorts, ClickModelConfig, CohortProfile, SimConfig, N_SIGNALS, SIGNAL_NAMES,
};
pub use generate::{
    assign_positions, candidate_signals, generate_log, normalized_signals, simulate_clicks,
    simulator_schema, SIG_BM25F, SIG_FLAGGED, SIG_IS_READ, SIG_LENGTH, SIG_RECENCY, SIG_SUBJECT,
    SIG_TO_CC,
};
pub use truth::{export_truth, load_cohorts, Truth};
