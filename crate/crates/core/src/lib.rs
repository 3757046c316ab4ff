//! Context-aware learning to rank for email search.
//!
//! The crate covers the full experimental loop: a minimal reverse-mode tensor
//! engine, the feature-based neural rankers (a vanilla per-document model and
//! a context-dependent variant that encodes the user's recent search history
//! with a transformer), dual unbiased training against two-panel position
//! bias, a from-scratch LambdaMART with k-means context-cluster features, a
//! calibrated synthetic click-log simulator, and evaluation/reporting.

pub mod data;
pub mod error;
pub mod eval;
pub mod exp;
pub mod gbdt;
pub mod model;
pub mod sim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
