//! Z-score normalization of continuous features, fitted on training data.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSchema, QueryRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct FeatStat {
    pub mean: f64,
    pub std: f64,
}

/// Fit per-feature mean/std over `q_cont ++ d_cont ++ qd_cont` and freeze
/// them into the schema. Must be called on the training partition only;
/// validation/test records are normalized with these statistics unchanged.
pub fn fit_normalization(train: &[QueryRecord], schema: &mut FeatureSchema) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Contract("cannot fit normalization on an empty partition".into()));
    }
    let dim = schema.cont_dim();
    let mut sum = vec![0.0f64; dim];
    let mut sumsq = vec![0.0f64; dim];
    let mut count = vec![0u64; dim];
    let qd_off = schema.q_cont_dim();
    let dd_off = qd_off + schema.d_cont_dim();
    let mut tally = |offset: usize, values: &[f64]| {
        for (i, &v) in values.iter().enumerate() {
            sum[offset + i] += v;
            sumsq[offset + i] += v * v;
            count[offset + i] += 1;
        }
    };
    for r in train {
        tally(0, &r.q_cont);
        for c in &r.candidates {
            tally(qd_off, &c.d_cont);
            tally(dd_off, &c.qd_cont);
        }
    }
    let stats = (0..dim)
        .map(|i| {
            let n = count[i] as f64;
            let mean = sum[i] / n;
            let var = (sumsq[i] / n - mean * mean).max(0.0);
            FeatStat { mean, std: var.sqrt() }
        })
        .collect();
    schema.norm_stats = Some(stats);
    Ok(())
}

/// Apply the schema's frozen statistics in place. Zero-variance features
/// map to 0.
pub fn apply_normalization(records: &mut [QueryRecord], schema: &FeatureSchema) -> Result<()> {
    let stats = schema
        .norm_stats
        .as_ref()
        .ok_or_else(|| Error::Contract("normalization stats not fitted".into()))?;
    if stats.len() != schema.cont_dim() {
        return Err(Error::Schema("norm_stats length does not match schema".into()));
    }
    let qd_off = schema.q_cont_dim();
    let dd_off = qd_off + schema.d_cont_dim();
    let z = |offset: usize, values: &mut [f64]| {
        for (i, v) in values.iter_mut().enumerate() {
            let s = stats[offset + i];
            *v = if s.std > 0.0 { (*v - s.mean) / s.std } else { 0.0 };
        }
    };
    for r in records.iter_mut() {
        z(0, &mut r.q_cont);
        for c in &mut r.candidates {
            z(qd_off, &mut c.d_cont);
            z(dd_off, &mut c.qd_cont);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{tiny_record, tiny_schema};

    #[test]
    fn definition_case_mean_five_std_two() {
        let mut schema = tiny_schema();
        // Two records give q_cont[0] values {3, 7}: mean 5, population std 2.
        let mut train = vec![tiny_record("q1", "u1", 1), tiny_record("q2", "u1", 2)];
        train[1].q_cont[0] = 7.0;
        fit_normalization(&train, &mut schema).unwrap();
        let s = schema.norm_stats.as_ref().unwrap()[0];
        assert_eq!((s.mean, s.std), (5.0, 2.0));
        let mut probe = vec![tiny_record("q3", "u1", 3)];
        probe[0].q_cont[0] = 7.0;
        apply_normalization(&mut probe, &schema).unwrap();
        assert_eq!(probe[0].q_cont[0], 1.0);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let mut schema = tiny_schema();
        let mut train = vec![tiny_record("q1", "u1", 1), tiny_record("q2", "u1", 2)];
        // hour is 14.0 in both records -> zero variance.
        fit_normalization(&train, &mut schema).unwrap();
        apply_normalization(&mut train, &schema).unwrap();
        assert_eq!(train[0].q_cont[1], 0.0);
        assert_eq!(train[1].q_cont[1], 0.0);
    }

    #[test]
    fn test_records_use_train_stats_not_their_own() {
        let mut schema = tiny_schema();
        let mut train = vec![tiny_record("q1", "u1", 1), tiny_record("q2", "u1", 2)];
        train[1].q_cont[0] = 7.0;
        fit_normalization(&train, &mut schema).unwrap();
        // A test record with value 9: normalized against train stats (5, 2),
        // it must come out as 2.0, not 0.0 (its own z-score).
        let mut test = vec![tiny_record("t1", "u9", 99)];
        test[0].q_cont[0] = 9.0;
        apply_normalization(&mut test, &schema).unwrap();
        assert_eq!(test[0].q_cont[0], 2.0);
    }

    #[test]
    fn normalized_train_features_have_zero_mean_unit_std() {
        let mut schema = tiny_schema();
        let mut train: Vec<_> = (0..40)
            .map(|i| {
                let mut r = tiny_record(&format!("q{i}"), "u1", i as i64);
                r.q_cont[0] = (i as f64) * 0.37 + ((i * i) % 7) as f64;
                for (j, c) in r.candidates.iter_mut().enumerate() {
                    c.d_cont[0] = (i + j) as f64 * 0.11;
                    c.qd_cont[2] = ((i * 3 + j) % 5) as f64;
                }
                r
            })
            .collect();
        fit_normalization(&train, &mut schema).unwrap();
        apply_normalization(&mut train, &schema).unwrap();
        let vals: Vec<f64> = train.iter().map(|r| r.q_cont[0]).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-3, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-2, "std {}", var.sqrt());
    }
}
