//! Paired two-tailed t-test and Spearman rank correlation.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    /// (mean(a) - mean(b)) / |mean(b)|.
    pub mean_rel_improvement: f64,
    /// Set when the differences had zero variance (p is then a sentinel).
    pub degenerate: bool,
}

/// Paired two-tailed t-test of `a` against `b` (paired by index).
///
/// Zero-variance differences short-circuit: identical samples give p = 1,
/// a constant nonzero shift gives the p = 0 sentinel with `degenerate` set.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract(format!(
            "paired test needs equal-length samples of >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mean_rel_improvement =
        if mean_b.abs() > 1e-300 { (mean_a - mean_b) / mean_b.abs() } else { 0.0 };

    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_d = diffs.iter().sum::<f64>() / n;
    let var_d = diffs.iter().map(|d| (d - mean_d) * (d - mean_d)).sum::<f64>() / (n - 1.0);
    if var_d == 0.0 {
        let (t, p) = if mean_d == 0.0 { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
        return Ok(TTest { t, p, mean_rel_improvement, degenerate: true });
    }
    let t = mean_d / (var_d / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Contract(format!("t-distribution setup failed: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest { t, p, mean_rel_improvement, degenerate: false })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Contract("spearman needs equal-length samples of >= 2".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Contract("spearman undefined for constant input".into()));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // 1-based average rank across the tie run [i, j].
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &slot in &idx[i..=j] {
            ranks[slot] = avg;
        }
        i = j + 1;
    }
    ranks
}
