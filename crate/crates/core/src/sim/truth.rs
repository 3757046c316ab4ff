//! Ground-truth side channel: true examination propensities and cohort
//! assignments. Written for audits and acceptance checks; never read by
//! training code.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::config::ClickModelConfig;

#[derive(Debug, Clone)]
pub struct Truth {
    pub click: ClickModelConfig,
    /// Largest position either panel can show.
    pub max_pos: usize,
    /// (user_id, cohort_id), sorted by user_id.
    pub cohorts: Vec<(String, usize)>,
    /// Utility cutoffs between grade bands, lower bound of grades 1..=4.
    pub grade_thresholds: [f64; 4],
}

/// Write `propensity.tsv` (pos_r, pos_t, examination probability) and
/// `cohorts.tsv` (user_id, cohort_id) into `dir`.
pub fn export_truth(truth: &Truth, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prop_path = dir.join("propensity.tsv");
    let file = File::create(&prop_path).map_err(|e| Error::io(&prop_path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "pos_r\tpos_t\tpropensity").map_err(|e| Error::io(&prop_path, e))?;
    for pos_r in 1..=truth.max_pos {
        for pos_t in 1..=truth.max_pos {
            writeln!(w, "{pos_r}\t{pos_t}\t{:.10}", truth.click.examination(pos_r, pos_t))
                .map_err(|e| Error::io(&prop_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&prop_path, e))?;

    let cohort_path = dir.join("cohorts.tsv");
    let file = File::create(&cohort_path).map_err(|e| Error::io(&cohort_path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "user_id\tcohort_id").map_err(|e| Error::io(&cohort_path, e))?;
    for (user, cohort) in &truth.cohorts {
        writeln!(w, "{user}\t{cohort}").map_err(|e| Error::io(&cohort_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&cohort_path, e))
}

/// Read back the cohort table written by [`export_truth`].
pub fn load_cohorts(path: &Path) -> Result<Vec<(String, usize)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next().and_then(|c| c.parse().ok())) {
            (Some(user), Some(cohort)) => out.push((user.to_string(), cohort)),
            _ => return Err(Error::Parse { line: i + 1, msg: "bad cohort row".into() }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_truth() -> Truth {
        Truth {
            click: ClickModelConfig::default(),
            max_pos: 5,
            cohorts: vec![("u00000".into(), 2), ("u00001".into(), 0)],
            grade_thresholds: [0.9, 0.8, 0.7, 0.6],
        }
    }

    #[test]
    fn propensity_rows_reproduce_the_examination_formula() {
        let dir = tempfile::tempdir().unwrap();
        let truth = sample_truth();
        export_truth(&truth, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("propensity.tsv")).unwrap();
        let mut rows = 0;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            let (pr, pt): (usize, usize) = (cols[0].parse().unwrap(), cols[1].parse().unwrap());
            let p: f64 = cols[2].parse().unwrap();
            assert!((p - truth.click.examination(pr, pt)).abs() < 1e-9);
            rows += 1;
        }
        assert_eq!(rows, 25);
    }

    #[test]
    fn cohort_table_roundtrips_one_row_per_user() {
        let dir = tempfile::tempdir().unwrap();
        let truth = sample_truth();
        export_truth(&truth, dir.path()).unwrap();
        let back = load_cohorts(&dir.path().join("cohorts.tsv")).unwrap();
        assert_eq!(back, truth.cohorts);
    }
}
