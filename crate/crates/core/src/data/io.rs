//! Dataset and schema files: JSON-lines records, JSON schema.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::{FeatureSchema, QueryRecord};
use crate::error::{Error, Result};

/// Load and validate every record. Malformed lines report their 1-based line
/// number; structural violations surface as schema errors.
pub fn load_dataset(path: &Path, schema: &FeatureSchema) -> Result<Vec<QueryRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
        record.validate(schema)?;
        records.push(record);
    }
    Ok(records)
}

pub fn save_dataset(records: &[QueryRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Schema(format!("record serialization failed: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let schema: FeatureSchema = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Schema(format!("schema file {}: {e}", path.display())))?;
    schema.validate()?;
    Ok(schema)
}

pub fn save_schema(schema: &FeatureSchema, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), schema)
        .map_err(|e| Error::Schema(format!("schema serialization failed: {e}")))
}
