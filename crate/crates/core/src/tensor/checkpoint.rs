//! Model checkpoint serialization.
//!
//! Layout: a magic/version line, the parameter count, then for each
//! parameter (sorted by name) a text header `name rows cols` followed by
//! `rows*cols` raw little-endian f32 values in row-major order. Values are
//! narrowed to f32 on write and widened back on read; loaders reject any
//! version line other than the one written here.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::params::ParameterStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "CTXRANK-CKPT v1";

pub fn save_checkpoint(store: &ParameterStore, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let params = store.sorted_values();
    let io_err = |e| Error::io(path, e);
    writeln!(w, "{CHECKPOINT_MAGIC}").map_err(io_err)?;
    writeln!(w, "{}", params.len()).map_err(io_err)?;
    for (name, tensor) in params {
        writeln!(w, "{} {} {}", name, tensor.rows(), tensor.cols()).map_err(io_err)?;
        let mut bytes = Vec::with_capacity(tensor.numel() * 4);
        for &v in tensor.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&bytes).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let magic = read_line(&mut r, path)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint header {magic:?} (expected {CHECKPOINT_MAGIC:?})"
        )));
    }
    let count: usize = read_line(&mut r, path)?
        .trim()
        .parse()
        .map_err(|_| Error::Checkpoint("malformed parameter count".into()))?;

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let header = read_line(&mut r, path)?;
        let mut it = header.split_whitespace();
        let (name, rows, cols) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(n), Some(r), Some(c), None) => {
                let rows: usize = r
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad shape in header {header:?}")))?;
                let cols: usize = c
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad shape in header {header:?}")))?;
                (n.to_string(), rows, cols)
            }
            _ => return Err(Error::Checkpoint(format!("malformed parameter header {header:?}"))),
        };
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, data)?));
    }
    Ok(out)
}

fn read_line(r: &mut impl Read, path: &Path) -> Result<String> {
    // Byte-at-a-time keeps the reader positioned exactly at the start of the
    // binary payload that follows each header line.
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte) {
            Ok(0) => {
                if line.is_empty() {
                    return Err(Error::Checkpoint("unexpected end of checkpoint".into()));
                }
                break;
            }
            Ok(_) => {
                if byte[0] == b'\n' {
                    break;
                }
                line.push(byte[0]);
            }
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    String::from_utf8(line).map_err(|_| Error::Checkpoint("non-UTF8 checkpoint header".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::params::ParameterStore;

    fn sample_store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.register("b_small", Tensor::col_vec(&[0.5, -0.25]), false).unwrap();
        s.register("a_weights", Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0]).unwrap(), true)
            .unwrap();
        s
    }

    #[test]
    fn save_load_roundtrips_exactly_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = sample_store();
        save_checkpoint(&store, &path).unwrap();

        // Perturb, then load back over the store.
        let id = store.id("a_weights").unwrap();
        store.value_mut(id).data_mut()[0] = 777.0;
        let loaded = load_checkpoint(&path).unwrap();
        store.load_values(&loaded).unwrap();
        assert_eq!(store.value(id).data()[0], 1.0);
        // Entries come back sorted by name.
        assert_eq!(loaded[0].0, "a_weights");
        assert_eq!(loaded[1].0, "b_small");
    }

    #[test]
    fn loader_rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "CTXRANK-CKPT v2\n0\n").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn loader_rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        let mut bytes = format!("{CHECKPOINT_MAGIC}\n1\nw 2 2\n").into_bytes();
        bytes.extend_from_slice(&[0u8; 7]); // needs 16
        std::fs::write(&path, bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn load_values_rejects_shape_mismatch_and_unknown_names() {
        let mut store = sample_store();
        let wrong_shape = vec![("a_weights".to_string(), Tensor::zeros(1, 1))];
        assert!(matches!(store.load_values(&wrong_shape), Err(Error::Checkpoint(_))));
        let unknown = vec![("no_such".to_string(), Tensor::zeros(1, 1))];
        assert!(matches!(store.load_values(&unknown), Err(Error::Checkpoint(_))));
    }
}
