//! On-disk index layout.
//!
//! `index.bin`: little-endian header `dim: u32`, `snapshot_id: u64`,
//! `count: u64`, then `count * dim` `f32` values in insertion order.
//! `index_meta.jsonl`: one [`MemoryEntry`] (minus its vector) per line, in
//! the same order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingVector, MemoryEntry, RetrievalError, RetrievalIndex};
use crate::corpus::{read_jsonl, write_jsonl};

pub const INDEX_FILE: &str = "index.bin";
pub const INDEX_META_FILE: &str = "index_meta.jsonl";

pub fn save_index(index: &RetrievalIndex, dir: &Path) -> Result<(), RetrievalError> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&(index.dim() as u32).to_le_bytes())?;
        w.write_all(&index.snapshot_id().to_le_bytes())?;
        w.write_all(&(index.len() as u64).to_le_bytes())?;
        for e in index.entries() {
            for v in &e.vector.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    write_jsonl(&dir.join(INDEX_META_FILE), index.entries())
        .map_err(|e| RetrievalError::Format(e.to_string()))?;
    fs::rename(&tmp, dir.join(INDEX_FILE))?;
    Ok(())
}

pub fn load_index(dir: &Path) -> Result<RetrievalIndex, RetrievalError> {
    let mut r = BufReader::new(File::open(dir.join(INDEX_FILE))?);
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let snapshot_id = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;

    let mut entries: Vec<MemoryEntry> = read_jsonl(&dir.join(INDEX_META_FILE))
        .map_err(|e| RetrievalError::Format(e.to_string()))?;
    if entries.len() != count {
        return Err(RetrievalError::Format(format!(
            "header says {count} entries, sidecar has {}",
            entries.len()
        )));
    }
    for e in &mut entries {
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut b4)?;
            values.push(f32::from_le_bytes(b4));
        }
        e.vector = EmbeddingVector { values };
    }
    if r.read(&mut b4)? != 0 {
        return Err(RetrievalError::Format("trailing bytes after vectors".into()));
    }
    RetrievalIndex::from_entries(entries, dim, snapshot_id)
}
