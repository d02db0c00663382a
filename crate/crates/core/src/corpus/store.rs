use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::types::{
    CorpusDelta, CorpusStats, RepairExample, StatementLabels, TheoremStatement, VerifiedProof,
};
use super::CorpusError;
use crate::engine::Trajectory;

pub const STATEMENTS_FILE: &str = "statements.jsonl";
pub const PROOFS_FILE: &str = "proofs.jsonl";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const REPAIRS_FILE: &str = "repairs.jsonl";

/// Reads one record per non-empty line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|source| io_err(path, source))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| io_err(path, source))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes (truncating) one record per line.
pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| io_err(parent, source))?;
        }
    }
    let file = File::create(path).map_err(|source| io_err(path, source))?;
    let mut w = BufWriter::new(file);
    for r in records {
        write_line(&mut w, r).map_err(|source| io_err(path, source))?;
    }
    w.flush().map_err(|source| io_err(path, source))
}

fn append_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), CorpusError> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| io_err(path, source))?;
    let mut w = BufWriter::new(file);
    for r in records {
        write_line(&mut w, r).map_err(|source| io_err(path, source))?;
    }
    w.flush().map_err(|source| io_err(path, source))
}

fn write_line<W: Write, T: Serialize>(w: &mut W, record: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// In-memory corpus, optionally mirrored to a directory of append-only
/// record files. All mutation goes through `&mut self`, so one owner is the
/// single writer; readers work on clones.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    dir: Option<PathBuf>,
    statements: Vec<TheoremStatement>,
    statement_index: HashMap<String, usize>,
    proofs: Vec<VerifiedProof>,
    proof_keys: HashSet<(String, String)>,
    trajectories: Vec<Trajectory>,
    repairs: Vec<RepairExample>,
}

impl Corpus {
    pub fn in_memory() -> Self {
        Corpus::default()
    }

    /// Opens (creating if needed) a corpus directory and replays its files.
    /// Later statement records with an existing id overwrite earlier ones.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| io_err(&dir, source))?;
        let mut corpus = Corpus::default();

        let path = dir.join(STATEMENTS_FILE);
        if path.exists() {
            for s in read_jsonl::<TheoremStatement>(&path)? {
                corpus.upsert_statement(s.with_content_id())?;
            }
        }
        let path = dir.join(PROOFS_FILE);
        if path.exists() {
            let proofs = read_jsonl::<VerifiedProof>(&path)?;
            corpus.ingest_verified(proofs)?;
        }
        let path = dir.join(TRAJECTORIES_FILE);
        if path.exists() {
            corpus.trajectories = read_jsonl(&path)?;
        }
        let path = dir.join(REPAIRS_FILE);
        if path.exists() {
            corpus.repairs = read_jsonl(&path)?;
        }
        corpus.dir = Some(dir);
        Ok(corpus)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn statements(&self) -> &[TheoremStatement] {
        &self.statements
    }

    pub fn proofs(&self) -> &[VerifiedProof] {
        &self.proofs
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn repairs(&self) -> &[RepairExample] {
        &self.repairs
    }

    pub fn statement(&self, id: &str) -> Option<&TheoremStatement> {
        self.statement_index.get(id).map(|&i| &self.statements[i])
    }

    fn upsert_statement(&mut self, s: TheoremStatement) -> Result<bool, CorpusError> {
        s.validate()?;
        match self.statement_index.get(&s.id) {
            Some(&i) => {
                self.statements[i] = s;
                Ok(false)
            }
            None => {
                self.statement_index.insert(s.id.clone(), self.statements.len());
                self.statements.push(s);
                Ok(true)
            }
        }
    }

    /// Adds statements not already present (by id). Returns how many were new.
    pub fn add_statements(
        &mut self,
        statements: impl IntoIterator<Item = TheoremStatement>,
    ) -> Result<usize, CorpusError> {
        let mut fresh = Vec::new();
        for s in statements {
            let s = s.with_content_id();
            s.validate()?;
            if self.statement_index.contains_key(&s.id) {
                continue;
            }
            self.upsert_statement(s.clone())?;
            fresh.push(s);
        }
        if let Some(dir) = &self.dir {
            if !fresh.is_empty() {
                append_jsonl(&dir.join(STATEMENTS_FILE), &fresh)?;
            }
        }
        Ok(fresh.len())
    }

    /// Overwrites the labels of a known statement.
    pub fn set_labels(&mut self, id: &str, labels: StatementLabels) -> Result<(), CorpusError> {
        let idx = *self
            .statement_index
            .get(id)
            .ok_or_else(|| CorpusError::UnknownStatement(id.to_string()))?;
        self.statements[idx].set_labels(labels);
        if let Some(dir) = &self.dir {
            append_jsonl(&dir.join(STATEMENTS_FILE), [&self.statements[idx]])?;
        }
        Ok(())
    }

    /// Appends proofs whose statement is known and whose
    /// (statement_id, proof_text) pair is new.
    pub fn ingest_verified(
        &mut self,
        proofs: impl IntoIterator<Item = VerifiedProof>,
    ) -> Result<CorpusDelta, CorpusError> {
        let mut delta = CorpusDelta::default();
        let mut fresh = Vec::new();
        for p in proofs {
            if !self.statement_index.contains_key(&p.statement_id) {
                delta.rejected.push(p.statement_id.clone());
                continue;
            }
            if p.proof_text.trim().is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "empty proof for statement {:?}",
                    p.statement_id
                )));
            }
            let key = (p.statement_id.clone(), p.proof_text.clone());
            if self.proof_keys.insert(key) {
                delta.added += 1;
                fresh.push(p);
            } else {
                delta.skipped += 1;
            }
        }
        if let Some(dir) = &self.dir {
            if !fresh.is_empty() {
                append_jsonl(&dir.join(PROOFS_FILE), &fresh)?;
            }
        }
        self.proofs.extend(fresh);
        Ok(delta)
    }

    pub fn append_trajectories(&mut self, trajectories: &[Trajectory]) -> Result<(), CorpusError> {
        if let Some(dir) = &self.dir {
            append_jsonl(&dir.join(TRAJECTORIES_FILE), trajectories)?;
        }
        self.trajectories.extend_from_slice(trajectories);
        Ok(())
    }

    pub fn append_repairs(&mut self, repairs: &[RepairExample]) -> Result<(), CorpusError> {
        if let Some(dir) = &self.dir {
            append_jsonl(&dir.join(REPAIRS_FILE), repairs)?;
        }
        self.repairs.extend_from_slice(repairs);
        Ok(())
    }

    /// Rewrites every record file from the in-memory state, dropping
    /// superseded statement records.
    pub fn compact(&self) -> Result<(), CorpusError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        write_atomic(&dir.join(STATEMENTS_FILE), &self.statements)?;
        write_atomic(&dir.join(PROOFS_FILE), &self.proofs)?;
        write_atomic(&dir.join(TRAJECTORIES_FILE), &self.trajectories)?;
        write_atomic(&dir.join(REPAIRS_FILE), &self.repairs)
    }

    pub fn stats(&self) -> CorpusStats {
        let mut stats = CorpusStats {
            statement_count: self.statements.len(),
            verified_proof_count: self.proofs.len(),
            trajectory_count: self.trajectories.len(),
            repair_example_count: self.repairs.len(),
            ..CorpusStats::default()
        };
        for s in &self.statements {
            if let (Some(d), Some(l)) = (s.domain_label, s.difficulty_label) {
                *stats.domain_histogram.entry(d).or_default() += 1;
                *stats.difficulty_histogram.entry(l).or_default() += 1;
            }
        }
        stats
    }

    /// SHA-256 over the canonical serialization of statements and proofs,
    /// in corpus order.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.statements {
            hasher.update(serde_json::to_vec(s).expect("statement serializes"));
            hasher.update(b"\n");
        }
        hasher.update(b"--\n");
        for p in &self.proofs {
            hasher.update(serde_json::to_vec(p).expect("proof serializes"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

fn write_atomic<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let tmp = path.with_extension("jsonl.tmp");
    write_jsonl(&tmp, records)?;
    fs::rename(&tmp, path).map_err(|source| io_err(path, source))
}

/// Free-function form of [`Corpus::stats`].
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    corpus.stats()
}
