//! Statements, verified proofs, trajectories and repair examples, persisted
//! as append-only JSONL record files.

mod classify;
mod store;
mod types;

pub use classify::{
    classify_statement, parse_label_response, render_classification_prompt, ClassifyError,
    CLASSIFICATION_TEMPLATE,
};
pub use store::{
    corpus_stats, read_jsonl, write_jsonl, Corpus, PROOFS_FILE, REPAIRS_FILE, STATEMENTS_FILE,
    TRAJECTORIES_FILE,
};
pub use types::{
    proof_id, statement_id, CorpusDelta, CorpusStats, Difficulty, Domain, RepairExample, Source,
    StatementLabels, TheoremStatement, VerifiedProof,
};

use std::collections::HashSet;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("unknown statement id {0:?}")]
    UnknownStatement(String),
}

/// Canonical form used for statement identity: Lean comments removed,
/// whitespace runs collapsed to one space, ends trimmed.
pub fn normalize_signature(text: &str) -> String {
    let stripped = strip_lean_comments(text);
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes `-- line` comments and (nested) `/- block -/` comments.
fn strip_lean_comments(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut i = 0usize;
    let mut copy_from = 0usize;
    while i < bytes.len() {
        if depth == 0 && bytes[i] == b'-' && bytes.get(i + 1) == Some(&b'-') {
            out.push_str(&text[copy_from..i]);
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            copy_from = i;
            continue;
        }
        if bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'-') {
            if depth == 0 {
                out.push_str(&text[copy_from..i]);
            }
            depth += 1;
            i += 2;
            continue;
        }
        if depth > 0 && bytes[i] == b'-' && bytes.get(i + 1) == Some(&b'/') {
            depth -= 1;
            i += 2;
            if depth == 0 {
                // a removed comment still separates tokens
                out.push(' ');
                copy_from = i;
            }
            continue;
        }
        i += 1;
    }
    if depth == 0 {
        out.push_str(&text[copy_from..]);
    }
    out
}

/// Keeps the first statement of every class of equal normalized signatures,
/// preserving input order.
pub fn dedup_statements(statements: Vec<TheoremStatement>) -> Vec<TheoremStatement> {
    let mut seen = HashSet::new();
    statements
        .into_iter()
        .filter(|s| seen.insert(normalize_signature(&s.lean_statement)))
        .collect()
}
