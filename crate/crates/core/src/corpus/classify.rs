//! LLM-backed domain/difficulty labeling of statements.

use serde::Deserialize;

use super::types::{Difficulty, Domain, StatementLabels, TheoremStatement};
use crate::policy::{GenerateRequest, PolicyClient, PolicyError, SamplingParams};

pub const CLASSIFICATION_TEMPLATE: &str = include_str!("classification_prompt.txt");

const STATEMENT_SLOT: &str = "{FORMAL_STATEMENT}";

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("labeler response did not parse: {reason}")]
    LabelParseError { reason: String, raw: String },
    #[error("labeler unavailable: {0}")]
    LabelerUnavailable(#[source] PolicyError),
    #[error("statement is empty")]
    EmptyStatement,
}

pub fn render_classification_prompt(lean_statement: &str) -> String {
    CLASSIFICATION_TEMPLATE.replacen(STATEMENT_SLOT, lean_statement, 1)
}

#[derive(Deserialize)]
struct RawLabels {
    domain: String,
    difficulty: String,
    rationale: String,
}

/// Accepts exactly one JSON object on a single line, with a valid domain,
/// a valid difficulty and a rationale string.
pub fn parse_label_response(raw: &str) -> Result<StatementLabels, ClassifyError> {
    let fail = |reason: String| ClassifyError::LabelParseError {
        reason,
        raw: raw.to_string(),
    };
    let body = raw.trim();
    if body.is_empty() {
        return Err(fail("empty response".into()));
    }
    if body.contains('\n') {
        return Err(fail("response spans more than one line".into()));
    }
    let parsed: RawLabels =
        serde_json::from_str(body).map_err(|e| fail(format!("not a label object: {e}")))?;
    let domain = parsed.domain.parse::<Domain>().map_err(fail)?;
    let difficulty = parsed.difficulty.parse::<Difficulty>().map_err(fail)?;
    Ok(StatementLabels {
        domain,
        difficulty,
        rationale: parsed.rationale,
    })
}

/// Asks `labeler` to classify `statement` and writes the labels onto it.
pub fn classify_statement(
    statement: &mut TheoremStatement,
    labeler: &dyn PolicyClient,
    params: &SamplingParams,
) -> Result<StatementLabels, ClassifyError> {
    if statement.lean_statement.trim().is_empty() {
        return Err(ClassifyError::EmptyStatement);
    }
    let prompt = render_classification_prompt(&statement.lean_statement);
    let request = GenerateRequest {
        statement_id: &statement.id,
        sample_index: 0,
        round_index: 0,
        seed: 0,
        prompt: &prompt,
        params,
    };
    let raw = labeler
        .generate(&request)
        .map_err(ClassifyError::LabelerUnavailable)?;
    let labels = parse_label_response(&raw)?;
    statement.set_labels(labels.clone());
    Ok(labels)
}
