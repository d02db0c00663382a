use serde::{Deserialize, Serialize};

use crate::engine::InteractionState;
use crate::tokenize::token_count;

/// The single template used at every round.
pub const PROMPT_TEMPLATE: &str = include_str!("prompt_template.txt");

/// Prompt budget in module tokens.
pub const MAX_PROMPT_TOKENS: usize = 14_000;

/// Reference slots the template provides.
const RETRIEVED_SLOTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub rendered_text: String,
    pub statement_tokens: usize,
    pub retrieved_tokens: usize,
    pub feedback_tokens: usize,
    pub truncated: bool,
}

impl PromptBundle {
    pub fn total_tokens(&self) -> usize {
        token_count(&self.rendered_text)
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Statement,
    Retrieved1,
    Retrieved2,
    PreviousAttempt,
    Feedback,
}

const SLOTS: [(&str, Slot); 5] = [
    ("{FORMAL_STATEMENT}", Slot::Statement),
    ("{RETRIEVED_PROOF_1}", Slot::Retrieved1),
    ("{RETRIEVED_PROOF_2}", Slot::Retrieved2),
    ("{PREVIOUS_PROOF_ATTEMPT}", Slot::PreviousAttempt),
    ("{LEAN_ERROR_MESSAGES}", Slot::Feedback),
];

struct Fields<'a> {
    statement: &'a str,
    retrieved: [&'a str; RETRIEVED_SLOTS],
    attempt: &'a str,
    feedback: &'a str,
}

/// Single pass over the template so substituted text is never re-scanned
/// for placeholders.
fn fill(fields: &Fields<'_>) -> String {
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + 256);
    let mut rest = PROMPT_TEMPLATE;
    loop {
        let next = SLOTS
            .iter()
            .filter_map(|(name, slot)| rest.find(name).map(|at| (at, *name, *slot)))
            .min_by_key(|(at, _, _)| *at);
        let Some((at, name, slot)) = next else {
            out.push_str(rest);
            return out;
        };
        out.push_str(&rest[..at]);
        out.push_str(match slot {
            Slot::Statement => fields.statement,
            Slot::Retrieved1 => fields.retrieved[0],
            Slot::Retrieved2 => fields.retrieved[1],
            Slot::PreviousAttempt => fields.attempt,
            Slot::Feedback => fields.feedback,
        });
        rest = &rest[at + name.len()..];
    }
}

/// Renders the round prompt for `state`.
///
/// Over-budget prompts are trimmed in this order: drop the second reference,
/// drop the first reference, then keep only the final lines of the feedback
/// that fit. The statement and previous attempt are never trimmed, so a
/// prompt whose statement and attempt alone exceed the budget stays over it.
pub fn render_prompt(state: &InteractionState, max_prompt_tokens: usize) -> PromptBundle {
    let mut retrieved = [""; RETRIEVED_SLOTS];
    for (slot, entry) in retrieved.iter_mut().zip(&state.retrieved) {
        *slot = entry.proof_text.as_str();
    }
    let feedback_full = state.prev_feedback.as_deref().unwrap_or("");
    let mut fields = Fields {
        statement: &state.statement.lean_statement,
        retrieved,
        attempt: state.prev_attempt.as_deref().unwrap_or(""),
        feedback: feedback_full,
    };

    let mut rendered = fill(&fields);
    let mut truncated = false;
    for slot in (0..RETRIEVED_SLOTS).rev() {
        if token_count(&rendered) <= max_prompt_tokens {
            break;
        }
        if !fields.retrieved[slot].is_empty() {
            fields.retrieved[slot] = "";
            truncated = true;
            rendered = fill(&fields);
        }
    }
    if token_count(&rendered) > max_prompt_tokens && !fields.feedback.is_empty() {
        truncated = true;
        let without_feedback = token_count(&rendered) - token_count(fields.feedback);
        let room = max_prompt_tokens.saturating_sub(without_feedback);
        fields.feedback = feedback_tail(feedback_full, room);
        rendered = fill(&fields);
    }

    PromptBundle {
        statement_tokens: token_count(fields.statement),
        retrieved_tokens: fields.retrieved.iter().map(|r| token_count(r)).sum(),
        feedback_tokens: token_count(fields.feedback),
        rendered_text: rendered,
        truncated,
    }
}

/// Longest suffix of whole lines of `feedback` holding at most `room` tokens.
fn feedback_tail(feedback: &str, room: usize) -> &str {
    let mut start = feedback.len();
    let mut used = 0usize;
    for (idx, line) in line_starts(feedback).into_iter().rev() {
        let tokens = token_count(line);
        if used + tokens > room {
            break;
        }
        used += tokens;
        start = idx;
    }
    &feedback[start..]
}

fn line_starts(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        out.push((offset, line));
        offset += line.len();
    }
    out
}
