use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Coarse failure category of a diagnostic. Reporting and simulation only;
/// the policy always sees raw feedback text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureTag {
    UnsolvedGoals,
    TacticFailure,
    TypeMismatch,
    UnknownIdentifier,
    IncompleteCases,
    Timeout,
    NoLeanCodeFound,
}

impl FailureTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureTag::UnsolvedGoals => "unsolved_goals",
            FailureTag::TacticFailure => "tactic_failure",
            FailureTag::TypeMismatch => "type_mismatch",
            FailureTag::UnknownIdentifier => "unknown_identifier",
            FailureTag::IncompleteCases => "incomplete_cases",
            FailureTag::Timeout => "timeout",
            FailureTag::NoLeanCodeFound => "no_lean_code_found",
        }
    }
}

impl fmt::Display for FailureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Literal feedback recorded when a completion has no extractable code.
pub const NO_LEAN_CODE_FOUND: &str = "no_lean_code_found";

/// Removes ANSI CSI escape sequences (`ESC [` parameters, intermediates,
/// final byte). Every other byte is kept as is, including an unterminated
/// escape. Repeats until no sequence is left, since removing one can join
/// the bytes around it into another.
pub fn sanitize_feedback(raw: &str) -> String {
    let mut text = strip_csi_once(raw);
    while text.contains("\u{1b}[") {
        let next = strip_csi_once(&text);
        if next.len() == text.len() {
            break;
        }
        text = next;
    }
    text
}

fn strip_csi_once(raw: &str) -> String {
    let bytes = raw.as_bytes();
    let mut out = String::with_capacity(raw.len());
    let mut copy_from = 0usize;
    let mut i = 0usize;
    while i < bytes.len() {
        if bytes[i] == 0x1b && bytes.get(i + 1) == Some(&b'[') {
            let mut j = i + 2;
            while j < bytes.len() && (0x30..=0x3f).contains(&bytes[j]) {
                j += 1;
            }
            while j < bytes.len() && (0x20..=0x2f).contains(&bytes[j]) {
                j += 1;
            }
            if j < bytes.len() && (0x40..=0x7e).contains(&bytes[j]) {
                out.push_str(&raw[copy_from..i]);
                i = j + 1;
                copy_from = i;
                continue;
            }
        }
        i += 1;
    }
    out.push_str(&raw[copy_from..]);
    out
}

fn rules() -> &'static [(FailureTag, Regex)] {
    static RULES: OnceLock<Vec<(FailureTag, Regex)>> = OnceLock::new();
    RULES.get_or_init(|| {
        let rule = |tag, pattern: &str| (tag, Regex::new(pattern).expect("valid tag pattern"));
        vec![
            rule(FailureTag::UnsolvedGoals, r"(?i)unsolved goals"),
            rule(
                FailureTag::TacticFailure,
                r"(?i)tactic '[^']+' failed|\b(linarith|nlinarith|omega|simp|simp_all|norm_num|decide|ring|ring_nf|positivity|aesop|assumption|polyrith|field_simp|exact\?|apply\?|rfl)\s+failed",
            ),
            rule(FailureTag::TypeMismatch, r"(?i)type mismatch"),
            rule(
                FailureTag::UnknownIdentifier,
                r"(?i)unknown (identifier|constant|namespace)",
            ),
            rule(
                FailureTag::IncompleteCases,
                r"(?i)alternative .* has not been provided|missing cases",
            ),
            rule(
                FailureTag::Timeout,
                r"(?i)\btimeout\b|timed out|maximum number of heartbeats",
            ),
            rule(FailureTag::NoLeanCodeFound, r"no_lean_code_found"),
        ]
    })
}

/// Substring-rule tagging of a diagnostic; multiple tags may apply.
pub fn tag_feedback(feedback: &str) -> BTreeSet<FailureTag> {
    rules()
        .iter()
        .filter(|(_, re)| re.is_match(feedback))
        .map(|(tag, _)| *tag)
        .collect()
}
