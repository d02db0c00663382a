use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::CorpusError;

/// Where a statement entered the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Public,
    Synthesized,
    Rollout,
}

impl Default for Source {
    fn default() -> Self {
        Source::Public
    }
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!("invalid {}: {s:?}", stringify!($name)))
            }
        }
    };
}

label_enum!(
    /// Primary mathematical domain of a statement.
    Domain {
        Algebra,
        NumberTheory,
        Analysis,
        Topology,
        Geometry,
        Combinatorics,
        ProbabilityStatistics,
        LogicFoundations,
        Computation,
        Other,
    }
);

label_enum!(
    /// Mathematical sophistication needed to prove a statement.
    Difficulty {
        Elementary,
        HighSchool,
        Undergraduate,
        GraduatePlus,
    }
);

/// Domain/difficulty classification with its short justification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementLabels {
    pub domain: Domain,
    pub difficulty: Difficulty,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremStatement {
    #[serde(default)]
    pub id: String,
    pub lean_statement: String,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_label: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty_label: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_rationale: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl TheoremStatement {
    /// Builds a statement whose id is derived from its normalized text.
    pub fn new(lean_statement: impl Into<String>, source: Source) -> Self {
        let lean_statement = lean_statement.into();
        TheoremStatement {
            id: statement_id(&lean_statement),
            lean_statement,
            source,
            domain_label: None,
            difficulty_label: None,
            label_rationale: None,
            extra: Map::new(),
        }
    }

    /// Fills a missing id from the statement text.
    pub fn with_content_id(mut self) -> Self {
        if self.id.is_empty() {
            self.id = statement_id(&self.lean_statement);
        }
        self
    }

    pub fn labels(&self) -> Option<StatementLabels> {
        match (self.domain_label, self.difficulty_label) {
            (Some(domain), Some(difficulty)) => Some(StatementLabels {
                domain,
                difficulty,
                rationale: self.label_rationale.clone().unwrap_or_default(),
            }),
            _ => None,
        }
    }

    pub fn set_labels(&mut self, labels: StatementLabels) {
        self.domain_label = Some(labels.domain);
        self.difficulty_label = Some(labels.difficulty);
        self.label_rationale = Some(labels.rationale);
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.lean_statement.trim().is_empty() {
            return Err(CorpusError::Invalid(format!(
                "statement {:?} has empty text",
                self.id
            )));
        }
        if self.domain_label.is_some() != self.difficulty_label.is_some() {
            return Err(CorpusError::Invalid(format!(
                "statement {:?} carries only one of domain/difficulty labels",
                self.id
            )));
        }
        Ok(())
    }
}

/// Content-addressed identifier of a statement: a prefix of the SHA-256 of
/// its normalized signature.
pub fn statement_id(lean_statement: &str) -> String {
    let normalized = super::normalize_signature(lean_statement);
    let digest = Sha256::digest(normalized.as_bytes());
    format!("s-{}", &hex::encode(digest)[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedProof {
    pub statement_id: String,
    pub proof_text: String,
    #[serde(default)]
    pub verified_at_iteration: u32,
    #[serde(default)]
    pub verifier_metadata: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl VerifiedProof {
    pub fn new(
        statement_id: impl Into<String>,
        proof_text: impl Into<String>,
        verified_at_iteration: u32,
        verifier_metadata: impl Into<String>,
    ) -> Self {
        VerifiedProof {
            statement_id: statement_id.into(),
            proof_text: proof_text.into(),
            verified_at_iteration,
            verifier_metadata: verifier_metadata.into(),
            extra: Map::new(),
        }
    }

    /// Stable reference to this proof, derived from (statement_id, proof_text).
    pub fn id(&self) -> String {
        proof_id(&self.statement_id, &self.proof_text)
    }
}

pub fn proof_id(statement_id: &str, proof_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(statement_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(proof_text.as_bytes());
    format!("p-{}", &hex::encode(hasher.finalize())[..16])
}

/// One supervised repair transition `(s, R_t, p_{t-1}, f_{t-1}) -> p_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairExample {
    pub statement_id: String,
    pub retrieved_ids: Vec<String>,
    /// Memory snapshot the retrieved ids resolve against.
    #[serde(default)]
    pub snapshot_id: u64,
    pub prev_proof: String,
    pub prev_feedback: String,
    pub target_proof: String,
    pub source_trajectory: String,
    pub round_index: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub statement_count: usize,
    pub verified_proof_count: usize,
    pub trajectory_count: usize,
    pub repair_example_count: usize,
    pub domain_histogram: BTreeMap<Domain, usize>,
    pub difficulty_histogram: BTreeMap<Difficulty, usize>,
}

/// Outcome of one [`super::Corpus::ingest_verified`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDelta {
    pub added: usize,
    pub skipped: usize,
    /// Statement ids that did not resolve; those records were not stored.
    pub rejected: Vec<String>,
}
