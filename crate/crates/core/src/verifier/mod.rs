//! Proof verification behind one interface: a remote Lean-server client and
//! a deterministic simulator, plus feedback sanitization and tagging.

mod feedback;
mod remote;
pub mod simulated;

pub use feedback::{sanitize_feedback, tag_feedback, FailureTag, NO_LEAN_CODE_FOUND};
pub use remote::{RemoteVerifier, RemoteVerifierConfig};
pub use simulated::{DefectPattern, SimulatedVerifier};

use std::collections::BTreeSet;
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Per-request timeout used for evaluation sweeps.
pub const EVAL_TIMEOUT_MS: u64 = 240_000;
/// Per-request timeout used for RL-style rollout collection.
pub const RL_TIMEOUT_MS: u64 = 120_000;
pub const EVAL_HEARTBEAT_CAP: u64 = 4_000_000;
pub const RL_HEARTBEAT_CAP: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub verified: bool,
    /// Sanitized raw diagnostics; this exact text is what the policy sees.
    pub feedback: String,
    pub elapsed_ms: u64,
    #[serde(default)]
    pub failure_tags: BTreeSet<FailureTag>,
}

impl Verdict {
    /// Builds a verdict from a backend answer: strips escapes, tags failures.
    pub fn from_backend(verified: bool, raw_diagnostics: &str, elapsed_ms: u64) -> Self {
        let feedback = sanitize_feedback(raw_diagnostics);
        let failure_tags = if verified {
            BTreeSet::new()
        } else {
            tag_feedback(&feedback)
        };
        Verdict {
            verified,
            feedback,
            elapsed_ms,
            failure_tags,
        }
    }

    pub fn timed_out(timeout_ms: u64) -> Self {
        Verdict {
            verified: false,
            feedback: format!("verification timeout after {timeout_ms} ms"),
            elapsed_ms: timeout_ms,
            failure_tags: BTreeSet::from([FailureTag::Timeout]),
        }
    }

    /// Failed round whose completion had no extractable code.
    pub fn no_code() -> Self {
        Verdict {
            verified: false,
            feedback: NO_LEAN_CODE_FOUND.to_string(),
            elapsed_ms: 0,
            failure_tags: BTreeSet::from([FailureTag::NoLeanCodeFound]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyRequest<'a> {
    pub statement_id: &'a str,
    pub proof_text: &'a str,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum VerifierError {
    #[error("verifier unavailable: {0}")]
    Unavailable(String),
    #[error("empty proof text")]
    EmptyProof,
}

/// A verification backend. Implementations must be safe to call
/// concurrently; each call carries its own deadline.
pub trait Verifier: Send + Sync {
    fn verify(&self, request: &VerifyRequest<'_>) -> Result<Verdict, VerifierError>;

    /// Short tag recorded with verified proofs (toolchain, backend kind).
    fn describe(&self) -> String {
        "verifier".to_string()
    }
}

impl<V: Verifier + ?Sized> Verifier for Arc<V> {
    fn verify(&self, request: &VerifyRequest<'_>) -> Result<Verdict, VerifierError> {
        (**self).verify(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Enforces `timeout_ms` on a backend that may not honor it itself. The
/// call runs on a helper thread; if it misses the deadline the verdict is a
/// timeout and the late answer is discarded.
pub struct Deadline<V> {
    inner: Arc<V>,
}

impl<V: Verifier + 'static> Deadline<V> {
    pub fn new(inner: V) -> Self {
        Deadline {
            inner: Arc::new(inner),
        }
    }
}

impl<V: Verifier + 'static> Verifier for Deadline<V> {
    fn verify(&self, request: &VerifyRequest<'_>) -> Result<Verdict, VerifierError> {
        if request.proof_text.trim().is_empty() {
            return Err(VerifierError::EmptyProof);
        }
        let (tx, rx) = mpsc::channel();
        let inner = Arc::clone(&self.inner);
        let statement_id = request.statement_id.to_string();
        let proof_text = request.proof_text.to_string();
        let timeout_ms = request.timeout_ms;
        std::thread::spawn(move || {
            let req = VerifyRequest {
                statement_id: &statement_id,
                proof_text: &proof_text,
                timeout_ms,
            };
            let _ = tx.send(inner.verify(&req));
        });
        match rx.recv_timeout(Duration::from_millis(timeout_ms)) {
            Ok(Ok(verdict)) if verdict.elapsed_ms > timeout_ms => Ok(Verdict::timed_out(timeout_ms)),
            Ok(result) => result,
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(Verdict::timed_out(timeout_ms)),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(VerifierError::Unavailable(
                "verification worker exited without an answer".into(),
            )),
        }
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Caps the number of concurrent in-flight requests; callers block until a
/// slot frees up.
pub struct InFlightLimit<V> {
    inner: V,
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl<V> InFlightLimit<V> {
    pub fn new(inner: V, max: usize) -> Self {
        InFlightLimit {
            inner,
            max: max.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<V: Verifier> Verifier for InFlightLimit<V> {
    fn verify(&self, request: &VerifyRequest<'_>) -> Result<Verdict, VerifierError> {
        {
            let mut active = self.active.lock().expect("in-flight counter poisoned");
            while *active >= self.max {
                active = self.freed.wait(active).expect("in-flight counter poisoned");
            }
            *active += 1;
        }
        let result = self.inner.verify(request);
        *self.active.lock().expect("in-flight counter poisoned") -= 1;
        self.freed.notify_one();
        result
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Elapsed wall time in whole milliseconds.
pub(crate) fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis().min(u128::from(u64::MAX)) as u64
}
