//! Multi-round, retrieval-grounded proof refinement with verifier feedback.
//!
//! The crate covers the proof memory ([`corpus`], [`retrieval`]), the
//! backends ([`policy`], [`verifier`]), the refinement loop ([`engine`]),
//! training-signal extraction ([`repair`], [`rl`]), the outer data loop
//! ([`coevolve`]) and budget-matched evaluation ([`eval`]).

pub mod coevolve;
pub mod corpus;
pub mod engine;
pub mod eval;
pub mod fixtures;
pub mod http;
pub mod policy;
pub mod repair;
pub mod retrieval;
pub mod rl;
pub mod tokenize;
pub mod verifier;
