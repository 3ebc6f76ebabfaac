//! Deterministic desk-scale simulator of the TLS handshake family and its
//! application-layer uses, with a scripted man-in-the-middle, a registry
//! of fifteen classic downgrade attacks, and a taxonomy engine that
//! classifies each executed outcome along four vectors (element,
//! vulnerability, method, damage) against an embedded ground-truth table.
//!
//! Cryptography is toy-scale but executable: export-grade keys really are
//! breakable by bounded-work oracles, strong keys really are not, and all
//! randomness comes from explicit seeds so every run is reproducible byte
//! for byte.

pub mod arith;
pub mod rng;
pub mod crypto;
pub mod catalog;
pub mod msgs;
pub mod handshake;
pub mod error;
pub mod adversary;
pub mod app;
pub mod outcome;
pub mod taxonomy;
mod engine_goals;
pub mod engine;
mod proxy;
pub mod attacks;
pub mod harness;

pub use catalog::{GroupId, SuiteId, VersionId};
pub use engine::{run_session, Scenario, SessionKind};
pub use error::SimError;
pub use harness::{emit_report, run_attack, run_matrix, ReportFormat};
pub use outcome::SessionOutcome;
pub use taxonomy::{evaluate_damage, table1_vector, verify_classification, ObservedDamage};
