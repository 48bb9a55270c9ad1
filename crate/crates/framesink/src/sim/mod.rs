//! Deterministic streaming rollout harness: a seeded synthetic block emitter
//! drives bank updates, retrieval, gating, and attention over hundreds of
//! blocks under three context policies, emitting per-step trace records.

pub mod config;
pub mod emitter;
pub mod linalg;
pub mod rollout;
pub mod summary;
pub mod trace;

pub use config::{GateInputs, Policy, RolloutConfig, Scenario};
pub use emitter::BlockEmitter;
pub use linalg::Projections;
pub use rollout::{compare_policies, run_rollout, stream_encoder, SimState};
pub use summary::{ComparisonSummary, PolicyReport};
pub use trace::{parse_trace, render_trace, StepRecord};
