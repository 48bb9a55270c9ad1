//! Bounded-memory attention-context engine for streaming autoregressive
//! rollouts.
//!
//! Long rollouts cannot keep every past block's key/value cache in the
//! attention context. This crate implements and contrasts three bounded
//! context policies over a deterministic synthetic block stream:
//!
//! - **window**: only the W most recent blocks;
//! - **static sinks**: the first S frames pinned as permanent long-range
//!   anchors, plus the window;
//! - **dynamic sinks**: a descriptor-indexed memory bank with novelty-gated
//!   admission, mean-cosine multi-query retrieval of the top-k relevant
//!   blocks, hot/cold KV tiering, and a per-layer inter-head consensus gate
//!   that suppresses collapse-prone retrieved context.
//!
//! The math modules ([`tensor`], [`descriptor`], [`bank`], [`retrieval`],
//! [`gate`]) are generic over the scalar type via [`Scalar`] (f32 or f64);
//! the rollout simulator ([`sim`]) and its file formats are pinned to f64.
//! Concrete f64/f32 aliases for the core types live at the crate root.

pub mod bank;
pub mod descriptor;
pub mod error;
pub mod gate;
pub mod retrieval;
pub mod scalar;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Vector64 = tensor::Vector<f64>;
pub type Vector32 = tensor::Vector<f32>;
pub type HeadTensor64 = tensor::HeadTensor<f64>;
pub type HeadTensor32 = tensor::HeadTensor<f32>;
pub type RopeParams64 = tensor::RopeParams<f64>;
pub type RopeParams32 = tensor::RopeParams<f32>;
pub type BlockDescriptor64 = descriptor::BlockDescriptor<f64>;
pub type BlockDescriptor32 = descriptor::BlockDescriptor<f32>;
pub type LayerKV64 = bank::LayerKV<f64>;
pub type LayerKV32 = bank::LayerKV<f32>;
pub type MemoryEntry64 = bank::MemoryEntry<f64>;
pub type MemoryEntry32 = bank::MemoryEntry<f32>;
pub type MemoryBank64 = bank::MemoryBank<f64>;
pub type MemoryBank32 = bank::MemoryBank<f32>;
pub type AttentionContext64 = retrieval::AttentionContext<f64>;
pub type AttentionContext32 = retrieval::AttentionContext<f32>;
pub type GateDecision64 = gate::GateDecision<f64>;
pub type GateDecision32 = gate::GateDecision<f32>;
