//! Per-layer consensus gate over retrieved context.
//!
//! Collapse-prone retrieved context shows up as excessive inter-head
//! agreement: many heads whose mean affinity to a retrieved block exceeds
//! their affinity to the local window. The gate measures that fraction per
//! retrieved block and suppresses the whole retrieved side of the context
//! for a layer whenever any block's fraction exceeds `tau_gate`, falling
//! back to the sliding-window context alone.
//!
//! Affinities are bare mean dot products between the head's representative
//! query and the key set: no softmax, no `1/sqrt(d)` scaling.

use crate::bank::{LayerKV, MemoryEntry};
use crate::error::{Error, Result};
use crate::retrieval::{compose_context, AttentionContext};
use crate::scalar::{count, Scalar};
use crate::tensor::{dot_slices, HeadTensor, Vector};

/// One layer's gate evaluation: the per-retrieved-block consensus fractions
/// and the resulting binary gate. `g` is true when the retrieved context is
/// kept and false when the layer falls back to the local window.
#[derive(Debug, Clone, PartialEq)]
pub struct GateDecision<S: Scalar> {
    layer: usize,
    rho: Vec<S>,
    g: bool,
    tau_gate: S,
}

impl<S: Scalar> GateDecision<S> {
    pub fn layer(&self) -> usize {
        self.layer
    }

    /// Consensus fractions, one per retrieved block, each a multiple of 1/H.
    pub fn rho(&self) -> &[S] {
        &self.rho
    }

    /// True: keep retrieved + local context. False: local only.
    pub fn g(&self) -> bool {
        self.g
    }

    /// True when this layer suppressed its retrieved context.
    pub fn is_gated(&self) -> bool {
        !self.g
    }

    pub fn tau_gate(&self) -> S {
        self.tau_gate
    }
}

/// Head-wise representative query: the per-head mean over query tokens.
pub fn representative_query<S: Scalar>(q: &HeadTensor<S>) -> Result<Vec<Vector<S>>> {
    if q.tokens() == 0 {
        return Err(Error::EmptyInput("representative query tokens"));
    }
    let n = count::<S>(q.tokens());
    let mut out = Vec::with_capacity(q.heads());
    for head in 0..q.heads() {
        let mut acc = vec![S::zero(); q.head_dim()];
        for token in 0..q.tokens() {
            for (a, &x) in acc.iter_mut().zip(q.vec_at(token, head)) {
                *a += x;
            }
        }
        for a in acc.iter_mut() {
            *a = *a / n;
        }
        // a zero mean is legal here: opposing tokens cancel and the head's
        // affinities simply become zero
        out.push(Vector::new(acc)?);
    }
    Ok(out)
}

/// Mean raw dot product between a head's representative query and that
/// head's key vectors.
pub fn affinity<S: Scalar>(q_bar: &Vector<S>, keys: &HeadTensor<S>, head: usize) -> Result<S> {
    if keys.tokens() == 0 {
        return Err(Error::EmptyInput("affinity key set"));
    }
    if q_bar.len() != keys.head_dim() {
        return Err(Error::DimensionMismatch { expected: keys.head_dim(), got: q_bar.len() });
    }
    if head >= keys.heads() {
        return Err(Error::ShapeMismatch(format!(
            "head {} out of range for {} heads",
            head,
            keys.heads()
        )));
    }
    let mut acc = S::zero();
    for token in 0..keys.tokens() {
        acc += dot_slices(q_bar.as_slice(), keys.vec_at(token, head));
    }
    Ok(acc / count::<S>(keys.tokens()))
}

/// Fraction of heads whose affinity to the retrieved key set strictly
/// exceeds their affinity to the local key set. Ties do not count.
pub fn consensus_fraction<S: Scalar>(
    q: &HeadTensor<S>,
    k_ret: &HeadTensor<S>,
    k_loc: &HeadTensor<S>,
) -> Result<S> {
    if !q.same_layout(k_ret) || !q.same_layout(k_loc) {
        return Err(Error::ShapeMismatch(
            "queries and key sets disagree on heads or head_dim".into(),
        ));
    }
    let q_bar = representative_query(q)?;
    let mut exceeding = 0usize;
    for (head, q_bar_h) in q_bar.iter().enumerate() {
        let a_ret = affinity(q_bar_h, k_ret, head)?;
        let a_loc = affinity(q_bar_h, k_loc, head)?;
        if a_ret > a_loc {
            exceeding += 1;
        }
    }
    Ok(count::<S>(exceeding) / count::<S>(q.heads()))
}

/// Evaluate the binary gate for one layer from its consensus fractions:
/// the retrieved context is kept only while every fraction stays at or
/// below `tau_gate` (boundary inclusive). An empty fraction list means
/// nothing was retrieved, so there is nothing to distrust and g stays 1.
pub fn gate_decision<S: Scalar>(layer: usize, rhos: &[S], tau_gate: S) -> Result<GateDecision<S>> {
    if !(tau_gate > S::zero() && tau_gate < S::one()) {
        return Err(Error::InvalidParameter("tau_gate must lie in (0, 1)".into()));
    }
    for r in rhos {
        if !(*r >= S::zero() && *r <= S::one()) {
            return Err(Error::InvalidParameter(format!(
                "consensus fraction {} outside [0, 1]",
                r
            )));
        }
    }
    let g = rhos.iter().all(|r| *r <= tau_gate);
    Ok(GateDecision { layer, rho: rhos.to_vec(), g, tau_gate })
}

/// Apply a gate bit to context composition: g=1 composes retrieved + local,
/// g=0 falls back to the local window alone.
pub fn gated_context<S: Scalar>(
    g: bool,
    retrieved: &[&MemoryEntry<S>],
    local_kv: &[LayerKV<S>],
) -> Result<AttentionContext<S>> {
    if g {
        compose_context(retrieved, local_kv)
    } else {
        compose_context(&[], local_kv)
    }
}
