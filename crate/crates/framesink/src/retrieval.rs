//! Relevance scoring, top-k selection, and attention-context composition.
//!
//! A memory entry's relevance to the current step is the mean cosine between
//! its descriptor and the descriptors of the blocks in the sliding window.
//! Selection keeps the k highest-scoring eligible entries, breaking ties
//! toward lower block indices. Retrieved KV segments are concatenated ahead
//! of the local window along the token axis, ascending by block index.
//!
//! All operations are pure given a bank snapshot.

use std::collections::BTreeSet;

use crate::bank::{LayerKV, MemoryBank, MemoryEntry};
use crate::descriptor::BlockDescriptor;
use crate::error::{Error, Result};
use crate::scalar::{count, Scalar};
use crate::tensor::{cosine, HeadTensor};

/// Ordered top-k selection: `(block_index, score)` pairs with scores
/// non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult<S: Scalar> {
    selected: Vec<(u64, S)>,
    k_requested: usize,
}

impl<S: Scalar> RetrievalResult<S> {
    pub fn empty(k_requested: usize) -> Self {
        Self { selected: Vec::new(), k_requested }
    }

    pub fn selected(&self) -> &[(u64, S)] {
        &self.selected
    }

    pub fn block_indices(&self) -> Vec<u64> {
        self.selected.iter().map(|(b, _)| *b).collect()
    }

    pub fn k_requested(&self) -> usize {
        self.k_requested
    }

    pub fn k_returned(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Mean cosine between an entry descriptor and every window descriptor.
pub fn relevance_score<S: Scalar>(
    entry_descriptor: &BlockDescriptor<S>,
    window_descriptors: &[BlockDescriptor<S>],
) -> Result<S> {
    if window_descriptors.is_empty() {
        return Err(Error::EmptyInput("relevance window"));
    }
    let mut acc = S::zero();
    for w in window_descriptors {
        if w.dim() != entry_descriptor.dim() {
            return Err(Error::DimensionMismatch { expected: entry_descriptor.dim(), got: w.dim() });
        }
        acc += cosine(w.feature(), entry_descriptor.feature())?;
    }
    Ok(acc / count::<S>(window_descriptors.len()))
}

/// Select the k eligible entries with the highest relevance scores.
///
/// Entries inside the window are excluded; ties break toward the lower block
/// index; fewer than k eligible entries returns them all. An empty eligible
/// set is not an error: the result is simply empty.
pub fn retrieve_topk<S: Scalar>(
    bank: &MemoryBank<S>,
    window_descriptors: &[BlockDescriptor<S>],
    window_block_indices: &BTreeSet<u64>,
    k: usize,
) -> Result<RetrievalResult<S>> {
    if k == 0 {
        return Err(Error::InvalidParameter("retrieval k must be at least 1".into()));
    }
    let eligible = bank.eligible_entries(window_block_indices);
    if eligible.is_empty() {
        return Ok(RetrievalResult::empty(k));
    }
    let mut scored: Vec<(u64, S)> = Vec::with_capacity(eligible.len());
    for entry in eligible {
        let score = relevance_score(entry.descriptor(), window_descriptors)?;
        scored.push((entry.block_index(), score));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("relevance scores are finite")
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    Ok(RetrievalResult { selected: scored, k_requested: k })
}

/// Token-concatenated attention context for every layer: retrieved segments
/// (ascending block index) followed by the local window.
///
/// `segment_boundaries[i]` is the token offset where segment `i` starts; the
/// segments are the retrieved blocks in ascending block-index order and then
/// the local window, so the boundary list always has `retrieved + 1` entries
/// and slicing `[boundaries[i], boundaries[i+1])` (with the token count as
/// the final fence) recovers each input bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionContext<S: Scalar> {
    layers: Vec<LayerContext<S>>,
    segment_boundaries: Vec<usize>,
    segment_blocks: Vec<u64>,
    token_count: usize,
}

/// One layer's composed keys and values.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerContext<S: Scalar> {
    layer: usize,
    keys: HeadTensor<S>,
    values: HeadTensor<S>,
}

impl<S: Scalar> LayerContext<S> {
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn keys(&self) -> &HeadTensor<S> {
        &self.keys
    }

    pub fn values(&self) -> &HeadTensor<S> {
        &self.values
    }
}

impl<S: Scalar> AttentionContext<S> {
    pub fn layers(&self) -> &[LayerContext<S>] {
        &self.layers
    }

    pub fn layer(&self, layer: usize) -> &LayerContext<S> {
        &self.layers[layer]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn segment_boundaries(&self) -> &[usize] {
        &self.segment_boundaries
    }

    /// Block indices of the retrieved segments, ascending, in boundary order.
    pub fn segment_blocks(&self) -> &[u64] {
        &self.segment_blocks
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }
}

/// Concatenate retrieved KV segments and the local window per layer.
///
/// Retrieved entries are ordered ascending by block index regardless of the
/// order they are passed in; the local window forms the final segment. With
/// no retrieved entries the context equals the local KV bit-exactly.
pub fn compose_context<S: Scalar>(
    retrieved: &[&MemoryEntry<S>],
    local_kv: &[LayerKV<S>],
) -> Result<AttentionContext<S>> {
    if local_kv.is_empty() {
        return Err(Error::EmptyInput("local KV layers"));
    }
    for (i, kv) in local_kv.iter().enumerate() {
        if kv.layer() != i {
            return Err(Error::ShapeMismatch(format!(
                "local KV must cover layers 0..{} in order, found layer {} at slot {}",
                local_kv.len(),
                kv.layer(),
                i
            )));
        }
    }
    let n_layers = local_kv.len();
    let mut order: Vec<usize> = (0..retrieved.len()).collect();
    order.sort_by_key(|&i| retrieved[i].block_index());

    let mut segment_boundaries = Vec::with_capacity(retrieved.len() + 1);
    let mut segment_blocks = Vec::with_capacity(retrieved.len());
    let mut offset = 0usize;
    for &i in &order {
        let entry = retrieved[i];
        if entry.n_layers() != n_layers {
            return Err(Error::ShapeMismatch(format!(
                "retrieved block {} has {} layers, local context has {}",
                entry.block_index(),
                entry.n_layers(),
                n_layers
            )));
        }
        segment_boundaries.push(offset);
        segment_blocks.push(entry.block_index());
        offset += entry.tokens();
    }
    segment_boundaries.push(offset);

    let mut layers = Vec::with_capacity(n_layers);
    for (layer, local) in local_kv.iter().enumerate() {
        let mut key_parts: Vec<&HeadTensor<S>> = Vec::with_capacity(order.len() + 1);
        let mut value_parts: Vec<&HeadTensor<S>> = Vec::with_capacity(order.len() + 1);
        for &i in &order {
            let kv = retrieved[i].layer_kv(layer);
            key_parts.push(kv.keys());
            value_parts.push(kv.values());
        }
        key_parts.push(local.keys());
        value_parts.push(local.values());
        let keys = HeadTensor::concat_tokens(&key_parts)?;
        let values = HeadTensor::concat_tokens(&value_parts)?;
        if keys.tokens() != values.tokens() {
            return Err(Error::ShapeMismatch("composed keys/values disagree".into()));
        }
        layers.push(LayerContext { layer, keys, values });
    }
    let token_count = layers[0].keys.tokens();
    Ok(AttentionContext { layers, segment_boundaries, segment_blocks, token_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::MemoryBank;
    use crate::tensor::Vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_descriptor(dir: &[f64], block_index: u64) -> BlockDescriptor<f64> {
        let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = Vector::new(dir.iter().map(|x| x / norm).collect()).unwrap();
        BlockDescriptor::new(v, block_index).unwrap()
    }

    fn entry_with_tokens(dir: &[f64], block_index: u64, tokens: usize) -> MemoryEntry<f64> {
        let fill = |offset: f64| {
            HeadTensor::new(
                tokens,
                2,
                2,
                (0..tokens * 4).map(|i| block_index as f64 + offset + i as f64).collect(),
            )
            .unwrap()
        };
        MemoryEntry::new(
            unit_descriptor(dir, block_index),
            vec![
                LayerKV::new(0, fill(0.0), fill(0.5)).unwrap(),
                LayerKV::new(1, fill(100.0), fill(100.5)).unwrap(),
            ],
        )
        .unwrap()
    }

    fn entry(dir: &[f64], block_index: u64) -> MemoryEntry<f64> {
        entry_with_tokens(dir, block_index, 2)
    }

    #[test]
    fn relevance_score_examples() {
        let u = unit_descriptor(&[1.0, 0.0, 0.0], 10);
        assert_eq!(relevance_score(&u, &[unit_descriptor(&[1.0, 0.0, 0.0], 0)]).unwrap(), 1.0);
        let window = vec![
            unit_descriptor(&[1.0, 0.0, 0.0], 0),
            unit_descriptor(&[-1.0, 0.0, 0.0], 1),
        ];
        assert_eq!(relevance_score(&u, &window).unwrap(), 0.0);
        assert!(matches!(
            relevance_score(&u, &[]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            relevance_score(&u, &[unit_descriptor(&[1.0, 0.0], 0)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn relevance_matches_mean_of_cosines_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..200 {
            let dim = 16;
            let entry_dir: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let e = unit_descriptor(&entry_dir, 0);
            let window: Vec<BlockDescriptor<f64>> = (0..3)
                .map(|i| {
                    let d: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    unit_descriptor(&d, i)
                })
                .collect();
            let got = relevance_score(&e, &window).unwrap();
            // Kahan mean of cosines
            let mut sum = 0.0;
            let mut c = 0.0;
            for w in &window {
                let term = cosine(w.feature(), e.feature()).unwrap() - c;
                let t = sum + term;
                c = (t - sum) - term;
                sum = t;
            }
            let want = sum / window.len() as f64;
            assert!((got - want).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&got));
        }
    }

    fn bank_of(entries: Vec<MemoryEntry<f64>>) -> MemoryBank<f64> {
        let mut bank = MemoryBank::new(1.0, usize::MAX, 2).unwrap();
        for e in entries {
            bank.try_insert(e).unwrap();
        }
        bank
    }

    #[test]
    fn topk_degenerate_availability() {
        let bank = bank_of(vec![entry(&[1.0, 0.0, 0.0, 0.0], 0)]);
        let window = vec![unit_descriptor(&[1.0, 0.0, 0.0, 0.0], 5)];
        let got = retrieve_topk(&bank, &window, &BTreeSet::new(), 2).unwrap();
        assert_eq!(got.k_returned(), 1);
        assert_eq!(got.k_requested(), 2);
        assert_eq!(got.selected()[0].0, 0);
    }

    #[test]
    fn topk_breaks_ties_toward_lower_block_index() {
        // identical descriptors give bit-identical scores
        let bank = bank_of(vec![
            entry(&[0.0, 1.0, 0.0, 0.0], 3),
            entry(&[0.0, 1.0, 0.0, 0.0], 7),
        ]);
        let window = vec![unit_descriptor(&[1.0, 1.0, 0.0, 0.0], 9)];
        let got = retrieve_topk(&bank, &window, &BTreeSet::new(), 1).unwrap();
        assert_eq!(got.selected()[0].0, 3);
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..100 {
            let n = rng.random_range(1..40usize);
            let mut entries = Vec::new();
            for b in 0..n as u64 {
                let dir: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                entries.push(entry(&dir, b));
            }
            let bank = bank_of(entries);
            let window: Vec<BlockDescriptor<f64>> = (0..2)
                .map(|i| {
                    let d: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    unit_descriptor(&d, 1000 + i)
                })
                .collect();
            let window_set: BTreeSet<u64> = (0..n as u64).filter(|_| rng.random::<f64>() < 0.2).collect();
            let k = rng.random_range(1..5usize);
            let got = retrieve_topk(&bank, &window, &window_set, k).unwrap();

            // oracle: score every eligible entry with the same scorer, sort
            // by (-score, block_index), truncate
            let mut oracle: Vec<(u64, f64)> = bank
                .entries()
                .iter()
                .filter(|e| !window_set.contains(&e.block_index()))
                .map(|e| (e.block_index(), relevance_score(e.descriptor(), &window).unwrap()))
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            oracle.truncate(k);
            assert_eq!(got.selected(), oracle.as_slice());
            for (b, s) in got.selected() {
                assert!(!window_set.contains(b));
                assert!((-1.0..=1.0).contains(s));
            }
        }
    }

    #[test]
    fn compose_with_no_retrieved_equals_local() {
        let local = entry(&[1.0, 0.0, 0.0, 0.0], 0).kv().to_vec();
        let ctx = compose_context::<f64>(&[], &local).unwrap();
        assert_eq!(ctx.segment_boundaries(), &[0]);
        assert_eq!(ctx.token_count(), 2);
        for (layer, kv) in local.iter().enumerate() {
            assert_eq!(ctx.layer(layer).keys(), kv.keys());
            assert_eq!(ctx.layer(layer).values(), kv.values());
        }
    }

    #[test]
    fn compose_concatenates_and_round_trips() {
        // one retrieved block of 6 tokens + local 18 tokens = 24 tokens with
        // the local boundary at offset 6
        let retrieved = entry_with_tokens(&[0.0, 1.0, 0.0, 0.0], 1, 6);
        let local_entry = entry_with_tokens(&[0.0, 0.0, 1.0, 0.0], 9, 18);
        let local = local_entry.kv().to_vec();
        let ctx = compose_context(&[&retrieved], &local).unwrap();
        assert_eq!(ctx.token_count(), 24);
        assert_eq!(ctx.segment_boundaries(), &[0, 6]);
        assert_eq!(ctx.segment_blocks(), &[1]);
        for layer in 0..2 {
            let keys = ctx.layer(layer).keys();
            assert_eq!(
                &keys.slice_tokens(0, 6).unwrap(),
                retrieved.layer_kv(layer).keys()
            );
            assert_eq!(
                &keys.slice_tokens(6, 24).unwrap(),
                local[layer].keys()
            );
            let values = ctx.layer(layer).values();
            assert_eq!(
                &values.slice_tokens(0, 6).unwrap(),
                retrieved.layer_kv(layer).values()
            );
            assert_eq!(
                &values.slice_tokens(6, 24).unwrap(),
                local[layer].values()
            );
        }
    }

    #[test]
    fn compose_orders_retrieved_by_block_index() {
        let a = entry(&[1.0, 0.0, 0.0, 0.0], 2);
        let b = entry(&[0.0, 1.0, 0.0, 0.0], 8);
        let local = entry(&[0.0, 0.0, 1.0, 0.0], 11).kv().to_vec();
        let ctx = compose_context(&[&b, &a], &local).unwrap();
        assert_eq!(ctx.segment_blocks(), &[2, 8]);
        assert_eq!(ctx.segment_boundaries(), &[0, 2, 4]);
        assert_eq!(ctx.token_count(), 6);
        assert_eq!(&ctx.layer(0).keys().slice_tokens(0, 2).unwrap(), a.layer_kv(0).keys());
        assert_eq!(&ctx.layer(0).keys().slice_tokens(2, 4).unwrap(), b.layer_kv(0).keys());
    }

    #[test]
    fn compose_rejects_layer_mismatch() {
        let retrieved = entry(&[1.0, 0.0, 0.0, 0.0], 1);
        let local = vec![entry(&[0.0, 1.0, 0.0, 0.0], 9).kv()[0].clone()];
        assert!(matches!(
            compose_context(&[&retrieved], &local),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
