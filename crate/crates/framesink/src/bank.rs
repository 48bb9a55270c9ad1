//! Ordered memory bank of `(descriptor, layer-wise KV)` entries with
//! novelty-gated admission and hot/cold tiering.
//!
//! Admission: the first `init_count` entries seed the bank unconditionally;
//! afterwards a candidate is admitted only while its maximum descriptor
//! cosine against all current entries stays at or below `tau_dedup`
//! (boundary inclusive). A rejection never mutates the bank, so the earlier
//! near-duplicate is the one that survives.
//!
//! Concurrency contract: single writer, multiple readers. `&mut self`
//! methods (insertions, tier changes) must be serialized; `&self` reads may
//! run concurrently with each other but not with writes. Rust's borrow rules
//! enforce this for in-process use.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::descriptor::BlockDescriptor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{cosine, HeadTensor, Vector};

/// Where an entry's KV tensors currently live: in the fast active context or
/// offloaded to slow storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Hot,
    Cold,
}

/// Per-layer key/value tensors of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerKV<S: Scalar> {
    layer: usize,
    keys: HeadTensor<S>,
    values: HeadTensor<S>,
}

impl<S: Scalar> LayerKV<S> {
    pub fn new(layer: usize, keys: HeadTensor<S>, values: HeadTensor<S>) -> Result<Self> {
        if keys.tokens() != values.tokens() || !keys.same_layout(&values) {
            return Err(Error::ShapeMismatch(format!(
                "layer {} keys and values disagree on shape",
                layer
            )));
        }
        Ok(Self { layer, keys, values })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn keys(&self) -> &HeadTensor<S> {
        &self.keys
    }

    pub fn values(&self) -> &HeadTensor<S> {
        &self.values
    }

    pub fn tokens(&self) -> usize {
        self.keys.tokens()
    }
}

/// One memory bank record: descriptor, layer-wise KV, block index, tier.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry<S: Scalar> {
    descriptor: BlockDescriptor<S>,
    kv: Vec<LayerKV<S>>,
    block_index: u64,
    tier: Tier,
}

impl<S: Scalar> MemoryEntry<S> {
    /// Build an entry from a descriptor and its per-layer KV. The KV list
    /// must cover layers `0..n` exactly once, in order, with a uniform shape.
    pub fn new(descriptor: BlockDescriptor<S>, kv: Vec<LayerKV<S>>) -> Result<Self> {
        if kv.is_empty() {
            return Err(Error::EmptyInput("memory entry layers"));
        }
        for (i, layer_kv) in kv.iter().enumerate() {
            if layer_kv.layer() != i {
                return Err(Error::ShapeMismatch(format!(
                    "layer list must cover 0..{} in order, found layer {} at slot {}",
                    kv.len(),
                    layer_kv.layer(),
                    i
                )));
            }
            if layer_kv.tokens() != kv[0].tokens() || !layer_kv.keys().same_layout(kv[0].keys()) {
                return Err(Error::ShapeMismatch("layers disagree on KV shape".into()));
            }
        }
        let block_index = descriptor.block_index();
        Ok(Self { descriptor, kv, block_index, tier: Tier::Cold })
    }

    pub fn descriptor(&self) -> &BlockDescriptor<S> {
        &self.descriptor
    }

    pub fn kv(&self) -> &[LayerKV<S>] {
        &self.kv
    }

    pub fn layer_kv(&self, layer: usize) -> &LayerKV<S> {
        &self.kv[layer]
    }

    pub fn n_layers(&self) -> usize {
        self.kv.len()
    }

    pub fn block_index(&self) -> u64 {
        self.block_index
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn tokens(&self) -> usize {
        self.kv[0].tokens()
    }
}

/// Outcome of an admission attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome<S: Scalar> {
    Admitted,
    Rejected { max_similarity: S },
}

/// The ordered memory bank. Entries are kept ascending by block index.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank<S: Scalar> {
    entries: Vec<MemoryEntry<S>>,
    tau_dedup: S,
    init_count: usize,
    tokens_per_frame: usize,
    cold_capacity: Option<usize>,
}

impl<S: Scalar> MemoryBank<S> {
    /// `tau_dedup` in `(0, 1]`; `init_count` entries are admitted without a
    /// novelty check; `tokens_per_frame` converts entry token counts into
    /// the frame counts reported by [`MemoryBank::hot_footprint`].
    pub fn new(tau_dedup: S, init_count: usize, tokens_per_frame: usize) -> Result<Self> {
        if !(tau_dedup > S::zero() && tau_dedup <= S::one()) {
            return Err(Error::InvalidParameter("tau_dedup must lie in (0, 1]".into()));
        }
        if tokens_per_frame == 0 {
            return Err(Error::InvalidParameter("tokens_per_frame must be positive".into()));
        }
        Ok(Self { entries: Vec::new(), tau_dedup, init_count, tokens_per_frame, cold_capacity: None })
    }

    /// Cap the number of cold entries; the oldest cold entries are evicted
    /// first. Off by default: offloading alone never evicts.
    pub fn with_cold_capacity(mut self, cap: Option<usize>) -> Self {
        self.cold_capacity = cap;
        self
    }

    pub fn tau_dedup(&self) -> S {
        self.tau_dedup
    }

    pub fn init_count(&self) -> usize {
        self.init_count
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    pub fn cold_capacity(&self) -> Option<usize> {
        self.cold_capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry<S>] {
        &self.entries
    }

    pub fn get(&self, block_index: u64) -> Option<&MemoryEntry<S>> {
        self.entries
            .binary_search_by_key(&block_index, |e| e.block_index())
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Admit or reject a candidate entry.
    ///
    /// The candidate's block index must exceed every existing index. During
    /// initialization (fewer than `init_count` entries) candidates are
    /// always admitted; afterwards admission requires
    /// `max cos(candidate, entry) <= tau_dedup` over all current entries.
    pub fn try_insert(&mut self, entry: MemoryEntry<S>) -> Result<InsertOutcome<S>> {
        if let Some(last) = self.entries.last() {
            if entry.block_index() <= last.block_index() {
                return Err(Error::NonMonotoneBlockIndex {
                    got: entry.block_index(),
                    max: last.block_index(),
                });
            }
            if entry.descriptor().dim() != last.descriptor().dim() {
                return Err(Error::DimensionMismatch {
                    expected: last.descriptor().dim(),
                    got: entry.descriptor().dim(),
                });
            }
            if entry.n_layers() != last.n_layers()
                || entry.tokens() != last.tokens()
                || !entry.kv()[0].keys().same_layout(last.kv()[0].keys())
            {
                return Err(Error::ShapeMismatch(
                    "entry KV shape disagrees with existing entries".into(),
                ));
            }
        }
        if self.entries.len() >= self.init_count {
            let mut max_similarity = -S::one();
            for existing in &self.entries {
                let c = cosine(entry.descriptor().feature(), existing.descriptor().feature())?;
                if c > max_similarity {
                    max_similarity = c;
                }
            }
            if max_similarity > self.tau_dedup {
                return Ok(InsertOutcome::Rejected { max_similarity });
            }
        }
        self.entries.push(entry);
        self.enforce_cold_capacity();
        Ok(InsertOutcome::Admitted)
    }

    fn enforce_cold_capacity(&mut self) {
        let Some(cap) = self.cold_capacity else { return };
        let mut cold = self.entries.iter().filter(|e| e.tier() == Tier::Cold).count();
        while cold > cap {
            let oldest = self
                .entries
                .iter()
                .position(|e| e.tier() == Tier::Cold)
                .expect("cold count positive");
            self.entries.remove(oldest);
            cold -= 1;
        }
    }

    /// Move one entry between tiers. KV content is untouched: tier moves are
    /// lossless.
    pub fn set_tier(&mut self, block_index: u64, tier: Tier) -> Result<()> {
        let idx = self
            .entries
            .binary_search_by_key(&block_index, |e| e.block_index())
            .map_err(|_| Error::UnknownBlockIndex(block_index))?;
        self.entries[idx].tier = tier;
        Ok(())
    }

    /// Set exactly the listed blocks Hot and every other entry Cold.
    pub fn mark_hot_exactly(&mut self, hot: &[u64]) -> Result<()> {
        for idx in hot {
            if self.get(*idx).is_none() {
                return Err(Error::UnknownBlockIndex(*idx));
            }
        }
        for entry in &mut self.entries {
            entry.tier = if hot.contains(&entry.block_index()) { Tier::Hot } else { Tier::Cold };
        }
        Ok(())
    }

    /// Entries whose block index is outside the given window, ascending.
    pub fn eligible_entries(&self, window_block_indices: &BTreeSet<u64>) -> Vec<&MemoryEntry<S>> {
        self.entries
            .iter()
            .filter(|e| !window_block_indices.contains(&e.block_index()))
            .collect()
    }

    /// Number of hot-tier latent frames currently held.
    pub fn hot_footprint(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.tier() == Tier::Hot)
            .map(|e| e.tokens() / self.tokens_per_frame)
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Snapshot serialization (f64 banks only; layout v1, see docs/formats.md)
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &[u8; 8] = b"FSNKBANK";
const SNAPSHOT_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, x: u32) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, x: u64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, x: f64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

impl MemoryBank<f64> {
    /// Serialize the bank in the little-endian v1 snapshot layout.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        let (descriptor_dim, n_layers, heads, head_dim, tokens) = match self.entries.first() {
            Some(e) => (
                e.descriptor().dim() as u32,
                e.n_layers() as u32,
                e.kv()[0].keys().heads() as u32,
                e.kv()[0].keys().head_dim() as u32,
                e.tokens() as u32,
            ),
            None => (0, 0, 0, 0, 0),
        };
        w.write_all(SNAPSHOT_MAGIC)?;
        write_u32(w, SNAPSHOT_VERSION)?;
        write_u32(w, descriptor_dim)?;
        write_u32(w, n_layers)?;
        write_u32(w, heads)?;
        write_u32(w, head_dim)?;
        write_u32(w, tokens)?;
        write_u32(w, self.tokens_per_frame as u32)?;
        write_u64(w, self.init_count as u64)?;
        write_u64(w, self.entries.len() as u64)?;
        write_u64(w, self.cold_capacity.map_or(u64::MAX, |c| c as u64))?;
        write_f64(w, self.tau_dedup)?;
        for entry in &self.entries {
            write_u64(w, entry.block_index())?;
            w.write_all(&[match entry.tier() {
                Tier::Hot => 0u8,
                Tier::Cold => 1u8,
            }])?;
            for &x in entry.descriptor().feature().as_slice() {
                write_f64(w, x)?;
            }
            for layer_kv in entry.kv() {
                for &x in layer_kv.keys().data() {
                    write_f64(w, x)?;
                }
                for &x in layer_kv.values().data() {
                    write_f64(w, x)?;
                }
            }
        }
        Ok(())
    }

    /// Reconstruct a bank from a v1 snapshot, re-validating every invariant.
    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<MemoryBank<f64>> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {}", version)));
        }
        let descriptor_dim = read_u32(r)? as usize;
        let n_layers = read_u32(r)? as usize;
        let heads = read_u32(r)? as usize;
        let head_dim = read_u32(r)? as usize;
        let tokens = read_u32(r)? as usize;
        let tokens_per_frame = read_u32(r)? as usize;
        let init_count = read_u64(r)? as usize;
        let entry_count = read_u64(r)? as usize;
        let cold_capacity = match read_u64(r)? {
            u64::MAX => None,
            c => Some(c as usize),
        };
        let tau_dedup = read_f64(r)?;
        if tokens_per_frame == 0 {
            return Err(Error::Snapshot("zero tokens_per_frame".into()));
        }
        let mut bank = MemoryBank::new(tau_dedup, init_count, tokens_per_frame)?
            .with_cold_capacity(cold_capacity);
        let mut last_index: Option<u64> = None;
        for _ in 0..entry_count {
            let block_index = read_u64(r)?;
            if let Some(last) = last_index {
                if block_index <= last {
                    return Err(Error::Snapshot("non-monotone block indices".into()));
                }
            }
            last_index = Some(block_index);
            let mut tier_byte = [0u8; 1];
            r.read_exact(&mut tier_byte)?;
            let tier = match tier_byte[0] {
                0 => Tier::Hot,
                1 => Tier::Cold,
                b => return Err(Error::Snapshot(format!("bad tier byte {}", b))),
            };
            let mut feature = vec![0.0f64; descriptor_dim];
            for x in feature.iter_mut() {
                *x = read_f64(r)?;
            }
            let descriptor = BlockDescriptor::new(Vector::new(feature)?, block_index)?;
            let mut kv = Vec::with_capacity(n_layers);
            for layer in 0..n_layers {
                let len = tokens * heads * head_dim;
                let mut keys = vec![0.0f64; len];
                for x in keys.iter_mut() {
                    *x = read_f64(r)?;
                }
                let mut values = vec![0.0f64; len];
                for x in values.iter_mut() {
                    *x = read_f64(r)?;
                }
                kv.push(LayerKV::new(
                    layer,
                    HeadTensor::new(tokens, heads, head_dim, keys)?,
                    HeadTensor::new(tokens, heads, head_dim, values)?,
                )?);
            }
            let mut entry = MemoryEntry::new(descriptor, kv)?;
            entry.tier = tier;
            bank.entries.push(entry);
        }
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_descriptor(dir: &[f64], block_index: u64) -> BlockDescriptor<f64> {
        let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = Vector::new(dir.iter().map(|x| x / norm).collect()).unwrap();
        BlockDescriptor::new(v, block_index).unwrap()
    }

    fn entry_with(dir: &[f64], block_index: u64) -> MemoryEntry<f64> {
        let keys = HeadTensor::new(2, 1, 2, vec![block_index as f64; 4]).unwrap();
        let values = HeadTensor::new(2, 1, 2, vec![-(block_index as f64); 4]).unwrap();
        MemoryEntry::new(
            unit_descriptor(dir, block_index),
            vec![LayerKV::new(0, keys, values).unwrap()],
        )
        .unwrap()
    }

    fn test_bank(tau: f64, init: usize) -> MemoryBank<f64> {
        MemoryBank::new(tau, init, 2).unwrap()
    }

    #[test]
    fn empty_bank_admits_during_initialization() {
        let mut bank = test_bank(0.98, 1);
        let out = bank.try_insert(entry_with(&[1.0, 0.0, 0.0, 0.0], 0)).unwrap();
        assert_eq!(out, InsertOutcome::Admitted);
        assert_eq!(bank.len(), 1);
    }

    #[test]
    fn duplicate_descriptor_rejected_with_similarity_one() {
        let mut bank = test_bank(0.98, 1);
        bank.try_insert(entry_with(&[1.0, 0.0, 0.0, 0.0], 0)).unwrap();
        let before = bank.clone();
        let out = bank.try_insert(entry_with(&[1.0, 0.0, 0.0, 0.0], 1)).unwrap();
        assert_eq!(out, InsertOutcome::Rejected { max_similarity: 1.0 });
        assert_eq!(bank, before, "a rejection must leave the bank unchanged");
    }

    #[test]
    fn boundary_similarity_is_admitted_inclusively() {
        // (0.98, 0.06, 0.06, 0.18) = (49, 3, 3, 9) / 50 has an exactly
        // representable norm (sqrt of exactly 1.0), so its cosine against e0
        // computes to the f64 literal 0.98 with no rounding.
        let mut bank = test_bank(0.98, 1);
        bank.try_insert(entry_with(&[1.0, 0.0, 0.0, 0.0], 0)).unwrap();
        let boundary = unit_descriptor(&[0.98, 0.06, 0.06, 0.18], 1);
        assert_eq!(
            cosine(
                bank.entries()[0].descriptor().feature(),
                boundary.feature()
            )
            .unwrap(),
            0.98,
            "construction must hit the threshold exactly"
        );
        let keys = HeadTensor::new(2, 1, 2, vec![1.0; 4]).unwrap();
        let values = HeadTensor::new(2, 1, 2, vec![2.0; 4]).unwrap();
        let entry = MemoryEntry::new(boundary, vec![LayerKV::new(0, keys, values).unwrap()]).unwrap();
        assert_eq!(bank.try_insert(entry).unwrap(), InsertOutcome::Admitted);
    }

    #[test]
    fn monotone_index_and_dimension_errors() {
        let mut bank = test_bank(0.98, 2);
        bank.try_insert(entry_with(&[1.0, 0.0, 0.0, 0.0], 5)).unwrap();
        assert!(matches!(
            bank.try_insert(entry_with(&[0.0, 1.0, 0.0, 0.0], 5)),
            Err(Error::NonMonotoneBlockIndex { got: 5, max: 5 })
        ));
        assert!(matches!(
            bank.try_insert(entry_with(&[0.0, 1.0, 0.0], 6)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_stream_matches_replay_oracle() {
        // Independent replay of the admission rule over a random stream.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let tau = 0.6; // low threshold so rejections actually occur
        let init = 3;
        let mut bank = test_bank(tau, init);
        let mut oracle_admitted: Vec<Vec<f64>> = Vec::new();
        for block in 0..50u64 {
            let dir: Vec<f64> = if rng.random::<f64>() < 0.3 && !oracle_admitted.is_empty() {
                // near-duplicate of an earlier admitted direction
                let base = &oracle_admitted[rng.random_range(0..oracle_admitted.len())];
                base.iter().map(|x| x + 0.01 * (rng.random::<f64>() - 0.5)).collect()
            } else {
                (0..8).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
            };
            let entry = entry_with(&dir, block);
            let feature = entry.descriptor().feature().clone();
            let got = bank.try_insert(entry).unwrap();

            let oracle_says_admit = if oracle_admitted.len() < init {
                true
            } else {
                let max = oracle_admitted
                    .iter()
                    .map(|e| {
                        let dot: f64 = e.iter().zip(feature.as_slice()).map(|(a, b)| a * b).sum();
                        let na: f64 = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                        let nb: f64 = feature.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
                        (dot / (na * nb)).clamp(-1.0, 1.0)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                max <= tau
            };
            assert_eq!(
                matches!(got, InsertOutcome::Admitted),
                oracle_says_admit,
                "block {} disagreed with the replay oracle",
                block
            );
            if oracle_says_admit {
                oracle_admitted.push(feature.as_slice().to_vec());
            }
        }
        assert_eq!(bank.len(), oracle_admitted.len());
        assert!(bank.len() < 50, "stream should contain rejections");
    }

    #[test]
    fn tier_round_trip_is_lossless() {
        let mut bank = test_bank(0.98, 2);
        bank.try_insert(entry_with(&[1.0, 0.0, 0.0, 0.0], 0)).unwrap();
        let kv_before = bank.entries()[0].kv().to_vec();
        bank.set_tier(0, Tier::Hot).unwrap();
        bank.set_tier(0, Tier::Cold).unwrap();
        bank.set_tier(0, Tier::Hot).unwrap();
        assert_eq!(bank.entries()[0].tier(), Tier::Hot);
        assert_eq!(bank.entries()[0].kv(), kv_before.as_slice());
        assert!(matches!(bank.set_tier(9, Tier::Hot), Err(Error::UnknownBlockIndex(9))));
    }

    #[test]
    fn hot_footprint_counts_frames() {
        let mut bank = test_bank(0.98, 8);
        for b in 0..4u64 {
            let mut dir = vec![0.0; 4];
            dir[b as usize] = 1.0;
            // entries carry 2 tokens per layer = 1 frame at 2 tokens/frame
            bank.try_insert(entry_with(&dir, b)).unwrap();
        }
        assert_eq!(bank.hot_footprint(), 0);
        bank.mark_hot_exactly(&[1, 3]).unwrap();
        assert_eq!(bank.hot_footprint(), 2);
        let direct = bank
            .entries()
            .iter()
            .filter(|e| e.tier() == Tier::Hot)
            .map(|e| e.tokens() / bank.tokens_per_frame())
            .sum::<usize>();
        assert_eq!(bank.hot_footprint(), direct);
        assert!(matches!(bank.mark_hot_exactly(&[7]), Err(Error::UnknownBlockIndex(7))));
    }

    #[test]
    fn hot_footprint_two_retrieved_three_frame_blocks() {
        // k=2 hot entries of 3 frames each occupy 6 hot frames
        let mut bank = MemoryBank::new(0.98, 8, 2).unwrap();
        for b in 0..3u64 {
            let mut dir = vec![0.0; 4];
            dir[b as usize] = 1.0;
            let keys = HeadTensor::new(6, 1, 2, vec![0.5; 12]).unwrap();
            let values = HeadTensor::new(6, 1, 2, vec![0.25; 12]).unwrap();
            let entry = MemoryEntry::new(
                unit_descriptor(&dir, b),
                vec![LayerKV::new(0, keys, values).unwrap()],
            )
            .unwrap();
            bank.try_insert(entry).unwrap();
        }
        bank.mark_hot_exactly(&[0, 2]).unwrap();
        assert_eq!(bank.hot_footprint(), 6);
    }

    #[test]
    fn eligible_entries_filter_matches_set_difference() {
        let mut bank = test_bank(0.98, 8);
        for b in 0..6u64 {
            let mut dir = vec![0.0; 8];
            dir[b as usize] = 1.0;
            bank.try_insert(entry_with(&dir, b)).unwrap();
        }
        let empty = BTreeSet::new();
        assert_eq!(bank.eligible_entries(&empty).len(), 6);
        let all: BTreeSet<u64> = (0..6).collect();
        assert!(bank.eligible_entries(&all).is_empty());
        let window: BTreeSet<u64> = [1, 4].into_iter().collect();
        let eligible: Vec<u64> = bank
            .eligible_entries(&window)
            .iter()
            .map(|e| e.block_index())
            .collect();
        assert_eq!(eligible, vec![0, 2, 3, 5]);
    }

    #[test]
    fn cold_capacity_evicts_oldest_cold_first() {
        let mut bank = test_bank(0.98, 8).with_cold_capacity(Some(2));
        for b in 0..4u64 {
            let mut dir = vec![0.0; 4];
            dir[b as usize] = 1.0;
            bank.try_insert(entry_with(&dir, b)).unwrap();
        }
        let kept: Vec<u64> = bank.entries().iter().map(|e| e.block_index()).collect();
        assert_eq!(kept, vec![2, 3]);
    }

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let mut bank = MemoryBank::new(0.98, 3, 2).unwrap();
        for b in 0..5u64 {
            let dir: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let data: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let keys = HeadTensor::new(2, 2, 2, data.clone()).unwrap();
            let values = HeadTensor::new(2, 2, 2, data.iter().map(|x| x * 2.0).collect()).unwrap();
            let kv = vec![
                LayerKV::new(0, keys.clone(), values.clone()).unwrap(),
                LayerKV::new(1, keys, values).unwrap(),
            ];
            bank.try_insert(MemoryEntry::new(unit_descriptor(&dir, b), kv).unwrap())
                .unwrap();
        }
        bank.mark_hot_exactly(&[1, 2]).unwrap();
        let mut buf = Vec::new();
        bank.write_snapshot(&mut buf).unwrap();
        let restored = MemoryBank::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(restored, bank);

        let empty = MemoryBank::<f64>::new(0.5, 2, 4).unwrap();
        let mut buf = Vec::new();
        empty.write_snapshot(&mut buf).unwrap();
        let restored = MemoryBank::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(restored.len(), 0);
        assert_eq!(restored.init_count(), 2);
    }

    #[test]
    fn snapshot_rejects_corrupted_input() {
        let bank = MemoryBank::<f64>::new(0.98, 1, 2).unwrap();
        let mut buf = Vec::new();
        bank.write_snapshot(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            MemoryBank::read_snapshot(&mut buf.as_slice()),
            Err(Error::Snapshot(_))
        ));
    }
}
