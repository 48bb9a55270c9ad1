//! Deterministic synthetic block emitter.
//!
//! Stands in for a real generator: each block is a list of per-frame latent
//! vectors derived purely from `(seed, scenario, block index)`, so the same
//! config always emits the same stream and different policies over one seed
//! see identical blocks.
//!
//! Scenarios:
//! - **Drift**: the latent direction rotates slowly through three
//!   incommensurate planes (golden-ratio frequency steps), so nearby blocks
//!   stay similar while distant blocks decorrelate and the trajectory never
//!   exactly returns.
//! - **Revisit**: after a one-off intro epoch, the direction cycles through
//!   three recurring epochs. Every re-occurrence of an epoch makes earlier
//!   bank entries of that epoch the uniquely relevant history.
//! - **Adversarial**: periodic pulses construct attractor blocks whose keys,
//!   after rotary rotation at their own positions, land exactly on the
//!   representative query of a later query block (one target layer per
//!   pulse). Those phase-realigned keys pull every head's affinity above the
//!   local window's, which is precisely the inter-head consensus the gate
//!   exists to suppress. Pulse layout per period: attractor, W stealth
//!   blocks (faint copies that steer retrieval toward the attractor without
//!   adding local key energy), the query block, then cooldown noise.

use crate::error::Result;
use crate::gate::representative_query;
use crate::sim::config::{RolloutConfig, Scenario};
use crate::sim::linalg::{sub_rng, Mat, Projections, STREAM_ADV, STREAM_EMIT, STREAM_EPOCH};
use crate::tensor::{unrotate_head_in_place, HeadTensor, RopeParams, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// Drift: radians per frame in the slowest plane; the other planes step
// faster by golden-ratio multiples so the trajectory is aperiodic.
const DRIFT_RATE: f64 = 0.02;
const GOLDEN: f64 = 1.618_033_988_749_895;
const DRIFT_JITTER: f64 = 0.02;

/// Blocks per epoch in the Revisit scenario.
pub const REVISIT_EPOCH_BLOCKS: u64 = 5;
/// Number of recurring epochs cycled after the intro epoch.
pub const REVISIT_CYCLE_EPOCHS: u64 = 3;
const REVISIT_JITTER: f64 = 0.03;

// Adversarial pulse shape and gains.
const ADV_COOLDOWN_BLOCKS: u64 = 2;
const ADV_WARMUP_EXTRA: u64 = 2;
const ADV_ATTRACTOR_GAIN: f64 = 4.0;
const ADV_STEALTH_GAIN: f64 = 1e-3;

/// Role a block plays inside the adversarial pulse schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarialRole {
    Noise,
    Attractor { pulse: u64 },
    Stealth { pulse: u64 },
    Query { pulse: u64 },
}

/// Epoch of a Revisit-scenario block.
pub fn revisit_epoch(block: u64) -> u64 {
    if block < REVISIT_EPOCH_BLOCKS {
        0
    } else {
        1 + ((block - REVISIT_EPOCH_BLOCKS) / REVISIT_EPOCH_BLOCKS) % REVISIT_CYCLE_EPOCHS
    }
}

/// How many completed cycles of the recurring epochs precede this block:
/// pass 0 is an epoch's first occurrence, pass >= 1 a re-occurrence.
pub fn revisit_pass(block: u64) -> u64 {
    if block < REVISIT_EPOCH_BLOCKS {
        0
    } else {
        (block - REVISIT_EPOCH_BLOCKS) / (REVISIT_EPOCH_BLOCKS * REVISIT_CYCLE_EPOCHS)
    }
}

/// A revisit step re-enters a previously seen epoch with the whole sliding
/// window already inside that epoch, so retrieval is unambiguous.
pub fn is_revisit_step(block: u64, window_blocks: usize) -> bool {
    if block < REVISIT_EPOCH_BLOCKS {
        return false;
    }
    let offset_in_epoch = (block - REVISIT_EPOCH_BLOCKS) % REVISIT_EPOCH_BLOCKS;
    revisit_pass(block) >= 1 && offset_in_epoch >= window_blocks as u64
}

/// Seeded synthetic block source. `next_block` is stateful only in the block
/// counter; every block is a pure function of `(config, block index)`.
#[derive(Debug, Clone)]
pub struct BlockEmitter {
    seed: u64,
    scenario: Scenario,
    frames_per_block: usize,
    tokens_per_frame: usize,
    window_blocks: u64,
    n_layers: usize,
    latent_dim: usize,
    rope: RopeParams<f64>,
    w_q: Vec<Mat>,
    w_k_inv: Vec<Mat>,
    next_block: u64,
}

impl BlockEmitter {
    pub fn new(config: &RolloutConfig, projections: &Projections) -> Result<Self> {
        let w_k_inv = match config.scenario {
            Scenario::Adversarial => projections
                .w_k
                .iter()
                .map(|m| m.invert())
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        Ok(Self {
            seed: config.seed,
            scenario: config.scenario,
            frames_per_block: config.frames_per_block,
            tokens_per_frame: config.tokens_per_frame,
            window_blocks: config.window_blocks as u64,
            n_layers: config.n_layers,
            latent_dim: config.model_dim(),
            rope: RopeParams::new(config.rope_base, config.head_dim)?,
            w_q: projections.w_q.clone(),
            w_k_inv,
            next_block: 0,
        })
    }

    pub fn next_block_index(&self) -> u64 {
        self.next_block
    }

    /// Emit the next block's frame latents and advance the counter.
    pub fn next_block(&mut self) -> Result<Vec<Vector<f64>>> {
        let block = self.next_block;
        self.next_block += 1;
        self.latents_for_block(block)
    }

    /// Frame latents of an arbitrary block, independent of emitter position.
    pub fn latents_for_block(&self, block: u64) -> Result<Vec<Vector<f64>>> {
        match self.scenario {
            Scenario::Drift => self.drift_block(block),
            Scenario::Revisit => self.revisit_block(block),
            Scenario::Adversarial => self.adversarial_block(block),
        }
    }

    /// Pulse schedule role of a block under the Adversarial scenario.
    pub fn adversarial_role(&self, block: u64) -> AdversarialRole {
        let warmup = self.window_blocks + ADV_WARMUP_EXTRA;
        if block < warmup {
            return AdversarialRole::Noise;
        }
        let period = 1 + self.window_blocks + 1 + ADV_COOLDOWN_BLOCKS;
        let offset = (block - warmup) % period;
        let pulse = (block - warmup) / period;
        if offset == 0 {
            AdversarialRole::Attractor { pulse }
        } else if offset <= self.window_blocks {
            AdversarialRole::Stealth { pulse }
        } else if offset == self.window_blocks + 1 {
            AdversarialRole::Query { pulse }
        } else {
            AdversarialRole::Noise
        }
    }

    /// The layer a pulse's attractor keys are aligned against.
    pub fn adversarial_target_layer(&self, pulse: u64) -> usize {
        (pulse % self.n_layers as u64) as usize
    }

    fn block_tokens(&self) -> u64 {
        (self.frames_per_block * self.tokens_per_frame) as u64
    }

    fn noise_block(&self, block: u64, scale: f64) -> Vec<Vector<f64>> {
        let mut rng = sub_rng(self.seed, STREAM_EMIT, block);
        (0..self.frames_per_block)
            .map(|_| {
                let v = unit_noise(&mut rng, self.latent_dim);
                Vector::new(v.into_iter().map(|x| x * scale).collect()).expect("finite noise")
            })
            .collect()
    }

    fn drift_block(&self, block: u64) -> Result<Vec<Vector<f64>>> {
        let planes = (self.latent_dim / 2).clamp(1, 3);
        let amp = 1.0 / (planes as f64).sqrt();
        let mut rng = sub_rng(self.seed, STREAM_EMIT, block);
        let mut frames = Vec::with_capacity(self.frames_per_block);
        for f in 0..self.frames_per_block {
            let n = (block * self.frames_per_block as u64 + f as u64) as f64;
            let mut latent = vec![0.0; self.latent_dim];
            for (p, chunk) in latent.chunks_exact_mut(2).take(planes).enumerate() {
                let theta = DRIFT_RATE * GOLDEN.powi(p as i32) * n;
                chunk[0] = amp * theta.cos();
                chunk[1] = amp * theta.sin();
            }
            let noise = unit_noise(&mut rng, self.latent_dim);
            for (x, e) in latent.iter_mut().zip(&noise) {
                *x += DRIFT_JITTER * e;
            }
            frames.push(Vector::new(latent)?);
        }
        Ok(frames)
    }

    fn revisit_block(&self, block: u64) -> Result<Vec<Vector<f64>>> {
        let epoch = revisit_epoch(block);
        let dir = unit_noise(&mut sub_rng(self.seed, STREAM_EPOCH, epoch), self.latent_dim);
        let mut rng = sub_rng(self.seed, STREAM_EMIT, block);
        let mut frames = Vec::with_capacity(self.frames_per_block);
        for _ in 0..self.frames_per_block {
            let noise = unit_noise(&mut rng, self.latent_dim);
            let latent: Vec<f64> = dir
                .iter()
                .zip(&noise)
                .map(|(d, e)| d + REVISIT_JITTER * e)
                .collect();
            frames.push(Vector::new(latent)?);
        }
        Ok(frames)
    }

    fn adversarial_block(&self, block: u64) -> Result<Vec<Vector<f64>>> {
        match self.adversarial_role(block) {
            AdversarialRole::Noise => Ok(self.noise_block(block, 1.0)),
            AdversarialRole::Query { pulse } => {
                let dir = self.query_direction(pulse);
                Ok((0..self.frames_per_block)
                    .map(|_| Vector::new(dir.clone()).expect("finite direction"))
                    .collect::<Vec<_>>())
            }
            AdversarialRole::Attractor { pulse } => self.attractor_latents(pulse),
            AdversarialRole::Stealth { pulse } => {
                let attractor = self.attractor_latents(pulse)?;
                attractor
                    .into_iter()
                    .map(|f| f.scaled(ADV_STEALTH_GAIN))
                    .collect()
            }
        }
    }

    fn query_direction(&self, pulse: u64) -> Vec<f64> {
        unit_noise(&mut sub_rng(self.seed, STREAM_ADV, pulse), self.latent_dim)
    }

    fn pulse_blocks(&self, pulse: u64) -> (u64, u64) {
        let warmup = self.window_blocks + ADV_WARMUP_EXTRA;
        let period = 1 + self.window_blocks + 1 + ADV_COOLDOWN_BLOCKS;
        let attractor = warmup + pulse * period;
        let query = attractor + self.window_blocks + 1;
        (attractor, query)
    }

    /// Build one pulse's attractor latents.
    ///
    /// The query block's rotated representative query per head is computed
    /// for the pulse's target layer, stacked into one model-width row, then
    /// un-rotated at each frame's first token position and pushed back
    /// through the inverse key projection. Rotary rotation at emission time
    /// therefore lands those key rows exactly on the future representative
    /// query: phase re-alignment by construction.
    fn attractor_latents(&self, pulse: u64) -> Result<Vec<Vector<f64>>> {
        let (attractor_block, query_block) = self.pulse_blocks(pulse);
        let layer = self.adversarial_target_layer(pulse);
        let tokens = self.block_tokens() as usize;
        let heads = self.latent_dim / self.rope.head_dim();
        let head_dim = self.rope.head_dim();

        // the query block's queries at its own positions
        let dir = self.query_direction(pulse);
        let mut q_rows = Vec::with_capacity(tokens * self.latent_dim);
        for _ in 0..tokens {
            q_rows.extend_from_slice(&self.w_q[layer].apply_row(&dir));
        }
        let q_raw = HeadTensor::new(tokens, heads, head_dim, q_rows)?;
        let q_post = crate::tensor::rope_rotate_tensor(&q_raw, query_block * self.block_tokens(), &self.rope)?;
        let q_bar = representative_query(&q_post)?;
        let mut target = Vec::with_capacity(self.latent_dim);
        for head_vec in &q_bar {
            target.extend_from_slice(head_vec.as_slice());
        }

        let mut frames = Vec::with_capacity(self.frames_per_block);
        for f in 0..self.frames_per_block {
            let slot0 = attractor_block * self.block_tokens() + (f * self.tokens_per_frame) as u64;
            let mut pre = target.clone();
            for chunk in pre.chunks_exact_mut(head_dim) {
                unrotate_head_in_place(chunk, slot0, &self.rope);
            }
            let latent = self.w_k_inv[layer].apply_row(&pre);
            frames.push(Vector::new(latent.into_iter().map(|x| x * ADV_ATTRACTOR_GAIN).collect())?);
        }
        Ok(frames)
    }
}

fn unit_noise(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
