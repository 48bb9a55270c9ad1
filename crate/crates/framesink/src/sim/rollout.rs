//! The streaming rollout loop: emit a block, project and rotate its QKV,
//! assemble the policy's historical context, run gated attention, update the
//! bank and window, and record one [`StepRecord`] per step.
//!
//! The loop itself is strictly sequential (each step depends on the previous
//! state); [`compare_policies`] runs the three policy rollouts concurrently
//! since they share no mutable state and the emitter is open-loop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::bank::{LayerKV, MemoryBank, MemoryEntry};
use crate::descriptor::{encode_block, BlockDescriptor, FrameEncoder, SyntheticEncoder};
use crate::error::{Error, Result};
use crate::gate::{consensus_fraction, gate_decision};
use crate::retrieval::{compose_context, retrieve_topk, AttentionContext, RetrievalResult};
use crate::sim::config::{GateInputs, Policy, RolloutConfig};
use crate::sim::emitter::BlockEmitter;
use crate::sim::linalg::{sub_seed, Projections, STREAM_ENCODER};
use crate::sim::summary::{summarize, ComparisonSummary};
use crate::sim::trace::{Fnv64, StepRecord};
use crate::tensor::{attention, rope_rotate_tensor, HeadTensor, RopeParams};

struct WindowBlock {
    block_index: u64,
    descriptor: BlockDescriptor<f64>,
    kv: Vec<LayerKV<f64>>,
    raw_keys: Option<Vec<HeadTensor<f64>>>,
}

/// Mutable state of one rollout.
pub struct SimState {
    config: RolloutConfig,
    rope: RopeParams<f64>,
    projections: Projections,
    encoder: SyntheticEncoder<f64>,
    emitter: BlockEmitter,
    bank: Option<MemoryBank<f64>>,
    window: VecDeque<WindowBlock>,
    /// Static-sink policy: per-layer KV of the first S frames, grown until
    /// S frames have been emitted.
    sink_kv: Vec<LayerKV<f64>>,
    sink_frames: usize,
    /// Unrotated keys of bank entries, kept only when the gate runs on
    /// pre-rotation representations.
    raw_bank_keys: BTreeMap<u64, Vec<HeadTensor<f64>>>,
    gated_decisions: u64,
    total_decisions: u64,
}

/// The descriptor encoder a rollout with this config uses. Exposed so trace
/// consumers can re-derive block descriptors independently of the rollout.
pub fn stream_encoder(config: &RolloutConfig) -> Result<SyntheticEncoder<f64>> {
    SyntheticEncoder::new(
        sub_seed(config.seed, STREAM_ENCODER, 0),
        config.descriptor_dim,
        config.model_dim(),
    )
}

impl SimState {
    pub fn new(config: &RolloutConfig) -> Result<Self> {
        config.validate()?;
        let projections = Projections::derive(config.seed, config.n_layers, config.model_dim());
        let encoder = stream_encoder(config)?;
        let emitter = BlockEmitter::new(config, &projections)?;
        let bank = match config.policy {
            Policy::DynamicSink => Some(
                // the window size is the natural initialization count: that
                // many blocks must pass before retrieval can produce
                // non-window candidates
                MemoryBank::new(config.tau_dedup, config.window_blocks, config.tokens_per_frame)?
                    .with_cold_capacity(config.cold_capacity),
            ),
            _ => None,
        };
        let sink_kv = (0..config.n_layers)
            .map(|layer| {
                LayerKV::new(
                    layer,
                    HeadTensor::zeros(0, config.heads, config.head_dim)?,
                    HeadTensor::zeros(0, config.heads, config.head_dim)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            rope: RopeParams::new(config.rope_base, config.head_dim)?,
            projections,
            encoder,
            emitter,
            bank,
            window: VecDeque::new(),
            sink_kv,
            sink_frames: 0,
            raw_bank_keys: BTreeMap::new(),
            gated_decisions: 0,
            total_decisions: 0,
        })
    }

    pub fn config(&self) -> &RolloutConfig {
        &self.config
    }

    pub fn bank(&self) -> Option<&MemoryBank<f64>> {
        self.bank.as_ref()
    }

    pub fn emitter(&self) -> &BlockEmitter {
        &self.emitter
    }

    fn empty_layer_kv(&self) -> Result<Vec<LayerKV<f64>>> {
        (0..self.config.n_layers)
            .map(|layer| {
                LayerKV::new(
                    layer,
                    HeadTensor::zeros(0, self.config.heads, self.config.head_dim)?,
                    HeadTensor::zeros(0, self.config.heads, self.config.head_dim)?,
                )
            })
            .collect()
    }

    /// Concatenated KV of the current window, per layer (post-rotation keys).
    fn local_layer_kv(&self) -> Result<Vec<LayerKV<f64>>> {
        if self.window.is_empty() {
            return self.empty_layer_kv();
        }
        (0..self.config.n_layers)
            .map(|layer| {
                let keys: Vec<&HeadTensor<f64>> =
                    self.window.iter().map(|w| w.kv[layer].keys()).collect();
                let values: Vec<&HeadTensor<f64>> =
                    self.window.iter().map(|w| w.kv[layer].values()).collect();
                LayerKV::new(
                    layer,
                    HeadTensor::concat_tokens(&keys)?,
                    HeadTensor::concat_tokens(&values)?,
                )
            })
            .collect()
    }

    /// Concatenated unrotated window keys per layer (pre-rope gating).
    fn local_raw_keys(&self) -> Result<Vec<HeadTensor<f64>>> {
        (0..self.config.n_layers)
            .map(|layer| {
                if self.window.is_empty() {
                    return HeadTensor::zeros(0, self.config.heads, self.config.head_dim);
                }
                let keys: Vec<&HeadTensor<f64>> = self
                    .window
                    .iter()
                    .map(|w| {
                        &w.raw_keys
                            .as_ref()
                            .expect("raw window keys are kept in pre-rope mode")[layer]
                    })
                    .collect();
                HeadTensor::concat_tokens(&keys)
            })
            .collect()
    }

    /// Run one block through the pipeline.
    pub fn step(&mut self) -> Result<StepRecord> {
        let config = self.config.clone();
        let block = self.emitter.next_block_index();
        let block_tokens = config.block_tokens();
        let start_pos = block * block_tokens as u64;
        let scale = 1.0 / (config.head_dim as f64).sqrt();
        let keep_raw = config.gate_inputs == GateInputs::PreRope;

        // emit and describe
        let latents = self.emitter.next_block()?;
        let features = self.encoder.encode_frames(&latents)?;
        let descriptor = encode_block(&features, block)?;

        // project to per-layer QKV and rotate queries/keys at this block's
        // absolute positions; values stay unrotated
        let mut q_post = Vec::with_capacity(config.n_layers);
        let mut k_post = Vec::with_capacity(config.n_layers);
        let mut q_raw_layers = Vec::with_capacity(config.n_layers);
        let mut k_raw_layers = Vec::with_capacity(config.n_layers);
        let mut v_layers = Vec::with_capacity(config.n_layers);
        for layer in 0..config.n_layers {
            let mut q_data = Vec::with_capacity(block_tokens * config.model_dim());
            let mut k_data = Vec::with_capacity(block_tokens * config.model_dim());
            let mut v_data = Vec::with_capacity(block_tokens * config.model_dim());
            for latent in &latents {
                let q_row = self.projections.w_q[layer].apply_row(latent.as_slice());
                let k_row = self.projections.w_k[layer].apply_row(latent.as_slice());
                let v_row = self.projections.w_v[layer].apply_row(latent.as_slice());
                for _ in 0..config.tokens_per_frame {
                    q_data.extend_from_slice(&q_row);
                    k_data.extend_from_slice(&k_row);
                    v_data.extend_from_slice(&v_row);
                }
            }
            let q_raw = HeadTensor::new(block_tokens, config.heads, config.head_dim, q_data)?;
            let k_raw = HeadTensor::new(block_tokens, config.heads, config.head_dim, k_data)?;
            let v_raw = HeadTensor::new(block_tokens, config.heads, config.head_dim, v_data)?;
            q_post.push(rope_rotate_tensor(&q_raw, start_pos, &self.rope)?);
            k_post.push(rope_rotate_tensor(&k_raw, start_pos, &self.rope)?);
            q_raw_layers.push(q_raw);
            k_raw_layers.push(k_raw);
            v_layers.push(v_raw);
        }

        let local_kv = self.local_layer_kv()?;

        // policy-specific historical context
        let mut retrieved_pairs: Vec<(u64, f64)> = Vec::new();
        let mut rho: Vec<Vec<f64>> = Vec::new();
        let mut gates: Vec<bool> = Vec::new();
        let full_ctx: Option<AttentionContext<f64>>;
        let local_ctx: AttentionContext<f64>;
        let mut static_ctx: Option<Vec<LayerKV<f64>>> = None;

        match config.policy {
            Policy::WindowOnly => {
                full_ctx = None;
                local_ctx = compose_context(&[], &local_kv)?;
            }
            Policy::StaticSink(sink_frames) => {
                // only sink frames already outside the window contribute;
                // recent frames are represented by the window itself
                let window_start_block = block - self.window.len() as u64;
                let outside_window_frames =
                    (window_start_block as usize) * config.frames_per_block;
                let usable = self.sink_frames.min(sink_frames).min(outside_window_frames);
                let tokens = usable * config.tokens_per_frame;
                let ctx = (0..config.n_layers)
                    .map(|layer| {
                        let sink_keys = self.sink_kv[layer].keys().slice_tokens(0, tokens)?;
                        let sink_values = self.sink_kv[layer].values().slice_tokens(0, tokens)?;
                        let local = &local_kv[layer];
                        LayerKV::new(
                            layer,
                            HeadTensor::concat_tokens(&[&sink_keys, local.keys()])?,
                            HeadTensor::concat_tokens(&[&sink_values, local.values()])?,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                static_ctx = Some(ctx);
                full_ctx = None;
                local_ctx = compose_context(&[], &local_kv)?;
            }
            Policy::DynamicSink => {
                let bank = self.bank.as_ref().expect("dynamic policy keeps a bank");
                let window_indices: BTreeSet<u64> =
                    self.window.iter().map(|w| w.block_index).collect();
                let window_descriptors: Vec<BlockDescriptor<f64>> =
                    self.window.iter().map(|w| w.descriptor.clone()).collect();
                let retrieval: RetrievalResult<f64> =
                    if window_descriptors.is_empty() || bank.is_empty() {
                        RetrievalResult::empty(config.retrieval_k)
                    } else {
                        retrieve_topk(bank, &window_descriptors, &window_indices, config.retrieval_k)?
                    };
                retrieved_pairs = retrieval.selected().to_vec();
                let retrieved_entries: Vec<&MemoryEntry<f64>> = retrieval
                    .block_indices()
                    .iter()
                    .map(|idx| bank.get(*idx).expect("retrieved entries exist"))
                    .collect();

                let local_raw = if keep_raw && !retrieved_entries.is_empty() {
                    Some(self.local_raw_keys()?)
                } else {
                    None
                };
                for layer in 0..config.n_layers {
                    let mut layer_rho = Vec::with_capacity(retrieved_entries.len());
                    for entry in &retrieved_entries {
                        let fraction = match config.gate_inputs {
                            GateInputs::PostRope => consensus_fraction(
                                &q_post[layer],
                                entry.layer_kv(layer).keys(),
                                local_kv[layer].keys(),
                            )?,
                            GateInputs::PreRope => consensus_fraction(
                                &q_raw_layers[layer],
                                &self.raw_bank_keys[&entry.block_index()][layer],
                                &local_raw.as_ref().expect("raw local keys")[layer],
                            )?,
                        };
                        layer_rho.push(fraction);
                    }
                    let decision = gate_decision(layer, &layer_rho, config.tau_gate)?;
                    rho.push(layer_rho);
                    gates.push(decision.g());
                }
                full_ctx = Some(compose_context(&retrieved_entries, &local_kv)?);
                local_ctx = compose_context(&[], &local_kv)?;
            }
        }

        // attention per layer over the gated context plus the block's own
        // keys, causal within the block
        let mut layer_checksums = Vec::with_capacity(config.n_layers);
        let mut context_tokens = Vec::with_capacity(config.n_layers);
        let mut combined = Fnv64::new();
        for layer in 0..config.n_layers {
            let (ctx_keys, ctx_values) = match config.policy {
                Policy::WindowOnly => {
                    let l = local_ctx.layer(layer);
                    (l.keys(), l.values())
                }
                Policy::StaticSink(_) => {
                    let kv = &static_ctx.as_ref().expect("static context")[layer];
                    (kv.keys(), kv.values())
                }
                Policy::DynamicSink => {
                    let open = gates.get(layer).copied().unwrap_or(true);
                    let ctx = if open && !retrieved_pairs.is_empty() {
                        full_ctx.as_ref().expect("composed context")
                    } else {
                        &local_ctx
                    };
                    let l = ctx.layer(layer);
                    (l.keys(), l.values())
                }
            };
            context_tokens.push(ctx_keys.tokens());
            let out = block_attention(
                &q_post[layer],
                ctx_keys,
                ctx_values,
                &k_post[layer],
                &v_layers[layer],
                scale,
            )?;
            let mut hasher = Fnv64::new();
            hasher.write_slice(out.data());
            combined.write_slice(out.data());
            layer_checksums.push(hasher.finish());
        }

        // bank update: admit, then retier (retrieved hot, everything else
        // cold, the fresh block included)
        let mut admitted = None;
        if config.policy == Policy::DynamicSink {
            let bank = self.bank.as_mut().expect("dynamic policy keeps a bank");
            let kv_layers: Vec<LayerKV<f64>> = (0..config.n_layers)
                .map(|layer| {
                    LayerKV::new(layer, k_post[layer].clone(), v_layers[layer].clone())
                })
                .collect::<Result<Vec<_>>>()?;
            let entry = MemoryEntry::new(descriptor.clone(), kv_layers)?;
            let outcome = bank.try_insert(entry)?;
            let was_admitted = matches!(outcome, crate::bank::InsertOutcome::Admitted);
            admitted = Some(was_admitted);
            if keep_raw && was_admitted {
                self.raw_bank_keys.insert(block, k_raw_layers.clone());
            }
            let hot: Vec<u64> = retrieved_pairs.iter().map(|(b, _)| *b).collect();
            bank.mark_hot_exactly(&hot)?;
            if keep_raw {
                let bank_ref = &*bank;
                self.raw_bank_keys.retain(|idx, _| bank_ref.get(*idx).is_some());
            }
            if !retrieved_pairs.is_empty() {
                self.total_decisions += config.n_layers as u64;
                self.gated_decisions += gates.iter().filter(|g| !**g).count() as u64;
            }
        }

        // static sink accumulation: pin the first S frames as they appear
        if let Policy::StaticSink(sink_frames) = config.policy {
            if self.sink_frames < sink_frames {
                let take_frames = (sink_frames - self.sink_frames).min(config.frames_per_block);
                let take_tokens = take_frames * config.tokens_per_frame;
                for layer in 0..config.n_layers {
                    let new_keys = HeadTensor::concat_tokens(&[
                        self.sink_kv[layer].keys(),
                        &k_post[layer].slice_tokens(0, take_tokens)?,
                    ])?;
                    let new_values = HeadTensor::concat_tokens(&[
                        self.sink_kv[layer].values(),
                        &v_layers[layer].slice_tokens(0, take_tokens)?,
                    ])?;
                    self.sink_kv[layer] = LayerKV::new(layer, new_keys, new_values)?;
                }
                self.sink_frames += take_frames;
            }
        }

        // window update
        let kv: Vec<LayerKV<f64>> = (0..config.n_layers)
            .map(|layer| LayerKV::new(layer, k_post[layer].clone(), v_layers[layer].clone()))
            .collect::<Result<Vec<_>>>()?;
        self.window.push_back(WindowBlock {
            block_index: block,
            descriptor,
            kv,
            raw_keys: keep_raw.then_some(k_raw_layers),
        });
        while self.window.len() > config.window_blocks {
            self.window.pop_front();
        }

        let gate_rate = if self.total_decisions > 0 {
            Some(self.gated_decisions as f64 / self.total_decisions as f64)
        } else {
            None
        };
        let (hot_footprint, bank_size) = match &self.bank {
            Some(bank) => (bank.hot_footprint(), bank.len()),
            None => (0, 0),
        };
        Ok(StepRecord {
            block_index: block,
            admitted,
            retrieved: retrieved_pairs,
            rho,
            g: gates,
            gate_rate,
            context_tokens,
            hot_footprint,
            bank_size,
            layer_checksums,
            checksum: combined.finish(),
        })
    }
}

/// Attention of the current block's queries over `context + own keys`,
/// causal within the block: query token `t` sees the context plus its own
/// block's tokens `0..=t`.
fn block_attention(
    q: &HeadTensor<f64>,
    ctx_keys: &HeadTensor<f64>,
    ctx_values: &HeadTensor<f64>,
    self_keys: &HeadTensor<f64>,
    self_values: &HeadTensor<f64>,
    scale: f64,
) -> Result<HeadTensor<f64>> {
    let mut data = Vec::with_capacity(q.tokens() * q.heads() * q.head_dim());
    for t in 0..q.tokens() {
        let q_t = q.slice_tokens(t, t + 1)?;
        let self_k = self_keys.slice_tokens(0, t + 1)?;
        let self_v = self_values.slice_tokens(0, t + 1)?;
        let keys = HeadTensor::concat_tokens(&[ctx_keys, &self_k])?;
        let values = HeadTensor::concat_tokens(&[ctx_values, &self_v])?;
        let out = attention(&q_t, &keys, &values, scale)?;
        data.extend_from_slice(out.data());
    }
    HeadTensor::new(q.tokens(), q.heads(), q.head_dim(), data)
}

/// Run `total_blocks` steps from a fresh state.
pub fn run_rollout(config: &RolloutConfig) -> Result<Vec<StepRecord>> {
    let mut state = SimState::new(config)?;
    let mut records = Vec::with_capacity(config.total_blocks);
    for _ in 0..config.total_blocks {
        records.push(state.step()?);
    }
    Ok(records)
}

/// Run the window-only, static-sink, and dynamic-sink policies over the same
/// seed and aggregate their traces.
///
/// The static sink budget comes from the base config when its policy is
/// `static:<S>`; otherwise it defaults to `k * L` frames, the same number of
/// historical frames the dynamic policy may retrieve.
pub fn compare_policies(base: &RolloutConfig) -> Result<ComparisonSummary> {
    base.validate()?;
    let static_frames = match base.policy {
        Policy::StaticSink(s) => s,
        _ => base.retrieval_k * base.frames_per_block,
    };
    let configs = [
        RolloutConfig { policy: Policy::WindowOnly, ..base.clone() },
        RolloutConfig { policy: Policy::StaticSink(static_frames), ..base.clone() },
        RolloutConfig { policy: Policy::DynamicSink, ..base.clone() },
    ];
    let mut results: Vec<Result<Vec<StepRecord>>> = Vec::with_capacity(3);
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|config| scope.spawn(move || run_rollout(config)))
            .collect();
        for handle in handles {
            results.push(handle.join().map_err(|_| Error::Io("rollout thread panicked".into()))?);
        }
        Ok::<(), Error>(())
    })?;
    let mut traces = Vec::with_capacity(3);
    for result in results {
        traces.push(result?);
    }
    let dynamic = traces.pop().expect("three traces");
    let static_trace = traces.pop().expect("three traces");
    let window = traces.pop().expect("three traces");
    summarize(base, static_frames, &window, &static_trace, &dynamic)
}
