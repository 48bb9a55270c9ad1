//! Rollout configuration and the flat `key = value` config file format.
//!
//! Config files are UTF-8 text, one `key = value` pair per line. Blank lines
//! and lines starting with `#` are ignored. Unknown or repeated keys are
//! errors. Every key is optional; omitted keys take the defaults below.

use crate::error::{Error, Result};

/// Which historical context a rollout step attends to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Only the sliding window.
    WindowOnly,
    /// The first S frames of the rollout pinned as anchors, plus the window.
    StaticSink(usize),
    /// Retrieved memory-bank blocks as dynamic anchors, gated per layer,
    /// plus the window.
    DynamicSink,
}

impl Policy {
    /// Parse a policy token: `window`, `static:<S>`, or `dysink`.
    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "window" => Ok(Policy::WindowOnly),
            "dysink" => Ok(Policy::DynamicSink),
            other => {
                if let Some(s) = other.strip_prefix("static:") {
                    let frames: usize = s.parse().map_err(|_| {
                        Error::Config(format!("bad static sink frame count '{}'", s))
                    })?;
                    Ok(Policy::StaticSink(frames))
                } else {
                    Err(Error::Config(format!(
                        "unknown policy '{}' (expected window, static:<S>, or dysink)",
                        other
                    )))
                }
            }
        }
    }

    pub fn token(&self) -> String {
        match self {
            Policy::WindowOnly => "window".to_string(),
            Policy::StaticSink(s) => format!("static:{}", s),
            Policy::DynamicSink => "dysink".to_string(),
        }
    }
}

/// Synthetic block stream shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Feature direction rotates slowly and never returns.
    Drift,
    /// Feature direction cycles back to earlier epochs after long intervals.
    Revisit,
    /// Periodic pulses of phase-realigned keys engineered to trigger
    /// inter-head consensus on one layer per pulse.
    Adversarial,
}

impl Scenario {
    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "drift" => Ok(Scenario::Drift),
            "revisit" => Ok(Scenario::Revisit),
            "adversarial" => Ok(Scenario::Adversarial),
            other => Err(Error::Config(format!(
                "unknown scenario '{}' (expected drift, revisit, or adversarial)",
                other
            ))),
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            Scenario::Drift => "drift",
            Scenario::Revisit => "revisit",
            Scenario::Adversarial => "adversarial",
        }
    }
}

/// Which representations feed the gate's affinity statistics: the rotated
/// queries/keys attention actually compares, or their unrotated forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateInputs {
    PostRope,
    PreRope,
}

impl GateInputs {
    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "post_rope" => Ok(GateInputs::PostRope),
            "pre_rope" => Ok(GateInputs::PreRope),
            other => Err(Error::Config(format!(
                "unknown gate_inputs '{}' (expected post_rope or pre_rope)",
                other
            ))),
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            GateInputs::PostRope => "post_rope",
            GateInputs::PreRope => "pre_rope",
        }
    }
}

/// Every scalar hyperparameter of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    /// Latent frames per block (L).
    pub frames_per_block: usize,
    /// Sliding window size in blocks (W).
    pub window_blocks: usize,
    /// Retrieval count (k).
    pub retrieval_k: usize,
    /// Admission threshold: max descriptor cosine a candidate may have
    /// against the bank and still be admitted.
    pub tau_dedup: f64,
    /// Consensus threshold: max per-block head fraction a layer tolerates
    /// before suppressing its retrieved context.
    pub tau_gate: f64,
    /// Attention heads (H).
    pub heads: usize,
    /// Per-head dimension (even).
    pub head_dim: usize,
    /// Descriptor dimension (d).
    pub descriptor_dim: usize,
    /// Transformer layers simulated.
    pub n_layers: usize,
    /// Tokens per latent frame.
    pub tokens_per_frame: usize,
    /// Rotary frequency base.
    pub rope_base: f64,
    /// Master seed: projections, encoder, and block stream derive from it.
    pub seed: u64,
    pub policy: Policy,
    /// Blocks to roll out.
    pub total_blocks: usize,
    pub scenario: Scenario,
    /// Representations feeding gate affinities.
    pub gate_inputs: GateInputs,
    /// Optional cap on cold bank entries (oldest evicted first). Off by
    /// default: offloading alone never evicts.
    pub cold_capacity: Option<usize>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            frames_per_block: 3,
            window_blocks: 3,
            retrieval_k: 2,
            tau_dedup: 0.98,
            tau_gate: 0.5,
            heads: 8,
            head_dim: 16,
            descriptor_dim: 64,
            n_layers: 4,
            tokens_per_frame: 2,
            rope_base: 10000.0,
            seed: 42,
            policy: Policy::DynamicSink,
            total_blocks: 200,
            scenario: Scenario::Drift,
            gate_inputs: GateInputs::PostRope,
            cold_capacity: None,
        }
    }
}

impl RolloutConfig {
    /// Model width: heads times head_dim; also the latent dimension.
    pub fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Tokens per block.
    pub fn block_tokens(&self) -> usize {
        self.frames_per_block * self.tokens_per_frame
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: usize) -> Result<()> {
            if v == 0 {
                return Err(Error::Config(format!("{} must be positive", name)));
            }
            Ok(())
        }
        positive("frames_per_block", self.frames_per_block)?;
        positive("window_blocks", self.window_blocks)?;
        positive("retrieval_k", self.retrieval_k)?;
        positive("heads", self.heads)?;
        positive("head_dim", self.head_dim)?;
        positive("n_layers", self.n_layers)?;
        positive("tokens_per_frame", self.tokens_per_frame)?;
        if self.descriptor_dim < 2 {
            return Err(Error::Config("descriptor_dim must be at least 2".into()));
        }
        if !self.head_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("head_dim must be even, got {}", self.head_dim)));
        }
        if !(self.tau_dedup > 0.0 && self.tau_dedup <= 1.0) {
            return Err(Error::Config("tau_dedup must lie in (0, 1]".into()));
        }
        if !(self.tau_gate > 0.0 && self.tau_gate < 1.0) {
            return Err(Error::Config("tau_gate must lie in (0, 1)".into()));
        }
        if self.rope_base <= 1.0 || !self.rope_base.is_finite() {
            return Err(Error::Config("rope_base must exceed 1".into()));
        }
        Ok(())
    }

    /// Parse a config file body over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RolloutConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{}'",
                    lineno + 1,
                    line
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {}: repeated key '{}'", lineno + 1, key)));
            }
            seen.push(key.to_string());
            config.apply(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {}", lineno + 1, msg)),
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Apply one `key = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse_usize(key: &str, value: &str) -> Result<usize> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad integer for {}: '{}'", key, value)))
        }
        fn parse_f64(key: &str, value: &str) -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad number for {}: '{}'", key, value)))
        }
        match key {
            "frames_per_block" => self.frames_per_block = parse_usize(key, value)?,
            "window_blocks" => self.window_blocks = parse_usize(key, value)?,
            "retrieval_k" => self.retrieval_k = parse_usize(key, value)?,
            "tau_dedup" => self.tau_dedup = parse_f64(key, value)?,
            "tau_gate" => self.tau_gate = parse_f64(key, value)?,
            "heads" => self.heads = parse_usize(key, value)?,
            "head_dim" => self.head_dim = parse_usize(key, value)?,
            "descriptor_dim" => self.descriptor_dim = parse_usize(key, value)?,
            "n_layers" => self.n_layers = parse_usize(key, value)?,
            "tokens_per_frame" => self.tokens_per_frame = parse_usize(key, value)?,
            "rope_base" => self.rope_base = parse_f64(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed '{}'", value)))?;
            }
            "policy" => self.policy = Policy::parse(value)?,
            "total_blocks" => self.total_blocks = parse_usize(key, value)?,
            "scenario" => self.scenario = Scenario::parse(value)?,
            "gate_inputs" => self.gate_inputs = GateInputs::parse(value)?,
            "cold_capacity" => {
                self.cold_capacity = if value == "none" {
                    None
                } else {
                    Some(parse_usize(key, value)?)
                };
            }
            other => return Err(Error::Config(format!("unknown key '{}'", other))),
        }
        Ok(())
    }

    /// The config echoed as `key = value` lines in canonical key order, with
    /// floats at full 17-significant-digit precision.
    pub fn echo_lines(&self) -> Vec<String> {
        vec![
            format!("frames_per_block = {}", self.frames_per_block),
            format!("window_blocks = {}", self.window_blocks),
            format!("retrieval_k = {}", self.retrieval_k),
            format!("tau_dedup = {:.16e}", self.tau_dedup),
            format!("tau_gate = {:.16e}", self.tau_gate),
            format!("heads = {}", self.heads),
            format!("head_dim = {}", self.head_dim),
            format!("descriptor_dim = {}", self.descriptor_dim),
            format!("n_layers = {}", self.n_layers),
            format!("tokens_per_frame = {}", self.tokens_per_frame),
            format!("rope_base = {:.16e}", self.rope_base),
            format!("seed = {}", self.seed),
            format!("policy = {}", self.policy.token()),
            format!("total_blocks = {}", self.total_blocks),
            format!("scenario = {}", self.scenario.token()),
            format!("gate_inputs = {}", self.gate_inputs.token()),
            format!(
                "cold_capacity = {}",
                self.cold_capacity.map_or("none".to_string(), |c| c.to_string())
            ),
        ]
    }
}
