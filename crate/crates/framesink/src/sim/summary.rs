//! Cross-policy aggregation of rollout traces.

use crate::error::Result;
use crate::sim::config::{Policy, RolloutConfig, Scenario};
use crate::sim::emitter::{is_revisit_step, revisit_epoch, revisit_pass};
use crate::sim::trace::{format_f64, StepRecord};

/// Aggregates of one policy's trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport {
    pub policy: Policy,
    pub steps: usize,
    pub context_tokens_mean: Option<f64>,
    pub context_tokens_max: usize,
    /// Fraction of gated layer decisions over steps with retrieved context.
    pub gate_rate: Option<f64>,
    /// Mean over every selected `(block, score)` pair in the trace.
    pub mean_retrieval_score: Option<f64>,
    /// Fraction of revisit steps whose long-range context contained an
    /// earlier-pass block of the revisited epoch.
    pub revisit_hit_rate: Option<f64>,
    pub hot_footprint_max: usize,
    pub bank_size_final: usize,
}

impl PolicyReport {
    fn label(&self) -> &'static str {
        match self.policy {
            Policy::WindowOnly => "window",
            Policy::StaticSink(_) => "static",
            Policy::DynamicSink => "dysink",
        }
    }

    fn render_into(&self, out: &mut String) {
        let label = self.label();
        let fmt_opt = |v: Option<f64>| v.map_or("na".to_string(), format_f64);
        out.push_str(&format!("{}.steps = {}\n", label, self.steps));
        out.push_str(&format!(
            "{}.context_tokens_mean = {}\n",
            label,
            fmt_opt(self.context_tokens_mean)
        ));
        out.push_str(&format!("{}.context_tokens_max = {}\n", label, self.context_tokens_max));
        out.push_str(&format!("{}.gate_rate = {}\n", label, fmt_opt(self.gate_rate)));
        out.push_str(&format!(
            "{}.mean_retrieval_score = {}\n",
            label,
            fmt_opt(self.mean_retrieval_score)
        ));
        out.push_str(&format!(
            "{}.revisit_hit_rate = {}\n",
            label,
            fmt_opt(self.revisit_hit_rate)
        ));
        out.push_str(&format!("{}.hot_footprint_max = {}\n", label, self.hot_footprint_max));
        out.push_str(&format!("{}.bank_size_final = {}\n", label, self.bank_size_final));
    }
}

/// Side-by-side aggregation of the three policies over one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub blocks: usize,
    pub static_sink_frames: usize,
    /// Number of revisit steps counted (Revisit scenario only).
    pub revisit_steps: Option<usize>,
    pub window: PolicyReport,
    pub static_sink: PolicyReport,
    pub dynamic: PolicyReport,
}

impl ComparisonSummary {
    /// Render the frozen flat `key = value` summary (format v1).
    pub fn render(&self) -> String {
        let mut out = String::from("# framesink-summary v1\n");
        out.push_str(&format!("scenario = {}\n", self.scenario.token()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("blocks = {}\n", self.blocks));
        out.push_str(&format!("static_sink_frames = {}\n", self.static_sink_frames));
        out.push_str(&format!(
            "revisit_steps = {}\n",
            self.revisit_steps.map_or("na".to_string(), |n| n.to_string())
        ));
        self.window.render_into(&mut out);
        self.static_sink.render_into(&mut out);
        self.dynamic.render_into(&mut out);
        out
    }
}

fn base_report(policy: Policy, records: &[StepRecord]) -> PolicyReport {
    let mut token_sum = 0usize;
    let mut token_count = 0usize;
    let mut token_max = 0usize;
    let mut score_sum = 0.0;
    let mut score_count = 0usize;
    let mut gated = 0usize;
    let mut decisions = 0usize;
    let mut hot_max = 0usize;
    for record in records {
        for &c in &record.context_tokens {
            token_sum += c;
            token_count += 1;
            token_max = token_max.max(c);
        }
        for (_, s) in &record.retrieved {
            score_sum += s;
            score_count += 1;
        }
        if !record.retrieved.is_empty() {
            decisions += record.g.len();
            gated += record.g.iter().filter(|g| !**g).count();
        }
        hot_max = hot_max.max(record.hot_footprint);
    }
    PolicyReport {
        policy,
        steps: records.len(),
        context_tokens_mean: (token_count > 0).then(|| token_sum as f64 / token_count as f64),
        context_tokens_max: token_max,
        gate_rate: match policy {
            Policy::DynamicSink if decisions > 0 => Some(gated as f64 / decisions as f64),
            _ => None,
        },
        mean_retrieval_score: (score_count > 0).then(|| score_sum / score_count as f64),
        revisit_hit_rate: None,
        hot_footprint_max: hot_max,
        bank_size_final: records.last().map_or(0, |r| r.bank_size),
    }
}

/// Blocks any of whose frames are pinned by a static sink of `frames`.
fn static_sink_blocks(frames: usize, frames_per_block: usize) -> Vec<u64> {
    let n = frames.div_ceil(frames_per_block);
    (0..n as u64).collect()
}

/// Build the cross-policy summary from the three traces.
pub fn summarize(
    base: &RolloutConfig,
    static_frames: usize,
    window_trace: &[StepRecord],
    static_trace: &[StepRecord],
    dynamic_trace: &[StepRecord],
) -> Result<ComparisonSummary> {
    let window = base_report(Policy::WindowOnly, window_trace);
    let mut static_sink = base_report(Policy::StaticSink(static_frames), static_trace);
    let mut dynamic = base_report(Policy::DynamicSink, dynamic_trace);

    let mut revisit_steps = None;
    if base.scenario == Scenario::Revisit {
        let sink_blocks = static_sink_blocks(static_frames, base.frames_per_block);
        let mut steps = 0usize;
        let mut dynamic_hits = 0usize;
        let mut static_hits = 0usize;
        for record in dynamic_trace {
            let block = record.block_index;
            if !is_revisit_step(block, base.window_blocks) {
                continue;
            }
            steps += 1;
            let epoch = revisit_epoch(block);
            let pass = revisit_pass(block);
            if record
                .retrieved
                .iter()
                .any(|(b, _)| revisit_epoch(*b) == epoch && revisit_pass(*b) < pass)
            {
                dynamic_hits += 1;
            }
            if sink_blocks
                .iter()
                .any(|b| revisit_epoch(*b) == epoch && revisit_pass(*b) < pass)
            {
                static_hits += 1;
            }
        }
        revisit_steps = Some(steps);
        if steps > 0 {
            dynamic.revisit_hit_rate = Some(dynamic_hits as f64 / steps as f64);
            static_sink.revisit_hit_rate = Some(static_hits as f64 / steps as f64);
        }
    }

    Ok(ComparisonSummary {
        scenario: base.scenario,
        seed: base.seed,
        blocks: base.total_blocks,
        static_sink_frames: static_frames,
        revisit_steps,
        window,
        static_sink,
        dynamic,
    })
}
