//! Line-delimited rollout trace: one record per step, field names and order
//! frozen (format v1, documented in docs/formats.md).
//!
//! Floating-point fields print with 17 significant digits so a parsed trace
//! reproduces the original values bit-exactly. Checksums are FNV-1a 64 over
//! the little-endian bit patterns of the attention outputs.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::config::RolloutConfig;

pub const TRACE_MAGIC: &str = "# framesink-trace v1";

/// FNV-1a 64-bit accumulator over f64 bit patterns.
#[derive(Debug, Clone)]
pub struct Fnv64(u64);

impl Fnv64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    pub fn new() -> Self {
        Self(Self::OFFSET)
    }

    pub fn write_f64(&mut self, x: f64) {
        for byte in x.to_bits().to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    pub fn write_slice(&mut self, xs: &[f64]) {
        for &x in xs {
            self.write_f64(x);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Format a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Everything observed at one rollout step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub block_index: u64,
    /// Whether this block entered the bank; absent for policies without one.
    pub admitted: Option<bool>,
    /// `(block_index, relevance score)` pairs, scores non-increasing.
    pub retrieved: Vec<(u64, f64)>,
    /// Per-layer consensus fractions, one inner value per retrieved block.
    /// Empty outer list for policies without a gate.
    pub rho: Vec<Vec<f64>>,
    /// Per-layer gate bits (true keeps retrieved context). Empty for
    /// policies without a gate.
    pub g: Vec<bool>,
    /// Cumulative fraction of gated layer decisions over steps that had
    /// retrieved context; absent until the first such step or for policies
    /// without a gate.
    pub gate_rate: Option<f64>,
    /// Per-layer historical context token count (excludes the current
    /// block's own tokens).
    pub context_tokens: Vec<usize>,
    /// Hot-tier latent frames resident after retiering.
    pub hot_footprint: usize,
    pub bank_size: usize,
    /// Per-layer attention output checksums.
    pub layer_checksums: Vec<u64>,
    /// Checksum over all layers' attention outputs in layer order.
    pub checksum: u64,
}

impl StepRecord {
    /// Render the frozen single-line form.
    pub fn to_line(&self) -> String {
        let mut line = String::new();
        write!(line, "block={}", self.block_index).unwrap();
        match self.admitted {
            Some(a) => write!(line, " admitted={}", a as u8).unwrap(),
            None => write!(line, " admitted=na").unwrap(),
        }
        write!(line, " retrieved=[").unwrap();
        for (i, (b, s)) in self.retrieved.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "({},{})", b, format_f64(*s)).unwrap();
        }
        write!(line, "] rho=[").unwrap();
        for (i, layer) in self.rho.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push('[');
            for (j, r) in layer.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_f64(*r));
            }
            line.push(']');
        }
        write!(line, "] g=[").unwrap();
        for (i, g) in self.g.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{}", *g as u8).unwrap();
        }
        match self.gate_rate {
            Some(r) => write!(line, "] gate_rate={}", format_f64(r)).unwrap(),
            None => write!(line, "] gate_rate=na").unwrap(),
        }
        write!(line, " ctx=[").unwrap();
        for (i, c) in self.context_tokens.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{}", c).unwrap();
        }
        write!(line, "] hot={} bank={}", self.hot_footprint, self.bank_size).unwrap();
        write!(line, " attn=[").unwrap();
        for (i, c) in self.layer_checksums.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{:#018x}", c).unwrap();
        }
        write!(line, "] checksum={:#018x}", self.checksum).unwrap();
        line
    }

    /// Parse one record line.
    pub fn parse_line(line: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for part in line.split(' ') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Trace(format!("bad field '{}'", part)))?;
            fields.insert(key.to_string(), value.to_string());
        }
        let take = |key: &str| -> Result<String> {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Trace(format!("missing field '{}'", key)))
        };
        let parse_u64 = |key: &str, v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Trace(format!("bad integer in {}: '{}'", key, v)))
        };
        let parse_hex = |key: &str, v: &str| -> Result<u64> {
            let stripped = v
                .strip_prefix("0x")
                .ok_or_else(|| Error::Trace(format!("bad hex in {}: '{}'", key, v)))?;
            u64::from_str_radix(stripped, 16)
                .map_err(|_| Error::Trace(format!("bad hex in {}: '{}'", key, v)))
        };
        let parse_float = |key: &str, v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Trace(format!("bad float in {}: '{}'", key, v)))
        };

        let block_index = parse_u64("block", &take("block")?)?;
        let admitted = match take("admitted")?.as_str() {
            "na" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(Error::Trace(format!("bad admitted '{}'", other))),
        };
        let retrieved_raw = take("retrieved")?;
        let mut retrieved = Vec::new();
        for item in split_list(strip_brackets("retrieved", &retrieved_raw)?)? {
            let inner = item
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| Error::Trace(format!("bad retrieved pair '{}'", item)))?;
            let (b, s) = inner
                .split_once(',')
                .ok_or_else(|| Error::Trace(format!("bad retrieved pair '{}'", item)))?;
            retrieved.push((parse_u64("retrieved", b)?, parse_float("retrieved", s)?));
        }
        let rho_raw = take("rho")?;
        let mut rho = Vec::new();
        for layer in split_nested(strip_brackets("rho", &rho_raw)?)? {
            let mut values = Vec::new();
            for v in split_list(strip_brackets("rho layer", &layer)?)? {
                values.push(parse_float("rho", &v)?);
            }
            rho.push(values);
        }
        let g_raw = take("g")?;
        let mut g = Vec::new();
        for v in split_list(strip_brackets("g", &g_raw)?)? {
            g.push(match v.as_str() {
                "0" => false,
                "1" => true,
                other => return Err(Error::Trace(format!("bad gate bit '{}'", other))),
            });
        }
        let gate_rate = match take("gate_rate")?.as_str() {
            "na" => None,
            v => Some(parse_float("gate_rate", v)?),
        };
        let ctx_raw = take("ctx")?;
        let mut context_tokens = Vec::new();
        for v in split_list(strip_brackets("ctx", &ctx_raw)?)? {
            context_tokens.push(parse_u64("ctx", &v)? as usize);
        }
        let hot_footprint = parse_u64("hot", &take("hot")?)? as usize;
        let bank_size = parse_u64("bank", &take("bank")?)? as usize;
        let attn_raw = take("attn")?;
        let mut layer_checksums = Vec::new();
        for v in split_list(strip_brackets("attn", &attn_raw)?)? {
            layer_checksums.push(parse_hex("attn", &v)?);
        }
        let checksum = parse_hex("checksum", &take("checksum")?)?;
        Ok(Self {
            block_index,
            admitted,
            retrieved,
            rho,
            g,
            gate_rate,
            context_tokens,
            hot_footprint,
            bank_size,
            layer_checksums,
            checksum,
        })
    }
}

fn strip_brackets<'a>(what: &str, s: &'a str) -> Result<&'a str> {
    s.strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Trace(format!("expected bracketed list for {}", what)))
}

/// Split a flat comma-separated list, respecting parentheses.
fn split_list(s: &str) -> Result<Vec<String>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                current.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(ch),
        }
    }
    out.push(current);
    Ok(out)
}

/// Split a list of bracketed lists: `[a,b],[c]` into `["[a,b]", "[c]"]`.
fn split_nested(s: &str) -> Result<Vec<String>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for ch in s.chars() {
        match ch {
            '[' => {
                depth += 1;
                current.push(ch);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(ch),
        }
    }
    out.push(current);
    Ok(out)
}

/// Render a full trace: magic line, config echo as comments, one record
/// line per step, trailing newline.
pub fn render_trace(config: &RolloutConfig, records: &[StepRecord]) -> String {
    let mut out = String::new();
    out.push_str(TRACE_MAGIC);
    out.push('\n');
    for line in config.echo_lines() {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    }
    for record in records {
        out.push_str(&record.to_line());
        out.push('\n');
    }
    out
}

/// Parse a rendered trace back into its config and records.
pub fn parse_trace(text: &str) -> Result<(RolloutConfig, Vec<StepRecord>)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(line) if line == TRACE_MAGIC => {}
        other => {
            return Err(Error::Trace(format!(
                "missing magic line, found {:?}",
                other.unwrap_or("<empty>")
            )))
        }
    }
    let mut config_text = String::new();
    let mut records = Vec::new();
    for line in lines {
        if let Some(comment) = line.strip_prefix("# ") {
            config_text.push_str(comment);
            config_text.push('\n');
        } else if !line.trim().is_empty() {
            records.push(StepRecord::parse_line(line)?);
        }
    }
    let config = RolloutConfig::parse(&config_text)?;
    Ok((config, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> StepRecord {
        StepRecord {
            block_index: 12,
            admitted: Some(true),
            retrieved: vec![(3, 0.9123456789012345), (7, -0.25)],
            rho: vec![vec![0.125, 1.0], vec![0.5, 0.0]],
            g: vec![true, false],
            gate_rate: Some(0.0625),
            context_tokens: vec![30, 18],
            hot_footprint: 6,
            bank_size: 9,
            layer_checksums: vec![0xdead_beef_0000_0001, 0x1234_5678_9abc_def0],
            checksum: 0xffff_0000_ffff_0000,
        }
    }

    #[test]
    fn record_line_round_trips() {
        let r = sample_record();
        let line = r.to_line();
        let parsed = StepRecord::parse_line(&line).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn empty_lists_round_trip() {
        let r = StepRecord {
            block_index: 0,
            admitted: None,
            retrieved: vec![],
            rho: vec![],
            g: vec![],
            gate_rate: None,
            context_tokens: vec![0, 0, 0, 0],
            hot_footprint: 0,
            bank_size: 0,
            layer_checksums: vec![1, 2, 3, 4],
            checksum: 5,
        };
        let parsed = StepRecord::parse_line(&r.to_line()).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn float_fields_replay_bit_exactly() {
        let mut r = sample_record();
        r.retrieved = vec![(1, 0.1 + 0.2), (2, 1.0 / 3.0), (4, f64::MIN_POSITIVE)];
        r.gate_rate = Some(2.0 / 3.0);
        let parsed = StepRecord::parse_line(&r.to_line()).unwrap();
        for ((_, a), (_, b)) in r.retrieved.iter().zip(&parsed.retrieved) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(
            r.gate_rate.unwrap().to_bits(),
            parsed.gate_rate.unwrap().to_bits()
        );
    }

    #[test]
    fn trace_round_trips_with_config() {
        let config = RolloutConfig::default();
        let records = vec![sample_record()];
        let text = render_trace(&config, &records);
        let (parsed_config, parsed_records) = parse_trace(&text).unwrap();
        assert_eq!(parsed_config, config);
        assert_eq!(parsed_records, records);
    }

    #[test]
    fn bad_trace_is_rejected() {
        assert!(matches!(parse_trace("nonsense"), Err(Error::Trace(_))));
        assert!(StepRecord::parse_line("block=1").is_err());
    }

    #[test]
    fn fnv_distinguishes_bit_patterns() {
        let mut a = Fnv64::new();
        a.write_f64(0.0);
        let mut b = Fnv64::new();
        b.write_f64(-0.0);
        assert_ne!(a.finish(), b.finish(), "checksum must see sign-of-zero bits");
    }
}
