//! Source mixture weights, staged token budgets, draw schedules, sequence packing
//! and the warmup-plus-cosine learning-rate schedule.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceKind;
use crate::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("no sources in the mixture")]
    EmptySpecList,
    #[error("source {0}: raw size and epochs must be positive")]
    NonPositiveSize(SourceKind),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("context length must be at least 2, got {0}")]
    ContextTooShort(usize),
    #[error("step {step} outside 0..={total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("mixture weights cannot be sampled: {0}")]
    Weights(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec<F> {
    pub name: SourceKind,
    pub raw_tokens: u64,
    pub epochs: F,
}

impl<F: Real> SourceSpec<F> {
    pub fn new(name: SourceKind, raw_tokens: u64, epochs: F) -> Self {
        SourceSpec { name, raw_tokens, epochs }
    }
}

/// Published rows of the pre-training mixture: source, raw tokens, epochs,
/// weighted tokens and weight in percent.
pub const TABLE2: [(SourceKind, u64, f64, u64, f64); 10] = [
    (SourceKind::Web, 1_220_000_000_000, 1.0, 1_220_000_000_000, 72.6),
    (SourceKind::Code, 101_000_000_000, 1.0, 101_000_000_000, 6.0),
    (SourceKind::Encyclopedia, 18_000_000_000, 3.0, 54_000_000_000, 3.2),
    (SourceKind::Academic, 50_000_000_000, 1.0, 50_000_000_000, 3.0),
    (SourceKind::QaForum, 26_000_000_000, 1.0, 26_000_000_000, 1.5),
    (SourceKind::Book, 43_750_000_000, 2.0, 87_500_000_000, 5.3),
    (SourceKind::News, 134_000_000_000, 1.0, 134_000_000_000, 8.0),
    (SourceKind::Legal, 3_000_000_000, 1.0, 3_000_000_000, 0.2),
    (SourceKind::Patent, 2_000_000_000, 1.0, 2_000_000_000, 0.1),
    (SourceKind::EduAssessment, 1_250_000_000, 2.0, 2_500_000_000, 0.1),
];

pub fn table2_specs<F: Real>() -> Vec<SourceSpec<F>> {
    TABLE2.iter().map(|&(s, raw, ep, _, _)| SourceSpec::new(s, raw, F::of(ep))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureEntry<F> {
    pub source: SourceKind,
    pub raw_tokens: u64,
    pub epochs: F,
    pub weighted_tokens: F,
    pub weight: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan<F> {
    pub entries: Vec<MixtureEntry<F>>,
    pub total_weighted_tokens: F,
}

/// Weighted size is raw size times epochs; weight is the share of the total.
pub fn build_mixture_plan<F: Real>(specs: &[SourceSpec<F>]) -> Result<MixturePlan<F>, MixtureError> {
    if specs.is_empty() {
        return Err(MixtureError::EmptySpecList);
    }
    for s in specs {
        if s.raw_tokens == 0 || !(s.epochs > F::zero()) || !s.epochs.is_finite() {
            return Err(MixtureError::NonPositiveSize(s.name));
        }
    }
    let weighted: Vec<F> = specs.iter().map(|s| F::of(s.raw_tokens as f64) * s.epochs).collect();
    let total: F = weighted.iter().copied().sum();
    let entries = specs
        .iter()
        .zip(&weighted)
        .map(|(s, &w)| MixtureEntry {
            source: s.name,
            raw_tokens: s.raw_tokens,
            epochs: s.epochs,
            weighted_tokens: w,
            weight: w / total,
        })
        .collect();
    Ok(MixturePlan { entries, total_weighted_tokens: total })
}

fn billions(tokens: f64) -> String {
    let b = tokens / 1e9;
    let s = format!("{b:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}B")
}

impl<F: Real> MixturePlan<F> {
    pub fn weight_of(&self, source: SourceKind) -> Option<F> {
        self.entries.iter().find(|e| e.source == source).map(|e| e.weight)
    }

    /// Text table with the same columns as the plan file.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>10} {:>7} {:>14} {:>7}", "source", "raw", "epochs", "weighted", "weight");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:>7} {:>14} {:>6.1}%",
                e.source.as_str(),
                billions(e.raw_tokens as f64),
                e.epochs.to_f64_lossy(),
                billions(e.weighted_tokens.to_f64_lossy()),
                e.weight.to_f64_lossy() * 100.0
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>7} {:>14} {:>6.1}%",
            "total",
            "-",
            "-",
            billions(self.total_weighted_tokens.to_f64_lossy()),
            100.0
        );
        out
    }
}

/// One row of the staged pre-training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSetting<F> {
    pub stage: u8,
    /// EN:ZH:ML percentages.
    pub ratio: [u64; 3],
    pub context_length: usize,
    pub tokens: u64,
    pub initial_lr: F,
    pub min_lr: F,
    pub batch_tokens: u64,
}

pub fn table3_settings<F: Real>() -> Vec<StageSetting<F>> {
    let row = |stage, ratio, context_length, tokens, initial_lr, min_lr| StageSetting {
        stage,
        ratio,
        context_length,
        tokens,
        initial_lr: F::of(initial_lr),
        min_lr: F::of(min_lr),
        batch_tokens: 4_000_000,
    };
    vec![
        row(1, [76, 22, 2], 2048, 600_000_000_000, 3e-4, 3e-5),
        row(2, [90, 10, 0], 4096, 900_000_000_000, 2e-5, 2e-5),
        row(3, [62, 33, 5], 4096, 180_000_000_000, 2e-5, 2e-5),
    ]
}

pub const LANGUAGES: [&str; 3] = ["en", "zh", "ml"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBudget<F> {
    pub setting: StageSetting<F>,
    pub token_budget: u64,
    /// Tokens for EN, ZH and ML; sums to `token_budget`.
    pub per_language: [u64; 3],
}

impl<F: Real> StageBudget<F> {
    /// Optimizer steps at the stage's batch size, rounded up.
    pub fn steps(&self) -> u64 {
        self.token_budget.div_ceil(self.setting.batch_tokens.max(1))
    }
}

/// Splits `total` by integer percentages using largest-remainder rounding; ties go
/// to the earlier position.
pub fn largest_remainder(total: u64, ratio: &[u64]) -> Vec<u64> {
    let denom: u128 = ratio.iter().map(|&r| r as u128).sum();
    if denom == 0 {
        return vec![0; ratio.len()];
    }
    let mut out: Vec<u64> = ratio.iter().map(|&r| (total as u128 * r as u128 / denom) as u64).collect();
    let mut order: Vec<usize> = (0..ratio.len()).collect();
    let rem = |i: usize| (total as u128 * ratio[i] as u128) % denom;
    order.sort_by(|&a, &b| rem(b).cmp(&rem(a)).then(a.cmp(&b)));
    let short = total - out.iter().sum::<u64>();
    for &i in order.iter().take(short as usize) {
        out[i] += 1;
    }
    out
}

/// Scales every stage's token count and splits it across languages.
pub fn plan_stages<F: Real>(settings: &[StageSetting<F>], scale: F) -> Result<Vec<StageBudget<F>>, MixtureError> {
    if !(scale > F::zero()) || !scale.is_finite() {
        return Err(MixtureError::NonPositiveScale(scale.to_f64_lossy()));
    }
    Ok(settings
        .iter()
        .map(|s| {
            let budget = (s.tokens as f64 * scale.to_f64_lossy()).round() as u64;
            let split = largest_remainder(budget, &s.ratio);
            StageBudget { setting: s.clone(), token_budget: budget, per_language: [split[0], split[1], split[2]] }
        })
        .collect())
}

/// `num_draws` i.i.d. source draws in proportion to the plan weights.
pub fn sample_schedule<F: Real>(
    plan: &MixturePlan<F>,
    num_draws: usize,
    seed: u64,
) -> Result<Vec<SourceKind>, MixtureError> {
    let weights: Vec<f64> = plan.entries.iter().map(|e| e.weight.to_f64_lossy()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| MixtureError::Weights(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..num_draws).map(|_| plan.entries[dist.sample(&mut rng)].source).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSample {
    pub token_ids: Vec<u32>,
    pub source: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PackReport {
    pub samples: Vec<PackedSample>,
    pub input_tokens: usize,
    pub separators: usize,
    pub dropped_tail: usize,
}

/// Concatenates one source's documents, with `separator` between neighbours, and
/// cuts the stream into samples of exactly `l` tokens. The final partial chunk is
/// dropped.
pub fn pack_stream(
    docs: &[Vec<u32>],
    source: SourceKind,
    l: usize,
    separator: Option<u32>,
) -> Result<PackReport, MixtureError> {
    if l < 2 {
        return Err(MixtureError::ContextTooShort(l));
    }
    let mut stream = Vec::with_capacity(docs.iter().map(Vec::len).sum::<usize>() + docs.len());
    let mut separators = 0;
    for (i, d) in docs.iter().enumerate() {
        if i > 0 {
            if let Some(sep) = separator {
                stream.push(sep);
                separators += 1;
            }
        }
        stream.extend_from_slice(d);
    }
    let chunks = stream.chunks_exact(l);
    let dropped_tail = chunks.remainder().len();
    let samples = chunks.map(|c| PackedSample { token_ids: c.to_vec(), source }).collect();
    Ok(PackReport { samples, input_tokens: stream.len() - separators, separators, dropped_tail })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule<F> {
    pub max_lr: F,
    pub min_lr: F,
    pub total_steps: u64,
    pub warmup_steps: u64,
}

/// Warmup share of all steps used by [`LrSchedule::with_warmup_fraction`] callers by default.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.001;

impl<F: Real> LrSchedule<F> {
    pub fn new(max_lr: F, min_lr: F, total_steps: u64, warmup_steps: u64) -> Result<Self, MixtureError> {
        if !(min_lr > F::zero()) || min_lr > max_lr {
            return Err(MixtureError::InvalidSchedule(format!("need 0 < min_lr <= max_lr, got {min_lr} and {max_lr}")));
        }
        if warmup_steps >= total_steps {
            return Err(MixtureError::InvalidSchedule(format!(
                "warmup {warmup_steps} must be shorter than {total_steps} total steps"
            )));
        }
        Ok(LrSchedule { max_lr, min_lr, total_steps, warmup_steps })
    }

    /// Warmup length as a fraction of total steps, rounded down.
    pub fn with_warmup_fraction(max_lr: F, min_lr: F, total_steps: u64, fraction: f64) -> Result<Self, MixtureError> {
        Self::new(max_lr, min_lr, total_steps, (total_steps as f64 * fraction).floor() as u64)
    }

    /// Schedule at a real-valued position, so both branches can be compared at the junction.
    pub fn lr_at_position(&self, t: F) -> F {
        let w = F::of(self.warmup_steps as f64);
        if t < w {
            return self.max_lr * t / w;
        }
        let span = F::of((self.total_steps - self.warmup_steps) as f64);
        let progress = ((t - w) / span).min(F::one());
        let half = (F::one() + (F::PI() * progress).cos()) / F::of(2.0);
        self.min_lr + (self.max_lr - self.min_lr) * half
    }

    /// Linear warmup from 0, then cosine decay to `min_lr` at the last step.
    pub fn lr_at(&self, step: u64) -> Result<F, MixtureError> {
        if step > self.total_steps {
            return Err(MixtureError::StepOutOfRange { step, total: self.total_steps });
        }
        if step == self.total_steps {
            return Ok(self.min_lr);
        }
        Ok(self.lr_at_position(F::of(step as f64)))
    }
}
