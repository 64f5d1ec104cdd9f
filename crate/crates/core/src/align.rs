//! Preference data for alignment: agreement filtering, DPO rewards, the DPO loss on
//! a toy policy, and easy-to-hard rounds with a falling reward threshold.
//!
//! `R(p, y+, y-) = [log π(y+|p) - log π_o(y+|p)] - [log π(y-|p) - log π_o(y-|p)]`
//! and the loss is `-mean log σ(β·R)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model_client::{ModelClient, ModelError};
use crate::sft::quantile;
use crate::tokenizer::TokenizerSpec;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("pair {id}: {reason}")]
    InvalidPair { id: String, reason: String },
    #[error("pair {id}: scorer failed: {source}")]
    ScorerFailure { id: String, source: ModelError },
    #[error("pair {id}: scorer tokens differ from the shared tokenization")]
    TokenizationMismatch { id: String },
    #[error("pair {0} has no reward")]
    MissingReward(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("no pairs")]
    EmptyBatch,
    #[error("toy pair refers to prompt {prompt} / response {response} outside the policy")]
    ToyIndex { prompt: usize, response: usize },
    #[error("round schedule: {0}")]
    Schedule(String),
    #[error("record {line}: {reason}")]
    Record { line: usize, reason: String },
}

/// Sequence log-probabilities `log π(y|p)` for both responses under both policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLogProbs<F> {
    pub policy_chosen: F,
    pub policy_rejected: F,
    pub reference_chosen: F,
    pub reference_rejected: F,
}

impl<F: Real> PairLogProbs<F> {
    pub fn reward(&self) -> F {
        (self.policy_chosen - self.reference_chosen) - (self.policy_rejected - self.reference_rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair<F> {
    pub id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    /// Votes for (chosen, rejected) where the source has them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<(u64, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<PairLogProbs<F>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<F>,
}

impl<F: Real> PreferencePair<F> {
    pub fn new(id: &str, prompt: &str, chosen: &str, rejected: &str) -> Self {
        PreferencePair {
            id: id.into(),
            prompt: prompt.into(),
            chosen: chosen.into(),
            rejected: rejected.into(),
            votes: None,
            logprobs: None,
            reward: None,
        }
    }

    pub fn with_votes(mut self, chosen: u64, rejected: u64) -> Self {
        self.votes = Some((chosen, rejected));
        self
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if self.chosen == self.rejected {
            return Err(AlignError::InvalidPair { id: self.id.clone(), reason: "chosen equals rejected".into() });
        }
        Ok(())
    }

    /// The pair with the two responses exchanged.
    pub fn swapped(&self) -> Self {
        PreferencePair {
            id: self.id.clone(),
            prompt: self.prompt.clone(),
            chosen: self.rejected.clone(),
            rejected: self.chosen.clone(),
            votes: self.votes.map(|(a, b)| (b, a)),
            logprobs: self.logprobs.map(|l| PairLogProbs {
                policy_chosen: l.policy_rejected,
                policy_rejected: l.policy_chosen,
                reference_chosen: l.reference_rejected,
                reference_rejected: l.reference_chosen,
            }),
            reward: self.reward.map(|r| -r),
        }
    }
}

/// Field names of one source's records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMapping {
    #[serde(default)]
    pub id: Option<String>,
    pub prompt: String,
    /// Response field preferred unless `swap_if_zero` holds 0.
    pub chosen: String,
    pub rejected: String,
    #[serde(default)]
    pub votes_chosen: Option<String>,
    #[serde(default)]
    pub votes_rejected: Option<String>,
    #[serde(default)]
    pub swap_if_zero: Option<String>,
}

impl RecordMapping {
    pub fn preset(name: &str) -> Option<Self> {
        let s = |x: &str| x.to_string();
        match name {
            "generic" => Some(RecordMapping {
                id: Some(s("id")),
                prompt: s("prompt"),
                chosen: s("chosen"),
                rejected: s("rejected"),
                votes_chosen: Some(s("votes_chosen")),
                votes_rejected: Some(s("votes_rejected")),
                swap_if_zero: None,
            }),
            "shp" => Some(RecordMapping {
                id: Some(s("post_id")),
                prompt: s("history"),
                chosen: s("human_ref_A"),
                rejected: s("human_ref_B"),
                votes_chosen: Some(s("score_A")),
                votes_rejected: Some(s("score_B")),
                swap_if_zero: Some(s("labels")),
            }),
            _ => None,
        }
    }

    /// Normalizes one JSON record; `line` names it in errors and is the default id.
    pub fn map<F: Real>(&self, record: &Value, line: usize) -> Result<PreferencePair<F>, AlignError> {
        let bad = |reason: String| AlignError::Record { line, reason };
        let text = |key: &str| -> Result<String, AlignError> {
            record
                .get(key)
                .and_then(Value::as_str)
                .map(String::from)
                .ok_or_else(|| bad(format!("missing string field {key:?}")))
        };
        let count = |key: &Option<String>| -> Result<Option<u64>, AlignError> {
            match key.as_deref().and_then(|k| record.get(k)) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v.as_u64().map(Some).ok_or_else(|| bad(format!("vote field is not a count: {v}"))),
            }
        };
        let id = match self.id.as_deref().and_then(|k| record.get(k)) {
            Some(Value::String(s)) => s.clone(),
            Some(v) if !v.is_null() => v.to_string(),
            _ => format!("line{line}"),
        };
        let mut p = PreferencePair::new(&id, &text(&self.prompt)?, &text(&self.chosen)?, &text(&self.rejected)?);
        if let (Some(a), Some(b)) = (count(&self.votes_chosen)?, count(&self.votes_rejected)?) {
            p.votes = Some((a, b));
        }
        if let Some(k) = &self.swap_if_zero {
            if record.get(k).and_then(Value::as_i64) == Some(0) {
                p = p.swapped();
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Keeps pairs whose vote margin `chosen - rejected` is at least `min_gap`; pairs
/// without votes pass.
pub fn filter_by_agreement<F: Real>(pairs: Vec<PreferencePair<F>>, min_gap: i64) -> Vec<PreferencePair<F>> {
    pairs
        .into_iter()
        .filter(|p| match p.votes {
            None => true,
            Some((a, b)) => a as i128 - b as i128 >= min_gap as i128,
        })
        .collect()
}

fn seq_logprob(model: &dyn ModelClient, id: &str, context: &[u32], target: &[u32]) -> Result<f64, AlignError> {
    let lp =
        model.logprobs(context, target).map_err(|source| AlignError::ScorerFailure { id: id.to_string(), source })?;
    if lp.tokens != target {
        return Err(AlignError::TokenizationMismatch { id: id.to_string() });
    }
    Ok(lp.total())
}

/// Scores both responses under `policy` and `reference` with one shared
/// tokenization, stores the four log-probabilities and returns the reward.
pub fn dpo_reward<F: Real>(
    pair: &mut PreferencePair<F>,
    policy: &dyn ModelClient,
    reference: &dyn ModelClient,
    spec: &TokenizerSpec,
) -> Result<F, AlignError> {
    pair.validate()?;
    let ctx = spec.tokenize(&pair.prompt);
    let (c, r) = (spec.tokenize(&pair.chosen), spec.tokenize(&pair.rejected));
    if c.is_empty() || r.is_empty() {
        return Err(AlignError::InvalidPair { id: pair.id.clone(), reason: "empty response".into() });
    }
    let lp = PairLogProbs {
        policy_chosen: F::of(seq_logprob(policy, &pair.id, &ctx, &c)?),
        policy_rejected: F::of(seq_logprob(policy, &pair.id, &ctx, &r)?),
        reference_chosen: F::of(seq_logprob(reference, &pair.id, &ctx, &c)?),
        reference_rejected: F::of(seq_logprob(reference, &pair.id, &ctx, &r)?),
    };
    let reward = lp.reward();
    pair.logprobs = Some(lp);
    pair.reward = Some(reward);
    Ok(reward)
}

/// [`dpo_reward`] over every pair in parallel.
pub fn compute_rewards<F: Real>(
    pairs: &mut [PreferencePair<F>],
    policy: &dyn ModelClient,
    reference: &dyn ModelClient,
    spec: &TokenizerSpec,
) -> Result<(), AlignError> {
    pairs.par_iter_mut().map(|p| dpo_reward(p, policy, reference, spec).map(|_| ())).collect()
}

/// Pairs with `R < delta`.
pub fn select_hard<F: Real>(pairs: &[PreferencePair<F>], delta: F) -> Result<Vec<PreferencePair<F>>, AlignError> {
    let mut out = Vec::new();
    for p in pairs {
        let r = p.reward.ok_or_else(|| AlignError::MissingReward(p.id.clone()))?;
        if r < delta {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Softmax policy over a small response set, one logit row per prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy<F> {
    pub logits: Vec<Vec<F>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyPair {
    pub prompt: usize,
    pub chosen: usize,
    pub rejected: usize,
}

fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let m = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<F>().ln()
}

impl<F: Real> ToyPolicy<F> {
    pub fn uniform(prompts: usize, responses: usize) -> Self {
        ToyPolicy { logits: vec![vec![F::zero(); responses]; prompts] }
    }

    pub fn from_probabilities(probs: &[Vec<F>]) -> Self {
        ToyPolicy { logits: probs.iter().map(|row| row.iter().map(|p| p.ln()).collect()).collect() }
    }

    pub fn log_prob(&self, prompt: usize, response: usize) -> Result<F, AlignError> {
        let row = self.logits.get(prompt).ok_or(AlignError::ToyIndex { prompt, response })?;
        let x = *row.get(response).ok_or(AlignError::ToyIndex { prompt, response })?;
        Ok(x - log_sum_exp(row))
    }

    pub fn reward(&self, reference: &ToyPolicy<F>, pair: &ToyPair) -> Result<F, AlignError> {
        Ok(PairLogProbs {
            policy_chosen: self.log_prob(pair.prompt, pair.chosen)?,
            policy_rejected: self.log_prob(pair.prompt, pair.rejected)?,
            reference_chosen: reference.log_prob(pair.prompt, pair.chosen)?,
            reference_rejected: reference.log_prob(pair.prompt, pair.rejected)?,
        }
        .reward())
    }

    fn loss_only(&self, reference: &ToyPolicy<F>, pairs: &[ToyPair], beta: F) -> Result<F, AlignError> {
        let mut total = F::zero();
        for p in pairs {
            total = total - (beta * self.reward(reference, p)?).log_sigmoid();
        }
        Ok(total / F::of_usize(pairs.len()))
    }

    /// Loss and its gradient with respect to every logit.
    pub fn dpo_loss_and_grad(
        &self,
        reference: &ToyPolicy<F>,
        pairs: &[ToyPair],
        beta: F,
    ) -> Result<(F, Vec<Vec<F>>), AlignError> {
        if !(beta > F::zero()) {
            return Err(AlignError::BadBeta(beta.to_f64_lossy()));
        }
        if pairs.is_empty() {
            return Err(AlignError::EmptyBatch);
        }
        let n = F::of_usize(pairs.len());
        let mut grad: Vec<Vec<F>> = self.logits.iter().map(|row| vec![F::zero(); row.len()]).collect();
        let mut loss = F::zero();
        for p in pairs {
            let r = self.reward(reference, p)?;
            loss = loss - (beta * r).log_sigmoid();
            // d/dR of -log σ(βR) is -β σ(-βR); the log-normalizer cancels between y+ and y-
            let g = -beta * (-beta * r).sigmoid() / n;
            grad[p.prompt][p.chosen] = grad[p.prompt][p.chosen] + g;
            grad[p.prompt][p.rejected] = grad[p.prompt][p.rejected] - g;
        }
        let loss = loss / n;
        if !loss.is_finite() || grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(AlignError::NonFiniteLoss);
        }
        Ok((loss, grad))
    }

    /// Central finite-difference gradient with step `h`.
    pub fn numeric_grad(
        &self,
        reference: &ToyPolicy<F>,
        pairs: &[ToyPair],
        beta: F,
        h: F,
    ) -> Result<Vec<Vec<F>>, AlignError> {
        let mut out = Vec::with_capacity(self.logits.len());
        let mut probe = self.clone();
        for i in 0..self.logits.len() {
            let mut row = Vec::with_capacity(self.logits[i].len());
            for j in 0..self.logits[i].len() {
                let x = self.logits[i][j];
                probe.logits[i][j] = x + h;
                let up = probe.loss_only(reference, pairs, beta)?;
                probe.logits[i][j] = x - h;
                let down = probe.loss_only(reference, pairs, beta)?;
                probe.logits[i][j] = x;
                row.push((up - down) / (h + h));
            }
            out.push(row);
        }
        Ok(out)
    }

    /// Largest analytic-minus-numeric difference over the largest gradient
    /// magnitude (normwise relative error).
    pub fn gradient_check(&self, reference: &ToyPolicy<F>, pairs: &[ToyPair], beta: F, h: F) -> Result<F, AlignError> {
        let (_, a) = self.dpo_loss_and_grad(reference, pairs, beta)?;
        let n = self.numeric_grad(reference, pairs, beta, h)?;
        let (mut diff, mut scale) = (F::zero(), F::zero());
        for (ra, rn) in a.iter().zip(&n) {
            for (&x, &y) in ra.iter().zip(rn) {
                diff = diff.max((x - y).abs());
                scale = scale.max(x.abs()).max(y.abs());
            }
        }
        Ok(if scale > F::zero() { diff / scale } else { diff })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig<F> {
    pub delta0: F,
    /// Each round lowers δ by `|delta0| · decay`.
    pub decay: F,
    pub beta: F,
    pub min_size: usize,
    pub min_gap: i64,
}

impl<F: Real> Default for RoundConfig<F> {
    fn default() -> Self {
        RoundConfig { delta0: F::one(), decay: F::of(0.25), beta: F::of(0.1), min_size: 1, min_gap: 2 }
    }
}

impl<F: Real> RoundConfig<F> {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !self.delta0.is_finite() || self.delta0 == F::zero() {
            return Err(AlignError::Schedule("delta0 must be finite and non-zero".into()));
        }
        if !(self.decay > F::zero() && self.decay < F::one()) {
            return Err(AlignError::Schedule("decay must lie in (0, 1)".into()));
        }
        if !(self.beta > F::zero()) {
            return Err(AlignError::BadBeta(self.beta.to_f64_lossy()));
        }
        Ok(())
    }

    /// δ for a 0-based round.
    pub fn delta(&self, round: usize) -> F {
        self.delta0 - F::of_usize(round) * self.delta0.abs() * self.decay
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport<F> {
    pub round: usize,
    pub delta: F,
    pub scored: usize,
    pub retained: Vec<String>,
    /// Reward deciles (10% .. 90%) over the scored pairs.
    pub deciles: Vec<F>,
}

/// Rounds of reward scoring and hard-pair selection. Round `t` scores the pairs
/// kept by round `t - 1` under `snapshots[t]` against `reference`, and stops once
/// fewer than `min_size` pairs are kept or the snapshots run out. Returns the
/// reports and each round's training set.
/// Per-round reports and the pairs retained in each round.
pub type RoundsOutcome<F> = (Vec<RoundReport<F>>, Vec<Vec<PreferencePair<F>>>);

pub fn run_alignment_rounds<F: Real>(
    pairs: Vec<PreferencePair<F>>,
    reference: &dyn ModelClient,
    snapshots: &[&dyn ModelClient],
    spec: &TokenizerSpec,
    cfg: &RoundConfig<F>,
) -> Result<RoundsOutcome<F>, AlignError> {
    cfg.validate()?;
    let mut pool = pairs;
    let (mut reports, mut sets) = (Vec::new(), Vec::new());
    for (t, policy) in snapshots.iter().enumerate() {
        compute_rewards(&mut pool, *policy, reference, spec)?;
        let delta = cfg.delta(t);
        let kept = select_hard(&pool, delta)?;
        let rewards: Vec<F> = pool.iter().filter_map(|p| p.reward).collect();
        let deciles = (1..10).filter_map(|d| quantile(&rewards, F::of(d as f64 / 10.0))).collect();
        reports.push(RoundReport {
            round: t + 1,
            delta,
            scored: pool.len(),
            retained: kept.iter().map(|p| p.id.clone()).collect(),
            deciles,
        });
        let stop = kept.len() < cfg.min_size;
        sets.push(kept.clone());
        if stop {
            break;
        }
        pool = kept;
    }
    Ok((reports, sets))
}
