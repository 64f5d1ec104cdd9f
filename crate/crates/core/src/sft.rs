//! Instruction synthesis (merge, multi-turn extension, complexity enhancement) and
//! complexity-ordered curricula for supervised fine-tuning.
//!
//! Complexity is `comp = λ1·L_turn + λ2·L_length + λ3·loss`, where `L_turn` counts
//! user turns, `L_length` counts tokens over user turns and `loss` is the mean
//! negative log-likelihood per token of the assistant turns under a scorer.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Document, SourceKind};
use crate::model_client::{ModelClient, ModelError};
use crate::seed::{derive_seed, sha256_hex};
use crate::text::char_len;
use crate::tfidf::TfidfIndex;
use crate::tokenizer::TokenizerSpec;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SftError {
    #[error("instruction {id}: {reason}")]
    InvalidTurns { id: String, reason: String },
    #[error("instruction record {id}: {reason}")]
    BadRecord { id: String, reason: String },
    #[error("{stage} generation failed: {reason}")]
    GeneratorFailure { stage: &'static str, reason: String },
    #[error("enhanced question ({got} chars) is shorter than required ({need} chars)")]
    QualityRejected { got: usize, need: usize },
    #[error("topic list is empty")]
    NoTopics,
    #[error("instruction {id}: scorer failed: {source}")]
    ScorerFailure { id: String, source: ModelError },
    #[error("instruction {0} has no assistant tokens to score")]
    NoTarget(String),
    #[error("item {0} is neither scored nor forced complex")]
    Unscored(usize),
    #[error("quantile {0} is outside [0, 1]")]
    BadQuantile(f64),
    #[error("prompts: {0}")]
    Prompts(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Turn { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Turn { role: Role::Assistant, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub turns: Vec<Turn>,
    pub source_tag: String,
    #[serde(default)]
    pub force_complex: bool,
    /// Source dataset ids this instruction descends from.
    #[serde(default)]
    pub parents: Vec<String>,
    /// Synthesis steps applied, oldest first.
    #[serde(default)]
    pub steps: Vec<String>,
}

impl Instruction {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>, source_tag: impl Into<String>) -> Self {
        Instruction {
            id: id.into(),
            turns,
            source_tag: source_tag.into(),
            force_complex: false,
            parents: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn single(id: impl Into<String>, question: &str, answer: &str, source_tag: &str) -> Self {
        Instruction::new(id, vec![Turn::user(question), Turn::assistant(answer)], source_tag)
    }

    /// Turns alternate starting with the user, and at least one user turn exists.
    pub fn validate(&self) -> Result<(), SftError> {
        let bad = |reason: &str| SftError::InvalidTurns { id: self.id.clone(), reason: reason.to_string() };
        if self.turns.is_empty() {
            return Err(bad("no turns"));
        }
        for (i, t) in self.turns.iter().enumerate() {
            let want = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if t.role != want {
                return Err(bad(&format!("turn {i} should be {want:?}")));
            }
        }
        Ok(())
    }

    pub fn user_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::User)
    }

    /// All user turns joined by newlines.
    pub fn user_text(&self) -> String {
        self.user_turns().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n")
    }

    pub fn last_user(&self) -> Option<&str> {
        self.user_turns().last().map(|t| t.text.as_str())
    }

    /// The conversation as plain text, ending with an open assistant turn.
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        for t in &self.turns {
            let who = match t.role {
                Role::User => "User",
                Role::Assistant => "Assistant",
            };
            s.push_str(&format!("{who}: {}\n", t.text));
        }
        s.push_str("Assistant:");
        s
    }

    /// Ancestor ids, falling back to the instruction's own id for source data.
    pub fn ancestry(&self) -> Vec<String> {
        if self.parents.is_empty() {
            vec![self.id.clone()]
        } else {
            self.parents.clone()
        }
    }

    /// Reads the record form: turns and provenance live in `meta`.
    pub fn from_document(doc: &Document) -> Result<Self, SftError> {
        let bad = |reason: String| SftError::BadRecord { id: doc.id.clone(), reason };
        let turns = doc.meta.get("turns").ok_or_else(|| bad("missing meta.turns".into()))?;
        let turns: Vec<Turn> = serde_json::from_value(turns.clone()).map_err(|e| bad(e.to_string()))?;
        let get_list = |key: &str| -> Result<Vec<String>, SftError> {
            match doc.meta.get(key) {
                None => Ok(Vec::new()),
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| bad(format!("{key}: {e}"))),
            }
        };
        let instr = Instruction {
            id: doc.id.clone(),
            turns,
            source_tag: doc.meta_str("source_tag").unwrap_or("").to_string(),
            force_complex: doc.meta.get("force_complex").and_then(Value::as_bool).unwrap_or(false),
            parents: get_list("parents")?,
            steps: get_list("steps")?,
        };
        instr.validate()?;
        Ok(instr)
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new(&self.id, self.user_text(), SourceKind::QaForum, "")
            .with_meta("turns", serde_json::to_value(&self.turns).expect("turns serialize"))
            .with_meta("source_tag", self.source_tag.clone())
            .with_meta("force_complex", self.force_complex);
        if !self.parents.is_empty() {
            d = d.with_meta("parents", self.parents.clone());
        }
        if !self.steps.is_empty() {
            d = d.with_meta("steps", self.steps.clone());
        }
        d
    }
}

/// Drops instructions whose user text repeats an earlier one.
pub fn base_set(instructions: Vec<Instruction>) -> Vec<Instruction> {
    let mut seen = HashSet::new();
    instructions.into_iter().filter(|i| seen.insert(i.user_text())).collect()
}

/// Greedy maximum-similarity matching over TF-IDF cosine of user text. Returns
/// index pairs `(i, j)` with `i < j` and their similarity, best first.
pub fn select_similar_pairs(instructions: &[Instruction], floor: f64) -> Vec<(usize, usize, f64)> {
    if instructions.len() < 2 {
        return Vec::new();
    }
    let texts: Vec<String> = instructions.iter().map(Instruction::user_text).collect();
    let ids: Vec<String> = (0..texts.len()).map(|i| i.to_string()).collect();
    let index: TfidfIndex<f64> =
        TfidfIndex::build(ids.iter().map(String::as_str).zip(texts.iter().map(String::as_str)));
    let mut cands: Vec<(usize, usize, f64)> = (0..texts.len())
        .flat_map(|i| index.later_neighbors(i).into_iter().map(move |(j, s)| (i, j, s)))
        .filter(|&(_, _, s)| s >= floor)
        .collect();
    cands.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut used = vec![false; texts.len()];
    let mut out = Vec::new();
    for (i, j, s) in cands {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            out.push((i, j, s));
        }
    }
    out
}

pub const MERGE_PROMPT: &str = "Please merge the following two semantically similar instructions into a new instruction that incorporates the functionalities of both instructions and is more complex.";
pub const MULTITURN_PROMPT: &str =
    "Please generate a question related to the topic '{topic}' and ensure its consistency with the context of the conversation.";
pub const ENHANCE_PROMPT: &str = "Please modify the following question into a more complex instruction that significantly enhances the depth and width of the involved knowledge.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prompts {
    pub merge: String,
    pub multiturn: String,
    pub enhance: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Prompts { merge: MERGE_PROMPT.into(), multiturn: MULTITURN_PROMPT.into(), enhance: ENHANCE_PROMPT.into() }
    }
}

impl Prompts {
    pub fn from_json(s: &str) -> Result<Self, SftError> {
        let p: Prompts = serde_json::from_str(s).map_err(|e| SftError::Prompts(e.to_string()))?;
        if !p.multiturn.contains("{topic}") {
            return Err(SftError::Prompts("multiturn prompt lacks {topic}".into()));
        }
        Ok(p)
    }

    pub fn merge_request(&self, a: &str, b: &str) -> String {
        format!("{}\n\nInstruction 1: {a}\nInstruction 2: {b}", self.merge)
    }

    pub fn multiturn_request(&self, topic: &str, transcript: &str) -> String {
        format!("{}\n\nConversation:\n{transcript}", self.multiturn.replace("{topic}", topic))
    }

    pub fn enhance_request(&self, question: &str) -> String {
        format!("{}\n\nQuestion: {question}", self.enhance)
    }
}

/// One topic per non-blank line.
pub fn parse_topics(content: &str) -> Vec<String> {
    content.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub similarity_floor: f64,
    pub answer_tokens: usize,
    /// Enhanced questions shorter than this multiple of the original are rejected.
    pub min_length_ratio: f64,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { similarity_floor: 0.3, answer_tokens: 512, min_length_ratio: 1.0, seed: 0 }
    }
}

fn ask(
    generator: &dyn ModelClient,
    stage: &'static str,
    prompt: &str,
    tokens: usize,
    seed: u64,
) -> Result<String, SftError> {
    let reply = generator
        .generate(prompt, tokens, seed)
        .map_err(|e| SftError::GeneratorFailure { stage, reason: e.to_string() })?;
    let reply = reply.trim();
    if reply.is_empty() {
        return Err(SftError::GeneratorFailure { stage, reason: "empty reply".into() });
    }
    Ok(reply.to_string())
}

fn derived_id(kind: &str, parts: &[&str]) -> String {
    format!("{kind}-{}", &sha256_hex(parts.join("\u{1f}").as_bytes())[..16])
}

/// Stage one: a new single-turn instruction combining `a` and `b`, answered by a
/// second generation.
pub fn merge_instructions(
    a: &Instruction,
    b: &Instruction,
    generator: &dyn ModelClient,
    prompts: &Prompts,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<Instruction, SftError> {
    let question =
        ask(generator, "merge", &prompts.merge_request(&a.user_text(), &b.user_text()), cfg.answer_tokens, seed)?;
    let mut out = Instruction::new(
        derived_id("merge", &[&a.id, &b.id]),
        vec![Turn::user(question)],
        format!("merge:{}+{}", a.id, b.id),
    );
    let answer = ask(generator, "merge", &out.transcript(), cfg.answer_tokens, derive_seed(seed, "answer"))?;
    out.turns.push(Turn::assistant(answer));
    let mut parents: Vec<String> = a.ancestry();
    parents.extend(b.ancestry());
    out.parents = parents;
    out.steps.push("merge".into());
    Ok(out)
}

/// Stage two: appends a question on a seeded-random topic and its answer.
pub fn to_multiturn(
    instr: &Instruction,
    topics: &[String],
    generator: &dyn ModelClient,
    prompts: &Prompts,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<Instruction, SftError> {
    if topics.is_empty() {
        return Err(SftError::NoTopics);
    }
    let topic = &topics[ChaCha8Rng::seed_from_u64(derive_seed(seed, &instr.id)).random_range(0..topics.len())];
    let mut out = instr.clone();
    if out.turns.last().is_some_and(|t| t.role == Role::User) {
        let answer = ask(generator, "multiturn", &out.transcript(), cfg.answer_tokens, derive_seed(seed, "answer0"))?;
        out.turns.push(Turn::assistant(answer));
    }
    let question =
        ask(generator, "multiturn", &prompts.multiturn_request(topic, &out.transcript()), cfg.answer_tokens, seed)?;
    out.turns.push(Turn::user(question));
    let answer = ask(generator, "multiturn", &out.transcript(), cfg.answer_tokens, derive_seed(seed, "answer"))?;
    out.turns.push(Turn::assistant(answer));
    out.id = derived_id("multiturn", &[&instr.id, topic]);
    out.parents = instr.ancestry();
    out.steps.push(format!("multiturn:{topic}"));
    Ok(out)
}

/// Stage three: rewrites the final user turn into a harder one and regenerates
/// its answer.
pub fn enhance_complexity(
    instr: &Instruction,
    generator: &dyn ModelClient,
    prompts: &Prompts,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<Instruction, SftError> {
    instr.validate()?;
    let last = instr.turns.iter().rposition(|t| t.role == Role::User).expect("validated instruction has a user turn");
    let original = &instr.turns[last].text;
    let question = ask(generator, "enhance", &prompts.enhance_request(original), cfg.answer_tokens, seed)?;
    let need = (char_len(original) as f64 * cfg.min_length_ratio).ceil() as usize;
    if char_len(&question) < need {
        return Err(SftError::QualityRejected { got: char_len(&question), need });
    }
    let mut out = instr.clone();
    out.turns.truncate(last);
    out.turns.push(Turn::user(question));
    let answer = ask(generator, "enhance", &out.transcript(), cfg.answer_tokens, derive_seed(seed, "answer"))?;
    out.turns.push(Turn::assistant(answer));
    out.id = derived_id("enhance", &[&instr.id]);
    out.parents = instr.ancestry();
    out.steps.push("enhance".into());
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub produced: Vec<Instruction>,
    /// (instruction or pair ids, error) for items that failed after their retry.
    pub failures: Vec<(String, String)>,
    pub retries: usize,
}

/// Runs all three stages over a base set. Each failing step is retried once with
/// a fresh seed before the item is recorded as a failure.
pub fn synthesize(
    base: Vec<Instruction>,
    topics: &[String],
    generator: &dyn ModelClient,
    prompts: &Prompts,
    cfg: &SynthesisConfig,
) -> SynthesisReport {
    let base = base_set(base);
    let mut report = SynthesisReport::default();
    let attempt = |label: String, f: &dyn Fn(u64) -> Result<Instruction, SftError>, report: &mut SynthesisReport| {
        let seed = derive_seed(cfg.seed, &label);
        match f(seed) {
            Ok(i) => Some(i),
            Err(_) => {
                report.retries += 1;
                match f(derive_seed(seed, "retry")) {
                    Ok(i) => Some(i),
                    Err(e) => {
                        report.failures.push((label, e.to_string()));
                        None
                    }
                }
            }
        }
    };
    for (i, j, _) in select_similar_pairs(&base, cfg.similarity_floor) {
        let (a, b) = (&base[i], &base[j]);
        let label = format!("{}+{}", a.id, b.id);
        let Some(merged) =
            attempt(format!("merge:{label}"), &|s| merge_instructions(a, b, generator, prompts, cfg, s), &mut report)
        else {
            continue;
        };
        let Some(multi) = attempt(
            format!("multiturn:{label}"),
            &|s| to_multiturn(&merged, topics, generator, prompts, cfg, s),
            &mut report,
        ) else {
            continue;
        };
        if let Some(enh) = attempt(
            format!("enhance:{label}"),
            &|s| enhance_complexity(&multi, generator, prompts, cfg, s),
            &mut report,
        ) {
            report.produced.push(enh);
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambdas<F> {
    pub turn: F,
    pub length: F,
    pub loss: F,
}

impl<F: Real> Default for Lambdas<F> {
    fn default() -> Self {
        Lambdas { turn: F::one(), length: F::of(0.01), loss: F::one() }
    }
}

impl<F: Real> Lambdas<F> {
    pub fn scaled(self, c: F) -> Self {
        Lambdas { turn: self.turn * c, length: self.length * c, loss: self.loss * c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore<F> {
    pub l_turn: usize,
    pub l_length: usize,
    pub loss: F,
    pub comp: F,
    pub lambdas: Lambdas<F>,
}

impl<F: Real> ComplexityScore<F> {
    pub fn from_parts(l_turn: usize, l_length: usize, loss: F, lambdas: Lambdas<F>) -> Self {
        let comp = lambdas.turn * F::of_usize(l_turn) + lambdas.length * F::of_usize(l_length) + lambdas.loss * loss;
        ComplexityScore { l_turn, l_length, loss, comp, lambdas }
    }
}

/// Scores one instruction. Each assistant turn is scored given the tokens of all
/// turns before it; the loss is the mean negative log-likelihood over all of them.
pub fn comp_score<F: Real>(
    instr: &Instruction,
    scorer: &dyn ModelClient,
    lambdas: Lambdas<F>,
    spec: &TokenizerSpec,
) -> Result<ComplexityScore<F>, SftError> {
    instr.validate()?;
    let mut context: Vec<u32> = Vec::new();
    let (mut nll, mut n_target, mut l_turn, mut l_length) = (0.0f64, 0usize, 0usize, 0usize);
    for t in &instr.turns {
        let toks = spec.tokenize(&t.text);
        match t.role {
            Role::User => {
                l_turn += 1;
                l_length += toks.len();
            }
            Role::Assistant if !toks.is_empty() => {
                let lp = scorer
                    .logprobs(&context, &toks)
                    .map_err(|source| SftError::ScorerFailure { id: instr.id.clone(), source })?;
                nll -= lp.total();
                n_target += toks.len();
            }
            Role::Assistant => {}
        }
        context.extend(toks);
    }
    if n_target == 0 {
        return Err(SftError::NoTarget(instr.id.clone()));
    }
    let loss = F::of((nll / n_target as f64).max(0.0));
    Ok(ComplexityScore::from_parts(l_turn, l_length, loss, lambdas))
}

/// Scores every instruction in parallel; results keep input order.
pub fn score_all<F: Real>(
    instructions: &[Instruction],
    scorer: &dyn ModelClient,
    lambdas: Lambdas<F>,
    spec: &TokenizerSpec,
) -> Vec<Result<ComplexityScore<F>, SftError>> {
    instructions.par_iter().map(|i| comp_score(i, scorer, lambdas, spec)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold<F> {
    Quantile(F),
    Explicit(F),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSplit<F> {
    /// Indices into the input, easiest first.
    pub simple: Vec<usize>,
    pub complex: Vec<usize>,
    pub threshold: Option<F>,
    pub quantile: Option<F>,
}

/// Value at index `floor(q·n)` (clamped) of the sorted values; the upper median
/// for `q = 0.5` and even `n`.
pub fn quantile<F: Real>(values: &[F], q: F) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let i = (q * F::of_usize(v.len())).floor().to_usize().unwrap_or(0).min(v.len() - 1);
    Some(v[i])
}

/// Splits scored items into a simple phase (`comp < threshold`, not forced) and a
/// complex phase. `items` holds each item's score and its force-complex flag.
pub fn split_curriculum<F: Real>(
    items: &[(Option<F>, bool)],
    threshold: Threshold<F>,
) -> Result<CurriculumSplit<F>, SftError> {
    if let Some(i) = items.iter().position(|&(s, f)| s.is_none() && !f) {
        return Err(SftError::Unscored(i));
    }
    let (thr, q) = match threshold {
        Threshold::Explicit(t) => (Some(t), None),
        Threshold::Quantile(q) => {
            if !(q >= F::zero() && q <= F::one()) {
                return Err(SftError::BadQuantile(q.to_f64_lossy()));
            }
            let scores: Vec<F> = items.iter().filter_map(|&(s, _)| s).collect();
            (quantile(&scores, q), Some(q))
        }
    };
    let (mut simple, mut complex) = (Vec::new(), Vec::new());
    for (i, &(s, forced)) in items.iter().enumerate() {
        match (s, thr) {
            (Some(s), Some(t)) if !forced && s < t => simple.push(i),
            _ => complex.push(i),
        }
    }
    let key = |i: &usize| items[*i].0;
    let order = |a: &usize, b: &usize| match (key(a), key(b)) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    };
    simple.sort_by(order);
    complex.sort_by(order);
    Ok(CurriculumSplit { simple, complex, threshold: thr, quantile: q })
}

/// Topic counts over a set of synthesized instructions, read from their steps.
pub fn topic_histogram(instructions: &[Instruction]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for i in instructions {
        for s in &i.steps {
            if let Some(t) = s.strip_prefix("multiturn:") {
                *m.entry(t.to_string()).or_default() += 1;
            }
        }
    }
    m
}

/// Ids reachable as ancestors that are not in `sources`.
pub fn unresolved_ancestry(instructions: &[Instruction], sources: &BTreeSet<String>) -> Vec<String> {
    instructions.iter().flat_map(|i| i.ancestry()).filter(|a| !sources.contains(a)).collect()
}
