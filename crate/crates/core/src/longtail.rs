//! Weak long-tail knowledge detection and remedial data retrieval.
//!
//! Entities come from encyclopedia articles. Each entity gets template questions,
//! reference answers from a generator, and a score `s_v`: the fraction of its
//! questions the model under test answers in agreement with the reference. Entities
//! scoring below `epsilon` are weak; TF-IDF retrieval over the pre-training pool
//! finds remedial documents for them, and the cycle repeats for a few rounds.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::model_client::{ModelClient, ModelError};
use crate::seed::derive_seed;
use crate::text::{char_len, count_occurrences};
use crate::tfidf::{TfidfError, TfidfIndex};
use crate::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LongtailError {
    #[error("no encyclopedia documents")]
    EmptyEncyclopedia,
    #[error("encyclopedia document {0} has no title")]
    MissingTitle(String),
    #[error("no question templates")]
    NoTemplates,
    #[error("at least one question per entity is needed")]
    ZeroQuestions,
    #[error("entity {entity}: no template works without related entities")]
    EmptyRelatedSet { entity: String },
    #[error("entity {entity}, question {index}: generator failed: {source}")]
    GeneratorFailure { entity: String, index: usize, source: ModelError },
    #[error("entity {entity}, pair {index}: {source}")]
    ScoringFailure { entity: String, index: usize, source: ModelError },
    #[error("entity {0} has no questions to score")]
    NoQuestions(String),
    #[error("entity {0} has not been scored")]
    UnscoredEntity(String),
    #[error(transparent)]
    Retrieval(#[from] TfidfError),
    #[error("training step failed: {0}")]
    Training(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub name: String,
    pub description: String,
    pub mention_count: u64,
    pub related: BTreeSet<String>,
    pub qa_pairs: Vec<QaPair>,
    pub score: Option<f64>,
}

impl EntityRecord {
    pub fn new(name: &str, description: &str) -> Self {
        EntityRecord {
            name: name.to_string(),
            description: description.to_string(),
            mention_count: 0,
            related: BTreeSet::new(),
            qa_pairs: Vec::new(),
            score: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub min_description_chars: usize,
    pub min_mentions: u64,
    pub min_cooccur: usize,
    pub questions_per_entity: usize,
    pub epsilon: f64,
    pub k: usize,
    pub max_rounds: usize,
    /// Stop once a round improves the mean score by less than this.
    pub stop_tol: f64,
    pub answer_tokens: usize,
    /// Entities probed per round; 0 probes all of them.
    pub sample_size: usize,
    pub seed: u64,
    /// Share of each stage-3 batch drawn from retrieved data, per language.
    pub remedial_fraction: BTreeMap<String, f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            min_description_chars: 500,
            min_mentions: 5,
            min_cooccur: 2,
            questions_per_entity: 5,
            epsilon: 0.5,
            k: 100,
            max_rounds: 5,
            stop_tol: 1e-3,
            answer_tokens: 64,
            sample_size: 0,
            seed: 0,
            remedial_fraction: BTreeMap::from([("zh".to_string(), 1.0), ("en".to_string(), 0.5)]),
        }
    }
}

/// Entities whose article is long enough and whose name is mentioned often
/// enough in `mention_sample`. The title comes from the `title` meta field.
pub fn build_entity_list(
    encyclopedia: &[Document],
    min_description_chars: usize,
    min_mentions: u64,
    mention_sample: &[Document],
) -> Result<Vec<EntityRecord>, LongtailError> {
    if encyclopedia.is_empty() {
        return Err(LongtailError::EmptyEncyclopedia);
    }
    let mut out = Vec::new();
    for doc in encyclopedia {
        let title = doc.meta_str("title").ok_or_else(|| LongtailError::MissingTitle(doc.id.clone()))?;
        if char_len(&doc.text) < min_description_chars {
            continue;
        }
        let mentions: u64 = mention_sample.iter().map(|d| count_occurrences(&d.text, title) as u64).sum();
        if mentions < min_mentions {
            continue;
        }
        let mut e = EntityRecord::new(title, &doc.text);
        e.mention_count = mentions;
        out.push(e);
    }
    Ok(out)
}

/// Names other than `v` occurring at least `min_cooccur` times in `description`.
///
/// Longer names are matched first and their occurrences masked, so a short name
/// inside a longer one (including inside `v`) is not counted again.
pub fn related_entities(v: &str, description: &str, names: &[String], min_cooccur: usize) -> BTreeSet<String> {
    let mut order: Vec<&str> =
        names.iter().map(String::as_str).chain(std::iter::once(v)).filter(|n| !n.is_empty()).collect();
    order.sort_by(|a, b| char_len(b).cmp(&char_len(a)).then(a.cmp(b)));
    order.dedup();
    let mut masked = description.to_string();
    let mut out = BTreeSet::new();
    for name in order {
        let n = count_occurrences(&masked, name);
        if n == 0 {
            continue;
        }
        masked = masked.replace(name, &"\u{0}".repeat(char_len(name)));
        if name != v && n >= min_cooccur {
            out.insert(name.to_string());
        }
    }
    out
}

pub const DEFAULT_TEMPLATES: [&str; 4] = [
    "Could you provide some context about {v}?",
    "Could you elaborate on the connection between {v} and {u}?",
    "What is {v} best known for?",
    "How did {u} influence {v}?",
];

/// One template per non-blank line.
pub fn parse_templates(content: &str) -> Vec<String> {
    content.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

pub fn fill_template(template: &str, v: &str, u: Option<&str>) -> String {
    let s = template.replace("{v}", v);
    match u {
        Some(u) => s.replace("{u}", u),
        None => s,
    }
}

/// Prompt sent to the generator for a reference answer.
pub fn reference_prompt(description: &str, question: &str) -> String {
    format!("{description}\n\nQuestion: {question}\nAnswer:")
}

/// `m` questions from the templates in rotation, with related entities filling
/// `{u}`, each answered by `generator` given the entity's article.
pub fn synthesize_qa(
    entity: &EntityRecord,
    generator: &dyn ModelClient,
    templates: &[String],
    m: usize,
    answer_tokens: usize,
    seed: u64,
) -> Result<Vec<QaPair>, LongtailError> {
    if templates.is_empty() {
        return Err(LongtailError::NoTemplates);
    }
    if m == 0 {
        return Err(LongtailError::ZeroQuestions);
    }
    let usable: Vec<&String> = if entity.related.is_empty() {
        templates.iter().filter(|t| !t.contains("{u}")).collect()
    } else {
        templates.iter().collect()
    };
    if usable.is_empty() {
        return Err(LongtailError::EmptyRelatedSet { entity: entity.name.clone() });
    }
    let related: Vec<&String> = entity.related.iter().collect();
    let mut used_u = 0;
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let t = usable[i % usable.len()];
        let u = if t.contains("{u}") {
            let u = related[used_u % related.len()];
            used_u += 1;
            Some(u.as_str())
        } else {
            None
        };
        let question = fill_template(t, &entity.name, u);
        let answer = generator
            .generate(&reference_prompt(&entity.description, &question), answer_tokens, derive_seed(seed, &question))
            .map_err(|source| LongtailError::GeneratorFailure { entity: entity.name.clone(), index: i, source })?;
        out.push(QaPair { question, answer });
    }
    Ok(out)
}

/// Mean of binary judgments.
pub fn judgment_score<F: Real>(judgments: &[bool]) -> F {
    if judgments.is_empty() {
        return F::zero();
    }
    F::of_usize(judgments.iter().filter(|&&j| j).count()) / F::of_usize(judgments.len())
}

/// `s_v`: the share of questions whose answer from `model` the judge accepts.
pub fn score_entity(
    entity: &EntityRecord,
    model: &dyn ModelClient,
    judge: &dyn ModelClient,
    answer_tokens: usize,
    seed: u64,
) -> Result<(f64, Vec<bool>), LongtailError> {
    if entity.qa_pairs.is_empty() {
        return Err(LongtailError::NoQuestions(entity.name.clone()));
    }
    let mut judgments = Vec::with_capacity(entity.qa_pairs.len());
    for (i, qa) in entity.qa_pairs.iter().enumerate() {
        let fail = |source| LongtailError::ScoringFailure { entity: entity.name.clone(), index: i, source };
        let reply = model.generate(&qa.question, answer_tokens, derive_seed(seed, &qa.question)).map_err(fail)?;
        let ok = if reply.trim().is_empty() {
            false
        } else {
            judge.judge(&qa.question, &qa.answer, &reply).map_err(fail)?
        };
        judgments.push(ok);
    }
    Ok((judgment_score(&judgments), judgments))
}

/// Names of entities with `s_v < epsilon`, in input order.
pub fn select_weak(entities: &[EntityRecord], epsilon: f64) -> Result<Vec<String>, LongtailError> {
    let mut out = Vec::new();
    for e in entities {
        let s = e.score.ok_or_else(|| LongtailError::UnscoredEntity(e.name.clone()))?;
        if s < epsilon {
            out.push(e.name.clone());
        }
    }
    Ok(out)
}

/// An entity's retrieval query: its questions, one per line.
pub fn entity_query(entity: &EntityRecord) -> String {
    entity.qa_pairs.iter().map(|q| q.question.as_str()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub per_entity: Vec<(String, Vec<(String, f64)>)>,
    /// Every retrieved id once, in order of first retrieval.
    pub union: Vec<String>,
}

/// Top-`k` documents per query; the union drops repeats.
pub fn tfidf_retrieve<F: Real>(
    index: &TfidfIndex<F>,
    queries: &[(String, String)],
    k: usize,
) -> Result<Retrieval, LongtailError> {
    let mut seen = HashSet::new();
    let mut union = Vec::new();
    let mut per_entity = Vec::new();
    for (name, q) in queries {
        let hits = index.top_k(q, k)?;
        for (id, _) in &hits {
            if seen.insert(id.clone()) {
                union.push(id.clone());
            }
        }
        per_entity.push((name.clone(), hits.into_iter().map(|(id, s)| (id, s.to_f64_lossy())).collect()));
    }
    Ok(Retrieval { per_entity, union })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRound {
    pub round: usize,
    pub epsilon: f64,
    pub scores: BTreeMap<String, f64>,
    pub weak: Vec<String>,
    pub retrieval: Retrieval,
    pub mean_score_before: f64,
    pub mean_score_after: f64,
}

/// Everything the loop needs from the outside world.
pub trait ProbeEnvironment {
    /// A fresh entity sample, with question-answer pairs, for `round` (1-based).
    fn sample_entities(&mut self, round: usize, cfg: &ProbeConfig) -> Result<Vec<EntityRecord>, LongtailError>;
    /// The current snapshot of the model under test.
    fn model(&self) -> &dyn ModelClient;
    fn judge(&self) -> &dyn ModelClient;
    /// Continued pre-training on the retrieved documents.
    fn train(&mut self, weak: &[String], retrieved: &[String]) -> Result<(), LongtailError>;
}

#[derive(Debug)]
pub struct ProbeLoopError {
    pub completed: Vec<ProbeRound>,
    pub error: LongtailError,
}

impl std::fmt::Display for ProbeLoopError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "probe loop failed after {} rounds: {}", self.completed.len(), self.error)
    }
}

impl std::error::Error for ProbeLoopError {}

fn score_all(
    entities: &mut [EntityRecord],
    env: &dyn ProbeEnvironment,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<f64, LongtailError> {
    let mut total = 0.0;
    for e in entities.iter_mut() {
        let (s, _) = score_entity(e, env.model(), env.judge(), cfg.answer_tokens, seed)?;
        e.score = Some(s);
        total += s;
    }
    Ok(if entities.is_empty() { 0.0 } else { total / entities.len() as f64 })
}

/// Detect, retrieve, train, repeat. Stops after `max_rounds`, when no entity is
/// weak, or when a round improves the mean score by less than `stop_tol`.
pub fn run_probe_loop<F: Real>(
    env: &mut dyn ProbeEnvironment,
    index: &TfidfIndex<F>,
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeRound>, ProbeLoopError> {
    let mut rounds: Vec<ProbeRound> = Vec::new();
    for r in 1..=cfg.max_rounds {
        let step = (|| {
            let seed = derive_seed(cfg.seed, &format!("probe.round{r}"));
            let mut entities = env.sample_entities(r, cfg)?;
            let before = score_all(&mut entities, env, cfg, seed)?;
            let weak = select_weak(&entities, cfg.epsilon)?;
            let weak_set: HashSet<&String> = weak.iter().collect();
            let queries: Vec<(String, String)> = entities
                .iter()
                .filter(|e| weak_set.contains(&e.name))
                .map(|e| (e.name.clone(), entity_query(e)))
                .collect();
            let retrieval = if queries.is_empty() {
                Retrieval { per_entity: Vec::new(), union: Vec::new() }
            } else {
                tfidf_retrieve(index, &queries, cfg.k)?
            };
            let after = if weak.is_empty() {
                before
            } else {
                env.train(&weak, &retrieval.union)?;
                score_all(&mut entities, env, cfg, seed)?
            };
            let scores = entities.iter().map(|e| (e.name.clone(), e.score.unwrap_or(0.0))).collect();
            Ok(ProbeRound {
                round: r,
                epsilon: cfg.epsilon,
                scores,
                weak,
                retrieval,
                mean_score_before: before,
                mean_score_after: after,
            })
        })();
        match step {
            Ok(round) => {
                let done = round.weak.is_empty() || !(round.mean_score_after - round.mean_score_before >= cfg.stop_tol);
                rounds.push(round);
                if done {
                    break;
                }
            }
            Err(error) => return Err(ProbeLoopError { completed: rounds, error }),
        }
    }
    Ok(rounds)
}

/// A fixed entity list probed with fixed models; training is left to the caller,
/// so `train` only records what it was given.
pub struct StaticEnvironment<'a> {
    pub entities: Vec<EntityRecord>,
    pub templates: Vec<String>,
    pub generator: &'a dyn ModelClient,
    pub model: &'a dyn ModelClient,
    pub judge: &'a dyn ModelClient,
    pub trained: Vec<Vec<String>>,
}

impl ProbeEnvironment for StaticEnvironment<'_> {
    fn sample_entities(&mut self, round: usize, cfg: &ProbeConfig) -> Result<Vec<EntityRecord>, LongtailError> {
        let seed = derive_seed(cfg.seed, &format!("probe.sample{round}"));
        let mut picked = self.entities.clone();
        if cfg.sample_size > 0 && cfg.sample_size < picked.len() {
            picked.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            picked.truncate(cfg.sample_size);
            picked.sort_by(|a, b| a.name.cmp(&b.name));
        }
        for e in &mut picked {
            e.qa_pairs =
                synthesize_qa(e, self.generator, &self.templates, cfg.questions_per_entity, cfg.answer_tokens, seed)?;
        }
        Ok(picked)
    }

    fn model(&self) -> &dyn ModelClient {
        self.model
    }

    fn judge(&self) -> &dyn ModelClient {
        self.judge
    }

    fn train(&mut self, _weak: &[String], retrieved: &[String]) -> Result<(), LongtailError> {
        self.trained.push(retrieved.to_vec());
        Ok(())
    }
}

/// Fills a stage-3 batch of `n` documents for one language: the configured share
/// comes from remedial documents, the rest from the regular pool, both drawn in a
/// seeded order.
pub fn compose_stage3_batch(
    remedial: &[Document],
    regular: &[Document],
    language: &str,
    n: usize,
    cfg: &ProbeConfig,
) -> Vec<Document> {
    let frac = cfg.remedial_fraction.get(language).copied().unwrap_or(0.0).clamp(0.0, 1.0);
    let want = if remedial.is_empty() { 0 } else { (n as f64 * frac).round() as usize };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("probe.mix.{language}")));
    let mut pick = |pool: &[Document], count: usize, out: &mut Vec<Document>| {
        if pool.is_empty() {
            return;
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        out.extend(order.iter().cycle().take(count).map(|&i| pool[i].clone()));
    };
    let mut out = Vec::with_capacity(n);
    pick(remedial, want, &mut out);
    pick(regular, n - want, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceKind;
    use crate::model_client::{FnModel, ScriptedModel};

    fn article(title: &str, body: &str) -> Document {
        Document::new(title, body, SourceKind::Encyclopedia, "en").with_meta("title", title)
    }

    #[test]
    fn entity_list_thresholds() {
        let long = "x".repeat(600);
        let docs = vec![article("Alpha", &long), article("Beta", &"y".repeat(100)), article("Gamma", &long)];
        let sample = vec![Document::new("s", "Alpha Alpha Alpha Alpha Alpha Beta", SourceKind::Web, "en")];
        let out = build_entity_list(&docs, 500, 5, &sample).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].name.as_str(), out[0].mention_count), ("Alpha", 5));
        assert_eq!(build_entity_list(&[], 500, 5, &sample).unwrap_err(), LongtailError::EmptyEncyclopedia);
        let untitled = Document::new("u", "text", SourceKind::Encyclopedia, "en");
        assert!(matches!(build_entity_list(&[untitled], 1, 0, &[]), Err(LongtailError::MissingTitle(_))));
    }

    #[test]
    fn cooccurrence_with_masking() {
        let names: Vec<String> =
            ["Wu Zetian", "Tang", "Emperor Taizong of Tang", "Zhenguan"].iter().map(|s| s.to_string()).collect();
        let d = "Emperor Taizong of Tang met Wu Zetian. Wu Zetian later ruled. Wu Zetian. Emperor Taizong of Tang again. Zhenguan once.";
        let r = related_entities("Emperor Taizong of Tang", d, &names, 2);
        assert_eq!(r, BTreeSet::from(["Wu Zetian".to_string()]));
    }

    #[test]
    fn templates_and_synthesis() {
        let mut e = EntityRecord::new("Emperor Taizong of Tang", "An emperor.");
        e.related.insert("Empress Wu Zetian".into());
        let t: Vec<String> = DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect();
        let gen = ScriptedModel::new("g").fallback("scripted answer");
        let qa = synthesize_qa(&e, &gen, &t, 3, 16, 0).unwrap();
        assert_eq!(
            qa[1].question,
            "Could you elaborate on the connection between Emperor Taizong of Tang and Empress Wu Zetian?"
        );
        assert!(qa.iter().all(|p| p.answer == "scripted answer"));
        assert_eq!(synthesize_qa(&e, &gen, &t, 0, 16, 0).unwrap_err(), LongtailError::ZeroQuestions);

        let lonely = EntityRecord::new("Solo", "d");
        let qa = synthesize_qa(&lonely, &gen, &t, 4, 16, 0).unwrap();
        assert!(qa.iter().all(|p| !p.question.contains("{u}")));
        let only_u = vec!["About {v} and {u}?".to_string()];
        assert!(matches!(synthesize_qa(&lonely, &gen, &only_u, 1, 16, 0), Err(LongtailError::EmptyRelatedSet { .. })));
        let failing = ScriptedModel::new("none");
        assert!(matches!(
            synthesize_qa(&lonely, &failing, &t, 2, 16, 0),
            Err(LongtailError::GeneratorFailure { index: 0, .. })
        ));
    }

    #[test]
    fn scores_and_selection() {
        assert_eq!(judgment_score::<f64>(&[true, false, true, true]), 0.75);
        assert_eq!(judgment_score::<f64>(&[false, false]), 0.0);
        let mut a = EntityRecord::new("A", "");
        a.score = Some(0.2);
        let mut b = EntityRecord::new("B", "");
        b.score = Some(0.8);
        assert_eq!(select_weak(&[a.clone(), b.clone()], 0.5).unwrap(), ["A"]);
        assert!(select_weak(&[a.clone(), b.clone()], 0.0).unwrap().is_empty());
        assert!(select_weak(&[a.clone()], 0.2).unwrap().is_empty());
        b.score = None;
        assert_eq!(select_weak(&[b], 0.5).unwrap_err(), LongtailError::UnscoredEntity("B".into()));
    }

    #[test]
    fn score_with_stub_model() {
        let mut e = EntityRecord::new("A", "");
        e.qa_pairs = vec![
            QaPair { question: "q1".into(), answer: "red apple".into() },
            QaPair { question: "q2".into(), answer: "green pear".into() },
        ];
        let model = FnModel::new("m", |q, _| Ok(if q == "q1" { "red apple".into() } else { "blue".into() }));
        let (s, j) = score_entity(&e, &model, &model, 8, 0).unwrap();
        assert_eq!((s, j), (0.5, vec![true, false]));
        assert!(matches!(
            score_entity(&EntityRecord::new("E", ""), &model, &model, 8, 0),
            Err(LongtailError::NoQuestions(_))
        ));
    }

    #[test]
    fn union_is_deduplicated() {
        let idx: TfidfIndex<f64> = TfidfIndex::build([("d1", "red apple"), ("d2", "red car"), ("d3", "blue sky")]);
        let q = vec![("A".to_string(), "red apple".to_string()), ("B".to_string(), "red car apple".to_string())];
        let r = tfidf_retrieve(&idx, &q, 2).unwrap();
        assert_eq!(r.per_entity[0].1[0].0, "d1");
        let uniq: HashSet<&String> = r.union.iter().collect();
        assert_eq!(uniq.len(), r.union.len());
        assert_eq!(r.union.len(), 2);
    }

    #[test]
    fn batch_composition() {
        let rem: Vec<Document> = (0..3).map(|i| Document::new(format!("r{i}"), "x", SourceKind::Web, "zh")).collect();
        let reg: Vec<Document> = (0..3).map(|i| Document::new(format!("g{i}"), "x", SourceKind::Web, "zh")).collect();
        let cfg = ProbeConfig::default();
        let zh = compose_stage3_batch(&rem, &reg, "zh", 10, &cfg);
        assert!(zh.iter().all(|d| d.id.starts_with('r')));
        let en = compose_stage3_batch(&rem, &reg, "en", 10, &cfg);
        assert_eq!(en.iter().filter(|d| d.id.starts_with('r')).count(), 5);
        let fr = compose_stage3_batch(&rem, &reg, "fr", 4, &cfg);
        assert!(fr.iter().all(|d| d.id.starts_with('g')));
        assert_eq!(zh, compose_stage3_batch(&rem, &reg, "zh", 10, &cfg));
    }
}
