//! The boundary to language models.
//!
//! Everything downstream talks to a [`ModelClient`]: per-token log-probabilities
//! over token ids, seeded text generation and a binary judge. Three kinds of
//! implementation live here: a token n-gram model fit locally, small fixed models
//! for tests (uniform, scripted), and [`ProtocolModel`], which forwards each call as
//! one JSON line to an external provider and reads one JSON line back.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::seed::{derive_seed, sha256_hex};
use crate::text::terms;
use crate::tokenizer::TokenizerSpec;

/// Environment variable naming an external provider command.
pub const PROVIDER_ENV: &str = "CURATE_PROVIDER";
pub const DEFAULT_JUDGE_CUT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("token id {0} outside the model vocabulary")]
    TokenOutOfVocab(u32),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("{0} is not supported by this model")]
    Unsupported(&'static str),
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
}

/// Per-token natural-log conditional probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub tokens: Vec<u32>,
    pub logprobs: Vec<f64>,
}

impl TokenLogProbs {
    /// Log-likelihood of the whole sequence.
    pub fn total(&self) -> f64 {
        self.logprobs.iter().sum()
    }

    /// Mean negative log-likelihood per token; 0 for an empty sequence.
    pub fn mean_nll(&self) -> f64 {
        if self.logprobs.is_empty() {
            0.0
        } else {
            -self.total() / self.logprobs.len() as f64
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.tokens.len() != self.logprobs.len() {
            return Err(ModelError::ProtocolViolation(format!(
                "{} log-probs for {} tokens",
                self.logprobs.len(),
                self.tokens.len()
            )));
        }
        if let Some(bad) = self.logprobs.iter().find(|l| !(l.is_finite() && **l <= 0.0)) {
            return Err(ModelError::ProtocolViolation(format!("log-prob {bad} is not a finite value <= 0")));
        }
        Ok(())
    }
}

pub trait ModelClient: Send + Sync {
    /// Names the parameter snapshot this client stands for.
    fn identity(&self) -> String;

    /// `log P(target_i | context, target_<i)` for every target position.
    fn logprobs(&self, context: &[u32], target: &[u32]) -> Result<TokenLogProbs, ModelError>;

    fn generate(&self, prompt: &str, max_tokens: usize, seed: u64) -> Result<String, ModelError>;

    /// Whether `candidate` agrees with `reference` as an answer to `question`.
    fn judge(&self, question: &str, reference: &str, candidate: &str) -> Result<bool, ModelError> {
        f1_judge(question, reference, candidate, DEFAULT_JUDGE_CUT)
    }
}

impl<M: ModelClient + ?Sized> ModelClient for Arc<M> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn logprobs(&self, context: &[u32], target: &[u32]) -> Result<TokenLogProbs, ModelError> {
        (**self).logprobs(context, target)
    }
    fn generate(&self, prompt: &str, max_tokens: usize, seed: u64) -> Result<String, ModelError> {
        (**self).generate(prompt, max_tokens, seed)
    }
    fn judge(&self, question: &str, reference: &str, candidate: &str) -> Result<bool, ModelError> {
        (**self).judge(question, reference, candidate)
    }
}

/// Log-probabilities of a whole sequence with no context.
pub fn sequence_logprob(model: &dyn ModelClient, tokens: &[u32]) -> Result<TokenLogProbs, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput("token sequence"));
    }
    model.logprobs(&[], tokens)
}

/// Token-overlap F1 between two texts over lowercase terms, counting multiplicity.
pub fn token_f1(reference: &str, candidate: &str) -> f64 {
    let (r, c) = (terms(reference), terms(candidate));
    if r.is_empty() || c.is_empty() {
        return 0.0;
    }
    let mut bag: HashMap<&str, i64> = HashMap::new();
    for t in &r {
        *bag.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &c {
        if let Some(n) = bag.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / c.len() as f64;
    let rc = common as f64 / r.len() as f64;
    2.0 * p * rc / (p + rc)
}

/// Stand-in judge: aligned when token F1 reaches `cut` (inclusive).
pub fn f1_judge(question: &str, reference: &str, candidate: &str, cut: f64) -> Result<bool, ModelError> {
    for (name, s) in [("question", question), ("reference answer", reference), ("candidate answer", candidate)] {
        if s.trim().is_empty() {
            return Err(ModelError::EmptyInput(name));
        }
    }
    Ok(token_f1(reference, candidate) >= cut)
}

/// Context id used to pad the start of a sequence; never a real token.
const BOS: u32 = u32::MAX;

/// Token n-gram model with add-k smoothing over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    k: f64,
    vocab_size: usize,
    counts: HashMap<Vec<u32>, BTreeMap<u32, u64>>,
    totals: HashMap<Vec<u32>, u64>,
    tokenizer: Option<Arc<TokenizerSpec>>,
    judge_cut: f64,
    identity: String,
}

impl NgramModel {
    /// Counts n-grams of every order up to `order` over token sequences. Ids must
    /// be below `vocab_size`.
    pub fn fit<'a, I>(sequences: I, order: usize, k: f64, vocab_size: usize) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        let order = order.max(1);
        let mut counts: HashMap<Vec<u32>, BTreeMap<u32, u64>> = HashMap::new();
        let mut totals: HashMap<Vec<u32>, u64> = HashMap::new();
        for seq in sequences {
            let mut padded = vec![BOS; order - 1];
            padded.extend_from_slice(seq);
            for i in order - 1..padded.len() {
                let t = padded[i];
                if t as usize >= vocab_size {
                    return Err(ModelError::TokenOutOfVocab(t));
                }
                for n in 0..order {
                    let ctx = padded[i - n..i].to_vec();
                    *counts.entry(ctx.clone()).or_default().entry(t).or_default() += 1;
                    *totals.entry(ctx).or_default() += 1;
                }
            }
        }
        let mut m = NgramModel {
            order,
            k,
            vocab_size,
            counts,
            totals,
            tokenizer: None,
            judge_cut: DEFAULT_JUDGE_CUT,
            identity: String::new(),
        };
        m.identity = m.digest();
        Ok(m)
    }

    /// Fits on texts tokenized by `spec`; the model can then generate text.
    pub fn fit_texts<'a, I>(texts: I, spec: Arc<TokenizerSpec>, order: usize, k: f64) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let seqs: Vec<Vec<u32>> = texts.into_iter().map(|t| spec.tokenize(t)).collect();
        let mut m = Self::fit(seqs.iter().map(Vec::as_slice), order, k, spec.padded_size())?;
        m.tokenizer = Some(spec);
        m.identity = m.digest();
        Ok(m)
    }

    pub fn with_judge_cut(mut self, cut: f64) -> Self {
        self.judge_cut = cut;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn tokenizer(&self) -> Option<&Arc<TokenizerSpec>> {
        self.tokenizer.as_ref()
    }

    fn digest(&self) -> String {
        let mut keys: Vec<(&Vec<u32>, &BTreeMap<u32, u64>)> = self.counts.iter().collect();
        keys.sort();
        let body = json!({
            "order": self.order,
            "k": self.k,
            "vocab": self.vocab_size,
            "counts": keys,
            "tokens": self.tokenizer.as_ref().map(|t| t.tokens().len()),
        });
        format!("ngram:{}", &sha256_hex(body.to_string().as_bytes())[..16])
    }

    fn context_key(&self, history: &[u32]) -> Vec<u32> {
        let n = self.order - 1;
        let mut key = vec![BOS; n.saturating_sub(history.len())];
        key.extend_from_slice(&history[history.len().saturating_sub(n)..]);
        key
    }

    /// Smoothed `P(t | history)` using the full `order - 1` context.
    pub fn prob(&self, history: &[u32], t: u32) -> Result<f64, ModelError> {
        if t as usize >= self.vocab_size {
            return Err(ModelError::TokenOutOfVocab(t));
        }
        let key = self.context_key(history);
        let total = self.totals.get(&key).copied().unwrap_or(0) as f64;
        let count = self.counts.get(&key).and_then(|m| m.get(&t)).copied().unwrap_or(0) as f64;
        Ok((count + self.k) / (total + self.k * self.vocab_size as f64))
    }

    /// Observed continuations of the longest context seen in training.
    fn backoff(&self, history: &[u32]) -> Option<&BTreeMap<u32, u64>> {
        let full = self.context_key(history);
        (0..full.len() + 1).map(|drop| &full[drop..]).find_map(|ctx| self.counts.get(ctx))
    }
}

impl ModelClient for NgramModel {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn logprobs(&self, context: &[u32], target: &[u32]) -> Result<TokenLogProbs, ModelError> {
        let mut history = context.to_vec();
        let mut logprobs = Vec::with_capacity(target.len());
        for &t in target {
            logprobs.push(self.prob(&history, t)?.ln());
            history.push(t);
        }
        Ok(TokenLogProbs { tokens: target.to_vec(), logprobs })
    }

    /// Samples continuation tokens from observed counts, backing off to shorter
    /// contexts when the full one was never seen.
    fn generate(&self, prompt: &str, max_tokens: usize, seed: u64) -> Result<String, ModelError> {
        if prompt.trim().is_empty() {
            return Err(ModelError::EmptyInput("prompt"));
        }
        let spec = self.tokenizer.as_ref().ok_or(ModelError::Unsupported("generate without a tokenizer"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, prompt));
        let mut history = spec.tokenize(prompt);
        let start = history.len();
        for _ in 0..max_tokens {
            let Some(next) = self.backoff(&history) else { break };
            let ids: Vec<u32> = next.keys().copied().collect();
            let w: Vec<u64> = next.values().copied().collect();
            let dist = WeightedIndex::new(&w).map_err(|e| ModelError::Provider(e.to_string()))?;
            history.push(ids[dist.sample(&mut rng)]);
        }
        spec.detokenize(&history[start..]).map_err(|e| ModelError::Provider(e.to_string()))
    }

    fn judge(&self, question: &str, reference: &str, candidate: &str) -> Result<bool, ModelError> {
        f1_judge(question, reference, candidate, self.judge_cut)
    }
}

/// Every token has probability `1 / vocab_size`.
#[derive(Debug, Clone)]
pub struct UniformModel {
    pub vocab_size: usize,
}

impl ModelClient for UniformModel {
    fn identity(&self) -> String {
        format!("uniform:{}", self.vocab_size)
    }

    fn logprobs(&self, _context: &[u32], target: &[u32]) -> Result<TokenLogProbs, ModelError> {
        let lp = -(self.vocab_size as f64).ln();
        if let Some(&t) = target.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(ModelError::TokenOutOfVocab(t));
        }
        Ok(TokenLogProbs { tokens: target.to_vec(), logprobs: vec![lp; target.len()] })
    }

    fn generate(&self, _prompt: &str, _max_tokens: usize, _seed: u64) -> Result<String, ModelError> {
        Err(ModelError::Unsupported("generate"))
    }
}

/// Canned replies keyed by prompt; token scoring is delegated to `scorer` if set.
#[derive(Clone, Default)]
pub struct ScriptedModel {
    pub name: String,
    pub replies: BTreeMap<String, String>,
    pub fallback: Option<String>,
    pub scorer: Option<Arc<dyn ModelClient>>,
}

impl ScriptedModel {
    pub fn new(name: &str) -> Self {
        ScriptedModel { name: name.to_string(), ..Default::default() }
    }

    pub fn reply(mut self, prompt: &str, answer: &str) -> Self {
        self.replies.insert(prompt.to_string(), answer.to_string());
        self
    }

    pub fn fallback(mut self, answer: &str) -> Self {
        self.fallback = Some(answer.to_string());
        self
    }
}

impl ModelClient for ScriptedModel {
    fn identity(&self) -> String {
        format!("scripted:{}", self.name)
    }

    fn logprobs(&self, context: &[u32], target: &[u32]) -> Result<TokenLogProbs, ModelError> {
        match &self.scorer {
            Some(s) => s.logprobs(context, target),
            None => Err(ModelError::Unsupported("logprobs")),
        }
    }

    fn generate(&self, prompt: &str, max_tokens: usize, _seed: u64) -> Result<String, ModelError> {
        if max_tokens == 0 {
            return Ok(String::new());
        }
        self.replies
            .get(prompt)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| ModelError::Provider(format!("no scripted reply for {prompt:?}")))
    }
}

type GenerateFn = dyn Fn(&str, u64) -> Result<String, ModelError> + Send + Sync;

/// Generation by closure, for stubs whose replies depend on the prompt's shape.
#[derive(Clone)]
pub struct FnModel {
    name: String,
    f: Arc<GenerateFn>,
}

impl FnModel {
    pub fn new(name: &str, f: impl Fn(&str, u64) -> Result<String, ModelError> + Send + Sync + 'static) -> Self {
        FnModel { name: name.to_string(), f: Arc::new(f) }
    }
}

impl ModelClient for FnModel {
    fn identity(&self) -> String {
        format!("fn:{}", self.name)
    }

    fn logprobs(&self, _context: &[u32], _target: &[u32]) -> Result<TokenLogProbs, ModelError> {
        Err(ModelError::Unsupported("logprobs"))
    }

    fn generate(&self, prompt: &str, max_tokens: usize, seed: u64) -> Result<String, ModelError> {
        if max_tokens == 0 {
            return Ok(String::new());
        }
        (self.f)(prompt, seed)
    }
}

// ---- line protocol ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub op: String,
    pub payload: Value,
}

impl Request {
    pub fn new(op: &str, payload: Value) -> Self {
        Request { op: op.to_string(), payload }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("requests always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Ok { ok: bool, result: Value },
    Err { ok: bool, error: String },
}

impl Reply {
    pub fn ok(result: Value) -> Self {
        Reply::Ok { ok: true, result }
    }

    pub fn err(error: impl Into<String>) -> Self {
        Reply::Err { ok: false, error: error.into() }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("replies always serialize")
    }

    /// Parses a reply line, checking that `ok` matches the variant.
    pub fn parse(line: &str) -> Result<Result<Value, String>, ModelError> {
        let v: Value =
            serde_json::from_str(line).map_err(|e| ModelError::ProtocolViolation(format!("{e}: {line:?}")))?;
        match (v.get("ok").and_then(Value::as_bool), v.get("result"), v.get("error").and_then(Value::as_str)) {
            (Some(true), Some(r), _) => Ok(Ok(r.clone())),
            (Some(false), _, Some(e)) => Ok(Err(e.to_string())),
            _ => Err(ModelError::ProtocolViolation(format!("malformed reply {line:?}"))),
        }
    }
}

fn field<'a>(payload: &'a Value, name: &str) -> Result<&'a Value, String> {
    payload.get(name).ok_or_else(|| format!("payload is missing {name:?}"))
}

fn ids(v: &Value, name: &str) -> Result<Vec<u32>, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("{name}: {e}"))
}

fn text<'a>(payload: &'a Value, name: &str) -> Result<&'a str, String> {
    field(payload, name)?.as_str().ok_or_else(|| format!("{name:?} must be a string"))
}

/// Answers one request with a local model.
pub fn serve_request(model: &dyn ModelClient, req: &Request) -> Reply {
    let p = &req.payload;
    let out: Result<Value, String> = (|| match req.op.as_str() {
        "identity" => Ok(json!(model.identity())),
        "logprobs" => {
            let context = match p.get("context") {
                Some(c) => ids(c, "context")?,
                None => Vec::new(),
            };
            let tokens = ids(field(p, "tokens")?, "tokens")?;
            let lp = model.logprobs(&context, &tokens).map_err(|e| e.to_string())?;
            serde_json::to_value(lp).map_err(|e| e.to_string())
        }
        "generate" => {
            let max = field(p, "max_tokens")?.as_u64().ok_or("max_tokens must be an integer")? as usize;
            let seed = field(p, "seed")?.as_u64().ok_or("seed must be an integer")?;
            model.generate(text(p, "prompt")?, max, seed).map(Value::from).map_err(|e| e.to_string())
        }
        "judge" => model
            .judge(text(p, "question")?, text(p, "reference")?, text(p, "candidate")?)
            .map(|b| json!(u8::from(b)))
            .map_err(|e| e.to_string()),
        other => Err(format!("unknown op {other:?}")),
    })();
    match out {
        Ok(v) => Reply::ok(v),
        Err(e) => Reply::err(e),
    }
}

/// Reads requests line by line and writes one reply line per request.
pub fn serve<R: BufRead, W: Write>(model: &dyn ModelClient, input: R, mut output: W) -> io::Result<usize> {
    let mut n = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(req) => serve_request(model, &req),
            Err(e) => Reply::err(format!("bad request: {e}")),
        };
        writeln!(output, "{}", reply.to_line())?;
        output.flush()?;
        n += 1;
    }
    Ok(n)
}

/// Carries request lines to a provider and brings back reply lines.
pub trait Transport: Send + Sync {
    fn round_trip(&self, line: &str) -> Result<String, ModelError>;
}

/// In-process provider that still goes through the JSON encoding.
pub struct LoopbackTransport<M> {
    pub model: M,
}

impl<M: ModelClient> Transport for LoopbackTransport<M> {
    fn round_trip(&self, line: &str) -> Result<String, ModelError> {
        let req: Request = serde_json::from_str(line).map_err(|e| ModelError::ProtocolViolation(e.to_string()))?;
        Ok(serve_request(&self.model, &req).to_line())
    }
}

struct Live {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    lines: Receiver<io::Result<String>>,
}

/// A provider process that reads request lines on stdin and answers on stdout.
/// Requests are sent one at a time.
pub struct SubprocessTransport {
    argv: Vec<String>,
    timeout: Duration,
    live: Mutex<Option<Live>>,
}

impl SubprocessTransport {
    pub fn new(argv: Vec<String>, timeout: Duration) -> Result<Self, ModelError> {
        if argv.is_empty() {
            return Err(ModelError::ProviderUnavailable("empty provider command".into()));
        }
        Ok(SubprocessTransport { argv, timeout, live: Mutex::new(None) })
    }

    /// Splits a command line on whitespace.
    pub fn from_command_line(cmd: &str, timeout: Duration) -> Result<Self, ModelError> {
        Self::new(cmd.split_whitespace().map(String::from).collect(), timeout)
    }

    fn spawn(&self) -> Result<Live, ModelError> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::ProviderUnavailable(format!("{}: {e}", self.argv[0])))?;
        let stdin = BufWriter::new(child.stdin.take().expect("stdin is piped"));
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Live { child, stdin, lines: rx })
    }
}

impl Transport for SubprocessTransport {
    fn round_trip(&self, line: &str) -> Result<String, ModelError> {
        let mut guard = self.live.lock().unwrap_or_else(|e| e.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let live = guard.as_mut().expect("just spawned");
        let sent = writeln!(live.stdin, "{line}").and_then(|_| live.stdin.flush());
        if let Err(e) = sent {
            *guard = None;
            return Err(ModelError::ProviderUnavailable(e.to_string()));
        }
        match live.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                *guard = None;
                Err(ModelError::ProviderUnavailable(e.to_string()))
            }
            Err(RecvTimeoutError::Timeout) => {
                if let Some(mut l) = guard.take() {
                    let _ = l.child.kill();
                    let _ = l.child.wait();
                }
                Err(ModelError::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                *guard = None;
                Err(ModelError::ProviderUnavailable("provider closed its output".into()))
            }
        }
    }
}

impl Drop for SubprocessTransport {
    fn drop(&mut self) {
        if let Some(mut l) = self.live.get_mut().ok().and_then(Option::take) {
            drop(l.stdin);
            let _ = l.child.wait();
        }
    }
}

/// Replies stored on disk under a digest of (identity, op, payload).
#[derive(Debug, Clone)]
pub struct ReplyCache {
    dir: PathBuf,
}

impl ReplyCache {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ReplyCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, identity: &str, req: &Request) -> PathBuf {
        let key = format!("{identity}\u{0}{}\u{0}{}", req.op, req.payload);
        self.dir.join(format!("{}.json", &sha256_hex(key.as_bytes())[..32]))
    }

    pub fn get(&self, identity: &str, req: &Request) -> Option<Value> {
        let s = fs::read_to_string(self.path(identity, req)).ok()?;
        serde_json::from_str(&s).ok()
    }

    /// Writes through a temporary file so readers never see a partial entry.
    pub fn put(&self, identity: &str, req: &Request, result: &Value) -> io::Result<()> {
        let path = self.path(identity, req);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, result.to_string())?;
        fs::rename(tmp, path)
    }
}

/// A model reached through the line protocol.
pub struct ProtocolModel<T> {
    transport: T,
    identity: String,
    cache: Option<ReplyCache>,
}

impl<T: Transport> ProtocolModel<T> {
    /// Asks the provider for its identity.
    pub fn connect(transport: T) -> Result<Self, ModelError> {
        let mut m = ProtocolModel { transport, identity: String::new(), cache: None };
        let id = m.call(&Request::new("identity", json!({})))?;
        m.identity = id
            .as_str()
            .map(String::from)
            .ok_or_else(|| ModelError::ProtocolViolation("identity must be a string".into()))?;
        Ok(m)
    }

    pub fn with_cache(mut self, cache: ReplyCache) -> Self {
        self.cache = Some(cache);
        self
    }

    fn call(&self, req: &Request) -> Result<Value, ModelError> {
        if let Some(v) = self.cache.as_ref().and_then(|c| c.get(&self.identity, req)) {
            return Ok(v);
        }
        let line = self.transport.round_trip(&req.to_line())?;
        let result = Reply::parse(&line)?.map_err(ModelError::Provider)?;
        if let Some(c) = &self.cache {
            c.put(&self.identity, req, &result).map_err(|e| ModelError::Provider(format!("cache write: {e}")))?;
        }
        Ok(result)
    }
}

impl<T: Transport> ModelClient for ProtocolModel<T> {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn logprobs(&self, context: &[u32], target: &[u32]) -> Result<TokenLogProbs, ModelError> {
        let v = self.call(&Request::new("logprobs", json!({"context": context, "tokens": target})))?;
        let lp: TokenLogProbs = serde_json::from_value(v).map_err(|e| ModelError::ProtocolViolation(e.to_string()))?;
        lp.validate()?;
        if lp.tokens != target {
            return Err(ModelError::ProtocolViolation("reply scores different tokens".into()));
        }
        Ok(lp)
    }

    fn generate(&self, prompt: &str, max_tokens: usize, seed: u64) -> Result<String, ModelError> {
        let v =
            self.call(&Request::new("generate", json!({"prompt": prompt, "max_tokens": max_tokens, "seed": seed})))?;
        v.as_str()
            .map(String::from)
            .ok_or_else(|| ModelError::ProtocolViolation("generate must return a string".into()))
    }

    fn judge(&self, question: &str, reference: &str, candidate: &str) -> Result<bool, ModelError> {
        let v = self.call(&Request::new(
            "judge",
            json!({"question": question, "reference": reference, "candidate": candidate}),
        ))?;
        match v.as_u64() {
            Some(0) => Ok(false),
            Some(1) => Ok(true),
            _ => Err(ModelError::ProtocolViolation(format!("judge must return 0 or 1, got {v}"))),
        }
    }
}
