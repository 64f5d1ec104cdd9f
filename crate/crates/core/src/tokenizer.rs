//! Vocabulary extension by WordPiece, padding, subword tokenization and
//! bytes-per-token compression reports.
//!
//! Text is pre-split into units: every whitespace character is its own unit and
//! every maximal run of other characters is a word. A word is covered by one
//! word-initial piece followed by continuation pieces, which carry a `##` prefix
//! in the vocabulary. Among all coverings the fewest-token one is used, preferring
//! the longest leading piece on ties, so a larger vocabulary never yields more
//! tokens.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::Real;

pub const CONTINUATION: &str = "##";
pub const DEFAULT_UNKNOWN: &str = "[UNK]";
const RESERVED_PREFIX: &str = "<|reserved_";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("target number of new tokens is zero")]
    ZeroTarget,
    #[error("cannot pad {size} tokens to {pad_to}")]
    PadTooSmall { size: usize, pad_to: usize },
    #[error("duplicate token {0:?}")]
    DuplicateToken(String),
    #[error("unknown token {0:?} is not in the vocabulary")]
    MissingUnknown(String),
    #[error("token id {0} out of range")]
    BadId(u32),
    #[error("vocabulary file line {line}: {reason}")]
    VocabFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn is_reserved(token: &str) -> bool {
    token.starts_with(RESERVED_PREFIX)
}

pub fn reserved_token(i: usize) -> String {
    format!("{RESERVED_PREFIX}{i}|>")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct TokenizerSpec {
    tokens: Vec<String>,
    base_size: usize,
    extension_size: usize,
    unknown_token: String,
    index: HashMap<String, u32>,
    max_chars: usize,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    tokens: Vec<String>,
    base_size: usize,
    extension_size: usize,
    padded_size: usize,
    unknown_token: String,
}

impl TryFrom<SpecRepr> for TokenizerSpec {
    type Error = TokenizerError;
    fn try_from(r: SpecRepr) -> Result<Self, TokenizerError> {
        let spec = TokenizerSpec::build(r.tokens, r.base_size, r.extension_size, r.unknown_token)?;
        if spec.padded_size() != r.padded_size {
            return Err(TokenizerError::PadTooSmall { size: spec.padded_size(), pad_to: r.padded_size });
        }
        Ok(spec)
    }
}

impl From<TokenizerSpec> for SpecRepr {
    fn from(s: TokenizerSpec) -> Self {
        SpecRepr {
            padded_size: s.padded_size(),
            tokens: s.tokens,
            base_size: s.base_size,
            extension_size: s.extension_size,
            unknown_token: s.unknown_token,
        }
    }
}

impl PartialEq for TokenizerSpec {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.base_size == other.base_size
            && self.extension_size == other.extension_size
            && self.unknown_token == other.unknown_token
    }
}

impl TokenizerSpec {
    fn build(
        tokens: Vec<String>,
        base_size: usize,
        extension_size: usize,
        unknown_token: String,
    ) -> Result<Self, TokenizerError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::DuplicateToken(t.clone()));
            }
        }
        if !index.contains_key(&unknown_token) {
            return Err(TokenizerError::MissingUnknown(unknown_token));
        }
        if base_size + extension_size > tokens.len() {
            return Err(TokenizerError::PadTooSmall { size: base_size + extension_size, pad_to: tokens.len() });
        }
        let max_chars =
            tokens.iter().map(|t| t.strip_prefix(CONTINUATION).unwrap_or(t).chars().count()).max().unwrap_or(1);
        Ok(TokenizerSpec { tokens, base_size, extension_size, unknown_token, index, max_chars })
    }

    /// A base vocabulary with no extension and no padding. `unknown_token` must be one of `tokens`.
    pub fn base(tokens: Vec<String>, unknown_token: &str) -> Result<Self, TokenizerError> {
        let n = tokens.len();
        Self::build(tokens, n, 0, unknown_token.to_string())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn extension_size(&self) -> usize {
        self.extension_size
    }

    pub fn padded_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn unknown_token(&self) -> &str {
        &self.unknown_token
    }

    pub fn unknown_id(&self) -> u32 {
        self.index[&self.unknown_token]
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn extension(&self) -> &[String] {
        &self.tokens[self.base_size..self.base_size + self.extension_size]
    }

    /// Token ids for `text`; code points no piece covers become the unknown token.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for unit in units(text) {
            self.tokenize_word(unit, &mut out);
        }
        out
    }

    fn piece_id(&self, chars: &[char], start: usize, end: usize) -> Option<u32> {
        let body: String = chars[start..end].iter().collect();
        if start == 0 {
            if body.starts_with(CONTINUATION) {
                return None;
            }
            self.id(&body)
        } else {
            self.id(&format!("{CONTINUATION}{body}"))
        }
    }

    fn tokenize_word(&self, word: &str, out: &mut Vec<u32>) {
        const UNK_COST: u64 = 1 << 32;
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len();
        // best[i]: cost of covering chars[i..]; step[i]: end of the first piece (None = unknown)
        let mut best = vec![u64::MAX; n + 1];
        let mut step: Vec<(usize, Option<u32>)> = vec![(0, None); n + 1];
        best[n] = 0;
        for i in (0..n).rev() {
            best[i] = best[i + 1] + UNK_COST + 1;
            step[i] = (i + 1, None);
            let far = (i + self.max_chars).min(n);
            for j in (i + 1..=far).rev() {
                if let Some(id) = self.piece_id(&chars, i, j) {
                    let c = best[j] + 1;
                    if c < best[i] {
                        best[i] = c;
                        step[i] = (j, Some(id));
                    }
                }
            }
        }
        let unk = self.unknown_id();
        let mut i = 0;
        while i < n {
            let (j, id) = step[i];
            out.push(id.unwrap_or(unk));
            i = j;
        }
    }

    /// Inverse of [`tokenize`](Self::tokenize) for sequences without unknown tokens.
    pub fn detokenize(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        for &id in ids {
            let t = self.token(id).ok_or(TokenizerError::BadId(id))?;
            match t.strip_prefix(CONTINUATION) {
                Some(rest) if !rest.is_empty() => out.push_str(rest),
                _ => out.push_str(t),
            }
        }
        Ok(out)
    }

    /// One token per line in id order, with `\`, newline, tab and carriage return escaped.
    pub fn to_vocab_file(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            for c in t.chars() {
                match c {
                    '\\' => s.push_str("\\\\"),
                    '\n' => s.push_str("\\n"),
                    '\t' => s.push_str("\\t"),
                    '\r' => s.push_str("\\r"),
                    _ => s.push(c),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Parses a vocabulary file. Reserved padding tokens at the end are counted as
    /// padding; everything else is base vocabulary.
    pub fn from_vocab_file(content: &str, unknown_token: &str) -> Result<Self, TokenizerError> {
        let mut tokens = Vec::new();
        for (n, line) in content.lines().enumerate() {
            let mut t = String::new();
            let mut it = line.chars();
            while let Some(c) = it.next() {
                if c != '\\' {
                    t.push(c);
                    continue;
                }
                match it.next() {
                    Some('\\') => t.push('\\'),
                    Some('n') => t.push('\n'),
                    Some('t') => t.push('\t'),
                    Some('r') => t.push('\r'),
                    other => {
                        return Err(TokenizerError::VocabFormat {
                            line: n + 1,
                            reason: format!("bad escape {other:?}"),
                        })
                    }
                }
            }
            tokens.push(t);
        }
        let pad = tokens.iter().rev().take_while(|t| is_reserved(t)).count();
        let base = tokens.len() - pad;
        Self::build(tokens, base, 0, unknown_token.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        if path.extension().is_some_and(|e| e == "json") {
            fs::write(path, serde_json::to_string_pretty(self)?)?;
        } else {
            fs::write(path, self.to_vocab_file())?;
        }
        Ok(())
    }

    /// Loads a `.json` spec, or a plain vocabulary file with the given unknown token.
    pub fn load(path: &Path, unknown_token: &str) -> Result<Self, TokenizerError> {
        let content = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&content)?)
        } else {
            Self::from_vocab_file(&content, unknown_token)
        }
    }
}

/// Whitespace characters and maximal non-whitespace runs, in order.
pub fn units(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(&text[s..i]);
            }
            out.push(&text[i..i + c.len_utf8()]);
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// How CJK training text is cut into extension candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CjkUnit {
    /// WordPiece merges inside words.
    #[default]
    Subword,
    /// Whole words, most frequent first.
    WholeWord,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub unit: CjkUnit,
    /// Fail on a zero target instead of returning no tokens.
    pub strict: bool,
}

fn symbolize(word: &str) -> Vec<String> {
    word.chars().enumerate().map(|(i, c)| if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") }).collect()
}

fn merged(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION).unwrap_or(b))
}

/// Learns up to `target` tokens absent from `base`.
///
/// Characters come first (most frequent first), then WordPiece merges: the pair
/// maximizing `count(ab) / (count(a) * count(b))`, ties broken by higher pair count
/// and then by the merged string.
pub fn train_wordpiece_extension(
    corpus: &[Document],
    target: usize,
    base: &TokenizerSpec,
    opts: &TrainOptions,
) -> Result<Vec<String>, TokenizerError> {
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    for d in corpus {
        for u in units(&d.text) {
            if !u.chars().all(char::is_whitespace) {
                *freq.entry(u.to_string()).or_default() += 1;
            }
        }
    }
    if freq.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    if target == 0 {
        return if opts.strict { Err(TokenizerError::ZeroTarget) } else { Ok(Vec::new()) };
    }
    let mut out: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut emit = |t: String, out: &mut Vec<String>| {
        if out.len() < target && !base.contains(&t) && !is_reserved(&t) && seen.insert(t.clone()) {
            out.push(t);
        }
    };

    let mut words: Vec<(Vec<String>, u64)> = freq.iter().map(|(w, &f)| (symbolize(w), f)).collect();
    let mut alphabet: BTreeMap<&str, u64> = BTreeMap::new();
    for (syms, f) in &words {
        for s in syms {
            *alphabet.entry(s.as_str()).or_default() += f;
        }
    }
    let mut alpha: Vec<(&str, u64)> = alphabet.into_iter().collect();
    alpha.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let alpha: Vec<String> = alpha.into_iter().map(|(s, _)| s.to_string()).collect();
    for s in alpha {
        emit(s, &mut out);
    }

    if opts.unit == CjkUnit::WholeWord {
        let mut ws: Vec<(&String, &u64)> = freq.iter().filter(|(w, _)| w.chars().count() > 1).collect();
        ws.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        for (w, _) in ws {
            emit(w.clone(), &mut out);
        }
        return Ok(out);
    }

    while out.len() < target {
        let mut unit_count: HashMap<&str, u64> = HashMap::new();
        let mut pair_count: HashMap<(&str, &str), u64> = HashMap::new();
        for (syms, f) in &words {
            for s in syms {
                *unit_count.entry(s).or_default() += f;
            }
            for w in syms.windows(2) {
                *pair_count.entry((&w[0], &w[1])).or_default() += f;
            }
        }
        let best = pair_count
            .iter()
            .map(|(&(a, b), &c)| {
                let score = c as f64 / (unit_count[a] as f64 * unit_count[b] as f64);
                (score, c, merged(a, b), a.to_string(), b.to_string())
            })
            .max_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(y.2.cmp(&x.2)));
        let Some((_, _, m, a, b)) = best else { break };
        for (syms, _) in &mut words {
            let mut i = 0;
            let mut next = Vec::with_capacity(syms.len());
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    next.push(m.clone());
                    i += 2;
                } else {
                    next.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            *syms = next;
        }
        emit(m, &mut out);
    }
    Ok(out)
}

/// Base tokens, then extension tokens not already present, then reserved padding up
/// to `pad_to`. Padding already on `base` is replaced, so the operation is idempotent.
pub fn merge_and_pad(
    base: &TokenizerSpec,
    extension: &[String],
    pad_to: usize,
) -> Result<TokenizerSpec, TokenizerError> {
    let keep = base.base_size + base.extension_size;
    let mut tokens: Vec<String> = base.tokens[..keep].to_vec();
    let mut present: HashSet<String> = tokens.iter().cloned().collect();
    let mut added = 0;
    for t in extension {
        if is_reserved(t) {
            return Err(TokenizerError::DuplicateToken(t.clone()));
        }
        if present.insert(t.clone()) {
            tokens.push(t.clone());
            added += 1;
        }
    }
    if pad_to < tokens.len() {
        return Err(TokenizerError::PadTooSmall { size: tokens.len(), pad_to });
    }
    let pads = pad_to - tokens.len();
    tokens.extend((0..pads).map(reserved_token));
    TokenizerSpec::build(tokens, base.base_size, base.extension_size + added, base.unknown_token.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionRow<F> {
    pub corpus: String,
    pub bytes: u64,
    pub tokens: u64,
    pub ratio: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport<F> {
    pub rows: Vec<CompressionRow<F>>,
    pub aggregate: CompressionRow<F>,
}

fn row<F: Real>(corpus: &str, bytes: u64, tokens: u64) -> CompressionRow<F> {
    CompressionRow { corpus: corpus.to_string(), bytes, tokens, ratio: F::of(bytes as f64) / F::of(tokens as f64) }
}

/// UTF-8 bytes per token for each named corpus and for all of them together.
pub fn compression_ratio<F: Real>(
    spec: &TokenizerSpec,
    corpora: &[(String, Vec<String>)],
) -> Result<CompressionReport<F>, TokenizerError> {
    use rayon::prelude::*;
    let mut rows = Vec::new();
    let (mut all_b, mut all_t) = (0u64, 0u64);
    for (name, texts) in corpora {
        let (b, t) = texts
            .par_iter()
            .map(|s| (s.len() as u64, spec.tokenize(s).len() as u64))
            .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
        if t == 0 {
            return Err(TokenizerError::EmptyCorpus);
        }
        all_b += b;
        all_t += t;
        rows.push(row(name, b, t));
    }
    if all_t == 0 {
        return Err(TokenizerError::EmptyCorpus);
    }
    Ok(CompressionReport { rows, aggregate: row("all", all_b, all_t) })
}

impl<F: Real> CompressionReport<F> {
    /// Two-column text table: corpus and ratio.
    pub fn render_table(&self) -> String {
        let mut s = format!("{:<20} {:>8}\n", "corpus", "ratio");
        for r in self.rows.iter().chain(std::iter::once(&self.aggregate)) {
            s.push_str(&format!("{:<20} {:>8.2}\n", r.corpus, r.ratio.to_f64_lossy()));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceKind;
    use proptest::prelude::*;

    fn ascii_base() -> TokenizerSpec {
        let mut toks = vec![DEFAULT_UNKNOWN.to_string(), " ".into(), "\n".into()];
        for c in ('a'..='z').chain(['.', ',']) {
            toks.push(c.to_string());
            toks.push(format!("##{c}"));
        }
        for w in ["un", "##happiness", "the", "##ing", "and", "##ppi"] {
            toks.push(w.to_string());
        }
        TokenizerSpec::base(toks, DEFAULT_UNKNOWN).unwrap()
    }

    fn zh(text: &str) -> Document {
        Document::new("z", text, SourceKind::Web, "zh")
    }

    fn names(s: &TokenizerSpec, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| s.token(i).unwrap().to_string()).collect()
    }

    #[test]
    fn single_token_and_unknown() {
        let s = ascii_base();
        assert_eq!(s.tokenize("the"), vec![s.id("the").unwrap()]);
        assert_eq!(s.tokenize("é"), vec![s.unknown_id()]);
        assert_eq!(names(&s, &s.tokenize("unhappiness")), ["un", "##happiness"]);
        assert_eq!(names(&s, &s.tokenize("the cats")), ["the", " ", "c", "##a", "##t", "##s"]);
    }

    #[test]
    fn round_trip() {
        let s = ascii_base();
        let text = "the cat and\nthe dog, unhappiness.";
        assert_eq!(s.detokenize(&s.tokenize(text)).unwrap(), text);
        assert!(s.detokenize(&[9999]).is_err());
    }

    #[test]
    fn vocab_file_round_trip() {
        let s = merge_and_pad(&ascii_base(), &["a\\b".into(), "x\ty".into()], 80).unwrap();
        let back = TokenizerSpec::from_vocab_file(&s.to_vocab_file(), DEFAULT_UNKNOWN).unwrap();
        assert_eq!(back.tokens(), s.tokens());
        assert_eq!(back.padded_size(), 80);
        assert_eq!(back.base_size(), s.base_size() + s.extension_size());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<TokenizerSpec>(&json).unwrap(), s);
        assert!(TokenizerSpec::from_vocab_file("a\\q\n", "a").is_err());
    }

    #[test]
    fn padding() {
        let tokens: Vec<String> =
            std::iter::once(DEFAULT_UNKNOWN.to_string()).chain((1..51_190).map(|i| format!("t{i}"))).collect();
        let base = TokenizerSpec::base(tokens, DEFAULT_UNKNOWN).unwrap();
        let padded = merge_and_pad(&base, &[], 51_200).unwrap();
        assert_eq!(padded.padded_size(), 51_200);
        assert_eq!(padded.tokens()[51_190..].iter().filter(|t| is_reserved(t)).count(), 10);
        assert_eq!(merge_and_pad(&base, &[], 51_190).unwrap().padded_size(), 51_190);
        assert!(matches!(merge_and_pad(&base, &[], 51_000), Err(TokenizerError::PadTooSmall { .. })));
        assert_eq!(merge_and_pad(&padded, &[], 51_200).unwrap(), padded);
    }

    #[test]
    fn wordpiece_learns_the_pair() {
        let docs: Vec<Document> = (0..20).map(|_| zh("你好 你好 你好")).collect();
        let base = ascii_base();
        let ext = train_wordpiece_extension(&docs, 10, &base, &TrainOptions::default()).unwrap();
        assert_eq!(ext, ["##好", "你", "你好"]);
        assert!(ext.iter().all(|t| !base.contains(t)));
        assert!(train_wordpiece_extension(&docs, 0, &base, &TrainOptions::default()).unwrap().is_empty());
        let strict = TrainOptions { strict: true, ..TrainOptions::default() };
        assert!(matches!(train_wordpiece_extension(&docs, 0, &base, &strict), Err(TokenizerError::ZeroTarget)));
        assert!(matches!(train_wordpiece_extension(&[], 5, &base, &strict), Err(TokenizerError::EmptyCorpus)));
    }

    #[test]
    fn whole_word_units() {
        let docs = vec![zh("北京 北京 上海")];
        let opts = TrainOptions { unit: CjkUnit::WholeWord, strict: false };
        let ext = train_wordpiece_extension(&docs, 10, &ascii_base(), &opts).unwrap();
        assert_eq!(&ext[ext.len() - 2..], ["北京", "上海"]);
    }

    #[test]
    fn greedy_would_lose_to_min_tokens() {
        let base = TokenizerSpec::base(
            ["[UNK]", "a", "##b", "##c", "##d", "##bcd"].iter().map(|s| s.to_string()).collect(),
            "[UNK]",
        )
        .unwrap();
        let ext = merge_and_pad(&base, &["ab".into()], 7).unwrap();
        assert_eq!(base.tokenize("abcd").len(), 2);
        assert_eq!(ext.tokenize("abcd").len(), 2);
    }

    #[test]
    fn compression() {
        let s = ascii_base();
        let r = compression_ratio::<f64>(&s, &[("en".into(), vec!["the the".into()])]).unwrap();
        assert_eq!((r.rows[0].bytes, r.rows[0].tokens), (7, 3));
        assert!((r.aggregate.ratio - 7.0 / 3.0).abs() < 1e-12);
        assert!(r.render_table().contains("2.33"));
        assert!(compression_ratio::<f64>(&s, &[("e".into(), vec![])]).is_err());
    }

    fn extended() -> TokenizerSpec {
        let docs: Vec<Document> =
            ["中文文本压缩", "中文分词", "文本压缩比例", "压缩中文"].iter().map(|t| zh(t)).collect();
        let ext = train_wordpiece_extension(&docs, 40, &ascii_base(), &TrainOptions::default()).unwrap();
        merge_and_pad(&ascii_base(), &ext, 200).unwrap()
    }

    #[test]
    fn extension_helps_cjk() {
        let (b, e) = (ascii_base(), extended());
        let text = "中文文本压缩比例";
        assert!(e.tokenize(text).len() < b.tokenize(text).len());
        assert_eq!(e.detokenize(&e.tokenize(text)).unwrap(), text);
    }

    proptest! {
        #[test]
        fn ascii_unchanged_by_cjk_extension(text in "[a-z ,.\n]{0,80}") {
            let (b, e) = (ascii_base(), extended());
            let tb = names(&b, &b.tokenize(&text));
            prop_assert_eq!(&tb, &names(&e, &e.tokenize(&text)));
            prop_assert_eq!(b.detokenize(&b.tokenize(&text)).unwrap(), text);
        }

        #[test]
        fn superset_never_costs_more(text in "[a-d ]{0,40}", extra in proptest::collection::vec("(##)?[a-d]{2,4}", 0..8)) {
            let mut toks = vec!["[UNK]".to_string(), " ".into()];
            for c in 'a'..='d' {
                toks.push(c.to_string());
                toks.push(format!("##{c}"));
            }
            let base = TokenizerSpec::base(toks, "[UNK]").unwrap();
            let ext = merge_and_pad(&base, &extra, base.padded_size() + extra.len()).unwrap();
            prop_assert!(ext.tokenize(&text).len() <= base.tokenize(&text).len());
            prop_assert_eq!(ext.detokenize(&ext.tokenize(&text)).unwrap(), text);
        }
    }
}
