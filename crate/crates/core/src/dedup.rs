//! Exact-hash deduplication within slices and MinHash-LSH near-duplicate removal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Document;
use crate::seed::{derive_seed, fnv1a64, mix64};

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("document {0}: cannot sign an empty shingle set")]
    EmptyShingleSet(String),
    #[error("signature length {got} does not match index length {expected}")]
    SignatureLengthMismatch { expected: usize, got: usize },
    #[error("bands x rows = {bands} x {rows} does not equal signature length {len}")]
    BandShape { bands: usize, rows: usize, len: usize },
    #[error("invalid dedup configuration: {0}")]
    Config(String),
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShingleMode {
    Word,
    Codepoint,
}

impl ShingleMode {
    /// Codepoint windows for CJK text, word windows otherwise.
    pub fn for_document(doc: &Document) -> ShingleMode {
        let lang = doc.language.to_ascii_lowercase();
        let cjk_lang = ["zh", "ja", "ko"].iter().any(|l| lang == *l || lang.starts_with(&format!("{l}-")));
        if cjk_lang || crate::text::cjk_fraction(&doc.text) > 0.5 {
            ShingleMode::Codepoint
        } else {
            ShingleMode::Word
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    pub doc_id: String,
    pub hashes: BTreeSet<u64>,
    pub n: usize,
    pub mode: ShingleMode,
}

impl ShingleSet {
    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    /// Exact Jaccard similarity of two fingerprint sets; two empty sets count as equal.
    pub fn jaccard(&self, other: &ShingleSet) -> f64 {
        jaccard(&self.hashes, &other.hashes)
    }
}

pub fn jaccard(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

fn fingerprint(units: &[&str]) -> u64 {
    mix64(fnv1a64(units.join("\u{1f}").as_bytes()))
}

/// Fingerprints every window of `n` consecutive units of `text`.
///
/// Word mode splits on whitespace; codepoint mode uses single code points.
/// Texts with fewer than `n` units yield one shingle covering everything.
pub fn shingle(doc_id: &str, text: &str, n: usize, mode: ShingleMode) -> ShingleSet {
    let n = n.max(1);
    let mut buf = [0u8; 4];
    let units: Vec<&str> = match mode {
        ShingleMode::Word => text.split_whitespace().collect(),
        ShingleMode::Codepoint => {
            text.char_indices().map(|(i, c)| &text[i..i + c.encode_utf8(&mut buf).len()]).collect()
        }
    };
    let mut hashes = BTreeSet::new();
    if units.is_empty() {
    } else if units.len() < n {
        hashes.insert(fingerprint(&units));
    } else {
        hashes.extend(units.windows(n).map(fingerprint));
    }
    ShingleSet { doc_id: doc_id.to_string(), hashes, n, mode }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub doc_id: String,
    pub values: Vec<u64>,
    pub permutation_seed: u64,
}

impl MinHashSignature {
    /// Fraction of slots on which two signatures agree.
    pub fn similarity(&self, other: &MinHashSignature) -> Result<f64, DedupError> {
        if self.values.len() != other.values.len() {
            return Err(DedupError::SignatureLengthMismatch { expected: self.values.len(), got: other.values.len() });
        }
        let eq = self.values.iter().zip(&other.values).filter(|(a, b)| a == b).count();
        Ok(eq as f64 / self.values.len() as f64)
    }
}

/// Per-slot hash keys derived from one seed.
fn slot_keys(num_hashes: usize, seed: u64) -> Vec<u64> {
    (0..num_hashes as u64).map(|i| mix64(seed ^ mix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)))).collect()
}

/// MinHash signature: slot `i` holds the minimum of `h_i` over all shingles.
pub fn minhash(shingles: &ShingleSet, num_hashes: usize, seed: u64) -> Result<MinHashSignature, DedupError> {
    if shingles.is_empty() {
        return Err(DedupError::EmptyShingleSet(shingles.doc_id.clone()));
    }
    if num_hashes == 0 {
        return Err(DedupError::Config("num_hashes must be at least 1".into()));
    }
    let keys = slot_keys(num_hashes, seed);
    let mut values = vec![u64::MAX; num_hashes];
    for &h in &shingles.hashes {
        for (v, &k) in values.iter_mut().zip(&keys) {
            let x = mix64(h ^ k);
            if x < *v {
                *v = x;
            }
        }
    }
    Ok(MinHashSignature { doc_id: shingles.doc_id.clone(), values, permutation_seed: seed })
}

/// Probability that a pair with Jaccard `j` shares at least one band.
pub fn collision_probability(j: f64, bands: usize, rows: usize) -> f64 {
    1.0 - (1.0 - j.powi(rows as i32)).powi(bands as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub shingle_n: usize,
    pub num_hashes: usize,
    pub bands: usize,
    pub rows: usize,
    pub verify_threshold: f64,
    pub slice_size: usize,
    pub seed: u64,
    pub cross_language: bool,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            shingle_n: 10,
            num_hashes: 128,
            bands: 16,
            rows: 8,
            verify_threshold: 0.7,
            slice_size: 100_000,
            seed: 0,
            cross_language: false,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), DedupError> {
        if self.shingle_n == 0 {
            return Err(DedupError::Config("shingle_n must be at least 1".into()));
        }
        if self.num_hashes == 0 || self.slice_size == 0 {
            return Err(DedupError::Config("num_hashes and slice_size must be positive".into()));
        }
        if self.bands * self.rows != self.num_hashes {
            return Err(DedupError::BandShape { bands: self.bands, rows: self.rows, len: self.num_hashes });
        }
        if !(0.0..=1.0).contains(&self.verify_threshold) {
            return Err(DedupError::Config(format!("verify_threshold {} outside [0, 1]", self.verify_threshold)));
        }
        Ok(())
    }

    /// Seed for the MinHash permutations, derived from the run seed.
    pub fn permutation_seed(&self) -> u64 {
        derive_seed(self.seed, "dedup.minhash")
    }
}

/// One removed document and the document it was attributed to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub removed_id: String,
    pub kept_id: String,
    pub estimated_similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DuplicateLedger {
    pub entries: Vec<LedgerEntry>,
}

impl DuplicateLedger {
    pub fn record(&mut self, removed_id: &str, kept_id: &str, estimated_similarity: f64) {
        self.entries.push(LedgerEntry {
            removed_id: removed_id.to_string(),
            kept_id: kept_id.to_string(),
            estimated_similarity,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// kept id -> removed ids, both sorted.
    pub fn clusters(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.kept_id.clone()).or_default().push(e.removed_id.clone());
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }

    pub fn extend(&mut self, other: DuplicateLedger) {
        self.entries.extend(other.entries);
    }

    fn canonicalize(&mut self) {
        self.entries.sort_by(|a, b| a.removed_id.cmp(&b.removed_id));
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn content_hash(text: &str) -> [u8; 16] {
    let d = Sha256::digest(text.as_bytes());
    d[..16].try_into().unwrap()
}

fn by_id(mut docs: Vec<Document>) -> Vec<Document> {
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    docs
}

/// Removes exact duplicates by 128-bit content hash. The survivor of each group is
/// the smallest id, so the result does not depend on input order. Kept documents
/// come back sorted by id.
pub fn exact_dedup_slice(docs: Vec<Document>) -> (Vec<Document>, DuplicateLedger) {
    let mut first: HashMap<[u8; 16], String> = HashMap::new();
    let mut kept = Vec::new();
    let mut ledger = DuplicateLedger::default();
    for doc in by_id(docs) {
        match first.get(&content_hash(&doc.text)) {
            Some(k) => ledger.record(&doc.id, k, 1.0),
            None => {
                first.insert(content_hash(&doc.text), doc.id.clone());
                kept.push(doc);
            }
        }
    }
    (kept, ledger)
}

/// Exact dedup over consecutive slices of `slice_size` documents.
pub fn exact_dedup(docs: Vec<Document>, slice_size: usize) -> (Vec<Document>, DuplicateLedger) {
    let size = slice_size.max(1);
    let mut kept = Vec::new();
    let mut ledger = DuplicateLedger::default();
    let mut rest = docs.into_iter().peekable();
    while rest.peek().is_some() {
        let slice: Vec<Document> = rest.by_ref().take(size).collect();
        let (k, l) = exact_dedup_slice(slice);
        kept.extend(k);
        ledger.extend(l);
    }
    ledger.canonicalize();
    (kept, ledger)
}

/// Band buckets over MinHash signatures of kept documents.
#[derive(Debug, Clone)]
pub struct LshIndex {
    bands: usize,
    rows: usize,
    buckets: Vec<HashMap<u64, Vec<usize>>>,
    signatures: Vec<MinHashSignature>,
}

impl LshIndex {
    pub fn new(bands: usize, rows: usize) -> Self {
        LshIndex { bands, rows, buckets: vec![HashMap::new(); bands], signatures: Vec::new() }
    }

    pub fn signature_len(&self) -> usize {
        self.bands * self.rows
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    fn check(&self, sig: &MinHashSignature) -> Result<(), DedupError> {
        if sig.values.len() != self.signature_len() {
            return Err(DedupError::SignatureLengthMismatch { expected: self.signature_len(), got: sig.values.len() });
        }
        Ok(())
    }

    fn band_key(&self, band: usize, sig: &MinHashSignature) -> u64 {
        let mut h = mix64(band as u64);
        for &v in &sig.values[band * self.rows..(band + 1) * self.rows] {
            h = mix64(h ^ v);
        }
        h
    }

    pub fn insert(&mut self, sig: MinHashSignature) -> Result<(), DedupError> {
        self.check(&sig)?;
        let slot = self.signatures.len();
        for b in 0..self.bands {
            let key = self.band_key(b, &sig);
            self.buckets[b].entry(key).or_default().push(slot);
        }
        self.signatures.push(sig);
        Ok(())
    }

    /// Indexed signatures sharing at least one band with `sig`, in insertion order.
    pub fn candidates(&self, sig: &MinHashSignature) -> Result<Vec<&MinHashSignature>, DedupError> {
        self.check(sig)?;
        let mut slots = BTreeSet::new();
        for b in 0..self.bands {
            if let Some(v) = self.buckets[b].get(&self.band_key(b, sig)) {
                slots.extend(v.iter().copied());
            }
        }
        Ok(slots.into_iter().map(|s| &self.signatures[s]).collect())
    }

    /// Best verified match at or above `threshold`: highest similarity, then earliest insert.
    pub fn best_match(&self, sig: &MinHashSignature, threshold: f64) -> Result<Option<(&str, f64)>, DedupError> {
        let mut best: Option<(&str, f64)> = None;
        for cand in self.candidates(sig)? {
            let s = cand.similarity(sig)?;
            if s >= threshold && best.is_none_or(|(_, b)| s > b) {
                best = Some((cand.doc_id.as_str(), s));
            }
        }
        Ok(best)
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, DedupError> {
    if workers == 0 {
        return Ok(f());
    }
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| DedupError::Workers(e.to_string()))?;
    Ok(pool.install(f))
}

fn signatures(docs: &[Document], cfg: &DedupConfig) -> Result<Vec<Option<MinHashSignature>>, DedupError> {
    use rayon::prelude::*;
    let seed = cfg.permutation_seed();
    docs.par_iter()
        .map(|d| {
            let sh = shingle(&d.id, &d.text, cfg.shingle_n, ShingleMode::for_document(d));
            if sh.is_empty() {
                Ok(None)
            } else {
                minhash(&sh, cfg.num_hashes, seed).map(Some)
            }
        })
        .collect()
}

/// Near-duplicate removal over one group of documents.
///
/// Documents are visited in id order; each is compared only with documents already
/// kept, so a removed document is always attributed to a smaller kept id and the
/// result is independent of input order and worker count. Empty texts are kept and
/// never indexed. `workers == 0` uses the global pool.
pub fn lsh_dedup(
    docs: Vec<Document>,
    cfg: &DedupConfig,
    workers: usize,
) -> Result<(Vec<Document>, DuplicateLedger), DedupError> {
    cfg.validate()?;
    let docs = by_id(docs);
    let sigs = with_pool(workers, || signatures(&docs, cfg))??;
    let mut index = LshIndex::new(cfg.bands, cfg.rows);
    let mut kept = Vec::new();
    let mut ledger = DuplicateLedger::default();
    for (doc, sig) in docs.into_iter().zip(sigs) {
        let Some(sig) = sig else {
            kept.push(doc);
            continue;
        };
        match index.best_match(&sig, cfg.verify_threshold)? {
            Some((k, s)) => ledger.record(&doc.id, k, s),
            None => {
                index.insert(sig)?;
                kept.push(doc);
            }
        }
    }
    ledger.canonicalize();
    Ok((kept, ledger))
}

/// Outcome of the two-step pipeline.
#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    pub kept: Vec<Document>,
    pub exact: DuplicateLedger,
    pub near: DuplicateLedger,
}

impl DedupOutcome {
    pub fn removed(&self) -> usize {
        self.exact.len() + self.near.len()
    }
}

/// Exact dedup within slices, then MinHash-LSH within each language (or across
/// languages when `cross_language` is set). Kept documents are sorted by id.
pub fn dedup(docs: Vec<Document>, cfg: &DedupConfig, workers: usize) -> Result<DedupOutcome, DedupError> {
    cfg.validate()?;
    let (exact_kept, exact) = exact_dedup(docs, cfg.slice_size);
    let mut groups: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    for d in exact_kept {
        let key = if cfg.cross_language { String::new() } else { d.language.clone() };
        groups.entry(key).or_default().push(d);
    }
    let mut kept = Vec::new();
    let mut near = DuplicateLedger::default();
    for (_, group) in groups {
        let (k, l) = lsh_dedup(group, cfg, workers)?;
        kept.extend(k);
        near.extend(l);
    }
    near.canonicalize();
    Ok(DedupOutcome { kept: by_id(kept), exact, near })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text, SourceKind::Web, "en")
    }

    fn set(hashes: impl IntoIterator<Item = u64>) -> ShingleSet {
        ShingleSet { doc_id: "s".into(), hashes: hashes.into_iter().collect(), n: 1, mode: ShingleMode::Word }
    }

    fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| format!("w{}", rng.random_range(0..50_000u32))).collect()
    }

    #[test]
    fn word_windows() {
        let s = shingle("a", "a b c d", 2, ShingleMode::Word);
        assert_eq!(s.len(), 3);
        let expect: BTreeSet<u64> = [["a", "b"], ["b", "c"], ["c", "d"]].iter().map(|w| fingerprint(w)).collect();
        assert_eq!(s.hashes, expect);
    }

    #[test]
    fn short_and_empty_texts() {
        assert_eq!(shingle("a", "abc", 10, ShingleMode::Codepoint).len(), 1);
        assert!(shingle("a", "", 10, ShingleMode::Codepoint).is_empty());
        assert!(shingle("a", "   ", 3, ShingleMode::Word).is_empty());
        assert_eq!(shingle("a", "中文文本", 2, ShingleMode::Codepoint).len(), 3);
    }

    #[test]
    fn mode_follows_language() {
        assert_eq!(ShingleMode::for_document(&doc("a", "hello")), ShingleMode::Word);
        assert_eq!(ShingleMode::for_document(&Document::new("a", "x", SourceKind::Web, "zh")), ShingleMode::Codepoint);
        assert_eq!(ShingleMode::for_document(&doc("a", "这是一段中文")), ShingleMode::Codepoint);
    }

    #[test]
    fn empty_set_cannot_be_signed() {
        assert_eq!(minhash(&set([]), 128, 1).unwrap_err(), DedupError::EmptyShingleSet("s".into()));
    }

    #[test]
    fn identical_sets_agree_everywhere() {
        let a = minhash(&set(1..500), 128, 7).unwrap();
        let b = minhash(&set(1..500), 128, 7).unwrap();
        assert_eq!(a.similarity(&b).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_sets_estimate_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<u64> = (0..1000).map(|_| rng.random()).collect();
        let b: Vec<u64> = (0..1000).map(|_| rng.random()).collect();
        let (sa, sb) = (set(a), set(b));
        assert_eq!(sa.jaccard(&sb), 0.0);
        let est = minhash(&sa, 128, 1).unwrap().similarity(&minhash(&sb, 128, 1).unwrap()).unwrap();
        assert!(est <= 0.05, "{est}");
    }

    #[test]
    fn half_overlap_estimate() {
        // 400 shared + 200 + 200 private: J = 400 / 800
        let mut total = 0.0;
        for trial in 0..100u64 {
            let base = trial * 10_000;
            let a = set((base..base + 600).collect::<Vec<_>>());
            let b = set((base + 200..base + 800).collect::<Vec<_>>());
            assert_eq!(a.jaccard(&b), 0.5);
            let est = minhash(&a, 128, trial).unwrap().similarity(&minhash(&b, 128, trial).unwrap()).unwrap();
            assert!((est - 0.5).abs() <= 0.15, "trial {trial}: {est}");
            total += est;
        }
        assert!((total / 100.0 - 0.5).abs() <= 0.05);
    }

    #[test]
    fn signature_length_mismatch() {
        let a = minhash(&set(1..10), 128, 1).unwrap();
        let b = minhash(&set(1..10), 64, 1).unwrap();
        assert!(matches!(a.similarity(&b), Err(DedupError::SignatureLengthMismatch { .. })));
        let mut idx = LshIndex::new(16, 8);
        assert_eq!(idx.insert(b).unwrap_err(), DedupError::SignatureLengthMismatch { expected: 128, got: 64 });
    }

    #[test]
    fn self_collision() {
        let mut idx = LshIndex::new(16, 8);
        let s = minhash(&set(1..50), 128, 1).unwrap();
        idx.insert(s.clone()).unwrap();
        assert_eq!(idx.candidates(&s).unwrap().len(), 1);
    }

    #[test]
    fn band_curve() {
        assert!(collision_probability(0.9, 16, 8) > 0.99);
        assert!(collision_probability(0.3, 16, 8) < 0.01);
    }

    #[test]
    fn exact_examples() {
        let (kept, ledger) = exact_dedup_slice(vec![doc("B", "x"), doc("A", "x"), doc("C", "y")]);
        assert_eq!(kept.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["A", "C"]);
        assert_eq!(ledger.clusters(), BTreeMap::from([("A".to_string(), vec!["B".to_string()])]));
        let (kept, ledger) = exact_dedup_slice(vec![doc("a", "1"), doc("b", "2")]);
        assert_eq!(kept.len(), 2);
        assert!(ledger.is_empty());
    }

    #[test]
    fn one_word_edit_is_a_near_duplicate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = words(&mut rng, 200);
        let mut v = w.clone();
        v[100] = "changed".into();
        let (a, b) = (w.join(" "), v.join(" "));
        let j = shingle("a", &a, 10, ShingleMode::Word).jaccard(&shingle("b", &b, 10, ShingleMode::Word));
        assert!(j >= 0.9, "{j}");
        let (kept, ledger) = lsh_dedup(vec![doc("b", &b), doc("a", &a)], &DedupConfig::default(), 1).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "a");
        assert_eq!(ledger.entries[0].removed_id, "b");
    }

    #[test]
    fn unrelated_texts_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = words(&mut rng, 300).join(" ");
        let b = words(&mut rng, 300).join(" ");
        let (kept, ledger) = lsh_dedup(vec![doc("a", &a), doc("b", &b)], &DedupConfig::default(), 1).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(ledger.is_empty());
        let (kept, _) = lsh_dedup(vec![doc("only", &a)], &DedupConfig::default(), 1).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn languages_are_grouped() {
        let text = "the same words in the same order repeated for a long enough stretch of text here";
        let docs = vec![doc("a", text), Document::new("b", text, SourceKind::Web, "fr")];
        let cfg = DedupConfig { slice_size: 1, ..DedupConfig::default() };
        assert_eq!(dedup(docs.clone(), &cfg, 1).unwrap().kept.len(), 2);
        let cfg = DedupConfig { cross_language: true, ..cfg };
        assert_eq!(dedup(docs, &cfg, 1).unwrap().kept.len(), 1);
    }

    #[test]
    fn config_shape_is_checked() {
        let cfg = DedupConfig { bands: 10, ..DedupConfig::default() };
        assert!(matches!(cfg.validate(), Err(DedupError::BandShape { .. })));
    }

    fn corpus() -> impl Strategy<Value = Vec<Document>> {
        let base = proptest::collection::vec("[a-d]{1,3}", 12..30);
        proptest::collection::vec((base, 0..4usize, any::<bool>()), 1..12).prop_map(|items| {
            let mut out: Vec<Document> = Vec::new();
            for (i, (w, edit, copy)) in items.into_iter().enumerate() {
                let text = if copy && !out.is_empty() {
                    let mut t: Vec<&str> = out[i % out.len()].text.split(' ').collect();
                    let k = edit % t.len();
                    t[k] = "zz";
                    t.join(" ")
                } else {
                    w.join(" ")
                };
                out.push(doc(&format!("d{i:02}"), &text));
            }
            out
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn conservation_idempotence_order(docs in corpus(), seed in any::<u64>()) {
            let cfg = DedupConfig { shingle_n: 3, seed, ..DedupConfig::default() };
            let n = docs.len();
            let out = dedup(docs.clone(), &cfg, 1).unwrap();
            prop_assert_eq!(out.kept.len() + out.removed(), n);

            let again = dedup(out.kept.clone(), &cfg, 1).unwrap();
            prop_assert_eq!(&again.kept, &out.kept);
            prop_assert_eq!(again.removed(), 0);

            let mut rev = docs;
            rev.reverse();
            let shuffled = dedup(rev, &cfg, 3).unwrap();
            prop_assert_eq!(&shuffled.kept, &out.kept);
            prop_assert_eq!(&shuffled.near, &out.near);
            for e in out.near.entries.iter().chain(&out.exact.entries) {
                prop_assert!(e.kept_id < e.removed_id);
            }
        }
    }
}
