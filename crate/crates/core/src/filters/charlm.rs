//! Add-k smoothed character n-gram model used for perplexity scoring.

use std::collections::{BTreeSet, HashMap};

use super::FilterError;

/// Padding symbol placed before the first character of every text.
const BOS: char = '\u{2}';

#[derive(Debug, Clone)]
pub struct CharNGramModel {
    order: usize,
    k: f64,
    vocab: BTreeSet<char>,
    /// Reserve one extra slot for characters never seen in training.
    open_vocabulary: bool,
    counts: HashMap<String, HashMap<char, u64>>,
    totals: HashMap<String, u64>,
}

impl CharNGramModel {
    /// Counts n-grams over a reference corpus. Counts are order-independent.
    pub fn fit<'a, I>(corpus: I, order: usize, k: f64) -> Result<Self, FilterError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if order < 2 {
            return Err(FilterError::BadOrder(order));
        }
        let mut model = CharNGramModel {
            order,
            k,
            vocab: BTreeSet::new(),
            open_vocabulary: true,
            counts: HashMap::new(),
            totals: HashMap::new(),
        };
        let mut any = false;
        for text in corpus {
            any = true;
            let mut ctx: Vec<char> = vec![BOS; order - 1];
            for c in text.chars() {
                model.vocab.insert(c);
                let key: String = ctx.iter().collect();
                *model.counts.entry(key.clone()).or_default().entry(c).or_default() += 1;
                *model.totals.entry(key).or_default() += 1;
                ctx.remove(0);
                ctx.push(c);
            }
        }
        if !any || model.vocab.is_empty() {
            return Err(FilterError::EmptyCorpus);
        }
        Ok(model)
    }

    /// A model with no counts over a closed alphabet: every symbol has
    /// probability `1 / |alphabet|`.
    pub fn uniform(order: usize, alphabet: impl IntoIterator<Item = char>) -> Self {
        CharNGramModel {
            order: order.max(2),
            k: 1.0,
            vocab: alphabet.into_iter().collect(),
            open_vocabulary: false,
            counts: HashMap::new(),
            totals: HashMap::new(),
        }
    }

    /// Adds symbols to the vocabulary without counts, so several models can share
    /// one support and compare likelihoods on equal terms.
    pub fn extend_vocabulary(&mut self, symbols: impl IntoIterator<Item = char>) {
        self.vocab.extend(symbols);
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Returns a copy with a different smoothing constant.
    pub fn with_smoothing(&self, k: f64) -> Self {
        CharNGramModel { k, ..self.clone() }
    }

    /// Number of outcomes the conditional distributions range over.
    pub fn support_size(&self) -> usize {
        self.vocab.len() + usize::from(self.open_vocabulary)
    }

    pub fn vocabulary(&self) -> &BTreeSet<char> {
        &self.vocab
    }

    pub fn contexts(&self) -> impl Iterator<Item = &str> {
        self.totals.keys().map(String::as_str)
    }

    /// `P(c | context)`; `context` holds the previous `order - 1` characters.
    pub fn prob(&self, context: &str, c: char) -> Result<f64, FilterError> {
        if !self.open_vocabulary && !self.vocab.contains(&c) {
            return Err(FilterError::OutOfVocabulary(c));
        }
        let v = self.support_size() as f64;
        let total = self.totals.get(context).copied().unwrap_or(0) as f64;
        let count = self.counts.get(context).and_then(|m| m.get(&c)).copied().unwrap_or(0) as f64;
        Ok((count + self.k) / (total + self.k * v))
    }

    /// Probability mass reserved for unseen characters under `context`.
    pub fn unknown_prob(&self, context: &str) -> f64 {
        if !self.open_vocabulary {
            return 0.0;
        }
        let v = self.support_size() as f64;
        let total = self.totals.get(context).copied().unwrap_or(0) as f64;
        self.k / (total + self.k * v)
    }

    /// Sum of natural-log probabilities of every character of `text`.
    pub fn log_likelihood(&self, text: &str) -> Result<f64, FilterError> {
        let mut ctx: Vec<char> = vec![BOS; self.order - 1];
        let mut total = 0.0;
        let mut key = String::new();
        for c in text.chars() {
            key.clear();
            key.extend(ctx.iter());
            total += self.prob(&key, c)?.ln();
            ctx.remove(0);
            ctx.push(c);
        }
        Ok(total)
    }

    /// `exp(-(1/T) Σ ln P(c_t | previous n-1 chars))` over the T code points of `text`.
    pub fn perplexity(&self, text: &str) -> Result<f64, FilterError> {
        let t = text.chars().count();
        if t == 0 {
            return Err(FilterError::EmptyText);
        }
        Ok((-self.log_likelihood(text)? / t as f64).exp())
    }
}
