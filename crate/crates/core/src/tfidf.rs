//! TF-IDF vectors with an inverted index for cosine top-k retrieval.
//!
//! `tf = count / document length`, `idf = ln(N / (1 + df)) + 1`. Dot products are
//! accumulated in sorted term order, so the inverted-index scores equal a direct
//! pairwise computation bit for bit.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::text::terms;
use crate::Real;

#[derive(Debug, Error, PartialEq)]
pub enum TfidfError {
    #[error("the index holds no documents")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
}

/// Sparse vector as (term id, weight), sorted by term id.
pub type SparseVec<F> = Vec<(usize, F)>;

#[derive(Debug, Clone)]
pub struct TfidfIndex<F> {
    doc_ids: Vec<String>,
    terms: BTreeMap<String, usize>,
    df: Vec<usize>,
    vectors: Vec<SparseVec<F>>,
    norms: Vec<F>,
    postings: Vec<Vec<(usize, F)>>,
}

fn term_counts(text: &str) -> (BTreeMap<String, usize>, usize) {
    let ts = terms(text);
    let n = ts.len();
    let mut m = BTreeMap::new();
    for t in ts {
        *m.entry(t).or_default() += 1;
    }
    (m, n)
}

pub fn norm<F: Real>(v: &[(usize, F)]) -> F {
    v.iter().map(|&(_, w)| w * w).sum::<F>().sqrt()
}

/// Dot product of two sorted sparse vectors, summed in term order.
pub fn dot<F: Real>(a: &[(usize, F)], b: &[(usize, F)]) -> F {
    let (mut i, mut j, mut s) = (0, 0, F::zero());
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s = s + a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

impl<F: Real> TfidfIndex<F> {
    pub fn build<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut doc_ids = Vec::new();
        let mut counted = Vec::new();
        let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
        for (id, text) in docs {
            doc_ids.push(id.to_string());
            let c = term_counts(text);
            for t in c.0.keys() {
                *vocab.entry(t.clone()).or_default() += 1;
            }
            counted.push(c);
        }
        let mut terms = BTreeMap::new();
        let mut df = Vec::with_capacity(vocab.len());
        for (i, (t, d)) in vocab.into_iter().enumerate() {
            terms.insert(t, i);
            df.push(d);
        }
        let mut index = TfidfIndex { doc_ids, terms, df, vectors: Vec::new(), norms: Vec::new(), postings: Vec::new() };
        index.postings = vec![Vec::new(); index.df.len()];
        for (d, (counts, len)) in counted.iter().enumerate() {
            let v = index.weigh(counts, *len);
            for &(t, w) in &v {
                index.postings[t].push((d, w));
            }
            index.norms.push(norm(&v));
            index.vectors.push(v);
        }
        index
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_id(&self, i: usize) -> &str {
        &self.doc_ids[i]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn df(&self, term: &str) -> usize {
        self.terms.get(term).map_or(0, |&i| self.df[i])
    }

    fn idf_of(&self, df: usize) -> F {
        (F::of_usize(self.num_docs()) / F::of_usize(1 + df)).ln() + F::one()
    }

    pub fn idf(&self, term: &str) -> F {
        self.idf_of(self.df(term))
    }

    fn weigh(&self, counts: &BTreeMap<String, usize>, len: usize) -> SparseVec<F> {
        let mut v: SparseVec<F> = counts
            .iter()
            .filter_map(|(t, &c)| {
                self.terms.get(t).map(|&i| (i, F::of_usize(c) / F::of_usize(len) * self.idf_of(self.df[i])))
            })
            .collect();
        v.sort_by_key(|&(i, _)| i);
        v
    }

    pub fn doc_vector(&self, i: usize) -> &SparseVec<F> {
        &self.vectors[i]
    }

    pub fn doc_norm(&self, i: usize) -> F {
        self.norms[i]
    }

    /// Query weights over indexed terms, and the query norm over all of its terms
    /// (terms absent from the index count with `df = 0`).
    pub fn query_vector(&self, text: &str) -> (SparseVec<F>, F) {
        let (counts, len) = term_counts(text);
        let v = self.weigh(&counts, len);
        let unseen: F = counts
            .iter()
            .filter(|(t, _)| !self.terms.contains_key(*t))
            .map(|(_, &c)| {
                let w = F::of_usize(c) / F::of_usize(len) * self.idf_of(0);
                w * w
            })
            .sum();
        let n = (v.iter().map(|&(_, w)| w * w).sum::<F>() + unseen).sqrt();
        (v, n)
    }

    pub fn cosine(&self, a: &[(usize, F)], a_norm: F, doc: usize) -> F {
        if a_norm == F::zero() || self.norms[doc] == F::zero() {
            return F::zero();
        }
        dot(a, &self.vectors[doc]) / (a_norm * self.norms[doc])
    }

    /// Indexed documents after `i` sharing a term with it, with their cosine to it,
    /// in document order.
    pub fn later_neighbors(&self, i: usize) -> Vec<(usize, F)> {
        let mut acc: BTreeMap<usize, F> = BTreeMap::new();
        for &(t, w) in &self.vectors[i] {
            for &(d, dw) in &self.postings[t] {
                if d > i {
                    let e = acc.entry(d).or_insert_with(F::zero);
                    *e = *e + w * dw;
                }
            }
        }
        acc.into_iter()
            .filter(|&(d, s)| s > F::zero() && self.norms[i] > F::zero() && self.norms[d] > F::zero())
            .map(|(d, s)| (d, s / (self.norms[i] * self.norms[d])))
            .collect()
    }

    /// The `k` documents most similar to `query` with positive cosine, best first,
    /// ties by document id.
    pub fn top_k(&self, query: &str, k: usize) -> Result<Vec<(String, F)>, TfidfError> {
        if self.is_empty() {
            return Err(TfidfError::EmptyIndex);
        }
        if k == 0 {
            return Err(TfidfError::ZeroK);
        }
        let (q, qn) = self.query_vector(query);
        if qn == F::zero() {
            return Ok(Vec::new());
        }
        let mut acc: HashMap<usize, F> = HashMap::new();
        for &(t, w) in &q {
            for &(d, dw) in &self.postings[t] {
                let e = acc.entry(d).or_insert_with(F::zero);
                *e = *e + w * dw;
            }
        }
        let mut scored: Vec<(usize, F)> = acc
            .into_iter()
            .filter(|&(d, s)| s > F::zero() && self.norms[d] > F::zero())
            .map(|(d, s)| (d, s / (qn * self.norms[d])))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(d, s)| (self.doc_ids[d].clone(), s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_weights() {
        let docs = [("a", "apple banana"), ("b", "apple cherry cherry"), ("c", "durian")];
        let idx: TfidfIndex<f64> = TfidfIndex::build(docs);
        // df(apple) = 2 of 3 docs
        assert!((idx.idf("apple") - ((3.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
        assert!((idx.idf("cherry") - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
        let top = idx.top_k("cherry", 3).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, "b");
        assert!(idx.top_k("zzz", 2).unwrap().is_empty());
    }

    #[test]
    fn self_similarity_is_one() {
        let docs = [("x", "the quick brown fox"), ("y", "a lazy dog sleeps"), ("z", "fox and dog")];
        let idx: TfidfIndex<f64> = TfidfIndex::build(docs);
        for (id, text) in docs {
            let top = idx.top_k(text, 1).unwrap();
            assert_eq!(top[0].0, id);
            assert!((top[0].1 - 1.0).abs() < 1e-9);
        }
        let idx32: TfidfIndex<f32> = TfidfIndex::build(docs);
        assert!((idx32.top_k("lazy dog sleeps a", 1).unwrap()[0].1 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn errors() {
        let empty: TfidfIndex<f64> = TfidfIndex::build(std::iter::empty());
        assert_eq!(empty.top_k("q", 1).unwrap_err(), TfidfError::EmptyIndex);
        let idx: TfidfIndex<f64> = TfidfIndex::build([("a", "b")]);
        assert_eq!(idx.top_k("q", 0).unwrap_err(), TfidfError::ZeroK);
    }

    proptest! {
        #[test]
        fn idf_non_negative(docs in proptest::collection::vec("[a-e ]{0,20}", 1..20)) {
            let ids: Vec<String> = (0..docs.len()).map(|i| i.to_string()).collect();
            let idx: TfidfIndex<f64> = TfidfIndex::build(ids.iter().map(String::as_str).zip(docs.iter().map(String::as_str)));
            for t in ["a", "b", "c", "d", "e", "zz"] {
                prop_assert!(idx.idf(t) >= 0.0);
            }
        }
    }
}
