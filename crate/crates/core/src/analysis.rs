//! TF-IDF nearest-neighbour retrieval over unigrams and bigrams.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::text::{is_word_token, tokenize};

#[derive(Debug, PartialEq, Eq)]
pub struct EmptyCorpus;

impl fmt::Display for EmptyCorpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("cannot index an empty corpus")
    }
}

impl std::error::Error for EmptyCorpus {}

/// Lowercased word unigrams followed by bigrams of adjacent words.
/// Punctuation tokens are dropped before bigrams are formed.
pub fn ngrams(text: &str) -> Vec<String> {
    let words: Vec<String> = tokenize(text)
        .into_iter()
        .filter(|t| is_word_token(t))
        .map(|t| t.to_lowercase())
        .collect();
    let bigrams: Vec<String> = words.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect();
    words.into_iter().chain(bigrams).collect()
}

/// Sparse L2-normalised TF-IDF vectors; `tf` is the raw count and
/// `idf = ln((1 + N)/(1 + df)) + 1`.
#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    features: Vec<String>,
    lookup: HashMap<String, usize>,
    idf: Vec<f64>,
    docs: Vec<Vec<(usize, f64)>>,
    /// `feature → [(doc, weight)]`
    postings: Vec<Vec<(usize, f64)>>,
    texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub doc: usize,
    pub score: f64,
    pub text: String,
}

fn normalize(v: &mut [(usize, f64)]) {
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|(_, w)| *w /= norm);
    }
}

impl TfIdfIndex {
    /// Indexes `docs`, keeping n-grams that occur in at least `min_df` documents.
    pub fn build<S: AsRef<str>>(docs: &[S], min_df: usize) -> Result<Self, EmptyCorpus> {
        if docs.is_empty() {
            return Err(EmptyCorpus);
        }
        let counts: Vec<BTreeMap<String, usize>> = docs
            .iter()
            .map(|d| {
                let mut c = BTreeMap::new();
                for g in ngrams(d.as_ref()) {
                    *c.entry(g).or_insert(0) += 1;
                }
                c
            })
            .collect();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &counts {
            for g in c.keys() {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let n = docs.len() as f64;
        let kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, d)| d >= min_df.max(1)).collect();
        let features: Vec<String> = kept.iter().map(|(g, _)| g.to_string()).collect();
        let idf: Vec<f64> = kept.iter().map(|&(_, d)| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let lookup: HashMap<String, usize> = features.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();

        let mut postings = vec![Vec::new(); features.len()];
        let mut vectors = Vec::with_capacity(docs.len());
        for (doc, c) in counts.iter().enumerate() {
            let mut v: Vec<(usize, f64)> = c
                .iter()
                .filter_map(|(g, &tf)| lookup.get(g).map(|&f| (f, tf as f64 * idf[f])))
                .collect();
            v.sort_unstable_by_key(|&(f, _)| f);
            normalize(&mut v);
            for &(f, w) in &v {
                postings[f].push((doc, w));
            }
            vectors.push(v);
        }
        Ok(Self {
            features,
            lookup,
            idf,
            docs: vectors,
            postings,
            texts: docs.iter().map(|d| d.as_ref().to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Sorted feature vocabulary.
    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn idf(&self, feature: &str) -> Option<f64> {
        self.lookup.get(feature).map(|&f| self.idf[f])
    }

    /// `(feature id, weight)` pairs of a stored document, ascending by id.
    pub fn doc_vector(&self, doc: usize) -> &[(usize, f64)] {
        &self.docs[doc]
    }

    pub fn text(&self, doc: usize) -> &str {
        &self.texts[doc]
    }

    /// Vector of arbitrary text in this index's feature space.
    pub fn vectorize(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for g in ngrams(text) {
            if let Some(&f) = self.lookup.get(&g) {
                *counts.entry(f).or_insert(0) += 1;
            }
        }
        let mut v: Vec<(usize, f64)> = counts.into_iter().map(|(f, tf)| (f, tf as f64 * self.idf[f])).collect();
        normalize(&mut v);
        v
    }

    /// Up to `k` documents with positive cosine similarity to `query`,
    /// best first; equal scores are ordered by document id.
    pub fn nearest_neighbors(&self, query: &str, k: usize) -> Vec<Neighbor> {
        let q = self.vectorize(query);
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for &(f, qw) in &q {
            for &(doc, w) in &self.postings[f] {
                *scores.entry(doc).or_insert(0.0) += qw * w;
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(k)
            .map(|(doc, score)| Neighbor {
                doc,
                score: score.min(1.0),
                text: self.texts[doc].clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unigrams_and_bigrams() {
        assert_eq!(ngrams("Should be, banned!"), ["should", "be", "banned", "should be", "be banned"]);
        assert!(ngrams("?!").is_empty());
    }

    #[test]
    fn single_document_norm() {
        let idx = TfIdfIndex::build(&["the cat sat on the mat"], 1).unwrap();
        let norm: f64 = idx.doc_vector(0).iter().map(|(_, w)| w * w).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(idx.idf("the"), Some(1.0));
    }

    #[test]
    fn three_document_oracle() {
        let docs = ["a b a", "b c", "c d a"];
        let idx = TfIdfIndex::build(&docs, 1).unwrap();
        // dense reference, features sorted: a, a b, b, b a, b c, c, c d, d, d a
        let n = 3.0f64;
        let idf = |df: f64| ((1.0 + n) / (1.0 + df)).ln() + 1.0;
        let feats = ["a", "a b", "b", "b a", "b c", "c", "c d", "d", "d a"];
        assert_eq!(idx.features(), feats);
        let dfs = [2.0, 1.0, 2.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0];
        let tf = [
            [2.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        ];
        for (d, row) in tf.iter().enumerate() {
            let raw: Vec<f64> = row.iter().zip(dfs).map(|(t, df)| t * idf(df)).collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut dense = [0.0; 9];
            for &(f, w) in idx.doc_vector(d) {
                dense[f] = w;
            }
            for (a, b) in dense.iter().zip(&raw) {
                assert!((a - b / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_query_and_no_overlap() {
        let docs = ["public schools are underfunded", "licence fees should go", "the market is open"];
        let idx = TfIdfIndex::build(&docs, 1).unwrap();
        let hits = idx.nearest_neighbors("licence fees should go", 3);
        assert_eq!(hits[0].doc, 1);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert!(idx.nearest_neighbors("zebra xylophone", 5).is_empty());
        assert!(TfIdfIndex::build::<&str>(&[], 1).is_err());
    }

    #[test]
    fn ties_by_document_id() {
        let docs = ["x y", "q r", "x y", "x y"];
        let idx = TfIdfIndex::build(&docs, 1).unwrap();
        let hits: Vec<usize> = idx.nearest_neighbors("x y", 10).iter().map(|h| h.doc).collect();
        assert_eq!(hits, [0, 2, 3]);
    }

    #[test]
    fn min_df_filters_features() {
        let idx = TfIdfIndex::build(&["a b", "a c", "a d"], 2).unwrap();
        assert_eq!(idx.features(), ["a"]);
    }
}
