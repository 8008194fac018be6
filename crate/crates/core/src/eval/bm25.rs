//! Okapi BM25 over lowercased alphanumeric terms.
//!
//! `idf(t) = ln((N − n_t + 0.5) / (n_t + 0.5) + 1)`, which stays positive
//! for terms present in most of the pool. Each distinct query term counts
//! once.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::{RankedEntry, RankedList, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.25, b: 0.75 }
    }
}

pub fn bm25_terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Document frequencies and average length over a candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub num_docs: usize,
    pub avg_len: f64,
    pub doc_freq: HashMap<String, usize>,
}

impl CorpusStats {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let terms: Vec<Vec<String>> = par::map(corpus.documents(), |d| bm25_terms(&d.text));
        Self::from_terms(&terms)
    }

    fn from_terms(docs: &[Vec<String>]) -> Self {
        let mut doc_freq = HashMap::new();
        let mut total = 0usize;
        for terms in docs {
            total += terms.len();
            for t in terms.iter().collect::<BTreeSet<_>>() {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let num_docs = docs.len();
        CorpusStats {
            num_docs,
            avg_len: if num_docs == 0 { 0.0 } else { total as f64 / num_docs as f64 },
            doc_freq,
        }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = *self.doc_freq.get(term).unwrap_or(&0) as f64;
        let big_n = self.num_docs as f64;
        ((big_n - n + 0.5) / (n + 0.5) + 1.0).ln()
    }
}

fn score_terms(
    query_terms: &BTreeSet<String>,
    tf: &HashMap<String, usize>,
    len: usize,
    stats: &CorpusStats,
    p: Bm25Params,
) -> f64 {
    if stats.avg_len == 0.0 {
        return 0.0;
    }
    let norm = p.k1 * (1.0 - p.b + p.b * len as f64 / stats.avg_len);
    query_terms
        .iter()
        .filter_map(|t| tf.get(t).map(|&f| (t, f as f64)))
        .map(|(t, f)| stats.idf(t) * f * (p.k1 + 1.0) / (f + norm))
        .sum()
}

fn term_freqs(terms: &[String]) -> HashMap<String, usize> {
    let mut tf = HashMap::new();
    for t in terms {
        *tf.entry(t.clone()).or_insert(0) += 1;
    }
    tf
}

/// BM25 of `query` against one `candidate`, with pool statistics `stats`.
pub fn bm25_score(query: &Document, candidate: &Document, stats: &CorpusStats, k1: f64, b: f64) -> f64 {
    let q: BTreeSet<String> = bm25_terms(&query.text).into_iter().collect();
    let terms = bm25_terms(&candidate.text);
    score_terms(&q, &term_freqs(&terms), terms.len(), stats, Bm25Params { k1, b })
}

/// Pre-tokenized candidate pool.
pub struct Bm25Index {
    params: Bm25Params,
    stats: CorpusStats,
    ids: Vec<String>,
    docs: Vec<(HashMap<String, usize>, usize)>,
}

impl Bm25Index {
    pub fn new(candidates: &Corpus, params: Bm25Params) -> Result<Self> {
        if !(params.k1 >= 0.0) || !(0.0..=1.0).contains(&params.b) {
            return Err(Error::Config(format!("invalid BM25 parameters {params:?}")));
        }
        let terms: Vec<Vec<String>> = par::map(candidates.documents(), |d| bm25_terms(&d.text));
        let stats = CorpusStats::from_terms(&terms);
        let docs = par::map(&terms, |t| (term_freqs(t), t.len()));
        Ok(Bm25Index {
            params,
            stats,
            ids: candidates.documents().iter().map(|d| d.doc_id.clone()).collect(),
            docs,
        })
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    /// Rank the whole pool; ties by ascending `doc_id`.
    pub fn rank(&self, query: &Document) -> RankedList {
        let q: BTreeSet<String> = bm25_terms(&query.text).into_iter().collect();
        let mut ranking: Vec<RankedEntry> = self
            .ids
            .iter()
            .zip(&self.docs)
            .map(|(id, (tf, len))| RankedEntry {
                doc_id: id.clone(),
                score: score_terms(&q, tf, *len, &self.stats, self.params),
                stage: Stage::Retrieved,
            })
            .collect();
        ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        RankedList {
            query_id: query.doc_id.clone(),
            ranking,
        }
    }

    pub fn rank_all(&self, queries: &Corpus) -> Vec<RankedList> {
        par::map(queries.documents(), |q| self.rank(q))
    }
}
