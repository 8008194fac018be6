//! Cross-genre query/candidate splits.
//!
//! For each seed a fraction of the foreground authors is sampled; each
//! sampled author contributes its documents in one randomly chosen genre as
//! queries and its documents in every other genre as candidates (the
//! needles). All background documents join the candidate pool.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

pub const DEFAULT_SPLIT_SEEDS: [u64; 4] = [0, 1001, 2001, 3001];
pub const DEFAULT_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySplit {
    pub seed: u64,
    pub queries: Vec<String>,
    pub candidates: Vec<String>,
    /// Query id to the same-author candidate ids.
    pub needles: BTreeMap<String, BTreeSet<String>>,
}

fn pick<'a>(fg: &'a Corpus, bg: &'a Corpus, id: &str) -> Result<&'a Document> {
    fg.get(id)
        .or_else(|| bg.get(id))
        .ok_or_else(|| Error::UnknownDocument(id.to_string()))
}

impl QuerySplit {
    pub fn query_corpus(&self, fg: &Corpus) -> Result<Corpus> {
        let docs = self
            .queries
            .iter()
            .map(|id| fg.get(id).cloned().ok_or_else(|| Error::UnknownDocument(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(docs)
    }

    pub fn candidate_corpus(&self, fg: &Corpus, bg: &Corpus) -> Result<Corpus> {
        let docs = self
            .candidates
            .iter()
            .map(|id| pick(fg, bg, id).cloned())
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(docs)
    }

    /// Check the split invariants against the corpora it was drawn from.
    pub fn validate(&self, fg: &Corpus, bg: &Corpus) -> Result<()> {
        let cands: BTreeSet<&str> = self.candidates.iter().map(String::as_str).collect();
        for q in &self.queries {
            let qd = pick(fg, bg, q)?;
            if cands.contains(q.as_str()) {
                return Err(Error::InvalidData(format!("query {q} is also a candidate")));
            }
            let needles = self
                .needles
                .get(q)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| Error::InvalidData(format!("query {q} has no needle")))?;
            for n in needles {
                let nd = pick(fg, bg, n)?;
                if !cands.contains(n.as_str()) || nd.author_id != qd.author_id || nd.genre == qd.genre {
                    return Err(Error::InvalidData(format!("bad needle {n} for query {q}")));
                }
            }
        }
        Ok(())
    }
}

/// Build one split per seed.
pub fn build_splits(fg: &Corpus, bg: &Corpus, fraction: f64, seeds: &[u64]) -> Result<Vec<QuerySplit>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if let Some(d) = bg.documents().iter().find(|d| fg.get(&d.doc_id).is_some()) {
        return Err(Error::InvalidData(format!(
            "doc_id {} appears in both foreground and background",
            d.doc_id
        )));
    }
    seeds.iter().map(|&seed| build_split(fg, bg, fraction, seed)).collect()
}

fn build_split(fg: &Corpus, bg: &Corpus, fraction: f64, seed: u64) -> Result<QuerySplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let authors: Vec<&String> = fg.author_index().keys().collect();
    let n = ((fraction * authors.len() as f64).round() as usize).clamp(1, authors.len().max(1));
    let mut order: Vec<usize> = (0..authors.len()).collect();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order.into_iter().take(n).collect();
    chosen.sort_unstable();

    let mut queries = Vec::new();
    let mut candidates = Vec::new();
    let mut needles = BTreeMap::new();
    for ai in chosen {
        let docs: Vec<&Document> = fg.docs_by(authors[ai]).collect();
        let genres: Vec<&str> = docs
            .iter()
            .map(|d| d.genre.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        // draw even when skipping so one author's genres don't shift the rest
        let g = genres[rng.gen_range(0..genres.len())];
        if genres.len() < 2 {
            continue;
        }
        let hay: BTreeSet<String> = docs.iter().filter(|d| d.genre != g).map(|d| d.doc_id.clone()).collect();
        for d in docs.iter().filter(|d| d.genre == g) {
            queries.push(d.doc_id.clone());
            needles.insert(d.doc_id.clone(), hay.clone());
        }
        candidates.extend(docs.iter().filter(|d| d.genre != g).map(|d| d.doc_id.clone()));
    }
    if queries.is_empty() {
        return Err(Error::InvalidData(format!("split with seed {seed} has no queries")));
    }
    candidates.extend(bg.documents().iter().map(|d| d.doc_id.clone()));
    Ok(QuerySplit {
        seed,
        queries,
        candidates,
        needles,
    })
}

pub fn write_splits(path: impl AsRef<Path>, splits: &[QuerySplit]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(splits).expect("splits serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_splits(path: impl AsRef<Path>) -> Result<Vec<QuerySplit>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}
