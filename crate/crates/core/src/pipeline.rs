//! Exhaustive bi-encoder retrieval followed by reranking of the top `k`.

use std::collections::HashMap;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, Corpus, Document};
use crate::error::{Error, Result};
use crate::featurizer::style_aggregate;
use crate::reranker::{rerank_aggregates, RerankerModel};
use crate::retriever::RetrieverModel;
use crate::{dot, par};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Retrieved,
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
    pub stage: Stage,
}

/// One query's ranking, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedList {
    pub query_id: String,
    pub ranking: Vec<RankedEntry>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ranking.iter().map(|e| e.doc_id.as_str())
    }

    pub fn truncated(mut self, depth: usize) -> Self {
        self.ranking.truncate(depth);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub rerank_depth: usize,
    /// Entries kept per query in run files.
    pub output_depth: usize,
    pub retriever_path: Option<PathBuf>,
    pub reranker_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rerank_depth: 100,
            output_depth: 1000,
            retriever_path: None,
            reranker_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rerank_depth == 0 {
            return Err(Error::Config("rerank_depth must be at least 1".into()));
        }
        if self.output_depth == 0 {
            return Err(Error::Config("output_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Cached {
    aggregate: Vec<f64>,
    embedding: Vec<f64>,
}

/// Work counters, for checking the linear retrieval cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PipelineStats {
    pub embeddings: usize,
    pub dot_products: usize,
    pub rerank_scores: usize,
}

/// A loaded retriever with an optional reranker and a shared per-document
/// cache of style aggregates and embeddings keyed by `doc_id`.
pub struct Pipeline {
    retriever: RetrieverModel,
    reranker: Option<RerankerModel>,
    rerank_depth: usize,
    cache: RwLock<HashMap<String, Arc<Cached>>>,
    embeddings: AtomicUsize,
    dot_products: AtomicUsize,
    rerank_scores: AtomicUsize,
}

impl Pipeline {
    pub fn new(retriever: RetrieverModel, reranker: Option<RerankerModel>, rerank_depth: usize) -> Result<Self> {
        if rerank_depth == 0 {
            return Err(Error::Config("rerank_depth must be at least 1".into()));
        }
        if let Some(r) = &reranker {
            if r.feature_config() != retriever.feature_config() {
                return Err(Error::Config(
                    "retriever and reranker were built with different feature configs".into(),
                ));
            }
        }
        Ok(Pipeline {
            retriever,
            reranker,
            rerank_depth,
            cache: RwLock::new(HashMap::new()),
            embeddings: AtomicUsize::new(0),
            dot_products: AtomicUsize::new(0),
            rerank_scores: AtomicUsize::new(0),
        })
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let path = cfg
            .retriever_path
            .as_ref()
            .ok_or_else(|| Error::Config("retriever_path is required".into()))?;
        let retriever = RetrieverModel::load(path)?;
        let reranker = cfg.reranker_path.as_ref().map(RerankerModel::load).transpose()?;
        Pipeline::new(retriever, reranker, cfg.rerank_depth)
    }

    pub fn has_reranker(&self) -> bool {
        self.reranker.is_some()
    }

    pub fn rerank_depth(&self) -> usize {
        self.rerank_depth
    }

    pub fn stats(&self) -> PipelineStats {
        PipelineStats {
            embeddings: self.embeddings.load(Ordering::Relaxed),
            dot_products: self.dot_products.load(Ordering::Relaxed),
            rerank_scores: self.rerank_scores.load(Ordering::Relaxed),
        }
    }

    fn cached(&self, doc: &Document) -> Result<Arc<Cached>> {
        if let Some(hit) = self.cache.read().expect("cache lock").get(&doc.doc_id) {
            return Ok(Arc::clone(hit));
        }
        let agg = style_aggregate(doc, self.retriever.feature_config())?;
        let embedding = self.retriever.project(&agg.vector)?;
        let mut cache = self.cache.write().expect("cache lock");
        let entry = cache.entry(doc.doc_id.clone()).or_insert_with(|| {
            self.embeddings.fetch_add(1, Ordering::Relaxed);
            Arc::new(Cached {
                aggregate: agg.vector,
                embedding,
            })
        });
        Ok(Arc::clone(entry))
    }

    /// Embed a candidate pool ahead of time (in parallel).
    pub fn index(&self, candidates: &Corpus) -> Result<()> {
        par::try_map(candidates.documents(), |d| self.cached(d).map(|_| ()))?;
        Ok(())
    }

    /// Score every candidate against the query; best first, ties by
    /// ascending `doc_id`.
    pub fn retrieve(&self, query: &Document, candidates: &Corpus) -> Result<RankedList> {
        if candidates.is_empty() {
            return Err(Error::InvalidData("empty candidate pool".into()));
        }
        let q = self.cached(query)?;
        let cached = par::try_map(candidates.documents(), |d| self.cached(d))?;
        self.dot_products.fetch_add(cached.len(), Ordering::Relaxed);
        let mut ranking: Vec<RankedEntry> = candidates
            .documents()
            .iter()
            .zip(&cached)
            .map(|(d, c)| RankedEntry {
                doc_id: d.doc_id.clone(),
                score: dot(&q.embedding, &c.embedding),
                stage: Stage::Retrieved,
            })
            .collect();
        ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        Ok(RankedList {
            query_id: query.doc_id.clone(),
            ranking,
        })
    }

    /// Retrieve, then rerank the top `k` if a reranker is loaded. Entries
    /// below depth `k` keep their retriever order and scores.
    pub fn attribute(&self, query: &Document, candidates: &Corpus) -> Result<RankedList> {
        let mut list = self.retrieve(query, candidates)?;
        let Some(reranker) = &self.reranker else {
            return Ok(list);
        };
        let k = self.rerank_depth.min(list.ranking.len());
        let q = self.cached(query)?;
        let mut top = Vec::with_capacity(k);
        for e in &list.ranking[..k] {
            let pos = candidates
                .position(&e.doc_id)
                .ok_or_else(|| Error::UnknownDocument(e.doc_id.clone()))?;
            top.push((e.doc_id.as_str(), self.cached(&candidates.documents()[pos])?));
        }
        let refs: Vec<(&str, &[f64])> = top.iter().map(|(id, c)| (*id, c.aggregate.as_slice())).collect();
        let reranked = rerank_aggregates(reranker, &q.aggregate, &refs)?;
        self.rerank_scores.fetch_add(k, Ordering::Relaxed);
        list.ranking.splice(..k, reranked);
        Ok(list)
    }

    /// Attribute every query against the same pool, in query order.
    pub fn attribute_all(&self, queries: &Corpus, candidates: &Corpus) -> Result<Vec<RankedList>> {
        self.index(candidates)?;
        par::try_map(queries.documents(), |q| self.attribute(q, candidates))
    }
}

/// Write a run file, one JSON record per query, keeping `depth` entries.
pub fn write_run(path: impl AsRef<Path>, lists: &[RankedList], depth: usize) -> Result<()> {
    let truncated: Vec<RankedList> = lists.iter().map(|l| l.clone().truncated(depth)).collect();
    write_jsonl(path.as_ref(), &truncated)
}

pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    read_jsonl(path.as_ref())
}
