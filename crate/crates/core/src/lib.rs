//! Two-stage retrieve-and-rerank authorship attribution.
//!
//! A bi-encoder retriever scores every candidate against a query with a dot
//! product over learned projections of mean-pooled style features. The
//! top of that list is then re-scored by a cross-encoder style reranker that
//! sees the query and the candidate jointly. Both stages are trained with a
//! temperature-scaled contrastive loss: the retriever on clustered
//! hard-negative batches, the reranker on negatives drawn from a
//! topic-closeness taxonomy.
//!
//! Module map:
//!
//! * [`corpus`]: documents, JSONL loading, PII scrubbing, cross-genre curation.
//! * [`featurizer`]: tokenization, hashed style features, topic vectors, pair features.
//! * [`retriever`]: the linear bi-encoder head and its model file.
//! * [`batcher`]: random projection, cosine k-means and clustered epoch plans.
//! * [`trainer`]: contrastive loss, analytic gradients, Adam, training loops.
//! * [`reranker`]: the pairwise scoring head and negative sampling.
//! * [`pipeline`]: retrieval over a candidate pool followed by top-k reranking.
//! * [`eval`]: metrics, query/candidate splits, BM25, reports and the synthetic benchmark.

pub mod batcher;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod featurizer;
mod format;
pub mod par;
pub mod pipeline;
pub mod reranker;
pub mod retriever;
pub mod trainer;

pub use crate::corpus::{Corpus, CurationConfig, Document};
pub use crate::error::{Error, ErrorKind, Result};
pub use crate::featurizer::{FeatureConfig, StyleAggregate, TopicFeaturizer, TopicVector};
pub use crate::pipeline::{Pipeline, PipelineConfig, RankedEntry, RankedList, Stage};
pub use crate::reranker::{NegativeCategory, RerankerModel, SamplingStrategy, TrainingInstance};
pub use crate::retriever::{Embedding, RetrieverModel};
pub use crate::trainer::TrainConfig;

/// Dot product accumulated in `f64`.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}
