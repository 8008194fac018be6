//! Run a ranker over every split of a benchmark.

use crate::corpus::Corpus;
use crate::error::Result;
use crate::eval::bm25::{Bm25Index, Bm25Params};
use crate::eval::splits::QuerySplit;
use crate::pipeline::{Pipeline, RankedList};

/// One run per split, in split order.
pub fn run_pipeline(
    pipeline: &Pipeline,
    splits: &[QuerySplit],
    fg: &Corpus,
    bg: &Corpus,
) -> Result<Vec<Vec<RankedList>>> {
    splits
        .iter()
        .map(|s| pipeline.attribute_all(&s.query_corpus(fg)?, &s.candidate_corpus(fg, bg)?))
        .collect()
}

pub fn run_bm25(
    params: Bm25Params,
    splits: &[QuerySplit],
    fg: &Corpus,
    bg: &Corpus,
) -> Result<Vec<Vec<RankedList>>> {
    splits
        .iter()
        .map(|s| Ok(Bm25Index::new(&s.candidate_corpus(fg, bg)?, params)?.rank_all(&s.query_corpus(fg)?)))
        .collect()
}
