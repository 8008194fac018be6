//! Evaluation: ranking metrics, cross-genre query splits, the BM25
//! baseline, report aggregation and a synthetic benchmark generator.

pub mod bm25;
pub mod harness;
pub mod metrics;
pub mod report;
pub mod splits;
pub mod synth;

pub use bm25::{bm25_score, Bm25Index, Bm25Params, CorpusStats};
pub use harness::{run_bm25, run_pipeline};
pub use metrics::{mrr_at_k, success_at_k};
pub use report::{chance_success, evaluate_run, pooled_success, ChanceLevel, EvalReport, Metrics, SplitReport};
pub use splits::{build_splits, QuerySplit, DEFAULT_FRACTION, DEFAULT_SPLIT_SEEDS};
pub use synth::{make_synthetic_benchmark, SynthConfig, SyntheticBenchmark};
