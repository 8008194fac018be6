use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use log::info;

use authrank::corpus::{curate as curate_corpus, load_corpus, sanitize, write_corpus};
use authrank::eval::splits::{read_splits, write_splits};
use authrank::eval::{build_splits, evaluate_run, synth, Bm25Index, EvalReport};
use authrank::pipeline::{read_run, write_run};
use authrank::reranker::{build_training_instances, featurize_instances, read_instances, write_instances};
use authrank::trainer::{train_reranker as fit_reranker, train_retriever as fit_retriever, write_loss_trace};
use authrank::{Error, Pipeline, RerankerModel, RetrieverModel, SamplingStrategy, TopicFeaturizer};

use crate::config::RunConfig;
use crate::CliError;

type Result<T = ()> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

fn model_meta(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    vec![("config_sha256", cfg.hash())]
}

/// PII is scrubbed before any similarity is computed.
pub fn curate(cfg: &RunConfig, input: &Path, output: &Path) -> Result {
    let corpus = sanitize(&load_corpus(input)?);
    let tf = TopicFeaturizer::from_config(&cfg.features);
    let curated = curate_corpus(&corpus, &cfg.curation, &tf)?;
    info!(
        "kept {} of {} authors ({} documents)",
        curated.author_index().len(),
        corpus.author_index().len(),
        curated.len()
    );
    write_corpus(output, &curated)?;
    Ok(())
}

pub fn train_retriever(
    cfg: &RunConfig,
    corpus: &Path,
    output: &Path,
    loss_trace: Option<&Path>,
    plans: Option<&Path>,
) -> Result {
    let corpus = load_corpus(corpus)?;
    let seed = cfg.training.seed;
    let model = RetrieverModel::new(cfg.features.clone(), None, seed)?;
    let out = fit_retriever(model, &corpus, &cfg.batching, &cfg.training)?;
    if let Some(last) = out.trace.last() {
        info!("{} steps, final batch loss {:.4}", out.trace.len(), last.loss);
    }
    out.model.save(output, &model_meta(cfg), Some(seed))?;
    if let Some(p) = loss_trace {
        write_loss_trace(p, &out.trace)?;
    }
    if let Some(p) = plans {
        let text = serde_json::to_string_pretty(&out.plans).expect("plans serialize");
        std::fs::write(p, text + "\n").map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

pub fn build_reranker_data(cfg: &RunConfig, corpus: &Path, strategy: Option<&str>, output: &Path) -> Result {
    let corpus = load_corpus(corpus)?;
    let strategy = match strategy {
        Some(s) => SamplingStrategy::parse(s, cfg.sampling.m)?,
        None => cfg.sampling_strategy()?,
    };
    let tf = TopicFeaturizer::from_config(&cfg.features);
    let instances = build_training_instances(&corpus, &tf, &strategy, &cfg.instances)?;
    info!("{} instances with strategy {}", instances.len(), strategy.label());
    write_instances(output, &instances)?;
    Ok(())
}

pub fn train_reranker(
    cfg: &RunConfig,
    corpus: &Path,
    instances: &Path,
    output: &Path,
    loss_trace: Option<&Path>,
) -> Result {
    let corpus = load_corpus(corpus)?;
    let instances = read_instances(instances)?;
    let examples = featurize_instances(&corpus, &cfg.features, &instances)?;
    let model = RerankerModel::zeros(cfg.features.clone())?;
    let out = fit_reranker(model, &examples, &cfg.training)?;
    if let Some(last) = out.trace.last() {
        info!("{} steps, final loss {:.4}", out.trace.len(), last.loss);
    }
    out.model.save(output, &model_meta(cfg), Some(cfg.training.seed))?;
    if let Some(p) = loss_trace {
        write_loss_trace(p, &out.trace)?;
    }
    Ok(())
}

pub fn attribute(cfg: &RunConfig, queries: &Path, candidates: &Path, output: &Path, bm25: bool) -> Result {
    let queries = load_corpus(queries)?;
    let candidates = load_corpus(candidates)?;
    let lists = if bm25 {
        info!("ranking with BM25");
        Bm25Index::new(&candidates, cfg.bm25)?.rank_all(&queries)
    } else {
        let pipeline = Pipeline::from_config(&cfg.pipeline)?;
        if pipeline.has_reranker() {
            info!("retrieve, then rerank top {}", pipeline.rerank_depth());
        } else {
            info!("retrieval only");
        }
        let lists = pipeline.attribute_all(&queries, &candidates)?;
        let s = pipeline.stats();
        info!(
            "{} embeddings, {} dot products, {} rerank scores",
            s.embeddings, s.dot_products, s.rerank_scores
        );
        lists
    };
    write_run(output, &lists, cfg.pipeline.output_depth)?;
    Ok(())
}

pub fn evaluate(
    cfg: &RunConfig,
    splits: &Path,
    runs: &[std::path::PathBuf],
    output: &Path,
    system: &str,
    csv: Option<&Path>,
) -> Result {
    let splits = read_splits(splits)?;
    let runs = runs.iter().map(read_run).collect::<authrank::Result<Vec<_>>>()?;
    let mut report = evaluate_run(&runs, &splits)?;
    report.system = system.to_string();
    report.config_hash = Some(cfg.hash());
    info!("\n{report}");
    report.write_json(output)?;
    if let Some(p) = csv {
        let fresh = !p.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(p)
            .map_err(|e| io_err(p, e))?;
        let mut text = String::new();
        if fresh {
            text.push_str(EvalReport::csv_header());
            text.push('\n');
        }
        text.push_str(&report.csv_row());
        text.push('\n');
        f.write_all(text.as_bytes()).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

/// Layout: `train.jsonl`, `foreground.jsonl`, `background.jsonl`,
/// `splits.json`, and `split_<seed>/{queries,candidates}.jsonl`.
pub fn synth(cfg: &RunConfig, out_dir: &Path) -> Result {
    let bench = synth::generate(&cfg.synth)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_corpus(out_dir.join("train.jsonl"), &bench.train)?;
    write_corpus(out_dir.join("foreground.jsonl"), &bench.foreground)?;
    write_corpus(out_dir.join("background.jsonl"), &bench.background)?;
    let splits = build_splits(&bench.foreground, &bench.background, cfg.splits.fraction, &cfg.splits.seeds)?;
    write_splits(out_dir.join("splits.json"), &splits)?;
    for s in &splits {
        let dir = out_dir.join(format!("split_{}", s.seed));
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        write_corpus(dir.join("queries.jsonl"), &s.query_corpus(&bench.foreground)?)?;
        write_corpus(
            dir.join("candidates.jsonl"),
            &s.candidate_corpus(&bench.foreground, &bench.background)?,
        )?;
    }
    info!(
        "{} train, {} foreground, {} background documents; {} splits",
        bench.train.len(),
        bench.foreground.len(),
        bench.background.len(),
        splits.len()
    );
    Ok(())
}
