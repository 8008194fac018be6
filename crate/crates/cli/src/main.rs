//! `authrank`: curate, train, attribute and evaluate from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use authrank::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] authrank::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Runtime => 4,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "authrank", version, about = "Retrieve-and-rerank authorship attribution")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "AUTHRANK_CONFIG")]
    config: Option<PathBuf>,
    /// Replaces every module seed.
    #[arg(long, global = true, env = "AUTHRANK_SEED")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "AUTHRANK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Keep one cross-topic document pair per author.
    Curate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the bi-encoder on a curated corpus.
    TrainRetriever {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Optional CSV of per-step losses.
        #[arg(long)]
        loss_trace: Option<PathBuf>,
        /// Optional JSON file with every epoch plan.
        #[arg(long)]
        plans: Option<PathBuf>,
    },
    /// Sample reranker training instances from a curated corpus.
    BuildRerankerData {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Overrides `sampling.strategy`, e.g. `near_query,random`.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Train the reranker head on sampled instances.
    TrainReranker {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        loss_trace: Option<PathBuf>,
    },
    /// Rank candidates for every query.
    Attribute {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Overrides `pipeline.retriever_path`.
        #[arg(long)]
        retriever: Option<PathBuf>,
        /// Overrides `pipeline.reranker_path`.
        #[arg(long)]
        reranker: Option<PathBuf>,
        /// Rank with BM25 instead of the models.
        #[arg(long, conflicts_with_all = ["retriever", "reranker"])]
        bm25: bool,
    },
    /// Score run files against query splits.
    Evaluate {
        #[arg(long)]
        splits: PathBuf,
        /// One run per split, in split order.
        #[arg(long = "run", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "system")]
        system: String,
        /// Append a CSV summary row here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a synthetic cross-genre benchmark.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?.resolve(cli.seed, cli.threads)?;
    if cfg.threads > 0 {
        init_threads(cfg.threads)?;
    }
    log::info!("resolved config (sha256 {}):\n{}", cfg.hash(), cfg.to_toml());
    use commands as c;
    match cli.command {
        Command::Curate { input, output } => c::curate(&cfg, &input, &output),
        Command::TrainRetriever {
            corpus,
            output,
            loss_trace,
            plans,
        } => c::train_retriever(&cfg, &corpus, &output, loss_trace.as_deref(), plans.as_deref()),
        Command::BuildRerankerData {
            corpus,
            output,
            strategy,
        } => c::build_reranker_data(&cfg, &corpus, strategy.as_deref(), &output),
        Command::TrainReranker {
            corpus,
            instances,
            output,
            loss_trace,
        } => c::train_reranker(&cfg, &corpus, &instances, &output, loss_trace.as_deref()),
        Command::Attribute {
            queries,
            candidates,
            output,
            retriever,
            reranker,
            bm25,
        } => {
            let mut cfg = cfg;
            if retriever.is_some() {
                cfg.pipeline.retriever_path = retriever;
            }
            if reranker.is_some() {
                cfg.pipeline.reranker_path = reranker;
            }
            c::attribute(&cfg, &queries, &candidates, &output, bm25)
        }
        Command::Evaluate {
            splits,
            runs,
            output,
            system,
            csv,
        } => c::evaluate(&cfg, &splits, &runs, &output, &system, csv.as_deref()),
        Command::Synth { out_dir } => c::synth(&cfg, &out_dir),
    }
}

#[cfg(feature = "parallel")]
fn init_threads(n: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_: usize) -> Result<(), CliError> {
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AUTHRANK_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
