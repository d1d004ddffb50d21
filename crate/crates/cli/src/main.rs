//! `semstack` — one binary driving the whole pipeline: synthetic data,
//! two-tower retrieval training, pairwise ranker training, index builds,
//! offline evaluation, latency benchmarks, and the HTTP service.
//!
//! Every subcommand reads and writes a single artifact directory (`--out-dir`)
//! and is deterministic given `--seed`; `--deterministic` additionally zeroes
//! wall-clock fields in written reports so two identical runs produce
//! byte-identical output trees.

mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "semstack", version, about = "two-stage semantic search: retrieval + ranking")]
struct Cli {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Artifact directory shared by the whole pipeline.
    #[arg(long, global = true, default_value = "artifacts")]
    out_dir: PathBuf,

    /// Zero wall-clock fields in written reports so repeat runs are
    /// byte-identical. Artifacts are deterministic regardless.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic catalog, sessions, and training data with
    /// planted ground truth, then fit and save the featurizer.
    Datagen(DatagenArgs),
    /// Train the two-tower retrieval model on triples.jsonl.
    TrainDsr(TrainDsrArgs),
    /// Train the pairwise ranker on pairs.jsonl.
    TrainDpr(TrainDprArgs),
    /// Embed the catalog with the trained retrieval model and build the
    /// nearest-neighbor index.
    BuildIndex(BuildIndexArgs),
    /// Recall@K of the retrieval stack on held-out sessions, with sample
    /// query-to-items cases.
    EvalRetrieval(EvalRetrievalArgs),
    /// Session AUC and NDCG@K of the ranker on held-out sessions, next to
    /// the planted-utility oracle.
    EvalRanking(EvalRankingArgs),
    /// Index-build and search latency on synthetic unit vectors.
    Bench(BenchArgs),
    /// Serve /search and /rerank over the artifact directory.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct DatagenArgs {
    #[arg(long, default_value_t = 5_000)]
    items: usize,
    #[arg(long, default_value_t = 50)]
    clusters: usize,
    #[arg(long, default_value_t = 1_000)]
    users: usize,
    #[arg(long, default_value_t = 20_000)]
    sessions: usize,
    /// Slate length per session.
    #[arg(long, default_value_t = 10)]
    presented: usize,
    /// Probability a slate slot is drawn from the query's cluster.
    #[arg(long)]
    same_cluster_prob: Option<f64>,
    /// Std-dev of the per-impression utility noise.
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Intercept of the click sigmoid.
    #[arg(long)]
    click_bias: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainDsrArgs {
    #[arg(long, default_value_t = 64)]
    token_dim: usize,
    /// Hidden ReLU widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![256, 128])]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    output_dim: usize,
    /// Hinge margin.
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 4e-3)]
    lr: f64,
}

#[derive(Debug, Args)]
struct TrainDprArgs {
    #[arg(long, default_value_t = 32)]
    user_dim: usize,
    #[arg(long, default_value_t = 32)]
    query_dim: usize,
    #[arg(long, default_value_t = 32)]
    item_dim: usize,
    /// Hidden ReLU widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![256, 64, 16])]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IndexVariant {
    Exact,
    Ivf,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[arg(long, value_enum, default_value_t = IndexVariant::Ivf)]
    variant: IndexVariant,
    /// Cluster count for the IVF variant; defaults to ceil(sqrt(N)).
    #[arg(long)]
    n_clusters: Option<usize>,
    /// Default probe width stored in the index.
    #[arg(long)]
    nprobe: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalRetrievalArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Probe width override for IVF search.
    #[arg(long)]
    nprobe: Option<usize>,
    /// Sample query-to-items cases to embed in the report.
    #[arg(long, default_value_t = 5)]
    samples: usize,
}

#[derive(Debug, Args)]
struct EvalRankingArgs {
    /// Cutoff for NDCG@K.
    #[arg(long, default_value_t = 5)]
    k: usize,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Indexed vector count.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 1_000)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = IndexVariant::Exact)]
    variant: IndexVariant,
    #[arg(long)]
    n_clusters: Option<usize>,
    #[arg(long)]
    nprobe: Option<usize>,
    /// Worker threads for the concurrent throughput measurement.
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Artifact directory to serve; defaults to --out-dir. The
    /// SEMSTACK_ARTIFACTS environment variable overrides both.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Probe width applied to search requests that omit nprobe.
    #[arg(long)]
    nprobe_default: Option<usize>,
    /// Largest accepted k per search request.
    #[arg(long, default_value_t = 1_000)]
    max_k: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = ops::Ctx { seed: cli.seed, dir: cli.out_dir, deterministic: cli.deterministic };
    let result = match cli.command {
        Command::Datagen(args) => ops::datagen(&ctx, &args),
        Command::TrainDsr(args) => ops::train_dsr(&ctx, &args),
        Command::TrainDpr(args) => ops::train_dpr(&ctx, &args),
        Command::BuildIndex(args) => ops::build_index(&ctx, &args),
        Command::EvalRetrieval(args) => ops::eval_retrieval(&ctx, &args),
        Command::EvalRanking(args) => ops::eval_ranking(&ctx, &args),
        Command::Bench(args) => ops::bench(&ctx, &args),
        Command::Serve(args) => ops::serve(&ctx, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {err:#}", category(&err));
            ExitCode::FAILURE
        }
    }
}

/// Stable one-word category for scripting against stderr.
fn category(err: &anyhow::Error) -> &'static str {
    use semstack_core::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => "config",
        Some(Error::Shape(_)) => "shape",
        Some(Error::OutOfRange(_)) => "range",
        Some(Error::Data(_)) => "data",
        Some(Error::Numeric(_)) => "numeric",
        Some(Error::UndefinedMetric(_)) => "metric",
        Some(Error::Format { .. }) => "format",
        Some(Error::Io(_)) => "io",
        Some(Error::Json(_)) => "json",
        None => {
            if err.downcast_ref::<std::io::Error>().is_some() {
                "io"
            } else {
                "runtime"
            }
        }
    }
}
