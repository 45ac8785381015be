mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Multilingual passage retrieval: BM25 + dense hybrid retrieval, ranking
/// data forging, reranking, ensembling and evaluation.
#[derive(Parser, Debug)]
#[command(name = "mirank", version)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a BM25 index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// First-stage retrieval.
    #[command(subcommand)]
    Retrieve(RetrieveCmd),
    /// Normalize and fuse runs, optionally writing a top-k candidate pool.
    Fuse(FuseArgs),
    /// Manufacture training pairs.
    #[command(subcommand)]
    Forge(ForgeCmd),
    /// Score a candidate pool with a pair scorer.
    Rerank(RerankArgs),
    /// Correlation-aware weighted ensemble of runs.
    Ensemble(EnsembleArgs),
    /// nDCG@k / recall@k of a run against qrels.
    Eval(EvalArgs),
    /// Query, judgment and passage counts for one language.
    Stats(StatsArgs),
    /// Check artifacts against their formats (exit 2 on any violation).
    Validate(ValidateArgs),
    /// Run an experiment config end to end.
    Pipeline(PipelineArgs),
    /// Write the synthetic trilingual toy corpus.
    Synth(SynthArgs),
}

#[derive(Subcommand, Debug)]
pub enum IndexCmd {
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "auto")]
        script_policy: String,
    },
}

#[derive(Subcommand, Debug)]
pub enum RetrieveCmd {
    Bm25 {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(short = 'k', long = "depth", default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 0.9)]
        k1: f64,
        #[arg(long, default_value_t = 0.4)]
        b: f64,
        #[arg(long, default_value = "bm25")]
        tag: String,
        #[command(flatten)]
        out: OutArg,
    },
    Dense {
        /// Query vectors (`id<TAB>v1,...`).
        #[arg(long)]
        queries: PathBuf,
        /// Document vectors.
        #[arg(long)]
        docs: PathBuf,
        /// Restrict to the queries of this topics file.
        #[arg(long)]
        topics: Option<PathBuf>,
        #[arg(long, default_value = "dot")]
        metric: String,
        #[arg(short = 'k', long = "depth", default_value_t = 200)]
        k: usize,
        #[arg(long, default_value = "dense")]
        tag: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Debug)]
pub struct OutArg {
    /// Output file (default: stdout).
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<f64>,
    #[arg(long, default_value = "minmax")]
    normalize: String,
    /// Pool depth.
    #[arg(short = 'k', long = "depth", default_value_t = 200)]
    k: usize,
    #[arg(long, default_value = "hybrid")]
    tag: String,
    /// Also write the per-query top-k pool here.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand, Debug)]
pub enum ForgeCmd {
    /// Label-0 pairs sampled from a candidate pool (or the whole corpus).
    Negatives {
        /// Pool run; mutually exclusive with --corpus.
        #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
        pool: Option<PathBuf>,
        /// Sample from every corpus passage instead of a pool.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(short = 'n', long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Transfer train judgments to similar test queries.
    Q2q2d {
        #[arg(long)]
        test_topics: PathBuf,
        #[arg(long)]
        train_topics: PathBuf,
        #[arg(long)]
        train_qrels: PathBuf,
        #[arg(long)]
        query_vectors: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 0.8)]
        tau: f64,
        #[arg(long, default_value_t = 1)]
        top_m: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Soft labels from a scored run.
    Pseudo {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Debug)]
pub struct RerankArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// `lexical`, `cmd:<shell command>` or `file:<scores.tsv>`.
    #[arg(long, default_value = "lexical")]
    scorer: String,
    #[arg(long, default_value_t = 256)]
    budget: usize,
    #[arg(long, default_value = "auto")]
    script_policy: String,
    /// Only rerank the top k of each pool list.
    #[arg(short = 'k', long = "depth")]
    k: Option<usize>,
    #[arg(long, default_value = "rerank")]
    tag: String,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Per-run base weights (default: equal).
    #[arg(long, value_delimiter = ',')]
    base_weights: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value = "ndcg")]
    metric: String,
    #[arg(short = 'k', long = "depth", default_value_t = 10)]
    k: usize,
    #[arg(long)]
    per_query: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    lang: String,
    #[arg(long)]
    corpus: PathBuf,
    /// `split=path`, repeatable (splits: train, dev, test-a, test-b).
    #[arg(long)]
    topics: Vec<String>,
    /// `split=path`, repeatable.
    #[arg(long)]
    qrels: Vec<String>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Files or directories.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Treat every file as this kind instead of guessing from its name.
    #[arg(long)]
    kind: Option<String>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long, required_unless_present = "example_config")]
    config: Option<PathBuf>,
    /// Print a commented example config for the toy corpus and exit.
    #[arg(long)]
    example_config: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Argument problems found after parsing; reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Data problems already reported in detail (validate diagnostics).
#[derive(Debug)]
pub struct Reported;

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("validation failed")
    }
}

impl std::error::Error for Reported {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mirank::Error>() {
            return if e.is_protocol() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up the thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<Reported>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
