mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Build, query and serve a socio-technical graph of developers, pull
/// requests, work items and repositories.
#[derive(Debug, Parser)]
#[command(name = "sociograph", version)]
pub struct Cli {
    /// Root directory for events, state, indices and telemetry.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,

    /// Settings file (`key = value` lines). Its data_dir is overridden by --data-dir.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a deterministic synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Ingest event files into the graph.
    #[command(subcommand)]
    Ingest(IngestCommand),
    /// Report or repair data gaps.
    Heal(HealArgs),
    /// Build or refresh the artifact and expert indices.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Recommend related artifacts and experts for a work item.
    Recommend(RecommendArgs),
    /// Show a user's activity feed.
    Feed(FeedArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Run the Top-K accuracy and MRR ablation on the synthetic corpus.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub repos: Option<usize>,
    #[arg(long)]
    pub devs: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub prs_per_dev: Option<usize>,
    #[arg(long)]
    pub link_rate: Option<f64>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Clock {
    /// Wall-clock override (RFC 3339), used for run bookkeeping and gap checks.
    #[arg(long)]
    pub now: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum IngestCommand {
    /// Full historical load of repos from their bootstrap files.
    Bootstrap {
        /// Comma-separated repos; defaults to every repo with pending bootstrap files.
        #[arg(long, value_delimiter = ',')]
        repos: Vec<String>,
        #[command(flatten)]
        clock: Clock,
    },
    /// Apply pending incremental files, healing any gap that is found.
    Incremental {
        /// Leave gapped repos locked instead of re-bootstrapping them.
        #[arg(long)]
        no_heal: bool,
        #[command(flatten)]
        clock: Clock,
    },
}

#[derive(Debug, Args)]
pub struct HealArgs {
    /// Only report gaps; change nothing.
    #[arg(long)]
    pub check: bool,
    /// Comma-separated repos to re-bootstrap; defaults to the gapped ones.
    #[arg(long, value_delimiter = ',', conflicts_with = "check")]
    pub repos: Vec<String>,
    #[command(flatten)]
    pub clock: Clock,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build,
    Refresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub title: String,
    #[arg(long, default_value = "")]
    pub description: String,
    /// Requesting user, as `name` or `user:name`.
    #[arg(long)]
    pub user: String,
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Keep plain BM25 order.
    #[arg(long)]
    pub no_rerank: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct FeedArgs {
    #[arg(long)]
    pub user: String,
    /// most_recent, relevance or team_only.
    #[arg(long, default_value = "most_recent")]
    pub view: String,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Overrides the configured port.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Comma-separated configurations, in table order.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "metadata_only,plus_title,plus_description,plus_graph"
    )]
    pub configs: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
    pub k_values: Vec<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
