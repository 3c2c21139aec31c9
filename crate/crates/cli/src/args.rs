use std::net::SocketAddr;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use compass_core::RunParameters;

#[derive(Debug, Parser)]
#[command(name = "compass", version, about = "Score newspaper articles on the economic / democracy compass with LLMs")]
pub struct Cli {
    /// TOML config with run parameters and model specs [default: built-in]
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `compass_core=debug`
    #[arg(long, global = true, default_value = "info", value_name = "FILTER")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Harvest today's article pools into a corpus file without calling any model
    Scrape(ScrapeArgs),
    /// Score articles with the selected models, from a corpus or by harvesting
    Evaluate(EvaluateArgs),
    /// Print a run's summary statistics as JSON
    Analyze(RunRef),
    /// Write a run's CSV datasets and markdown report
    Report(ReportArgs),
    /// Serve the HTTP API
    Serve(ServeArgs),
    /// Full offline run against a generated web with mock models
    MockRun(MockRunArgs),
}

/// Parameter overrides. Unset flags fall back to the config file, then to
/// the built-in defaults shown.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// (N) hyperlinks kept per homepage [default: 200]
    #[arg(long, value_name = "N")]
    pub max_links: Option<usize>,
    /// (S) longest URLs selected for extraction [default: 20]
    #[arg(long, value_name = "S")]
    pub select: Option<usize>,
    /// (MIN) shortest accepted article, in characters [default: 1000]
    #[arg(long, value_name = "MIN")]
    pub min_chars: Option<usize>,
    /// (MAX) longest accepted article, in characters [default: 5000]
    #[arg(long, value_name = "MAX")]
    pub max_chars: Option<usize>,
}

impl ParamArgs {
    pub fn apply(&self, p: &mut RunParameters) {
        if let Some(v) = self.max_links {
            p.max_links = v;
        }
        if let Some(v) = self.select {
            p.select = v;
        }
        if let Some(v) = self.min_chars {
            p.min_chars = v;
        }
        if let Some(v) = self.max_chars {
            p.max_chars = v;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// (A) valid evaluations per newspaper per day [default: 5]
    #[arg(long, visible_alias = "articles", value_name = "A")]
    pub articles_per_day: Option<usize>,
    /// Number of daily batches [default: 5]
    #[arg(long)]
    pub days: Option<u32>,
}

impl BatchArgs {
    pub fn apply(&self, p: &mut RunParameters) {
        self.params.apply(p);
        if let Some(v) = self.articles_per_day {
            p.articles_per_day = v;
        }
        if let Some(v) = self.days {
            p.days = v;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Newspaper registry CSV [default: shipped 40-newspaper registry]
    #[arg(long, value_name = "PATH")]
    pub registry: Option<PathBuf>,
    /// Output root; runs live under <OUT>/runs/
    #[arg(long, default_value = "compass-out", value_name = "DIR")]
    pub out: PathBuf,
    /// Newspapers processed concurrently
    #[arg(long, default_value_t = 4)]
    pub parallel: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Comma-separated model ids from the config
    #[arg(long, visible_alias = "model", value_delimiter = ',', value_name = "IDS")]
    pub models: Vec<String>,
    /// Scrape and select but make no provider calls
    #[arg(long)]
    pub dry_run: bool,
    /// Seed for the mock://hash model
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resume or name a run instead of deriving an id
    #[arg(long, value_name = "ID")]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScrapeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Read pages from a snapshot directory with a pages.csv manifest instead of the web
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Batch day to record [default: today, UTC]
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub day: Option<NaiveDate>,
    /// Corpus file; pools of other days already in it are kept [default: <OUT>/corpus.jsonl]
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    pub models: ModelArgs,
    /// Evaluate the pools of a corpus written by `scrape`
    #[arg(long, value_name = "PATH", conflicts_with = "fixtures")]
    pub corpus: Option<PathBuf>,
    /// Harvest from a snapshot directory instead of the web; days are simulated
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// First simulated batch day when harvesting fixtures [default: today, UTC]
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub start_date: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct MockRunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    pub models: ModelArgs,
    /// First simulated batch day
    #[arg(long, value_name = "YYYY-MM-DD", default_value = "2024-05-09")]
    pub start_date: NaiveDate,
}

#[derive(Debug, Args)]
pub struct RunRef {
    /// Output root holding runs/
    #[arg(long, default_value = "compass-out", value_name = "DIR")]
    pub out: PathBuf,
    /// Run id, as printed by `evaluate` and `mock-run`
    #[arg(long, value_name = "ID")]
    pub run: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub run: RunRef,
    /// Where to write the files [default: <run dir>/report]
    #[arg(long, value_name = "DIR")]
    pub dest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Newspaper registry CSV [default: shipped 40-newspaper registry]
    #[arg(long, value_name = "PATH")]
    pub registry: Option<PathBuf>,
    /// Output root; service runs live under <OUT>/runs/
    #[arg(long, default_value = "compass-out", value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Origin of the web UI allowed by CORS
    #[arg(long, value_name = "ORIGIN")]
    pub ui_origin: Option<String>,
    /// Cache epoch in hours; each epoch writes to its own run
    #[arg(long, default_value_t = 24)]
    pub epoch_hours: u64,
    /// Serve articles from a snapshot directory instead of the web
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Seed for the mock://hash model
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
