use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rulelm::config::{Overrides, PipelineConfig};
use rulelm::pipeline;

/// Mine two-hop rules from a knowledge graph and rank them with a masked
/// language model.
#[derive(Parser)]
#[command(name = "rulelm", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for mining, evaluation and in-flight scorer batches.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Split and sampling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated lambda grid.
    #[arg(long, global = true, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Comma-separated k grid.
    #[arg(long, global = true, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Candidates considered per cloze query.
    #[arg(long = "top-n", global = true)]
    top_n: Option<usize>,
    /// Descriptive score kinds: standard_confidence, pca_confidence.
    #[arg(long, global = true, value_delimiter = ',')]
    mu1: Option<Vec<String>>,
    /// Scorer endpoint: an http(s) URL or fixture:<path>.
    #[arg(long, global = true)]
    scorer: Option<String>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    kg: Option<PathBuf>,
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long = "split-ratio", global = true)]
    split_ratio: Option<f64>,
    #[arg(long = "min-support", global = true)]
    min_support: Option<u64>,
    #[arg(long = "min-std-conf", global = true)]
    min_std_conf: Option<f64>,
    #[arg(long = "min-head-coverage", global = true)]
    min_head_coverage: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train/test split and its metadata.
    Split,
    /// Mine rules from the train graph.
    Mine,
    /// Score mined rules with the language model.
    Score {
        /// Mined rules; defaults to <out_dir>/rules.tsv.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Sweep lambda and k over scored rules.
    Sweep {
        /// Scored rules; defaults to <out_dir>/scored_rules.tsv.
        #[arg(long)]
        scored: Option<PathBuf>,
    },
    /// mine, score and sweep.
    RunAll,
}

fn load_config(global: Global) -> rulelm::Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply(Overrides {
        jobs: global.jobs,
        kg: global.kg,
        train: global.train,
        labels: global.labels,
        templates: global.templates,
        out_dir: global.out_dir,
        seed: global.seed,
        split_ratio: global.split_ratio,
        min_support: global.min_support,
        min_std_conf: global.min_std_conf,
        min_head_coverage: global.min_head_coverage,
        scorer: global.scorer,
        top_n: global.top_n,
        batch_size: global.batch_size,
        lambda: global.lambda,
        k: global.k,
        mu1: global.mu1,
    });
    Ok(config)
}

fn run(cli: Cli) -> rulelm::Result<PathBuf> {
    let config = load_config(cli.global)?;
    match cli.command {
        Command::Split => pipeline::run_split(&config),
        Command::Mine => pipeline::run_mine(&config),
        Command::Score { rules } => pipeline::run_score(&config, rules.as_deref()),
        Command::Sweep { scored } => pipeline::run_sweep(&config, scored.as_deref()),
        Command::RunAll => pipeline::run_all(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
