//! `compsim`: runs the embedding evaluation pipeline from a JSON config.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::{Failure, Kind};

#[derive(Debug, Parser)]
#[command(name = "compsim", version, about = "Company similarity from business-description embeddings")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set split.seed=3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the corpus and write summary statistics.
    Ingest,
    /// Write balanced same-industry / different-industry document pairs.
    Pairs,
    /// Embed every company, reusing cached rows.
    Embed,
    /// Train and evaluate GICS classifiers.
    Classify,
    /// Peer return correlation, or the peers of one company.
    Peers {
        #[arg(long)]
        company: Option<String>,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Dimensionality reduction and clustering sweep.
    Cluster,
    /// Monthly cross-sectional return attribution.
    Attribute,
    /// Two-dimensional coordinates for plotting.
    Project,
    /// Rank companies by distance from their own sector.
    Outliers,
    /// Run classify, peers, cluster and attribute, then merge their reports.
    Report,
    /// Generate a synthetic corpus, returns and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        companies: usize,
        #[arg(long, default_value_t = 6)]
        sectors: usize,
        #[arg(long, default_value_t = 3)]
        industries_per_sector: usize,
        #[arg(long, default_value_t = 0)]
        outliers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Kind::Usage.code()) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).target(env_logger::Target::Stderr).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.kind.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Synth { out, companies, sectors, industries_per_sector, outliers, seed } = &cli.command {
        return commands::synth(out, *companies, *sectors, *industries_per_sector, *outliers, *seed);
    }
    let config = config::load(cli.config.as_deref(), &cli.overrides).map_err(Failure::usage)?;
    let ctx = commands::Context::new(config)?;
    match cli.command {
        Command::Ingest => ctx.ingest(),
        Command::Pairs => ctx.pairs(),
        Command::Embed => ctx.embed().map(|_| ()),
        Command::Classify => ctx.classify(),
        Command::Peers { company: Some(id), k } => ctx.show_peers(&id, k),
        Command::Peers { company: None, .. } => ctx.peers(),
        Command::Cluster => ctx.cluster().map(|_| ()),
        Command::Attribute => ctx.attribute(),
        Command::Project => ctx.project(),
        Command::Outliers => ctx.outliers(),
        Command::Report => ctx.report(),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}
