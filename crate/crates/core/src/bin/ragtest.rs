use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ragtest::analysis::{friedman_with, win_counts, CoverageMatrix, FriedmanOptions, PValueMethod};
use ragtest::campaign::{Campaign, CampaignConfig, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "ragtest", version, about = "Retrieval-augmented unit-test generation campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Recompute stages even when their outputs are current.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the document corpus for every project.
    Ingest(StageArgs),
    /// Rank APIs and select targets.
    Rank(StageArgs),
    /// Embed documents into vector stores.
    BuildStores(StageArgs),
    /// Build prompts and collect generated suites.
    Generate(StageArgs),
    /// Run generated suites with line tracing.
    Execute(StageArgs),
    /// Compute the metric table.
    Evaluate(StageArgs),
    /// Write every report.
    Report(StageArgs),
    /// Run the full campaign.
    Run(StageArgs),
    /// Compare approaches from a coverage matrix CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Matrix for win counts (block column followed by one column per approach).
    #[arg(long, requires = "pairs")]
    matrix: Option<PathBuf>,
    /// Comma-separated `a:b` approach pairs.
    #[arg(long)]
    pairs: Option<String>,
    /// Matrix for the Friedman test.
    #[arg(long)]
    friedman: Option<PathBuf>,
    #[arg(long)]
    tie_correction: bool,
    /// Use the Iman-Davenport F approximation for the p-value.
    #[arg(long)]
    iman_davenport: bool,
}

fn load_matrix(path: &Path) -> Result<CoverageMatrix> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    CoverageMatrix::from_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn analyze(args: &AnalyzeArgs) -> Result<serde_json::Value> {
    if args.matrix.is_none() && args.friedman.is_none() {
        bail!("analyze needs --matrix with --pairs, --friedman, or both");
    }
    let mut out = serde_json::Map::new();
    if let (Some(path), Some(pairs)) = (&args.matrix, &args.pairs) {
        let m = load_matrix(path)?;
        let mut rows = Vec::new();
        for pair in pairs.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, b) = pair.split_once(':').with_context(|| format!("pair {pair:?} is not a:b"))?;
            let (wa, wb, ties) = win_counts(&m, a, b)?;
            rows.push(json!({ "a": a, "b": b, "wins_a": wa, "wins_b": wb, "ties": ties }));
        }
        out.insert("win_counts".into(), rows.into());
    }
    if let Some(path) = &args.friedman {
        let options = FriedmanOptions {
            tie_correction: args.tie_correction,
            method: if args.iman_davenport { PValueMethod::ImanDavenport } else { PValueMethod::ChiSquare },
        };
        out.insert("friedman".into(), serde_json::to_value(friedman_with(&load_matrix(path)?, options)?)?);
    }
    Ok(out.into())
}

fn run_stage(args: &StageArgs, stage: Stage) -> Result<ExitCode> {
    let config = match CampaignConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let campaign = Campaign::open(
        config,
        RunOptions {
            force: args.force,
            ..RunOptions::default()
        },
    )?;
    let summary = campaign.run(stage)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    for f in &summary.failures {
        eprintln!("failed: {} [{}]: {}", f.run_id, f.stage, f.error);
    }
    Ok(ExitCode::from(summary.exit_code() as u8))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => run_stage(a, Stage::Ingest),
        Command::Rank(a) => run_stage(a, Stage::Rank),
        Command::BuildStores(a) => run_stage(a, Stage::BuildStores),
        Command::Generate(a) => run_stage(a, Stage::Generate),
        Command::Execute(a) => run_stage(a, Stage::Execute),
        Command::Evaluate(a) => run_stage(a, Stage::Evaluate),
        Command::Report(a) | Command::Run(a) => run_stage(a, Stage::Report),
        Command::Analyze(a) => analyze(a).map(|v| {
            println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
