use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stepturn_cli::{Overrides, Pipeline, PipelineConfig, PipelineError, Stage, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "stepturn", version, about = "Fit step/turn movement models to ball-carrier tracking data and evaluate carriers against simulated alternatives")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Configuration file (TOML).
    #[arg(long, short, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory of Big Data Bowl CSV files.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    warmup: Option<usize>,
    /// Hypothetical steps per frame.
    #[arg(long, global = true)]
    draws: Option<usize>,
    /// Simulate at most this many plays.
    #[arg(long, global = true)]
    max_plays: Option<usize>,
    /// Leaderboard eligibility threshold.
    #[arg(long, global = true)]
    min_plays: Option<usize>,
    /// Report failed convergence diagnostics without a nonzero exit.
    #[arg(long, global = true)]
    no_fail_on_diagnostics: bool,
    /// Rerun stages even when their outputs are up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Log more (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Step,
    Turn,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic season in the Big Data Bowl layout.
    Synth,
    /// Extract ball-carrier sequences from the CSV files.
    Ingest,
    /// Derive movement and valuation features.
    Features,
    /// Fit a movement model.
    Fit {
        #[arg(value_enum)]
        model: Model,
    },
    /// Convergence diagnostics for both fits.
    Diagnose,
    /// Train the expected-yards model.
    Value,
    /// Simulate hypothetical steps for every eligible frame.
    Simulate,
    /// Score observed steps against the simulated ones.
    Evaluate,
    /// Rank carriers.
    Leaderboard,
    /// Render SVG figures.
    Report,
    /// Every enabled stage in order.
    Run,
    /// Print the effective configuration.
    Config,
}

fn load(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: g.seed,
        data_dir: g.data.clone(),
        out_dir: g.out.clone(),
        jobs: g.jobs,
        chains: g.chains,
        iterations: g.iterations,
        warmup: g.warmup,
        draws: g.draws,
        min_plays: g.min_plays,
        max_plays: g.max_plays,
        no_fail_on_diagnostics: g.no_fail_on_diagnostics,
    })?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let cfg = load(&cli.global)?;
    let stage = match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::Run => {
            let pipeline = Pipeline::new(cfg, cli.global.force);
            for (stage, outcome) in pipeline.run_all()? {
                println!("{:<12} {:?}", stage.name(), outcome);
            }
            return Ok(());
        }
        Command::Synth => Stage::Synth,
        Command::Ingest => Stage::Ingest,
        Command::Features => Stage::Features,
        Command::Fit { model: Model::Step } => Stage::FitStep,
        Command::Fit { model: Model::Turn } => Stage::FitTurn,
        Command::Diagnose => Stage::Diagnose,
        Command::Value => Stage::Value,
        Command::Simulate => Stage::Simulate,
        Command::Evaluate => Stage::Evaluate,
        Command::Leaderboard => Stage::Leaderboard,
        Command::Report => Stage::Report,
    };
    let pipeline = Pipeline::new(cfg, cli.global.force);
    let outcome = pipeline.run_stage(stage)?;
    println!("{:<12} {:?}", stage.name(), outcome);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
