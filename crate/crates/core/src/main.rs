use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bihem::expcli::{run_eval, run_main, run_meta_train, run_report, ExperimentConfig, StageSummary};
use bihem::Error;

/// Bi-hemispheric reinforcement-learning experiments.
#[derive(Parser)]
#[command(name = "bihem", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train the right hemisphere and the right-only baseline with RL².
    MetaTrain { config: PathBuf },
    /// Train the bi-hemispheric and left-only agents on every task and seed.
    Main { config: PathBuf },
    /// Evaluate within-trial adaptation of the meta-trained networks.
    Eval { config: PathBuf },
    /// Write summary CSVs and SVG plots for an output directory.
    Report { dir: PathBuf },
    /// Parse and validate a configuration without running anything.
    Validate { config: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) | Error::Invariant(_) => 2,
        _ => 1,
    }
}

fn stage_done(name: &str, s: StageSummary) {
    eprintln!("{name}: {} cells run, {} already complete", s.ran, s.skipped);
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::MetaTrain { config } => stage_done("meta-train", run_meta_train(&ExperimentConfig::load(&config)?)?),
        Command::Main { config } => stage_done("main", run_main(&ExperimentConfig::load(&config)?)?),
        Command::Eval { config } => stage_done("eval", run_eval(&ExperimentConfig::load(&config)?)?),
        Command::Report { dir } => {
            let out = run_report(&dir)?;
            for f in &out.files {
                println!("{}", f.display());
            }
            if !out.gaps.is_empty() {
                eprintln!("report is partial; {} gaps:", out.gaps.len());
                for g in &out.gaps {
                    eprintln!("  {g}");
                }
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}: ok (hash {})", config.display(), cfg.hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with 2 on bad arguments; usage errors exit with 1 here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
