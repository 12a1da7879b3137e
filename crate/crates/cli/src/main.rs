use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spheremorse::reports::{exit_code_for, output_dir, run, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "spheremorse", version, about = "Experiments on harmonic maps from the two-sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schubert cell counts against the q-binomial oracle
    Census(RunArgs),
    /// α-energy descent and continuation from random degree-one starts
    Flow(RunArgs),
    /// Morse index and nullity of the equator
    Spectrum(RunArgs),
    /// Energies, pulled-back spectra and normal indices of branched covers
    Covers(RunArgs),
    /// Sampling check of the pinching implication
    Pinch(RunArgs),
    /// Mod-2 Morse complex homology and the A/B split
    Morse(RunArgs),
    /// Check a config file without running it
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replaces the seed list with a single seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Mesh refinement level
    #[arg(long, value_name = "K")]
    level: Option<usize>,
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_path(path).map_err(|issues| {
            issues.iter().map(|i| format!("{}: {i}", path.display())).collect::<Vec<_>>().join("\n")
        })?,
        None => ExperimentConfig::default_for(kind),
    };
    if config.kind != kind {
        return Err(format!("config describes a {} experiment, not {}", config.kind.name(), kind.name()));
    }
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if args.level.is_some() {
        config.level = args.level;
    }
    let issues = config.issues();
    if !issues.is_empty() {
        return Err(issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"));
    }
    Ok(config)
}

fn show(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e9 {
        format!("{x}")
    } else {
        format!("{x:.6e}")
    }
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> ExitCode {
    let config = match load(kind, args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(3);
        }
    };
    let out = output_dir(&config, args.out.as_deref());
    match run(&config, &out) {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {}: {} (expected {})", if c.passed { "PASS" } else { "FAIL" }, c.name, show(c.measured), c.expected);
            }
            println!("report written to {}", out.join("report.json").display());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Census(a) => execute(ExperimentKind::Census, a),
        Command::Flow(a) => execute(ExperimentKind::Flow, a),
        Command::Spectrum(a) => execute(ExperimentKind::Spectrum, a),
        Command::Covers(a) => execute(ExperimentKind::Covers, a),
        Command::Pinch(a) => execute(ExperimentKind::Pinch, a),
        Command::Morse(a) => execute(ExperimentKind::Morse, a),
        Command::Validate { config } => match ExperimentConfig::from_path(config) {
            Ok(c) => {
                println!("OK: {} experiment", c.kind.name());
                ExitCode::SUCCESS
            }
            Err(issues) => {
                for i in &issues {
                    eprintln!("{}: {i}", config.display());
                }
                ExitCode::from(3)
            }
        },
    }
}
