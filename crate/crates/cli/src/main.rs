use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maisteer_cli::{execute, ConfigFile, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "maisteer", version, about = "Steering and entanglement sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reid (linear, MAI) and Fisher steering witnesses over mu.
    SteeringSweep(Common),
    /// Giovannetti witnesses over mu.
    EntanglementSweep(Common),
    /// Two-mode squeezed vacuum under detection noise.
    CvNoise(Common),
    /// MAI Reid witness under atom loss.
    LossSweep(Common),
    /// Spherical Wigner function of Bob's conditional state.
    WignerSnapshot(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a line plot next to the CSV.
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for randomized optimizer starts.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::SteeringSweep(c) => (Experiment::SteeringSweep, c),
        Command::EntanglementSweep(c) => (Experiment::EntanglementSweep, c),
        Command::CvNoise(c) => (Experiment::CvNoise, c),
        Command::LossSweep(c) => (Experiment::LossSweep, c),
        Command::WignerSnapshot(c) => (Experiment::WignerSnapshot, c),
    };
    let file = match &common.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => ConfigFile::default(),
    };
    let flags = Overrides {
        out: common.out,
        svg: common.svg,
        threads: common.threads,
        seed: common.seed,
    };
    match execute(experiment, file, flags) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
