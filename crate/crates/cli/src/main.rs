//! `fwmsim`: command-line front end for the FWM simulation and estimation
//! pipeline. Every subcommand takes a JSON config; flags override it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fwm_core::pipeline::{run, Command, PipelineConfig};

#[derive(Parser)]
#[command(name = "fwmsim", version, about = "Few-mode fiber four-wave mixing simulator and state estimator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `tomography.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Joint spectral intensity per process, combined grid and seed scan.
    SimulateJsi,
    /// B/C separation versus parity birefringence dispersion.
    SweepDelta,
    /// Gaussian lobe fit of a measured or simulated JSI.
    FitLobes,
    /// Mode density matrix from the joint spectrum, per window.
    EstimateRho,
    /// Simulated tomography counts for a density matrix.
    QstSimulate,
    /// Maximum-likelihood reconstruction with bootstrap errors.
    QstReconstruct,
    /// Fidelity between two density matrices.
    Compare,
    /// Heatmap of a grid with optional lobe contours.
    Render,
    /// Transverse intensity images of mode superpositions.
    Modes,
    /// Overlap integral table.
    Overlaps,
}

impl Cmd {
    fn command(self) -> Command {
        match self {
            Cmd::SimulateJsi => Command::SimulateJsi,
            Cmd::SweepDelta => Command::SweepDelta,
            Cmd::FitLobes => Command::FitLobes,
            Cmd::EstimateRho => Command::EstimateRho,
            Cmd::QstSimulate => Command::QstSimulate,
            Cmd::QstReconstruct => Command::QstReconstruct,
            Cmd::Compare => Command::Compare,
            Cmd::Render => Command::Render,
            Cmd::Modes => Command::Modes,
            Cmd::Overlaps => Command::Overlaps,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Some(path) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let result = PipelineConfig::load(&path).and_then(|mut cfg| {
        if let Some(out) = cli.out {
            cfg.output_dir = out;
        }
        if let Some(seed) = cli.seed {
            cfg.tomography.seed = seed;
        }
        if cli.threads.is_some() {
            cfg.threads = cli.threads;
        }
        run(cli.command.command(), &cfg)
    });
    match result {
        Ok(summary) => {
            print!("{}", summary.report);
            println!("wrote {} file(s)", summary.files.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
