use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crab_control::harness::studies::{diagnose_trajectory, replay_pulse, run_study, RunOptions};
use crab_control::harness::ExperimentConfig;

/// Quantum optimal control experiments with a chopped random-basis pulse
/// ansatz.
#[derive(Parser)]
#[command(name = "crab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonFlags {
    /// Override the master seed of the configuration document.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for concurrent optimization instances (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $CRAB_OUT_DIR or ./crab-out).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the propagation step count.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the sweep described by a configuration document.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Export excitation-probability trajectories for a linear ramp and an
    /// optional stored pulse.
    Diagnose {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Recompute the cost of a stored pulse document and verify it against
    /// the recorded value.
    Replay {
        pulse: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
}

fn options(flags: &CommonFlags) -> RunOptions {
    let out_dir = flags
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("CRAB_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("crab-out"));
    RunOptions { out_dir, seed: flags.seed, steps: flags.steps }
}

fn install_workers(flags: &CommonFlags) {
    if let Some(n) = flags.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("worker pool already initialized");
    }
}

fn execute(cli: Cli) -> crab_control::Result<()> {
    match cli.command {
        Command::Run { config, flags } => {
            install_workers(&flags);
            let opts = options(&flags);
            let config = ExperimentConfig::from_path(&config)?;
            let manifest = run_study(&config, &opts)?;
            println!(
                "study {} finished: {} sweep point(s) in {:.1} s, results in {}",
                manifest.study.name(),
                manifest.points.len(),
                manifest.wall_clock_seconds,
                opts.out_dir.display()
            );
            for p in &manifest.points {
                println!("  {:<28} best cost {:.6e}", p.point.label(), p.best_cost);
            }
        }
        Command::Diagnose { config, flags } => {
            install_workers(&flags);
            let opts = options(&flags);
            let config = ExperimentConfig::from_path(&config)?;
            let report = diagnose_trajectory(&config, &opts)?;
            println!(
                "gap {:.6e}, T_QSL {:.6e}, T {:.6e}",
                report.gap_min, report.t_qsl, report.total_time
            );
            println!(
                "linear ramp: final P_tot {:.6e}, final infidelity {:.6e}",
                report.linear_final_p_tot, report.linear_final_infidelity
            );
            if let (Some(p), Some(f)) = (report.optimized_final_p_tot, report.optimized_final_infidelity) {
                println!("optimized pulse: final P_tot {p:.6e}, final infidelity {f:.6e}");
            }
            println!("trajectories written to {}", opts.out_dir.display());
        }
        Command::Replay { pulse, config, flags } => {
            install_workers(&flags);
            let opts = options(&flags);
            let config = ExperimentConfig::from_path(&config)?;
            let report = replay_pulse(&pulse, &config, &opts)?;
            println!(
                "stored cost {:.16e}, recomputed {:.16e} ({} steps{})",
                report.stored_cost,
                report.recomputed_cost,
                report.n_steps,
                if report.exact { ", verified to 1e-12 relative" } else { "" }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
