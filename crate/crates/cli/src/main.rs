//! `refloc`: simulate rooms, estimate early reflections from 32-channel
//! recordings, score them, and synthesize parametric RIRs.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Usage;

#[derive(Parser)]
#[command(name = "refloc", version, about = "Early-reflection estimation with a spherical microphone array")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "room")]
    scenario: Option<PathBuf>,
    /// Bundled room scenario (1-5).
    #[arg(long)]
    room: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Image-source simulation: array recording, ground truth and summary.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Overrides the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate reflections from a multichannel WAV.
    Estimate {
        /// Recording WAV, one channel per microphone.
        #[arg(long)]
        input: PathBuf,
        /// Estimator config or scenario JSON (array and algorithm sections).
        #[arg(long, conflicts_with = "room")]
        config: Option<PathBuf>,
        /// Use the settings of a bundled room scenario.
        #[arg(long)]
        room: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimates CSV against a ground-truth CSV.
    Eval {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tol_tau_ms: f64,
        #[arg(long, default_value_t = 15.0)]
        tol_omega_deg: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parametric RIR from room-acoustics parameters, optionally with the
    /// early part replaced by estimates.
    Synth {
        /// Parameters JSON (volume, t60, drr_db, direct_doa_deg).
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long, default_value_t = 48_000.0)]
        fs: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the room table (1) or the detection table (2).
    Reproduce {
        #[arg(long)]
        table: u8,
        /// Only this room.
        #[arg(long)]
        room: Option<usize>,
        /// Overrides every scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => {
            commands::simulate_cmd(scenario.scenario.as_deref(), scenario.room, seed, &out)
        }
        Command::Estimate { input, config, room, out } => commands::estimate_cmd(&input, config.as_deref(), room, &out),
        Command::Eval {
            estimates,
            truth,
            tol_tau_ms,
            tol_omega_deg,
            out,
        } => {
            let r = commands::eval_cmd(&estimates, &truth, tol_tau_ms, tol_omega_deg, &out)?;
            println!(
                "PD {:.1}% PFA {:.1}% ({} of {} reflections, {} detections)",
                r.pd_percent, r.pfa_percent, r.counts.true_positives, r.counts.truth, r.counts.detections
            );
            Ok(())
        }
        Command::Synth {
            params,
            estimates,
            fs,
            seed,
            out,
        } => commands::synth_cmd(&params, estimates.as_deref(), fs, seed, &out),
        Command::Reproduce { table, room, seed, out } => commands::reproduce_cmd(table, room, seed, &out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<Usage>().is_some() || e.downcast_ref::<refloc::Error>().is_some_and(|e| e.is_validation())
    });
    if validation {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
