use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod failure;

use commands::{FockArgs, ProtocolArgs, SimArgs, SweepArgs, SynthArgs};
use failure::Failure;

/// Collision waveforms for laser-free ion cooling: synthesis, simulation,
/// protocol bookkeeping.
#[derive(Parser)]
#[command(name = "ioncool", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a collision or merge waveform.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "sbs")]
        kind: commands::Kind,
        /// Merge start separation in l0 (defaults to combine.r_start_l0).
        #[arg(long)]
        r_start: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a waveform file.
    Sim {
        #[arg(long)]
        waveform: PathBuf,
        #[arg(long, value_enum, default_value = "gaussian")]
        method: commands::Method,
        /// Qubit state: vacuum, thermal:N, fock:N, coherent:N, squeezed:DB.
        #[arg(long, default_value = "thermal:5")]
        input: String,
        #[arg(long, default_value = "vacuum")]
        coolant: String,
        /// Configuration used for hbar in the Fock model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "off")]
        cubic: commands::Switch,
        #[arg(long, value_enum, default_value = "taylor")]
        sign: commands::Sign,
        /// Per-mode Fock cutoff (default from the input occupation).
        #[arg(long)]
        cutoff: Option<usize>,
        /// Comma-separated cutoff ladder for a convergence table.
        #[arg(long, value_delimiter = ',')]
        cutoffs: Vec<usize>,
        #[arg(long)]
        step: Option<f64>,
        /// Coherent-phase samples to average a coherent qubit input over.
        #[arg(long, default_value_t = 1)]
        phases: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan and simulate the ground-state qubit pair sequence.
    Protocol {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2)]
        coolants: usize,
        #[arg(long, default_value_t = 0.0)]
        transport_heating: f64,
        #[arg(long, default_value_t = 0.0)]
        transport_duration: f64,
        #[arg(long, default_value = "vacuum")]
        q1: String,
        #[arg(long, default_value = "thermal:5")]
        q2: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate collision figures of merit against the ansatz width.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "sigma")]
        param: commands::SweepParam,
        /// Comma-separated values; `sqrt(x)` is accepted.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a manifest and compare artifact digests.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the fresh artifacts (default: a temporary directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    match cli.command {
        Command::Synth {
            config,
            kind,
            r_start,
            out,
        } => {
            let cfg = failure::load_config(&config)?;
            commands::synth(&cfg, &SynthArgs { kind, r_start }, &out)
        }
        Command::Sim {
            waveform,
            method,
            input,
            coolant,
            config,
            cubic,
            sign,
            cutoff,
            cutoffs,
            step,
            phases,
            out,
        } => {
            let cfg = match &config {
                Some(p) => Some(failure::load_config(p)?),
                None => None,
            };
            let args = SimArgs {
                waveform: failure::absolute(&waveform)?,
                waveform_sha256: String::new(),
                method,
                input,
                coolant,
                fock: FockArgs {
                    cubic,
                    sign,
                    cutoff,
                    cutoffs,
                    step,
                    phases,
                },
            };
            commands::sim(cfg.as_ref(), args, &out)
        }
        Command::Protocol {
            config,
            coolants,
            transport_heating,
            transport_duration,
            q1,
            q2,
            out,
        } => {
            let cfg = failure::load_config(&config)?;
            let args = ProtocolArgs {
                coolants,
                transport_heating,
                transport_duration,
                q1,
                q2,
            };
            commands::protocol(&cfg, &args, &out)
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = failure::load_config(&config)?;
            commands::sweep(&cfg, &SweepArgs { param, values }, &out)
        }
        Command::Replay { manifest, out } => commands::replay(&manifest, out.as_deref()),
    }
}

// A closed pipe on stdout is not an error worth a panic.
fn emit(summary: &serde_json::Value) {
    let text = serde_json::to_string_pretty(summary).unwrap_or_default();
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            emit(&summary);
            ExitCode::SUCCESS
        }
        Err(f) => {
            if let Some(summary) = &f.summary {
                emit(summary);
            }
            let _ = writeln!(std::io::stderr().lock(), "{}", f.to_json());
            ExitCode::from(f.code)
        }
    }
}
