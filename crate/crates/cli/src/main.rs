use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crpo::evalbench::Decode;
use crpo::types::ObservationChannel;
use crpo_cli::commands::{
    cmd_eval, cmd_sweep, cmd_train, cmd_verify, EvalArgs, PairSource, VerifyArgs,
};
use crpo_cli::CliError;

/// Train, evaluate, sweep and self-check dual-branch counterfactual policy
/// optimization on a synthetic world.
///
/// Outputs go under the config's `output_dir` unless CRPO_OUTPUT_DIR is set.
#[derive(Parser)]
#[command(name = "crpo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write diagnostics.csv, policy.json and run.json.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a policy on paired questions, one report per channel.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        /// JSON-lines manifest of pair records.
        #[arg(long, conflicts_with = "synthetic")]
        manifest: Option<PathBuf>,
        /// Generate pairs from the config's world (the default).
        #[arg(long)]
        synthetic: bool,
        /// Repeatable; defaults to the config's channels.
        #[arg(long = "channel", value_parser = parse_channel)]
        channels: Vec<ObservationChannel>,
        /// Config supplying the world, pair count, seed and output root.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write reports here instead of `<output root>/eval`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sample answers with this seed instead of decoding greedily.
        #[arg(long)]
        sample_seed: Option<u64>,
    },
    /// Train and evaluate once per value of the config's sweep section.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the numerical self-checks and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, hide = true)]
        inject_sample_std: bool,
    },
}

fn parse_channel(s: &str) -> Result<ObservationChannel, String> {
    s.parse().map_err(|e: crpo::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = &mut std::io::stdout().lock();
    match cli.command {
        Command::Train { config } => cmd_train(&config, stdout),
        Command::Eval {
            policy,
            manifest,
            synthetic: _,
            channels,
            config,
            out,
            sample_seed,
        } => {
            let args = EvalArgs {
                policy,
                source: manifest.map_or(PairSource::Synthetic, PairSource::Manifest),
                channels,
                config,
                out_dir: out,
                decode: sample_seed.map_or(Decode::Greedy, |seed| Decode::Sample { seed }),
            };
            cmd_eval(&args, stdout)
        }
        Command::Sweep { config } => cmd_sweep(&config, stdout),
        Command::Verify {
            seed,
            trials,
            inject_sample_std,
        } => cmd_verify(
            &VerifyArgs {
                seed,
                trials,
                inject_sample_std,
            },
            stdout,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
