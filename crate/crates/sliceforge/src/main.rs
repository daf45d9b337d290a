//! sliceforge CLI: scenario authoring, agent training, evaluation runs and
//! CDF comparison reports for the closed-loop slicing simulator.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use sliceforge::commands::{
    cmd_config_default, cmd_report, cmd_run, cmd_train, ReportOpts, RunOpts, TrainOpts,
};

#[derive(Parser)]
#[command(name = "sliceforge", version, about = "Closed-loop RAN slicing simulator with RL-driven PRB allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit configuration documents
    Config {
        #[command(subcommand)]
        what: ConfigCmd,
    },
    /// Train an agent: surrogate pre-training, then online epochs
    Train {
        /// Agent kind: ppo or dqn
        #[arg(long)]
        agent: String,
        /// Scenario file; omitted means the default deployment
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Seed override (also selects the default scenario's roster draws)
        #[arg(long)]
        seed: Option<u64>,
        /// Surrogate pre-training steps (0 skips the phase)
        #[arg(long, default_value_t = 20_000)]
        pretrain_steps: u64,
        /// Online training epochs
        #[arg(long, default_value_t = 2_000)]
        epochs: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Do not record per-packet latency lists in the KPI log
        #[arg(long)]
        no_packet_latencies: bool,
        /// Dump a per-epoch channel trace CSV
        #[arg(long)]
        channel_trace: bool,
    },
    /// Evaluation run of a baseline or a trained checkpoint (no learning)
    Run {
        /// equal|prop|prealloc|pf|ppo:CKPT|dqn:CKPT
        #[arg(long)]
        policy: String,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 500)]
        epochs: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_packet_latencies: bool,
        #[arg(long)]
        channel_trace: bool,
    },
    /// Build CDF comparison CSVs from KPI logs
    Report {
        /// KPI logs, one per policy
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ConfigCmd {
    /// Print the default scenario as JSON
    Default {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn init_logging() {
    let level = std::env::var("SLICEFORGE_LOG_LEVEL").unwrap_or_else(|_| "info".into());
    let mut builder = env_logger::Builder::new();
    builder.parse_filters(&level);
    builder.format_timestamp(None);
    let _ = builder.try_init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Config { what } => match what {
            ConfigCmd::Default { seed } => cmd_config_default(seed, &mut std::io::stdout().lock()),
        },
        Command::Train {
            agent,
            scenario,
            seed,
            pretrain_steps,
            epochs,
            out,
            no_packet_latencies,
            channel_trace,
        } => cmd_train(&TrainOpts {
            agent,
            scenario,
            seed,
            pretrain_steps,
            epochs,
            out,
            packet_latencies: !no_packet_latencies,
            channel_trace,
        }),
        Command::Run {
            policy,
            scenario,
            seed,
            epochs,
            out,
            no_packet_latencies,
            channel_trace,
        } => cmd_run(&RunOpts {
            policy,
            scenario,
            seed,
            epochs,
            out,
            packet_latencies: !no_packet_latencies,
            channel_trace,
        }),
        Command::Report { inputs, out } => cmd_report(&ReportOpts { inputs, out }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
