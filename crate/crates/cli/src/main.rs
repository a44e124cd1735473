//! `hiercode`: build hierarchical codes from config files, store files as
//! simulated cloud shards, inject failures, and reshape stored codes.

mod cmd;
mod error;
mod pack;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hiercode", version, about = "Multi-level access codes over simulated clouds")]
struct Cli {
    /// Print decode traces, protocol messages and shard IO as JSON lines on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a code config, print its distance matrix, optionally write the full artifact.
    Build {
        config: PathBuf,
        /// Where to write the artifact (config with every evaluation point spelled out).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Encode a file into a shard directory, one stripe per `sum(k)` symbols.
    Encode {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read one cloud's message, or with no `--cloud` the whole file.
    Read {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        shards: PathBuf,
        /// Cloud label (`2`, `1.2`, `1a`), 1-based index, or `x,i` for three levels.
        #[arg(long)]
        cloud: Option<String>,
        /// Only this stripe (0-based).
        #[arg(long)]
        stripe: Option<usize>,
        /// Output file for whole-file reads; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Mark servers failed in every stripe of a shard directory.
    Fail {
        #[arg(long)]
        shards: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clear all failure flags first.
        #[arg(long)]
        heal: bool,
    },
    /// Monte Carlo reads of one cloud under a failure model.
    Trials {
        #[arg(long)]
        code: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Defaults to the config's seed, else 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "1")]
        cloud: String,
        /// Print the statistics as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Add an empty cloud `n,k,delta` to a stored two-level code.
    Scale {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        shards: PathBuf,
        #[arg(long)]
        new: String,
        /// Where to write the grown code's artifact.
        #[arg(long)]
        out_code: PathBuf,
    },
    /// Split one cloud of a stored two-level code into halves `n,k,delta`.
    Split {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        shards: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        out_code: PathBuf,
    },
}

/// Exactly one failure model.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    /// Explicit servers as `CLOUD/SERVER`, comma-separated, servers 1-based (`1/2,1/5`).
    #[arg(long)]
    servers: Option<String>,
    /// This many random servers in every cloud.
    #[arg(long)]
    per_cloud: Option<usize>,
    /// `CLOUD:COUNT`: this many random servers in one cloud.
    #[arg(long)]
    in_cloud: Option<String>,
    /// Independent failure probability per server.
    #[arg(long)]
    iid: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let v = cli.verbose;
    let result = match cli.command {
        Command::Build { config, out } => cmd::build(&config, out.as_deref()),
        Command::Encode { code, input, out } => cmd::encode(&code, &input, &out),
        Command::Read { code, shards, cloud, stripe, out } => {
            cmd::read(&code, &shards, cloud.as_deref(), stripe, out.as_deref(), v)
        }
        Command::Fail { shards, model, seed, heal } => cmd::fail(&shards, &model, seed, heal),
        Command::Trials { code, model, trials, seed, cloud, json } => {
            cmd::trials(&code, &model, trials, seed, &cloud, json)
        }
        Command::Scale { code, shards, new, out_code } => {
            cmd::scale(&code, &shards, &new, &out_code, v)
        }
        Command::Split { code, shards, target, a, b, out_code } => {
            cmd::split(&code, &shards, &target, &a, &b, &out_code, v)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.category.exit_code() as u8)
        }
    }
}
