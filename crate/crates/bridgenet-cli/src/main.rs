//! `bridgenet` command-line pipeline.
//!
//! Subcommands: `synth`, `hazard`, `mc`, `dataset`, `train`, `predict`,
//! `evaluate`, `experiment {ratio|perturb|transfer}`. All but `synth` are
//! driven by a TOML config (`--config`), with `--seed`, `--threads` and
//! `--out` overrides. Logging level comes from `BRIDGENET_LOG`
//! (error|warn|info|debug). Errors are reported as a single
//! machine-parseable `error: ...` line on stderr with a nonzero exit code.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Overrides;

#[derive(Parser)]
#[command(
    name = "bridgenet",
    version,
    about = "Seismic connectivity reliability of bridge networks: Monte Carlo oracle and GNN surrogate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's global seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Cap worker threads (default: machine parallelism).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Override the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic network as csv-pair files.
    Synth {
        /// Node count.
        #[arg(long)]
        nodes: usize,
        /// Edge count (at least nodes - 1).
        #[arg(long)]
        edges: usize,
        /// Bridge count.
        #[arg(long)]
        bridges: usize,
        /// Generator seed.
        #[arg(long, value_name = "U64", default_value_t = 0)]
        seed: u64,
        /// Extend this existing csv-pair network into a superset with the
        /// requested totals instead of generating from scratch.
        #[arg(long, value_name = "DIR")]
        extend: Option<PathBuf>,
        /// Output directory for nodes.csv / edges.csv / bridges.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Cap worker threads (accepted for interface symmetry).
        #[arg(long, value_name = "N")]
        threads: Option<usize>,
    },
    /// Ground-motion intensities and failure probabilities for one scenario.
    Hazard {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo connectivity estimates for the configured targets.
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Generate the labeled training/test dataset directory.
    Dataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train the surrogate on the stored dataset.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Predict connectivity probabilities with a trained model.
    Predict {
        #[command(flatten)]
        common: Common,
    },
    /// Score the trained model against held-out Monte Carlo labels.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluation protocols beyond plain accuracy.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Sweep training-target ratios against a fixed test set.
    Ratio {
        #[command(flatten)]
        common: Common,
    },
    /// Gaussian perturbation of edge probabilities, no retraining.
    Perturb {
        #[command(flatten)]
        common: Common,
    },
    /// Train on a synthetic base network, evaluate frozen on a superset.
    Transfer {
        #[command(flatten)]
        common: Common,
    },
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if n > 0 {
            // a second build_global in one process is an error; ignore it
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run_with_config(
    common: &Common,
    f: impl FnOnce(&config::RunConfig) -> bridgenet::Result<()>,
) -> bridgenet::Result<()> {
    init_threads(common.threads);
    let cfg = commands::load_config(
        &common.config,
        &Overrides {
            seed: common.seed,
            out: common.out.clone(),
        },
    )?;
    f(&cfg)
}

fn dispatch(cli: Cli) -> bridgenet::Result<()> {
    match cli.command {
        Command::Synth {
            nodes,
            edges,
            bridges,
            seed,
            extend,
            out,
            threads,
        } => {
            init_threads(threads);
            commands::cmd_synth(nodes, edges, bridges, seed, extend.as_deref(), &out)
        }
        Command::Hazard { common } => run_with_config(&common, commands::cmd_hazard),
        Command::Mc { common } => run_with_config(&common, commands::cmd_mc),
        Command::Dataset { common } => run_with_config(&common, commands::cmd_dataset),
        Command::Train { common } => run_with_config(&common, commands::cmd_train),
        Command::Predict { common } => run_with_config(&common, commands::cmd_predict),
        Command::Evaluate { common } => run_with_config(&common, commands::cmd_evaluate),
        Command::Experiment { which } => match which {
            ExperimentCommand::Ratio { common } => {
                run_with_config(&common, commands::cmd_experiment_ratio)
            }
            ExperimentCommand::Perturb { common } => {
                run_with_config(&common, commands::cmd_experiment_perturb)
            }
            ExperimentCommand::Transfer { common } => {
                run_with_config(&common, commands::cmd_experiment_transfer)
            }
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("BRIDGENET_LOG", "warn")
            .write_style("BRIDGENET_LOG_STYLE"),
    )
    .init();

    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
