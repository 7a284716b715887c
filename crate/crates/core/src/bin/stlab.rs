use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stlab::experiment::{
    cmd_bound, cmd_eval_transfer, cmd_mid, cmd_simulate, cmd_train, ExperimentConfig, Preset, Seeds,
};
use stlab::{Error, Result};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Parser, Debug)]
#[command(name = "stlab", version, about = "Window-transfer experiments for convolutional trackers")]
struct Cli {
    /// JSON laid over the preset; unknown keys are errors.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, env = "STLAB_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    preset: PresetArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a training dataset.
    Simulate,
    /// Train a network on a simulated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// MSE and OSPA of a trained network over window widths.
    EvalTransfer {
        #[arg(long)]
        model: PathBuf,
    },
    /// Check the large-window loss bound for a trained network.
    Bound {
        #[arg(long)]
        model: PathBuf,
    },
    /// Communication-agent placement sweep.
    Mid {
        /// Placement network; the relay heuristic when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let preset = match cli.preset {
        PresetArg::Desk => Preset::Desk,
        PresetArg::Paper => Preset::Paper,
    };
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, preset)?,
        None => ExperimentConfig::preset(preset),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = Seeds::all(seed);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let out = &cli.out;
    match cli.command {
        Command::Simulate => {
            let m = cmd_simulate(&cfg, out)?;
            eprintln!("wrote {} scenarios to {}", m.shards.len(), out.display());
        }
        Command::Train { data } => {
            let r = cmd_train(&cfg, &data, out)?;
            if let Some(l) = r.loss_history.last() {
                eprintln!("final loss {l:.6e}");
            }
        }
        Command::EvalTransfer { model } => {
            cmd_eval_transfer(&cfg, &model, out)?;
        }
        Command::Bound { model } => {
            let r = cmd_bound(&cfg, &model, out)?;
            println!(
                "window loss {:.6e}  C {:.4e}  bound {:.6e}  large-window loss {:.6e} ± {:.2e}  verdict {}",
                r.loss_window.mean, r.constant, r.bound_value, r.loss_large.mean, r.standard_error, r.verdict
            );
        }
        Command::Mid { model } => {
            if model.is_some() {
                cfg.mid.model = model;
            }
            for row in cmd_mid(&cfg, out)? {
                println!("{}", row.to_csv());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
