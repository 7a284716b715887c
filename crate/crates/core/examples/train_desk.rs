//! Trains the desk network on freshly simulated 1 km windows and evaluates
//! it at 1 km and 2 km.
//!
//! cargo run --release --example train_desk -- [n_sims] [epochs] [eval_samples]

use std::time::Instant;

use stlab::convnet::{train_from, NetworkParams, PairSource, TrainConfig};
use stlab::experiment::{transfer_eval, ExperimentConfig};
use stlab::mtt_sim::FrameDataset;

fn main() -> stlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::desk();
    cfg.data.n_sims = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    cfg.train.epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let eval_samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let t = Instant::now();
    let d = &cfg.data;
    let data = FrameDataset::generate(&cfg.sim, d.n_sims, 0, d.n_steps, cfg.seeds.data, d.depth)?;
    println!("{} pairs simulated in {:.1}s", data.len(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let config = TrainConfig { seed: cfg.seeds.train, ..cfg.train.clone() };
    let init = NetworkParams::init(&cfg.arch, config.seed)?;
    let report = train_from(&data, init, &config, |epoch, loss| {
        println!("epoch {:>2}  loss {loss:.6e}  {:.1}s", epoch + 1, t.elapsed().as_secs_f64());
    })?;

    let e = &cfg.eval;
    for width in [1.0, 2.0] {
        let t = Instant::now();
        let row = transfer_eval(&report.params, &cfg.sim, width, eval_samples, d.depth, e.margin, e.ospa_cutoff, e.extract, cfg.seeds.eval)?;
        println!(
            "T = {width} km  mse {:.4e} ± {:.1e}  ospa {:.1} ± {:.1} m  ({:.1}s)",
            row.mse_mean,
            row.mse_ci95,
            row.ospa_mean,
            row.ospa_ci95,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
