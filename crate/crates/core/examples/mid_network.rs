//! Trains a small placement network to imitate the relay heuristic, then
//! compares the two placers on fresh scenarios.
//!
//! At the default size the targets are so sparse that the network settles
//! near an all-zero image and places no relays; it needs far more scenarios
//! and epochs before its count estimate reaches the heuristic's.
//!
//! cargo run --release --example mid_network -- [train_scenarios] [epochs]

use stlab::convnet::{train, Architecture, Tensor, TrainConfig, VecPairs};
use stlab::mid::{
    evaluate_mid, gen_task_config, heuristic_placer, padded_window, ChannelParams, MidRow, Placer, DEFAULT_MAX_HOP,
    TASK_RESOLUTION, TASK_SIGMA,
};
use stlab::raster::rasterize_gaussian;

fn main() -> stlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let width = 320.0;
    let arch = Architecture::encoder_decoder(2, 1, 1, 4, (5, 8, 2), 2, (3, 16))?;
    let (window, _) = padded_window(width, TASK_RESOLUTION, arch.total_downsample())?;

    let mut pairs = Vec::new();
    for i in 0..n {
        let s = gen_task_config(width, 100, i)?;
        let comm = heuristic_placer(&s.task_agents, DEFAULT_MAX_HOP)?;
        let x = rasterize_gaussian(&s.task_agents, &window, TASK_SIGMA)?;
        let y = rasterize_gaussian(&comm, &window, TASK_SIGMA)?;
        pairs.push((Tensor::from_image(&x)?, Tensor::from_image(&y)?));
    }
    let config = TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: 5e-3,
        weight_decay: 0.0,
        seed: 1,
        loss_margin: 0,
    };
    let report = train(&VecPairs::new(pairs), &arch, &config)?;
    for (e, l) in report.loss_history.iter().enumerate() {
        println!("epoch {:>2}  loss {l:.4e}", e + 1);
    }

    let ch = ChannelParams::default();
    println!("placer,{}", MidRow::CSV_HEADER);
    for (name, placer) in [
        ("heuristic", Placer::Heuristic { max_hop: DEFAULT_MAX_HOP }),
        ("network", Placer::Network(&report.params)),
    ] {
        for row in evaluate_mid(placer, &[width], 20, &ch, 0)? {
            println!("{name},{}", row.to_csv());
        }
    }
    Ok(())
}
