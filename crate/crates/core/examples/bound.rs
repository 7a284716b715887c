//! The window-transfer bound constant as the window sizes change, and the
//! check for an untrained desk network.
//!
//! cargo run --release --example bound -- [samples]

use stlab::convnet::{Architecture, NetworkParams};
use stlab::experiment::bound_experiment;
use stlab::metrics::{bound_constant, BoundInputs};
use stlab::mtt_sim::SimParams;

fn main() -> stlab::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    println!("constant for B=64, L=6, K=5, H=2, d=2:");
    for a in [64.0, 74.0, 84.0, 94.0] {
        let inputs = BoundInputs {
            input_width: a,
            output_width: 64.0,
            layers: 6,
            filter_width: 5.0,
            dim: 2,
            filter_norm_product: 2.0,
            input_second_moment: 1.0,
        };
        println!("  A = {a:>3}: C = {:.4}", bound_constant(&inputs));
    }

    let sim = SimParams::default();
    let params = NetworkParams::<f32>::init(&Architecture::desk(20), 0)?;
    let report = bound_experiment(&params, &sim, 20, samples, 2.0, 15, 0)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}
