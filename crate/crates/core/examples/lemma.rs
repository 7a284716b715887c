//! Randomised check of the layer-wise truncation inequality on 1-D
//! bias-free networks.
//!
//! cargo run --release --example lemma -- [trials]

use stlab::convnet::{Architecture, LayerSpec, NetworkParams, Nonlinearity, Padding};
use stlab::metrics::verify_lemma1;

fn main() -> stlab::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    for (kernels, a, b) in [(vec![3, 3], 21.0, 11.0), (vec![5, 3, 3], 31.0, 9.0), (vec![7], 15.0, 15.0)] {
        let layers = kernels
            .iter()
            .map(|&k| {
                LayerSpec::hidden(1, 1, k)
                    .with_bias(false)
                    .with_padding(Padding::None)
                    .with_nonlinearity(Nonlinearity::Tanh)
            })
            .collect();
        let params = NetworkParams::<f64>::init(&Architecture::new(1, layers)?, 7)?;
        let r = verify_lemma1(&params, 81, a, b, trials, 1)?;
        println!(
            "kernels {kernels:?} A={a} B={b}: held {}/{}  min margin {:.3e}  mean margin {:.3e}",
            r.held, r.trials, r.min_margin, r.mean_margin
        );
    }
    Ok(())
}
