//! Compares backpropagated gradients of a small network with central
//! finite differences.
//!
//! cargo run --release --example gradient_check

use stlab::convnet::{backward, forward, Architecture, LayerSpec, NetworkParams, Nonlinearity, Tensor};

fn probe(p: &NetworkParams<f64>, x: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    let y = forward(p, x).unwrap();
    y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

fn main() -> stlab::Result<()> {
    let act = Nonlinearity::Tanh;
    let arch = Architecture::new(
        2,
        vec![
            LayerSpec::encoder(2, 4, 3, 2).with_nonlinearity(act),
            LayerSpec::hidden(4, 4, 3).with_nonlinearity(act),
            LayerSpec::decoder(4, 1, 3, 2).with_nonlinearity(Nonlinearity::Identity),
        ],
    )?;
    let params = NetworkParams::<f64>::init(&arch, 3)?;
    let x = Tensor::new(2, 16, 16, (0..512).map(|i| ((i * 7919) % 97) as f64 / 48.5 - 1.0).collect())?;
    let r = Tensor::new(1, 16, 16, (0..256).map(|i| ((i * 104_729) % 89) as f64 / 44.5 - 1.0).collect())?;
    let analytic = backward(&params, &x, &r)?;

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (li, layer) in params.layers.iter().enumerate() {
        for j in 0..layer.weight.len() {
            let mut up = params.clone();
            up.layers[li].weight[j] += h;
            let mut down = params.clone();
            down.layers[li].weight[j] -= h;
            let numeric = (probe(&up, &x, &r) - probe(&down, &x, &r)) / (2.0 * h);
            let a = analytic.layers[li].weight[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
    }
    println!("{} parameters, max relative error {worst:.3e}", params.num_params());
    Ok(())
}
