//! Checks shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use stlab::convnet::{
    backward, forward, Architecture, LayerSpec, NetworkParams, Nonlinearity, Padding, Real, Tensor, UpsampleMode,
};
use stlab::rng;

pub fn normal_tensor<T: Real>(channels: usize, h: usize, w: usize, seed: u64, stream: u64) -> Tensor<T> {
    let mut r = rng::stream(seed, stream);
    let data = (0..channels * h * w)
        .map(|_| T::from_f64_lossy(r.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::new(channels, h, w, data).unwrap()
}

/// A small random 2-D network with smooth activations: at most 4 layers and
/// 8 channels, mixing resampling, padding, bias and upsampling choices.
pub fn toy_architecture(seed: u64) -> Architecture {
    let mut r = rng::stream(seed, 1);
    let mut f = r.gen_range(1..=3);
    let act = Nonlinearity::Tanh;
    let mut layers = Vec::new();
    let resample = r.gen_bool(0.6);
    let hidden = r.gen_range(if resample { 0..=2 } else { 1..=4 });
    if resample {
        let g = r.gen_range(2..=8);
        let k = [3, 5][r.gen_range(0..2)];
        layers.push(LayerSpec::encoder(f, g, k, 2).with_nonlinearity(act).with_bias(r.gen()));
        f = g;
    }
    for _ in 0..hidden {
        let g = r.gen_range(1..=8);
        let k = [1, 3, 5][r.gen_range(0..3)];
        layers.push(LayerSpec::hidden(f, g, k).with_nonlinearity(act).with_bias(r.gen()));
        f = g;
    }
    if resample {
        let mode = if r.gen() { UpsampleMode::Transposed } else { UpsampleMode::NearestConv };
        let k = [3, 5][r.gen_range(0..2)];
        layers.push(
            LayerSpec::decoder(f, r.gen_range(1..=2), k, 2)
                .with_nonlinearity(Nonlinearity::Identity)
                .with_upsample(mode)
                .with_bias(r.gen()),
        );
    }
    Architecture::new(2, layers).unwrap()
}

fn perturbed(params: &NetworkParams<f64>, j: usize, delta: f64) -> NetworkParams<f64> {
    let mut p = params.clone();
    let mut j = j;
    for l in &mut p.layers {
        if j < l.weight.len() {
            l.weight[j] += delta;
            return p;
        }
        j -= l.weight.len();
        if let Some(b) = &mut l.bias {
            if j < b.len() {
                b[j] += delta;
                return p;
            }
            j -= b.len();
        }
    }
    panic!("parameter index out of range");
}

fn probe(params: &NetworkParams<f64>, x: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    let out = forward(params, x).unwrap();
    out.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

/// Central differences of `<r, f(x)>` in 64-bit arithmetic.
pub fn finite_difference(params: &NetworkParams<f64>, x: &Tensor<f64>, r: &Tensor<f64>, step: f64) -> Vec<f64> {
    (0..params.num_params())
        .map(|j| {
            let up = probe(&perturbed(params, j, step), x, r);
            let down = probe(&perturbed(params, j, -step), x, r);
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest relative error, with the denominator floored at `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub const GRAD_FLOOR: f64 = 1e-3;

/// Max relative gradient error of a random toy network on a 16×16 input,
/// for the 64-bit and the 32-bit backward pass. Both are compared against
/// 64-bit central differences.
pub fn gradient_errors(seed: u64) -> (f64, f64) {
    let arch = toy_architecture(seed);
    let p64 = NetworkParams::<f64>::init(&arch, seed).unwrap();
    let p32: NetworkParams<f32> = p64.cast();
    let p64: NetworkParams<f64> = p32.cast();
    let x32: Tensor<f32> = normal_tensor(arch.in_features(), 16, 16, seed, 2);
    let x64: Tensor<f64> = x32.cast();
    let out_shape = forward(&p64, &x64).unwrap();
    let r32: Tensor<f32> = normal_tensor(out_shape.channels, out_shape.height, out_shape.width, seed, 3);
    let r64: Tensor<f64> = r32.cast();
    let numeric = finite_difference(&p64, &x64, &r64, 1e-5);
    let g64 = backward(&p64, &x64, &r64).unwrap().flatten();
    let g32: Vec<f64> = backward(&p32, &x32, &r32).unwrap().flatten().iter().map(|&v| v as f64).collect();
    (
        max_relative_error(&g64, &numeric, GRAD_FLOOR),
        max_relative_error(&g32, &numeric, GRAD_FLOOR),
    )
}

/// Three-level padding-free encoder/decoder network.
pub fn unpadded_network(seed: u64) -> NetworkParams<f64> {
    let layers = vec![
        LayerSpec::encoder(2, 4, 3, 2).with_padding(Padding::None),
        LayerSpec::encoder(4, 4, 3, 2).with_padding(Padding::None),
        LayerSpec::encoder(4, 6, 3, 2).with_padding(Padding::None),
        LayerSpec::hidden(6, 6, 3).with_padding(Padding::None),
        LayerSpec::decoder(6, 4, 3, 2).with_padding(Padding::None),
        LayerSpec::decoder(4, 4, 3, 2).with_padding(Padding::None),
        LayerSpec::decoder(4, 1, 3, 2)
            .with_padding(Padding::None)
            .with_nonlinearity(Nonlinearity::Identity),
    ];
    NetworkParams::init(&Architecture::new(2, layers).unwrap(), seed).unwrap()
}

fn crop_at<T: Real>(t: &Tensor<T>, top: usize, left: usize, h: usize, w: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(t.channels * h * w);
    for c in 0..t.channels {
        for y in top..top + h {
            let row = (c * t.height + y) * t.width;
            data.extend_from_slice(&t.data[row + left..row + left + w]);
        }
    }
    Tensor::new(t.channels, h, w, data).unwrap()
}

/// Largest deviation between the network output on a window and the
/// output on the same window moved by `shift` pixels in both directions.
/// Only outputs that read no truncated border values in either window are
/// compared.
pub fn shift_deviation(params: &NetworkParams<f64>, n: usize, shift: usize, seed: u64) -> f64 {
    let big: Tensor<f64> = normal_tensor(params.arch.in_features(), n + shift, n + shift, seed, 9);
    let a = forward(params, &crop_at(&big, 0, 0, n, n)).unwrap();
    let b = forward(params, &crop_at(&big, shift, shift, n, n)).unwrap();
    let (margin, _) = params.arch.padding_free_margin(n).unwrap();
    assert!(a.height > 2 * margin + shift, "window too small for the shift");
    let len = a.height - 2 * margin - shift;
    let a = crop_at(&a, margin + shift, margin + shift, len, len);
    let b = crop_at(&b, margin, margin, len, len);
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
