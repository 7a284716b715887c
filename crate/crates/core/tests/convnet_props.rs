mod common;

use proptest::prelude::*;
use stlab::convnet::{forward, Architecture, LayerSpec, NetworkParams, Nonlinearity, Padding};

use common::*;

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5 {
        let (e64, e32) = gradient_errors(seed);
        assert!(e64 < 1e-6, "seed {seed}: 64-bit error {e64:.3e}");
        assert!(e32 < 1e-3, "seed {seed}: 32-bit error {e32:.3e}");
    }
}

#[test]
fn toy_architectures_stay_small() {
    for seed in 0..50 {
        let a = toy_architecture(seed);
        assert!(a.layers.len() <= 4);
        assert!(a.layers.iter().all(|l| l.in_features <= 8 && l.out_features <= 8));
        assert_eq!(a.trace_length(16).unwrap().last(), Some(&16));
    }
}

#[test]
fn unpadded_network_is_shift_equivariant() {
    let p = unpadded_network(3);
    assert_eq!(p.arch.total_downsample(), 8);
    for seed in 0..20 {
        let dev = shift_deviation(&p, 96, 8, seed);
        assert!(dev < 1e-5, "seed {seed}: deviation {dev:.3e}");
    }
}

#[test]
fn shifts_off_the_resampling_grid_break_equivariance() {
    let p = unpadded_network(3);
    assert!(shift_deviation(&p, 64, 3, 0) > 1e-3);
}

#[test]
fn padding_free_margin_bounds_the_padded_region() {
    let p = NetworkParams::<f64>::init(&Architecture::desk(2), 1).unwrap();
    let (margin, extent) = p.arch.padding_free_margin(64).unwrap();
    assert!(margin > 0 && extent > 0 && 2 * margin < 64);
    // the interior of a window equals the same pixels cut from a bigger window
    let big = normal_tensor::<f64>(2, 96, 96, 5, 0);
    let small = {
        let mut data = Vec::new();
        for c in 0..2 {
            for y in 16..80 {
                let row = (c * 96 + y) * 96;
                data.extend_from_slice(&big.data[row + 16..row + 80]);
            }
        }
        stlab::convnet::Tensor::new(2, 64, 64, data).unwrap()
    };
    let a = forward(&p, &small).unwrap();
    let b = forward(&p, &big).unwrap();
    let mut worst = 0.0f64;
    for y in margin..64 - margin {
        for x in margin..64 - margin {
            worst = worst.max((a.data[y * 64 + x] - b.data[(y + 16) * 96 + x + 16]).abs());
        }
    }
    assert!(worst < 1e-9, "interior deviation {worst:.3e}");
}

fn lipschitz_net(seed: u64, padding: Padding) -> NetworkParams<f64> {
    let act = Nonlinearity::LeakyRelu { slope: 0.1 };
    let layers = vec![
        LayerSpec::encoder(2, 4, 3, 2).with_padding(padding).with_nonlinearity(act),
        LayerSpec::hidden(4, 5, 3).with_padding(padding).with_nonlinearity(Nonlinearity::Tanh),
        LayerSpec::decoder(5, 1, 3, 2).with_padding(padding),
    ];
    NetworkParams::init(&Architecture::new(2, layers).unwrap(), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_differences_are_bounded_by_the_filter_norms(seed in 0u64..1000, same in any::<bool>(), scale in 0.01f64..3.0) {
        let p = lipschitz_net(seed, if same { Padding::ZeroSame } else { Padding::None });
        let x = normal_tensor::<f64>(2, 24, 24, seed, 1);
        let mut y = normal_tensor::<f64>(2, 24, 24, seed, 2);
        for (v, u) in y.data.iter_mut().zip(&x.data) {
            *v = u + scale * *v;
        }
        let (fx, fy) = (forward(&p, &x).unwrap(), forward(&p, &y).unwrap());
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let lhs = dist(&fx.data, &fy.data);
        let rhs = p.filter_l1_product() * dist(&x.data, &y.data);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{} > {}", lhs, rhs);
    }
}
