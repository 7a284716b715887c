//! Numerical check of the layer-wise truncation inequality behind the
//! window-transfer bound, on 1-D single-channel networks without padding.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::convnet::{forward, LayerKind, NetworkParams, Padding, Tensor};
use crate::error::{Error, Result};
use crate::rng;

/// Indicator of the `width`-wide window centred on position 0.
fn inside(t: isize, width: f64) -> bool {
    (t.unsigned_abs() as f64) <= (width - 1.0) / 2.0
}

fn check_setting(params: &NetworkParams<f64>) -> Result<usize> {
    let arch = &params.arch;
    if arch.dim != 1 {
        return Err(Error::invalid("the check runs on 1-D networks"));
    }
    let mut k_max = 1;
    for l in &arch.layers {
        if l.padding != Padding::None {
            return Err(Error::invalid("the check needs padding disabled on every layer"));
        }
        if l.bias || l.kind != LayerKind::Hidden {
            return Err(Error::invalid("the check needs bias-free stride-1 layers"));
        }
        if !l.nonlinearity.is_normalized_lipschitz() {
            return Err(Error::invalid("nonlinearity is not normalized Lipschitz"));
        }
        k_max = k_max.max(l.kernel);
    }
    Ok(k_max)
}

/// Both sides of the inequality for one signal. `signal` is centred on
/// its middle sample (odd length) and `a`, `b` are window widths in
/// samples. Returns `(‖⊓_B(x_L − x̃_L)‖, ‖⊓_{B+LK}(X − ⊓_A X)‖ · H)`, where
/// `x̃_L` is the output for the input truncated to the `a` window.
pub fn lemma1_sides(params: &NetworkParams<f64>, signal: &[f64], a: f64, b: f64) -> Result<(f64, f64)> {
    let k = check_setting(params)?;
    let n = signal.len();
    if n % 2 == 0 {
        return Err(Error::invalid("signal length must be odd"));
    }
    if !params.arch.layers.is_empty() && (params.arch.in_features() != 1 || params.arch.out_features() != 1) {
        return Err(Error::invalid("the check needs single-channel input and output"));
    }
    let c = (n / 2) as isize;
    let truncated: Vec<f64> = signal
        .iter()
        .enumerate()
        .map(|(i, &v)| if inside(i as isize - c, a) { v } else { 0.0 })
        .collect();
    let full = forward(params, &Tensor::new(1, 1, n, signal.to_vec())?)?;
    let cut = forward(params, &Tensor::new(1, 1, n, truncated.clone())?)?;
    let m = full.width;
    let co = (m / 2) as isize;
    if m % 2 == 0 || ((b - 1.0) / 2.0).floor() > co as f64 {
        return Err(Error::invalid("signal too short for the output window"));
    }
    let lhs = full
        .data
        .iter()
        .zip(&cut.data)
        .enumerate()
        .filter(|(j, _)| inside(*j as isize - co, b))
        .map(|(_, (x, y))| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let reach = b + (params.arch.layers.len() * k) as f64;
    let diff = signal
        .iter()
        .zip(&truncated)
        .enumerate()
        .filter(|(i, _)| inside(*i as isize - c, reach))
        .map(|(_, (x, y))| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok((lhs, diff * params.filter_l1_product()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub trials: usize,
    pub held: usize,
    /// Smallest and mean of `rhs - lhs`.
    pub min_margin: f64,
    pub mean_margin: f64,
}

impl LemmaReport {
    pub fn all_held(&self) -> bool {
        self.held == self.trials
    }
}

pub const SLACK: f64 = 1e-9;

/// Runs `n_trials` standard normal signals of length `signal_len` through
/// the check.
pub fn verify_lemma1(
    params: &NetworkParams<f64>,
    signal_len: usize,
    a: f64,
    b: f64,
    n_trials: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let mut report = LemmaReport {
        trials: n_trials,
        held: 0,
        min_margin: f64::INFINITY,
        mean_margin: 0.0,
    };
    for t in 0..n_trials {
        let mut g = rng::stream(seed, t as u64);
        let x: Vec<f64> = (0..signal_len).map(|_| StandardNormal.sample(&mut g)).collect();
        let (lhs, rhs) = lemma1_sides(params, &x, a, b)?;
        let margin = rhs - lhs;
        if lhs <= rhs + SLACK {
            report.held += 1;
        }
        report.min_margin = report.min_margin.min(margin);
        report.mean_margin += margin / n_trials as f64;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{Architecture, LayerSpec};

    fn net(kernels: &[usize], seed: u64) -> NetworkParams<f64> {
        let layers = kernels
            .iter()
            .map(|&k| LayerSpec::hidden(1, 1, k).with_bias(false).with_padding(Padding::None))
            .collect();
        NetworkParams::init(&Architecture::new(1, layers).unwrap(), seed).unwrap()
    }

    #[test]
    fn wide_input_window_gives_zero_lhs() {
        let p = net(&[3, 5], 1);
        let x: Vec<f64> = (0..41).map(|i| (i as f64 * 0.7).sin()).collect();
        let (lhs, rhs) = lemma1_sides(&p, &x, 41.0, 9.0).unwrap();
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn empty_network_is_the_identity_case() {
        let p = NetworkParams::<f64>::init(&Architecture::new(1, vec![]).unwrap(), 0).unwrap();
        let x: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let (lhs, rhs) = lemma1_sides(&p, &x, 5.0, 9.0).unwrap();
        assert!(lhs > 0.0);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn holds_on_random_nets() {
        for s in 0..20 {
            let p = net(&[3, 1, 5], s);
            let r = verify_lemma1(&p, 61, 11.0, 7.0, 10, s).unwrap();
            assert!(r.all_held(), "{r:?}");
            assert!(r.min_margin > 0.0);
        }
    }

    #[test]
    fn rejects_padding_and_bias() {
        let padded = NetworkParams::<f64>::init(
            &Architecture::new(1, vec![LayerSpec::hidden(1, 1, 3).with_bias(false)]).unwrap(),
            0,
        )
        .unwrap();
        assert!(verify_lemma1(&padded, 21, 5.0, 3.0, 1, 0).is_err());
        let biased = NetworkParams::<f64>::init(
            &Architecture::new(1, vec![LayerSpec::hidden(1, 1, 3).with_padding(Padding::None)]).unwrap(),
            0,
        )
        .unwrap();
        assert!(verify_lemma1(&biased, 21, 5.0, 3.0, 1, 0).is_err());
    }
}
