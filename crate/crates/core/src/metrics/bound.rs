use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convnet::{forward, NetworkParams, Tensor};
use crate::error::{Error, Result};

/// Inputs of the window-transfer bound. Widths are in pixels and the
/// second moment is in squared per-pixel intensity units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Width of the input window the network sees.
    pub input_width: f64,
    /// Width of the output window the loss is taken over.
    pub output_width: f64,
    pub layers: usize,
    pub filter_width: f64,
    pub dim: u32,
    /// Product of the per-layer filter norms.
    pub filter_norm_product: f64,
    pub input_second_moment: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.output_width > 0.0
            && self.input_width >= self.output_width
            && self.layers >= 1
            && self.filter_width > 0.0
            && self.dim >= 1
            && self.filter_norm_product >= 0.0
            && self.input_second_moment >= 0.0
            && [self.input_width, self.filter_width, self.filter_norm_product, self.input_second_moment]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid bound inputs {self:?}")))
        }
    }
}

/// `H² / B^d · max(0, (B + L K)^d − A^d)`.
pub fn bound_constant(inputs: &BoundInputs) -> f64 {
    let d = inputs.dim as i32;
    let b = inputs.output_width;
    let reach = b + inputs.layers as f64 * inputs.filter_width;
    let h2 = inputs.filter_norm_product * inputs.filter_norm_product;
    h2 / b.powi(d) * (reach.powi(d) - inputs.input_width.powi(d)).max(0.0)
}

/// Welford mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        RunningStats {
            count: n,
            mean: self.mean + delta * other.count as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / n as f64,
        }
    }

    /// Sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        for x in iter {
            s.push(x);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: u64,
}

impl From<RunningStats> for LossEstimate {
    fn from(s: RunningStats) -> Self {
        LossEstimate {
            mean: s.mean,
            standard_error: s.standard_error(),
            samples: s.count,
        }
    }
}

/// Monte Carlo estimate of the per-window MSE of `params` on `n_samples`
/// windows drawn by `sample(i)`. The network runs at full window size and
/// the loss skips `margin` border pixels.
pub fn estimate_loss_large<F>(params: &NetworkParams<f32>, n_samples: usize, margin: usize, sample: F) -> Result<LossEstimate>
where
    F: Fn(usize) -> Result<(Tensor<f32>, Tensor<f32>)> + Sync,
{
    if n_samples < 30 {
        return Err(Error::invalid(format!("{n_samples} samples are too few; need at least 30")));
    }
    let losses = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let (x, y) = sample(i)?;
            let out = forward(params, &x)?;
            if (out.channels, out.height, out.width) != (y.channels, y.height, y.width) {
                return Err(Error::shape("target shape differs from the network output"));
            }
            let (a, b) = (out.crop(margin), y.crop(margin));
            let sum: f64 = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
                .sum();
            Ok(sum / a.data.len().max(1) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let stats: RunningStats = losses.into_iter().collect();
    if !stats.mean.is_finite() {
        return Err(Error::Numerical("non-finite loss estimate".into()));
    }
    Ok(stats.into())
}

/// Bound evaluation and its check against a large-window estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub loss_window: LossEstimate,
    pub constant: f64,
    pub bound_value: f64,
    pub loss_large: LossEstimate,
    /// Combined standard error of the two estimates.
    pub standard_error: f64,
    /// `loss_large.mean <= bound_value + 3 * standard_error`.
    pub verdict: bool,
}

impl BoundReport {
    pub fn new(inputs: BoundInputs, loss_window: LossEstimate, loss_large: LossEstimate) -> Result<Self> {
        inputs.validate()?;
        let constant = bound_constant(&inputs);
        let lw = loss_window.mean;
        let ec = inputs.input_second_moment * constant;
        let bound_value = lw + ec + (lw * ec).sqrt();
        let standard_error = loss_window.standard_error.hypot(loss_large.standard_error);
        Ok(BoundReport {
            inputs,
            loss_window,
            constant,
            bound_value,
            loss_large,
            standard_error,
            verdict: loss_large.mean <= bound_value + 3.0 * standard_error,
        })
    }
}
