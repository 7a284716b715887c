//! Evaluation of a trained tracking network on fresh scenarios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convnet::{forward, NetworkParams, Tensor};
use crate::error::{Error, Result};
use crate::metrics::{estimate_loss_large, ospa, BoundInputs, BoundReport, LossEstimate, RunningStats};
use crate::mtt_sim::{simulate_scenario, SimParams};
use crate::raster::{estimate_cardinality, extract_points, ExtractMethod, IntensityImage, PointSet, WindowSpec};
use crate::rng;

/// Parameters for a window at least `width` meters wide whose pixel count
/// is a multiple of `multiple`, with the same densities as `base`. Also
/// returns the pixels added.
pub fn padded_sim(base: &SimParams, width: f64, multiple: usize) -> Result<(SimParams, usize)> {
    let n = WindowSpec::new(width, base.resolution, 2)?.pixels();
    let m = multiple.max(1);
    let padded = n.div_ceil(m) * m;
    Ok((base.with_window(padded as f64 * base.resolution), padded - n))
}

/// One evaluation window: the last stack of a fresh `depth`-step scenario.
#[derive(Clone, Debug)]
pub struct EvalSample {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
    /// Targets strictly inside the window.
    pub truth: PointSet,
    pub window: WindowSpec,
}

pub fn eval_sample(sim: &SimParams, depth: usize, seed: u64, index: u64) -> Result<EvalSample> {
    let rec = simulate_scenario(sim, depth, seed, index)?;
    let step = depth - 1;
    Ok(EvalSample {
        input: rec.stack(depth, step)?,
        target: Tensor::from_image(&rec.target_image(step)?)?,
        truth: rec.truth_in_window(step),
        window: sim.window_spec()?,
    })
}

fn cropped_mse(out: &Tensor<f32>, target: &Tensor<f32>, margin: usize) -> Result<f64> {
    if (out.channels, out.height, out.width) != (target.channels, target.height, target.width) {
        return Err(Error::shape("target shape differs from the network output"));
    }
    let (a, b) = (out.crop(margin), target.crop(margin));
    if a.data.is_empty() {
        return Err(Error::shape("margin leaves no pixels"));
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(&p, &t)| (p as f64 - t as f64).powi(2)).sum();
    Ok(sum / a.data.len() as f64)
}

/// Point estimates decoded from a network output.
pub fn decode(output: &Tensor<f32>, window: WindowSpec, method: ExtractMethod, seed: u64) -> Result<PointSet> {
    let image = IntensityImage::from_data(window, 1, output.data.iter().map(|&v| v as f64).collect())?;
    let positive = image.data().iter().filter(|&&v| v > 0.0).count();
    let k = estimate_cardinality(&image).min(positive);
    extract_points(&image, Some(k), method, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    #[serde(rename = "T_km")]
    pub t_km: f64,
    pub n_samples: usize,
    pub mse_mean: f64,
    pub mse_ci95: f64,
    pub ospa_mean: f64,
    pub ospa_ci95: f64,
    pub pad_px: usize,
}

impl TransferRow {
    pub const CSV_HEADER: &'static str = "T_km,n_samples,mse_mean,mse_ci95,ospa_mean,ospa_ci95,pad_px";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.9e},{:.9e},{:.6},{:.6},{}",
            self.t_km, self.n_samples, self.mse_mean, self.mse_ci95, self.ospa_mean, self.ospa_ci95, self.pad_px
        )
    }
}

/// Seed of the evaluation scenarios for one window width.
pub fn window_seed(seed: u64, width_m: f64) -> u64 {
    rng::derive_seed(seed, width_m.to_bits())
}

/// MSE over the `margin` interior and OSPA of the decoded estimates, on
/// `n_samples` fresh scenarios with a `width_km` window.
#[allow(clippy::too_many_arguments)]
pub fn transfer_eval(
    params: &NetworkParams<f32>,
    base: &SimParams,
    width_km: f64,
    n_samples: usize,
    depth: usize,
    margin: usize,
    cutoff: f64,
    method: ExtractMethod,
    seed: u64,
) -> Result<TransferRow> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let (sim, pad) = padded_sim(base, width_km * 1000.0, params.arch.total_downsample())?;
    let s = window_seed(seed, width_km * 1000.0);
    let results = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let e = eval_sample(&sim, depth, s, i)?;
            let out = forward(params, &e.input)?;
            let mse = cropped_mse(&out, &e.target, margin)?;
            let est = decode(&out, e.window, method, rng::derive_seed(s, i))?;
            Ok((mse, ospa(&e.truth, &est, cutoff)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mse: RunningStats = results.iter().map(|r| r.0).collect();
    let dist: RunningStats = results.iter().map(|r| r.1).collect();
    if !mse.mean.is_finite() {
        return Err(Error::Numerical("non-finite evaluation loss".into()));
    }
    Ok(TransferRow {
        t_km: width_km,
        n_samples,
        mse_mean: mse.mean,
        mse_ci95: 1.96 * mse.standard_error(),
        ospa_mean: dist.mean,
        ospa_ci95: 1.96 * dist.standard_error(),
        pad_px: pad,
    })
}

/// Checks the window-transfer bound for a network trained on `base`
/// windows. The window loss and input second moment come from fresh
/// training-size windows with `margin` output pixels dropped on each side;
/// the large-window loss from `large_km` windows with the same margin.
pub fn bound_experiment(
    params: &NetworkParams<f32>,
    base: &SimParams,
    depth: usize,
    n_samples: usize,
    large_km: f64,
    margin: usize,
    seed: u64,
) -> Result<BoundReport> {
    let arch = &params.arch;
    let a = base.window_spec()?.pixels();
    let (clean, extent) = arch.padding_free_margin(a)?;
    if margin < clean {
        return Err(Error::Config(format!(
            "margin {margin} leaves padded pixels in the loss; need at least {clean}"
        )));
    }
    if 2 * margin >= a {
        return Err(Error::Config(format!("margin {margin} leaves no pixels of a {a}-pixel window")));
    }
    if n_samples < 30 {
        return Err(Error::Config(format!("{n_samples} samples are too few; need at least 30")));
    }
    let layers = arch.layers.len();
    let filter_width = extent.div_ceil(layers.max(1));
    let s = window_seed(seed, base.window);
    let window = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let e = eval_sample(base, depth, s, i)?;
            let out = forward(params, &e.input)?;
            let x2 = e.input.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / e.input.data.len() as f64;
            Ok((cropped_mse(&out, &e.target, margin)?, x2))
        })
        .collect::<Result<Vec<_>>>()?;
    let loss_window: RunningStats = window.iter().map(|r| r.0).collect();
    let second: RunningStats = window.iter().map(|r| r.1).collect();

    let (large, _) = padded_sim(base, large_km * 1000.0, arch.total_downsample())?;
    let ls = window_seed(seed, large.window);
    let loss_large = estimate_loss_large(params, n_samples, margin, |i| {
        let e = eval_sample(&large, depth, ls, i as u64)?;
        Ok((e.input, e.target))
    })?;
    let inputs = BoundInputs {
        input_width: a as f64,
        output_width: (a - 2 * margin) as f64,
        layers,
        filter_width: filter_width as f64,
        dim: arch.dim as u32,
        filter_norm_product: params.filter_l1_product(),
        input_second_moment: second.mean,
    };
    BoundReport::new(inputs, LossEstimate::from(loss_window), loss_large)
}
