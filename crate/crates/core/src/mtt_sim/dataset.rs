use rayon::prelude::*;

use super::{new_scenario_indexed, propagate, sense, SimParams};
use crate::convnet::{PairSource, Tensor};
use crate::error::{Error, Result};
use crate::raster::{rasterize_gaussian, IntensityImage, PointSet};

/// One simulated scenario: the measurement image and the target positions
/// at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRecord {
    pub params: SimParams,
    /// Measurement images, one `N x N` plane per step.
    pub frames: Vec<Vec<f32>>,
    /// Positions of every live target, including those outside the window.
    pub truths: Vec<PointSet>,
}

impl ScenarioRecord {
    pub fn n_steps(&self) -> usize {
        self.frames.len()
    }

    /// Number of (stack, target) pairs with `depth` frames per stack.
    pub fn n_pairs(&self, depth: usize) -> usize {
        (self.n_steps() + 1).saturating_sub(depth.max(1))
    }

    /// Stack of the `depth` frames ending at step `step`, oldest first.
    pub fn stack(&self, depth: usize, step: usize) -> Result<Tensor<f32>> {
        if depth == 0 || step + 1 < depth || step >= self.n_steps() {
            return Err(Error::invalid(format!(
                "no {depth}-frame stack ends at step {step} of {}",
                self.n_steps()
            )));
        }
        let n = self.params.window_spec()?.pixels();
        let mut data = Vec::with_capacity(depth * n * n);
        for f in &self.frames[step + 1 - depth..=step] {
            data.extend_from_slice(f);
        }
        Tensor::new(depth, n, n, data)
    }

    pub fn target_image(&self, step: usize) -> Result<IntensityImage> {
        let truth = self
            .truths
            .get(step)
            .ok_or_else(|| Error::invalid(format!("step {step} out of range")))?;
        rasterize_gaussian(truth, &self.params.window_spec()?, self.params.target_sigma)
    }

    /// Target positions strictly inside the window at `step`.
    pub fn truth_in_window(&self, step: usize) -> PointSet {
        self.truths[step].inside_box(self.params.window / 2.0)
    }
}

/// Simulates `n_steps` steps of scenario `index` under `seed`. Step 0
/// observes the initial state.
pub fn simulate_scenario(params: &SimParams, n_steps: usize, seed: u64, index: u64) -> Result<ScenarioRecord> {
    let mut state = new_scenario_indexed(params, seed, index)?;
    let mut frames = Vec::with_capacity(n_steps);
    let mut truths = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        if n > 0 {
            propagate(&mut state, params);
        }
        let frame = sense(&mut state, params);
        let image = frame.image(&state.sensors, params)?;
        frames.push(image.data().iter().map(|&v| v as f32).collect());
        truths.push(state.positions());
    }
    Ok(ScenarioRecord {
        params: params.clone(),
        frames,
        truths,
    })
}

/// (measurement stack, target image) pairs of one scenario, one per step
/// from `depth - 1` on.
pub fn run_simulation(
    params: &SimParams,
    n_steps: usize,
    seed: u64,
    depth: usize,
) -> Result<Vec<(IntensityImage, IntensityImage)>> {
    if depth == 0 || n_steps < depth {
        return Err(Error::invalid(format!(
            "{n_steps} steps cannot fill a {depth}-frame stack"
        )));
    }
    let rec = simulate_scenario(params, n_steps, seed, 0)?;
    let window = params.window_spec()?;
    (depth - 1..n_steps)
        .map(|step| {
            let stack = rec.stack(depth, step)?;
            let input = IntensityImage::from_data(
                window,
                depth,
                stack.data.iter().map(|&v| v as f64).collect(),
            )?;
            Ok((input, rec.target_image(step)?))
        })
        .collect()
}

/// Training pairs drawn from a set of scenarios. Stacks and target images
/// are assembled on demand from the stored frames and positions.
#[derive(Clone, Debug)]
pub struct FrameDataset {
    pub depth: usize,
    pub records: Vec<ScenarioRecord>,
    offsets: Vec<usize>,
}

impl FrameDataset {
    pub fn new(records: Vec<ScenarioRecord>, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("stack depth must be positive"));
        }
        let mut offsets = Vec::with_capacity(records.len() + 1);
        offsets.push(0);
        for r in &records {
            offsets.push(offsets.last().unwrap() + r.n_pairs(depth));
        }
        Ok(FrameDataset {
            depth,
            records,
            offsets,
        })
    }

    /// Simulates scenarios `first .. first + count` of `seed` in parallel.
    pub fn generate(params: &SimParams, count: usize, first: u64, n_steps: usize, seed: u64, depth: usize) -> Result<Self> {
        if n_steps < depth {
            return Err(Error::invalid(format!("{n_steps} steps cannot fill a {depth}-frame stack")));
        }
        let records = (0..count as u64)
            .into_par_iter()
            .map(|i| simulate_scenario(params, n_steps, seed, first + i))
            .collect::<Result<Vec<_>>>()?;
        Self::new(records, depth)
    }

    /// Scenario and step of pair `index`.
    pub fn locate(&self, index: usize) -> Option<(usize, usize)> {
        if index >= *self.offsets.last().unwrap() {
            return None;
        }
        let s = self.offsets.partition_point(|&o| o <= index) - 1;
        Some((s, index - self.offsets[s] + self.depth - 1))
    }

    /// Mean squared input pixel value over all stored frames.
    pub fn input_second_moment(&self) -> f64 {
        let (mut sum, mut count) = (0.0f64, 0usize);
        for r in &self.records {
            for f in &r.frames {
                sum += f.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
                count += f.len();
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

impl PairSource for FrameDataset {
    fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn get(&self, index: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let (s, step) = self
            .locate(index)
            .ok_or_else(|| Error::Data(format!("pair {index} out of range")))?;
        let r = &self.records[s];
        let target = Tensor::<f32>::from_image(&r.target_image(step)?)?;
        Ok((r.stack(self.depth, step)?, target))
    }
}
