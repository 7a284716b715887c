use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::loss_and_gradients;
use super::optim::{AdamW, AdamWConfig};
use super::{forward, Architecture, Gradients, NetworkParams, Tensor};
use crate::error::{Error, Result};
use crate::rng;

/// Indexed source of (input, target) training pairs.
pub trait PairSource: Sync {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> Result<(Tensor<f32>, Tensor<f32>)>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pairs held in memory.
#[derive(Clone, Debug, Default)]
pub struct VecPairs {
    pub pairs: Vec<(Tensor<f32>, Tensor<f32>)>,
}

impl VecPairs {
    pub fn new(pairs: Vec<(Tensor<f32>, Tensor<f32>)>) -> Self {
        VecPairs { pairs }
    }
}

impl PairSource for VecPairs {
    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn get(&self, index: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        self.pairs
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Data(format!("pair {index} out of range")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Output pixels trimmed from each border before the loss.
    pub loss_margin: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            seed: 0,
            loss_margin: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: NetworkParams<f32>,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Mean squared error between the network output and `target`, with
/// `margin` border pixels excluded.
pub fn mse_loss(params: &NetworkParams<f32>, input: &Tensor<f32>, target: &Tensor<f32>, margin: usize) -> Result<f64> {
    let out = forward(params, input)?;
    if (out.channels, out.height, out.width) != (target.channels, target.height, target.width) {
        return Err(Error::shape("target shape differs from the network output"));
    }
    let (a, b) = (out.crop(margin), target.crop(margin));
    if a.data.is_empty() {
        return Err(Error::shape("loss margin leaves no pixels"));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Trains from a fresh initialisation.
pub fn train(dataset: &dyn PairSource, arch: &Architecture, config: &TrainConfig) -> Result<TrainReport> {
    let params = NetworkParams::init(arch, config.seed)?;
    train_from(dataset, params, config, |_, _| {})
}

/// Continues training `params`. `on_epoch` sees each epoch index and its
/// mean loss.
pub fn train_from(
    dataset: &dyn PairSource,
    mut params: NetworkParams<f32>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(config.learning_rate > 0.0) || !(config.weight_decay >= 0.0) {
        return Err(Error::Config("learning_rate must be positive and weight_decay non-negative".into()));
    }
    let mut opt = AdamW::new(AdamWConfig::new(config.learning_rate, config.weight_decay), &params);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut shuffle = rng::stream(rng::derive_seed(config.seed, 0x5eed), epoch as u64);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(f64, Gradients<f32>)>> = batch
                .par_iter()
                .map(|&i| {
                    let (x, y) = dataset.get(i)?;
                    loss_and_gradients(&params, &x, &y, config.loss_margin)
                })
                .collect();
            let mut grads = Gradients::zeros_like(&params);
            for r in results {
                let (loss, g) = r?;
                total += loss;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f32);
            if grads.flatten().iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient in epoch {epoch}")));
            }
            opt.step(&mut params, &grads)?;
        }
        let mean = total / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("training loss diverged in epoch {epoch}")));
        }
        on_epoch(epoch, mean);
        loss_history.push(mean);
    }
    Ok(TrainReport { params, loss_history })
}
