use serde::{Deserialize, Serialize};

use super::conv::Real;
use super::{Gradients, NetworkParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamWConfig {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay. Moments are kept in `f64`.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new<T: Real>(config: AdamWConfig, params: &NetworkParams<T>) -> Self {
        let n = params.num_params();
        AdamW {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Each weight first shrinks by `lr * weight_decay`, then
    /// takes the bias-corrected Adam step.
    pub fn step<T: Real>(&mut self, params: &mut NetworkParams<T>, grads: &Gradients<T>) -> Result<()> {
        let c = self.config;
        let n: usize = grads
            .layers
            .iter()
            .map(|l| l.weight.len() + l.bias.as_ref().map_or(0, Vec::len))
            .sum();
        if n != self.m.len() || params.num_params() != n {
            return Err(Error::shape("optimizer state does not match the parameters"));
        }
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - c.learning_rate * c.weight_decay;
        let mut k = 0;
        for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
            let pairs = p
                .weight
                .iter_mut()
                .zip(&g.weight)
                .chain(p.bias.iter_mut().flatten().zip(g.bias.iter().flatten()));
            for (w, gw) in pairs {
                let gw = gw.to_f64().unwrap();
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = c.beta1 * *m + (1.0 - c.beta1) * gw;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gw * gw;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                let wf = w.to_f64().unwrap() * decay - c.learning_rate * update;
                *w = T::from_f64_lossy(wf);
                k += 1;
            }
        }
        Ok(())
    }
}
