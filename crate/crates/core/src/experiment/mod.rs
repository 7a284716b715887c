//! Experiment orchestration: configuration, persistence and the end-to-end
//! commands behind the `stlab` binary.

mod archive;
mod commands;
mod data;
mod eval;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convnet::{Architecture, LayerParams, NetworkParams, TrainConfig};
use crate::error::{Error, Result};
use crate::mid::{ChannelParams, DEFAULT_MAX_HOP};
use crate::mtt_sim::SimParams;
use crate::raster::ExtractMethod;

pub use archive::{sha256_file, sha256_hex, ArchiveData, DType, TensorArchive, MAGIC};
pub use commands::{cmd_bound, cmd_eval_transfer, cmd_mid, cmd_simulate, cmd_train};
pub use data::{load_dataset, simulate_dataset, Manifest, ShardDataset, ShardEntry};
pub use commands::{BOUND_FILE, CONFIG_FILE, LOSS_FILE, MID_FILE, TRANSFER_FILE};
pub use eval::{bound_experiment, decode, eval_sample, padded_sim, transfer_eval, window_seed, EvalSample, TransferRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_sims: usize,
    pub n_steps: usize,
    /// Measurement frames per input stack.
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Window widths to evaluate, in km.
    pub windows_km: Vec<f64>,
    pub n_samples: usize,
    pub ospa_cutoff: f64,
    /// Output border (pixels) left out of losses.
    pub margin: usize,
    pub extract: ExtractMethod,
    /// Samples per window written as images.
    pub pgm_samples: usize,
    /// Large window for the bound check, in km.
    pub bound_window_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MidConfig {
    pub windows_m: Vec<f64>,
    pub n_samples: usize,
    pub max_hop: f64,
    pub channel: ChannelParams,
    /// Trained placement model directory; the relay heuristic when absent.
    pub model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub train: u64,
    pub eval: u64,
    pub mid: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Seeds {
            data: seed,
            train: seed,
            eval: seed,
            mid: seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimParams,
    pub data: DataConfig,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub mid: MidConfig,
    pub seeds: Seeds,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

impl ExperimentConfig {
    /// 128-pixel windows, 500 scenarios of 50 steps, a two-level network.
    pub fn desk() -> Self {
        let depth = 20;
        ExperimentConfig {
            sim: SimParams::default(),
            data: DataConfig {
                n_sims: 500,
                n_steps: 50,
                depth,
            },
            arch: Architecture::desk(depth),
            train: TrainConfig {
                epochs: 5,
                batch_size: 8,
                learning_rate: 2e-3,
                weight_decay: 1e-4,
                seed: 0,
                loss_margin: 15,
            },
            eval: EvalConfig {
                windows_km: vec![1.0, 2.0],
                n_samples: 100,
                ospa_cutoff: 500.0,
                margin: 15,
                extract: ExtractMethod::KMeans,
                pgm_samples: 1,
                bound_window_km: 2.0,
            },
            mid: MidConfig {
                windows_m: vec![320.0, 640.0, 960.0],
                n_samples: 50,
                max_hop: DEFAULT_MAX_HOP,
                channel: ChannelParams::default(),
                model: None,
            },
            seeds: Seeds::all(0),
        }
    }

    /// Full-size settings: 10,000 scenarios of 100 steps, three resampling
    /// levels with 128 features, 84 epochs.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.data = DataConfig {
            n_sims: 10_000,
            n_steps: 100,
            depth: 20,
        };
        c.arch = Architecture::paper(20);
        c.train = TrainConfig {
            epochs: 84,
            batch_size: 32,
            learning_rate: 6.112e-6,
            weight_decay: 0.07490,
            seed: 0,
            loss_margin: 0,
        };
        c.eval.windows_km = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        c.eval.margin = 0;
        c.mid.windows_m = vec![320.0, 640.0, 960.0, 1280.0, 1600.0];
        c.mid.n_samples = 100;
        c
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    /// The preset with the keys of a JSON document laid over it. Unknown
    /// keys are rejected.
    pub fn from_json_over(preset: Preset, text: &str) -> Result<Self> {
        let overlay: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not JSON: {e}")))?;
        let mut base = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        merge(&mut base, overlay);
        let cfg: ExperimentConfig = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_over(preset, &text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.arch.validate().map_err(|e| Error::Config(e.to_string()))?;
        let d = &self.data;
        if d.depth == 0 || d.n_steps < d.depth {
            return Err(Error::Config(format!(
                "n_steps = {} cannot fill stacks of depth {}; steps before a full stack are not used",
                d.n_steps, d.depth
            )));
        }
        if self.arch.in_features() != d.depth || self.arch.out_features() != 1 {
            return Err(Error::Config(format!(
                "network maps {} to {} features, data needs {} to 1",
                self.arch.in_features(),
                self.arch.out_features(),
                d.depth
            )));
        }
        if self.eval.windows_km.iter().any(|&t| !(t > 0.0)) || !(self.eval.ospa_cutoff > 0.0) {
            return Err(Error::Config("evaluation windows and cutoff must be positive".into()));
        }
        self.mid.channel.validate()?;
        if !(self.mid.max_hop > 0.0) || self.mid.windows_m.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Config("MID windows and max_hop must be positive".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub const MODEL_FILE: &str = "model.stl";
pub const ARCH_FILE: &str = "arch.json";

/// All weights then all biases of each layer, layer by layer.
pub fn flatten_params(params: &NetworkParams<f32>) -> Vec<f32> {
    let mut out = Vec::with_capacity(params.num_params());
    for l in &params.layers {
        out.extend_from_slice(&l.weight);
        if let Some(b) = &l.bias {
            out.extend_from_slice(b);
        }
    }
    out
}

pub fn unflatten_params(arch: &Architecture, flat: &[f32]) -> Result<NetworkParams<f32>> {
    let mut rest = flat;
    let mut layers = Vec::with_capacity(arch.layers.len());
    for spec in &arch.layers {
        let wl = spec.weight_len(arch.dim);
        let bl = if spec.bias { spec.out_features } else { 0 };
        if rest.len() < wl + bl {
            return Err(Error::Data("model file is shorter than its architecture".into()));
        }
        let (w, r) = rest.split_at(wl);
        let (b, r) = r.split_at(bl);
        layers.push(LayerParams {
            weight: w.to_vec(),
            bias: spec.bias.then(|| b.to_vec()),
        });
        rest = r;
    }
    if !rest.is_empty() {
        return Err(Error::Data("model file is longer than its architecture".into()));
    }
    NetworkParams::from_layers(arch.clone(), layers)
}

/// Writes `model.stl` and `arch.json` into `dir`.
pub fn save_model(dir: &Path, params: &NetworkParams<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let flat = flatten_params(params);
    TensorArchive::f32(vec![flat.len().max(1)], if flat.is_empty() { vec![0.0] } else { flat })?
        .write(&dir.join(MODEL_FILE))?;
    write_json(&dir.join(ARCH_FILE), &params.arch)
}

pub fn load_model(dir: &Path) -> Result<NetworkParams<f32>> {
    let arch: Architecture = read_json(&dir.join(ARCH_FILE))?;
    arch.validate().map_err(|e| Error::Data(format!("{}: {e}", dir.join(ARCH_FILE).display())))?;
    let flat = TensorArchive::read(&dir.join(MODEL_FILE))?.to_f32();
    let flat = if arch.layers.iter().all(|l| l.weight_len(arch.dim) == 0) { &[][..] } else { &flat[..] };
    unflatten_params(&arch, flat)
}
