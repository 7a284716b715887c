//! Simulated datasets on disk: per-scenario measurement and target archives
//! plus a manifest with checksums.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::{sha256_file, TensorArchive, MAGIC};
use super::{read_json, write_json, DataConfig};
use crate::convnet::{PairSource, Tensor};
use crate::error::{Error, Result};
use crate::mtt_sim::{simulate_scenario, SimParams};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardEntry {
    pub index: u64,
    /// Measurement images, one per step.
    pub frames: String,
    pub frames_sha256: String,
    /// Target images, one per usable step.
    pub targets: String,
    pub targets_sha256: String,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub sim: SimParams,
    pub data: DataConfig,
    pub seed: u64,
    pub pixels: usize,
    pub shards: Vec<ShardEntry>,
}

const BATCH: usize = 16;

/// Simulates `data.n_sims` scenarios and writes them under `dir`.
pub fn simulate_dataset(sim: &SimParams, data: &DataConfig, seed: u64, dir: &Path) -> Result<Manifest> {
    sim.validate()?;
    if data.depth == 0 || data.n_steps < data.depth {
        return Err(Error::Config(format!(
            "n_steps = {} cannot fill stacks of depth {}",
            data.n_steps, data.depth
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = sim.window_spec()?.pixels();
    let mut shards = Vec::with_capacity(data.n_sims);
    let indices: Vec<u64> = (0..data.n_sims as u64).collect();
    for chunk in indices.chunks(BATCH) {
        let written = chunk
            .par_iter()
            .map(|&i| {
                let rec = simulate_scenario(sim, data.n_steps, seed, i)?;
                let frames: Vec<f32> = rec.frames.concat();
                let mut targets = Vec::with_capacity(rec.n_pairs(data.depth) * n * n);
                for step in data.depth - 1..data.n_steps {
                    targets.extend(rec.target_image(step)?.data().iter().map(|&v| v as f32));
                }
                let fname = format!("scenario_{i:05}.frames.stl");
                let tname = format!("scenario_{i:05}.targets.stl");
                let fsum = TensorArchive::f32(vec![n, n], frames)?.write(&dir.join(&fname))?;
                let tsum = TensorArchive::f32(vec![n, n], targets)?.write(&dir.join(&tname))?;
                Ok(ShardEntry {
                    index: i,
                    frames: fname,
                    frames_sha256: fsum,
                    targets: tname,
                    targets_sha256: tsum,
                    pairs: rec.n_pairs(data.depth),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        shards.extend(written);
    }
    let manifest = Manifest {
        format: MAGIC.into(),
        sim: sim.clone(),
        data: data.clone(),
        seed,
        pixels: n,
        shards,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

struct Shard {
    frames: Vec<f32>,
    targets: Vec<f32>,
}

/// A dataset read back from disk. Every file is checked against the
/// manifest before use.
pub struct ShardDataset {
    pub manifest: Manifest,
    shards: Vec<Shard>,
    offsets: Vec<usize>,
}

pub fn load_dataset(dir: &Path) -> Result<ShardDataset> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format != MAGIC {
        return Err(Error::Data(format!("{}: unknown dataset format", dir.display())));
    }
    let n = manifest.pixels;
    let plane = n * n;
    let (steps, depth) = (manifest.data.n_steps, manifest.data.depth);
    for s in &manifest.shards {
        for (file, sum) in [(&s.frames, &s.frames_sha256), (&s.targets, &s.targets_sha256)] {
            let path = dir.join(file);
            if &sha256_file(&path)? != sum {
                return Err(Error::Data(format!("{}: checksum does not match the manifest", path.display())));
            }
        }
    }
    let shards = manifest
        .shards
        .iter()
        .map(|s| {
            let frames = TensorArchive::read(&dir.join(&s.frames))?.to_f32();
            let targets = TensorArchive::read(&dir.join(&s.targets))?.to_f32();
            if frames.len() != steps * plane || targets.len() != s.pairs * plane || s.pairs + depth != steps + 1 {
                return Err(Error::Data(format!("shard {} does not match the manifest", s.index)));
            }
            Ok(Shard { frames, targets })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut offsets = vec![0];
    for s in &manifest.shards {
        offsets.push(offsets.last().unwrap() + s.pairs);
    }
    Ok(ShardDataset {
        manifest,
        shards,
        offsets,
    })
}

impl PairSource for ShardDataset {
    fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn get(&self, index: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if index >= self.len() {
            return Err(Error::Data(format!("pair {index} out of range")));
        }
        let s = self.offsets.partition_point(|&o| o <= index) - 1;
        let k = index - self.offsets[s];
        let n = self.manifest.pixels;
        let plane = n * n;
        let depth = self.manifest.data.depth;
        let shard = &self.shards[s];
        let input = shard.frames[k * plane..(k + depth) * plane].to_vec();
        let target = shard.targets[k * plane..(k + 1) * plane].to_vec();
        Ok((Tensor::new(depth, n, n, input)?, Tensor::new(1, n, n, target)?))
    }
}
