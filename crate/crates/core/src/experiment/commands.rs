//! The five end-to-end commands. Each writes its outputs under `out` and
//! returns what it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::data::{load_dataset, simulate_dataset, Manifest};
use super::eval::{bound_experiment, decode, eval_sample, padded_sim, transfer_eval, window_seed, TransferRow};
use super::{load_model, save_model, write_json, ExperimentConfig};
use crate::convnet::{forward, train_from, NetworkParams, Padding, Tensor, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::metrics::BoundReport;
use crate::mid::{evaluate_mid, MidRow, Placer};
use crate::raster::{IntensityImage, WindowSpec};

pub const LOSS_FILE: &str = "loss.csv";
pub const TRANSFER_FILE: &str = "transfer.csv";
pub const BOUND_FILE: &str = "bound.json";
pub const MID_FILE: &str = "mid.csv";
pub const CONFIG_FILE: &str = "config.json";

fn prepare(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(CONFIG_FILE), cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let manifest = simulate_dataset(&cfg.sim, &cfg.data, cfg.seeds.data, out)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    Ok(manifest)
}

/// Trains on the dataset in `data_dir`; writes the model, its architecture
/// and `loss.csv` (epoch, mean loss).
pub fn cmd_train(cfg: &ExperimentConfig, data_dir: &Path, out: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    let dataset = load_dataset(data_dir)?;
    let m = &dataset.manifest;
    if m.data.depth != cfg.arch.in_features() {
        return Err(Error::Config(format!(
            "dataset stacks {} frames, network takes {}",
            m.data.depth,
            cfg.arch.in_features()
        )));
    }
    let pixels = m.pixels;
    let step = cfg.arch.total_downsample();
    if pixels % step != 0 {
        return Err(Error::Config(format!("{pixels}-pixel windows are not a multiple of {step}")));
    }
    prepare(out, cfg)?;
    let config = TrainConfig {
        seed: cfg.seeds.train,
        ..cfg.train.clone()
    };
    let init = NetworkParams::init(&cfg.arch, config.seed)?;
    let report = train_from(&dataset, init, &config, |epoch, loss| {
        eprintln!("epoch {:>3}/{}  loss {loss:.6e}", epoch + 1, config.epochs);
    })?;
    save_model(out, &report.params)?;
    let mut csv = String::from("epoch,mean_loss\n");
    for (i, l) in report.loss_history.iter().enumerate() {
        writeln!(csv, "{},{l:.9e}", i + 1).unwrap();
    }
    write_text(&out.join(LOSS_FILE), &csv)?;
    Ok(report)
}

#[derive(Serialize)]
struct PgmSidecar {
    /// Intensity per grey level of the stored values.
    scale: f64,
    log_display: bool,
    window_m: f64,
    pixels: usize,
}

fn dump_pgm(path: &Path, image: &IntensityImage) -> Result<()> {
    let (bytes, scale) = image.to_pgm(true)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let window = image.window();
    write_json(
        &path.with_extension("json"),
        &PgmSidecar {
            scale,
            log_display: true,
            window_m: window.width,
            pixels: window.pixels(),
        },
    )
}

fn channel_image(t: &Tensor<f32>, c: usize, window: WindowSpec) -> Result<IntensityImage> {
    let p = t.plane();
    let data = t.data[c * p..(c + 1) * p].iter().map(|&v| v as f64).collect();
    IntensityImage::from_data(window, 1, data)
}

/// Evaluates the model in `model_dir` at every configured window width;
/// writes `transfer.csv` and input, output and target PGMs with sidecars
/// under `samples/`.
pub fn cmd_eval_transfer(cfg: &ExperimentConfig, model_dir: &Path, out: &Path) -> Result<Vec<TransferRow>> {
    cfg.validate()?;
    let params = load_model(model_dir)?;
    prepare(out, cfg)?;
    let e = &cfg.eval;
    let depth = params.arch.in_features();
    let mut rows = Vec::with_capacity(e.windows_km.len());
    let samples = out.join("samples");
    for &t in &e.windows_km {
        let row = transfer_eval(&params, &cfg.sim, t, e.n_samples, depth, e.margin, e.ospa_cutoff, e.extract, cfg.seeds.eval)?;
        eprintln!("T = {t} km  mse {:.4e}  ospa {:.2}", row.mse_mean, row.ospa_mean);
        rows.push(row);
        if e.pgm_samples > 0 {
            fs::create_dir_all(&samples).map_err(|err| Error::io(&samples, err))?;
        }
        let (sim, _) = padded_sim(&cfg.sim, t * 1000.0, params.arch.total_downsample())?;
        let seed = window_seed(cfg.seeds.eval, t * 1000.0);
        for i in 0..e.pgm_samples as u64 {
            let s = eval_sample(&sim, depth, seed, i)?;
            let output = forward(&params, &s.input)?;
            let stem = format!("T{t}km_{i:03}");
            dump_pgm(&samples.join(format!("{stem}_input.pgm")), &channel_image(&s.input, depth - 1, s.window)?)?;
            dump_pgm(&samples.join(format!("{stem}_output.pgm")), &channel_image(&output, 0, s.window)?)?;
            dump_pgm(&samples.join(format!("{stem}_target.pgm")), &channel_image(&s.target, 0, s.window)?)?;
            let est = decode(&output, s.window, e.extract, crate::rng::derive_seed(seed, i))?;
            write_json(
                &samples.join(format!("{stem}_points.json")),
                &serde_json::json!({
                    "truth": s.truth.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
                    "estimate": est.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
                }),
            )?;
        }
    }
    let mut csv = format!("{}\n", TransferRow::CSV_HEADER);
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    write_text(&out.join(TRANSFER_FILE), &csv)?;
    Ok(rows)
}

#[derive(Serialize)]
struct BoundFile<'a> {
    /// "strict" for bias-free, padding-free networks; "approximate" otherwise.
    mode: &'static str,
    #[serde(flatten)]
    report: &'a BoundReport,
}

/// Bound check for the model in `model_dir`, written to `bound.json`.
pub fn cmd_bound(cfg: &ExperimentConfig, model_dir: &Path, out: &Path) -> Result<BoundReport> {
    cfg.validate()?;
    let params = load_model(model_dir)?;
    prepare(out, cfg)?;
    let strict = params.arch.layers.iter().all(|l| !l.bias && l.padding == Padding::None);
    let report = bound_experiment(
        &params,
        &cfg.sim,
        params.arch.in_features(),
        cfg.eval.n_samples,
        cfg.eval.bound_window_km,
        cfg.eval.margin,
        cfg.seeds.eval,
    )?;
    write_json(
        &out.join(BOUND_FILE),
        &BoundFile {
            mode: if strict { "strict" } else { "approximate" },
            report: &report,
        },
    )?;
    Ok(report)
}

/// MID sweep written to `mid.csv`. Uses the relay heuristic unless the
/// config names a placement model.
pub fn cmd_mid(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MidRow>> {
    cfg.validate()?;
    let m = &cfg.mid;
    let model = m.model.as_deref().map(load_model).transpose()?;
    let placer = match &model {
        Some(p) => Placer::Network(p),
        None => Placer::Heuristic { max_hop: m.max_hop },
    };
    let rows = evaluate_mid(placer, &m.windows_m, m.n_samples, &m.channel, cfg.seeds.mid)?;
    prepare(out, cfg)?;
    let mut csv = format!("{}\n", MidRow::CSV_HEADER);
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    write_text(&out.join(MID_FILE), &csv)?;
    Ok(rows)
}
