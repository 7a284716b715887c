//! Communication-agent placement for mobile infrastructure on demand, and
//! its evaluation by average minimum transmit power (AMTP).

mod tree;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf_inv;

use crate::convnet::{forward, NetworkParams, Tensor};
use crate::error::{Error, Result};
use crate::metrics::RunningStats;
use crate::raster::{estimate_cardinality, extract_points, rasterize_gaussian, ExtractMethod, IntensityImage, PointSet, WindowSpec};
use crate::rng;

pub use tree::{brute_force_min_tree, kruskal, prim, sorted_sum, Edge};

/// Radio channel constants of the path-loss model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub noise: f64,
    pub efficiency: f64,
    pub exponent: f64,
    /// Normalised rate in `[0, 1)`.
    pub rate: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            noise: 1e-7,
            efficiency: 5e-6,
            exponent: 2.52,
            rate: 0.5,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.noise > 0.0 && self.efficiency > 0.0 && self.exponent > 0.0 && (0.0..1.0).contains(&self.rate) && self.rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid channel parameters {self:?}")))
        }
    }
}

/// Transmit power (mW) needed to hold the normalised rate over `distance`
/// meters: `erfinv(rate)² · noise · d^exponent / efficiency`.
pub fn power_required(distance: f64, ch: &ChannelParams) -> f64 {
    let e = erf_inv(ch.rate);
    e * e * ch.noise * distance.powf(ch.exponent) / ch.efficiency
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Complete graph over `agents` weighted by `weight(distance)`.
pub fn complete_graph(agents: &PointSet, weight: impl Fn(f64) -> f64) -> Vec<Edge> {
    let n = agents.len();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push(Edge {
                a: i,
                b: j,
                weight: weight(distance(agents.point(i), agents.point(j))),
            });
        }
    }
    edges
}

/// Mean power over the edges of the minimum spanning tree of all agents.
pub fn amtp(agents: &PointSet, ch: &ChannelParams) -> Result<f64> {
    if agents.len() < 2 {
        return Err(Error::invalid(format!("AMTP needs at least 2 agents, got {}", agents.len())));
    }
    let edges = complete_graph(agents, |d| power_required(d, ch));
    let tree = kruskal(agents.len(), &edges);
    Ok(sorted_sum(tree.iter().map(|e| e.weight)) / tree.len() as f64)
}

/// A scenario of task agents in a `window`-wide square centred on the
/// origin, plus the communication agents placed for them.
#[derive(Clone, Debug, PartialEq)]
pub struct MidScenario {
    pub window: f64,
    pub task_agents: PointSet,
    pub comm_agents: PointSet,
}

impl MidScenario {
    /// Task and communication agents together.
    pub fn all_agents(&self) -> PointSet {
        let mut all = self.task_agents.clone();
        all.extend(&self.comm_agents);
        all
    }
}

/// Number of task agents for a window `width` meters wide.
pub fn task_count(width: f64) -> usize {
    (5.0 * (width / 320.0).powi(2)).round() as usize
}

/// Task agents uniform over the window, on stream `index` of `seed`.
pub fn gen_task_config(width: f64, seed: u64, index: u64) -> Result<MidScenario> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Config(format!("window width {width} must be positive")));
    }
    let mut g = rng::stream(seed, index);
    let h = width / 2.0;
    let points: Vec<[f64; 2]> = (0..task_count(width))
        .map(|_| [g.gen_range(-h..h), g.gen_range(-h..h)])
        .collect();
    Ok(MidScenario {
        window: width,
        task_agents: PointSet::planar(&points),
        comm_agents: PointSet::empty(2),
    })
}

/// Places relays along the Euclidean minimum spanning tree of the task
/// agents so that no hop is longer than `max_hop`.
pub fn heuristic_placer(task: &PointSet, max_hop: f64) -> Result<PointSet> {
    if !(max_hop > 0.0) {
        return Err(Error::Config("max_hop must be positive".into()));
    }
    let mut out = PointSet::empty(task.dim());
    if task.len() < 2 {
        return Ok(out);
    }
    let edges = complete_graph(task, |d| d);
    for e in kruskal(task.len(), &edges) {
        let pieces = (e.weight / max_hop).ceil().max(1.0) as usize;
        let (p, q) = (task.point(e.a), task.point(e.b));
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            let r: Vec<f64> = p.iter().zip(q).map(|(x, y)| x + t * (y - x)).collect();
            out.push(&r);
        }
    }
    Ok(out)
}

pub const DEFAULT_MAX_HOP: f64 = 130.0;
/// Task-image kernel width (m) and resolution (m/px) of the network path.
pub const TASK_SIGMA: f64 = 6.4;
pub const TASK_RESOLUTION: f64 = 1.25;

/// Network placement: the task agents are rendered on a window padded up to
/// a multiple of the network's downsampling, and the output is decoded
/// into points. Returns the placed agents and the padding in pixels.
pub fn network_placer(params: &NetworkParams<f32>, task: &PointSet, width: f64, seed: u64) -> Result<(PointSet, usize)> {
    let (window, pad) = padded_window(width, TASK_RESOLUTION, params.arch.total_downsample())?;
    let image = rasterize_gaussian(task, &window, TASK_SIGMA)?;
    let out = forward(params, &Tensor::from_image(&image)?)?;
    let data = out.data.iter().map(|&v| v as f64).collect();
    let out = IntensityImage::from_data(window, 1, data)?;
    let k = estimate_cardinality(&out);
    let k = k.min(out.data().iter().filter(|&&v| v > 0.0).count());
    Ok((extract_points(&out, Some(k), ExtractMethod::KMeans, seed)?, pad))
}

/// Window of at least `width` meters whose pixel count is a multiple of
/// `multiple`, and the number of pixels added.
pub fn padded_window(width: f64, resolution: f64, multiple: usize) -> Result<(WindowSpec, usize)> {
    let base = WindowSpec::new(width, resolution, 2)?;
    let n = base.pixels();
    let m = multiple.max(1);
    let padded = n.div_ceil(m) * m;
    Ok((WindowSpec::with_pixels(padded, resolution, 2)?, padded - n))
}

#[derive(Clone, Copy, Debug)]
pub enum Placer<'a> {
    Heuristic { max_hop: f64 },
    Network(&'a NetworkParams<f32>),
}

/// One row of a MID sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidRow {
    pub window_m: f64,
    pub task_agents: usize,
    pub comm_agents_mean: f64,
    pub amtp_mean_mw: f64,
    pub amtp_std_mw: f64,
}

impl MidRow {
    pub const CSV_HEADER: &'static str = "window_m,task_agents,comm_agents_mean,amtp_mean_mw,amtp_std_mw";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6}",
            self.window_m, self.task_agents, self.comm_agents_mean, self.amtp_mean_mw, self.amtp_std_mw
        )
    }
}

/// Places agents for `n_samples` scenarios per window width and reports
/// AMTP statistics.
pub fn evaluate_mid(placer: Placer<'_>, widths: &[f64], n_samples: usize, ch: &ChannelParams, seed: u64) -> Result<Vec<MidRow>> {
    ch.validate()?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    widths
        .iter()
        .map(|&width| {
            let stream_seed = rng::derive_seed(seed, width.to_bits());
            let results = (0..n_samples as u64)
                .into_par_iter()
                .map(|i| {
                    let s = gen_task_config(width, stream_seed, i)?;
                    let comm = match placer {
                        Placer::Heuristic { max_hop } => heuristic_placer(&s.task_agents, max_hop)?,
                        Placer::Network(p) => network_placer(p, &s.task_agents, width, rng::derive_seed(stream_seed, i))?.0,
                    };
                    let s = MidScenario { comm_agents: comm, ..s };
                    Ok((s.comm_agents.len(), amtp(&s.all_agents(), ch)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let power: RunningStats = results.iter().map(|r| r.1).collect();
            let comm: RunningStats = results.iter().map(|r| r.0 as f64).collect();
            Ok(MidRow {
                window_m: width,
                task_agents: task_count(width),
                comm_agents_mean: comm.mean,
                amtp_mean_mw: power.mean,
                amtp_std_mw: power.std(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_examples() {
        let ch = ChannelParams::default();
        assert_eq!(power_required(0.0, &ch), 0.0);
        let p = power_required(100.0, &ch);
        assert!((p - 498.8).abs() < 0.1, "{p}");
        let ratio = power_required(200.0, &ch) / p;
        assert!((ratio - 2f64.powf(2.52)).abs() < 1e-9);
    }

    #[test]
    fn power_is_increasing_and_convex() {
        let ch = ChannelParams::default();
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64 * 10.0).collect();
        let ps: Vec<f64> = xs.iter().map(|&d| power_required(d, &ch)).collect();
        for w in ps.windows(3) {
            assert!(w[1] > w[0]);
            assert!(w[2] - 2.0 * w[1] + w[0] >= 0.0);
        }
    }

    #[test]
    fn amtp_examples() {
        let ch = ChannelParams::default();
        let two = PointSet::planar(&[[0.0, 0.0], [30.0, 40.0]]);
        assert_eq!(amtp(&two, &ch).unwrap(), power_required(50.0, &ch));
        let line = PointSet::planar(&[[0.0, 0.0], [100.0, 0.0], [200.0, 0.0]]);
        assert!((amtp(&line, &ch).unwrap() - power_required(100.0, &ch)).abs() < 1e-9);
        assert!(amtp(&PointSet::planar(&[[0.0, 0.0]]), &ch).is_err());
    }

    #[test]
    fn amtp_is_rigid_invariant() {
        let ch = ChannelParams::default();
        let s = gen_task_config(640.0, 3, 0).unwrap().task_agents;
        let (c, sn) = (0.6f64, 0.8f64);
        let moved: Vec<[f64; 2]> = s
            .iter()
            .map(|p| [c * p[0] - sn * p[1] + 17.0, sn * p[0] + c * p[1] - 4.0])
            .collect();
        let a = amtp(&s, &ch).unwrap();
        let b = amtp(&PointSet::planar(&moved), &ch).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn task_counts() {
        assert_eq!(task_count(320.0), 5);
        assert_eq!(task_count(640.0), 20);
        assert_eq!(task_count(960.0), 45);
        assert_eq!(task_count(1600.0), 125);
        let s = gen_task_config(320.0, 1, 0).unwrap();
        assert_eq!(s.task_agents.len(), 5);
        assert!(s.task_agents.iter().all(|p| p[0].abs() <= 160.0 && p[1].abs() <= 160.0));
    }

    #[test]
    fn placer_examples() {
        let near = PointSet::planar(&[[0.0, 0.0], [90.0, 0.0]]);
        assert!(heuristic_placer(&near, 100.0).unwrap().is_empty());
        let far = PointSet::planar(&[[0.0, 0.0], [250.0, 0.0]]);
        let relays = heuristic_placer(&far, 100.0).unwrap();
        assert_eq!(relays.len(), 2);
        assert!((relays.point(0)[0] - 250.0 / 3.0).abs() < 1e-12);
        assert!((relays.point(1)[0] - 500.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn placer_bounds_every_hop() {
        let ch = ChannelParams::default();
        for i in 0..20 {
            let s = gen_task_config(960.0, 8, i).unwrap();
            let comm = heuristic_placer(&s.task_agents, 130.0).unwrap();
            let all = MidScenario { comm_agents: comm, ..s }.all_agents();
            let tree = kruskal(all.len(), &complete_graph(&all, |d| d));
            assert!(tree.iter().all(|e| e.weight <= 130.0 + 1e-9));
            assert!(amtp(&all, &ch).unwrap() <= power_required(130.0, &ch) + 1e-9);
        }
    }

    #[test]
    fn sweep_rows() {
        let ch = ChannelParams::default();
        let rows = evaluate_mid(Placer::Heuristic { max_hop: 130.0 }, &[320.0, 640.0], 3, &ch, 1).unwrap();
        assert_eq!(rows.iter().map(|r| r.task_agents).collect::<Vec<_>>(), vec![5, 20]);
        let one = evaluate_mid(Placer::Heuristic { max_hop: 130.0 }, &[320.0], 1, &ch, 1).unwrap();
        assert_eq!(one[0].amtp_std_mw, 0.0);
        let again = evaluate_mid(Placer::Heuristic { max_hop: 130.0 }, &[320.0, 640.0], 3, &ch, 1).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn padded_windows() {
        let (w, pad) = padded_window(330.0, 1.25, 8).unwrap();
        assert_eq!((w.pixels(), pad), (264, 0));
        let (w, pad) = padded_window(325.0, 1.25, 8).unwrap();
        assert_eq!((w.pixels(), pad), (264, 4));
    }
}
