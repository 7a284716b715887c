use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{IntensityImage, PointSet};
use crate::error::{Error, Result};
use crate::rng;

const MAX_ITERS: usize = 300;
/// Independent k-means++ starts; the lowest-inertia solution wins.
const RESTARTS: u64 = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMethod {
    #[default]
    KMeans,
    GmmEm,
}

/// Number of unit-mass components implied by an image: the rounded sum of
/// its clamped-nonnegative pixels.
pub fn estimate_cardinality(image: &IntensityImage) -> usize {
    let total: f64 = image.data().iter().map(|v| v.max(0.0)).sum();
    total.round() as usize
}

/// Weighted pixel support of channel 0: pixel centres and clamped values.
struct Support {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl Support {
    fn of(image: &IntensityImage) -> Self {
        let w = image.window();
        let d = w.dim;
        let n = w.pixels();
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (flat, &v) in image.channel(0).iter().enumerate() {
            if v > 0.0 {
                let mut rem = flat;
                let start = coords.len();
                coords.resize(start + d, 0.0);
                for a in (0..d).rev() {
                    coords[start + a] = w.center(rem % n);
                    rem /= n;
                }
                weights.push(v);
            }
        }
        Support {
            dim: d,
            coords,
            weights,
        }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index drawn with probability proportional to `mass`.
fn sample_index(rng: &mut impl Rng, mass: &[f64]) -> usize {
    let total: f64 = mass.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &m) in mass.iter().enumerate() {
        if u < m {
            return i;
        }
        u -= m;
    }
    // rounding left a sliver; fall back to the last positive entry
    mass.iter().rposition(|&m| m > 0.0).unwrap_or(0)
}

/// D^2-weighted seeding: first centre drawn by pixel weight, each next one
/// by weight times squared distance to the nearest chosen centre.
fn seed_centres(support: &Support, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let d = support.dim;
    let mut centres = Vec::with_capacity(k * d);
    let first = sample_index(rng, &support.weights);
    centres.extend_from_slice(support.point(first));
    let mut nearest: Vec<f64> = (0..support.len())
        .map(|i| sq_dist(support.point(i), support.point(first)))
        .collect();
    for _ in 1..k {
        let mass: Vec<f64> = nearest
            .iter()
            .zip(&support.weights)
            .map(|(d2, w)| d2 * w)
            .collect();
        let next = sample_index(rng, &mass);
        let c = support.point(next).to_vec();
        for (i, nd) in nearest.iter_mut().enumerate() {
            *nd = nd.min(sq_dist(support.point(i), &c));
        }
        centres.extend_from_slice(&c);
    }
    centres
}

/// Weighted Lloyd iterations. Ties go to the lowest centre index; a centre
/// that loses all its points stays where it was.
fn lloyd(support: &Support, mut centres: Vec<f64>, k: usize) -> (Vec<f64>, Vec<usize>) {
    let d = support.dim;
    let mut assign = vec![usize::MAX; support.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let p = support.point(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let dj = sq_dist(p, &centres[j * d..(j + 1) * d]);
                if dj < best_d {
                    best_d = dj;
                    best = j;
                }
            }
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut mass = vec![0.0; k];
        for (i, &j) in assign.iter().enumerate() {
            let w = support.weights[i];
            mass[j] += w;
            for (s, x) in sums[j * d..(j + 1) * d].iter_mut().zip(support.point(i)) {
                *s += w * x;
            }
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                for a in 0..d {
                    centres[j * d + a] = sums[j * d + a] / mass[j];
                }
            }
        }
    }
    (centres, assign)
}

/// Weighted sum of squared distances to the assigned centres.
fn inertia(support: &Support, centres: &[f64], assign: &[usize]) -> f64 {
    let d = support.dim;
    assign
        .iter()
        .enumerate()
        .map(|(i, &j)| support.weights[i] * sq_dist(support.point(i), &centres[j * d..(j + 1) * d]))
        .sum()
}

/// Isotropic Gaussian mixture fitted by expectation-maximisation on the
/// weighted pixel support, started from the k-means solution.
fn gmm_em(support: &Support, centres: Vec<f64>, assign: &[usize], k: usize, floor_var: f64) -> Vec<f64> {
    let d = support.dim;
    let n = support.len();
    let total: f64 = support.weights.iter().sum();
    let mut means = centres;
    let mut vars = vec![0.0; k];
    let mut mix = vec![0.0; k];
    for (i, &j) in assign.iter().enumerate() {
        let w = support.weights[i];
        mix[j] += w;
        vars[j] += w * sq_dist(support.point(i), &means[j * d..(j + 1) * d]);
    }
    for j in 0..k {
        vars[j] = if mix[j] > 0.0 {
            (vars[j] / (mix[j] * d as f64)).max(floor_var)
        } else {
            floor_var
        };
        mix[j] = (mix[j] / total).max(1e-12);
    }

    let mut resp = vec![0.0; n * k];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..MAX_ITERS {
        // E-step in log space
        let mut ll = 0.0;
        for i in 0..n {
            let p = support.point(i);
            let row = &mut resp[i * k..(i + 1) * k];
            let mut max = f64::NEG_INFINITY;
            for j in 0..k {
                let v = vars[j];
                let lp = mix[j].ln()
                    - 0.5 * d as f64 * (2.0 * std::f64::consts::PI * v).ln()
                    - 0.5 * sq_dist(p, &means[j * d..(j + 1) * d]) / v;
                row[j] = lp;
                max = max.max(lp);
            }
            let mut s = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                s += *r;
            }
            for r in row.iter_mut() {
                *r /= s;
            }
            ll += support.weights[i] * (max + s.ln());
        }
        // M-step
        let mut nk = vec![0.0; k];
        let mut sums = vec![0.0; k * d];
        for i in 0..n {
            let w = support.weights[i];
            for j in 0..k {
                let r = w * resp[i * k + j];
                nk[j] += r;
                for (s, x) in sums[j * d..(j + 1) * d].iter_mut().zip(support.point(i)) {
                    *s += r * x;
                }
            }
        }
        for j in 0..k {
            if nk[j] > 1e-300 {
                for a in 0..d {
                    means[j * d + a] = sums[j * d + a] / nk[j];
                }
            }
        }
        let mut sq = vec![0.0; k];
        for i in 0..n {
            let w = support.weights[i];
            for j in 0..k {
                sq[j] += w * resp[i * k + j] * sq_dist(support.point(i), &means[j * d..(j + 1) * d]);
            }
        }
        for j in 0..k {
            if nk[j] > 1e-300 {
                vars[j] = (sq[j] / (nk[j] * d as f64)).max(floor_var);
            }
            mix[j] = (nk[j] / total).max(1e-12);
        }
        if (ll - prev_ll).abs() <= 1e-10 * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    means
}

/// Recovers `k` point estimates from an intensity image.
///
/// When `k` is `None` it is taken from [`estimate_cardinality`]. Negative
/// pixels are clamped to zero first. Both methods are deterministic for a
/// given `seed`.
pub fn extract_points(
    image: &IntensityImage,
    k: Option<usize>,
    method: ExtractMethod,
    seed: u64,
) -> Result<PointSet> {
    if image.channels() != 1 {
        return Err(Error::invalid("point extraction needs a single-channel image"));
    }
    let dim = image.dim();
    let k = k.unwrap_or_else(|| estimate_cardinality(image));
    if k == 0 {
        return Ok(PointSet::empty(dim));
    }
    let support = Support::of(image);
    if k > support.len() {
        return Err(Error::invalid(format!(
            "cannot extract {k} points from {} nonzero pixels",
            support.len()
        )));
    }
    let (centres, assign) = (0..RESTARTS)
        .map(|r| {
            let start = seed_centres(&support, k, &mut rng::stream(seed, r));
            let (c, a) = lloyd(&support, start, k);
            (inertia(&support, &c, &a), c, a)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, c, a)| (c, a))
        .expect("at least one restart");
    let coords = match method {
        ExtractMethod::KMeans => centres,
        ExtractMethod::GmmEm => {
            let rho = image.window().resolution;
            gmm_em(&support, centres, &assign, k, rho * rho / 12.0)
        }
    };
    PointSet::from_flat(dim, coords)
}
