use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

use super::{IntensityImage, PointSet, WindowSpec};
use crate::error::{Error, Result};

/// Kernel support in standard deviations; mass beyond it is below 1e-23.
const SUPPORT: f64 = 10.0;

/// Likelihood model `g(x | t)` attached to one element of a set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeasurementModel {
    IsotropicGaussian { sigma: f64 },
    /// Gaussian in range/bearing around a sensor. The measured point is
    /// given in Cartesian coordinates and converted back to polar form.
    RangeBearing {
        sensor: [f64; 2],
        eta_r: f64,
        eta_theta: f64,
    },
}

impl MeasurementModel {
    fn validate(&self) -> Result<()> {
        match *self {
            MeasurementModel::IsotropicGaussian { sigma } if !(sigma > 0.0) => {
                Err(Error::invalid(format!("sigma must be positive, got {sigma}")))
            }
            MeasurementModel::RangeBearing { eta_r, eta_theta, .. }
                if !(eta_r > 0.0 && eta_theta > 0.0) =>
            {
                Err(Error::invalid("range-bearing noise must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Standard normal CDF of `z`, evaluated through whichever tail keeps
/// precision.
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Mass of `N(mean, sigma^2)` in `[lo, hi]`.
fn interval_mass(lo: f64, hi: f64, mean: f64, sigma: f64) -> f64 {
    let a = (lo - mean) / sigma;
    let b = (hi - mean) / sigma;
    if a > 0.0 {
        // upper tail: difference of survival functions
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// Per-axis cell masses of a 1-D Gaussian: `(first_cell, masses)`.
fn axis_masses(window: &WindowSpec, mean: f64, sigma: f64) -> (usize, Vec<f64>) {
    let n = window.pixels();
    let rho = window.resolution;
    let lo = ((mean - SUPPORT * sigma - window.origin()) / rho).floor();
    let hi = ((mean + SUPPORT * sigma - window.origin()) / rho).ceil();
    let first = lo.max(0.0) as usize;
    let last = (hi.min(n as f64)).max(0.0) as usize;
    if first >= last {
        return (0, Vec::new());
    }
    let masses = (first..last)
        .map(|k| interval_mass(window.edge(k), window.edge(k + 1), mean, sigma))
        .collect();
    (first, masses)
}

fn add_gaussian(image: &mut [f64], window: &WindowSpec, x: &[f64], sigma: f64) {
    let d = window.dim;
    let n = window.pixels();
    let axes: Vec<(usize, Vec<f64>)> = x.iter().map(|&m| axis_masses(window, m, sigma)).collect();
    if axes.iter().any(|(_, m)| m.is_empty()) {
        return;
    }
    if d == 2 {
        let (f0, m0) = &axes[0];
        let (f1, m1) = &axes[1];
        for (i, a) in m0.iter().enumerate() {
            let row = &mut image[(f0 + i) * n + f1..(f0 + i) * n + f1 + m1.len()];
            for (px, b) in row.iter_mut().zip(m1) {
                *px += a * b;
            }
        }
        return;
    }
    // generic odometer over the d-dimensional sub-box
    let mut idx = vec![0usize; d];
    loop {
        let mut flat = 0usize;
        let mut w = 1.0;
        for a in 0..d {
            flat = flat * n + axes[a].0 + idx[a];
            w *= axes[a].1[idx[a]];
        }
        image[flat] += w;
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axes[a].1.len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Superposition of unit-mass isotropic Gaussians, one per point,
/// integrated over every pixel cell.
///
/// Each pixel holds the kernel mass inside its cell, so the image sums to
/// the number of points whose mass lies inside the window. Points outside
/// the window still deposit their in-window tails.
pub fn rasterize_gaussian(set: &PointSet, window: &WindowSpec, sigma: f64) -> Result<IntensityImage> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if set.dim() != window.dim {
        return Err(Error::DimensionMismatch {
            expected: window.dim,
            actual: set.dim(),
        });
    }
    let mut image = IntensityImage::zeros(*window, 1);
    for p in set.iter() {
        add_gaussian(image.data_mut(), window, p, sigma);
    }
    Ok(image)
}

/// Wraps an angle into `(-pi, pi]`.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = theta - two_pi * ((theta - PI) / two_pi).ceil();
    if w <= -PI {
        w + two_pi
    } else {
        w
    }
}

/// Adds the range-bearing likelihood of one measurement, evaluated at every
/// pixel centre and scaled by the cell area. The Gaussian is normalised in
/// (range, bearing) and no Jacobian is applied.
fn add_range_bearing(image: &mut [f64], window: &WindowSpec, z: &[f64], sensor: [f64; 2], eta_r: f64, eta_theta: f64) {
    let n = window.pixels();
    let rho = window.resolution;
    let (dx, dy) = (z[0] - sensor[0], z[1] - sensor[1]);
    let r_hat = dx.hypot(dy);
    let theta_hat = dy.atan2(dx);
    let r_lo = (r_hat - SUPPORT * eta_r).max(0.0);
    let r_hi = r_hat + SUPPORT * eta_r;
    let half_span = SUPPORT * eta_theta;
    let full_circle = half_span >= PI;

    // bounding box of the annular sector
    let (mut x0, mut x1, mut y0, mut y1) = if full_circle {
        (-r_hi, r_hi, -r_hi, r_hi)
    } else {
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut take = |phi: f64, r: f64| {
            let (px, py) = (r * phi.cos(), r * phi.sin());
            b.0 = b.0.min(px);
            b.1 = b.1.max(px);
            b.2 = b.2.min(py);
            b.3 = b.3.max(py);
        };
        for phi in [theta_hat - half_span, theta_hat + half_span] {
            take(phi, r_lo);
            take(phi, r_hi);
        }
        for q in -4..=4 {
            let phi = q as f64 * PI / 2.0;
            if wrap_angle(phi - theta_hat).abs() <= half_span {
                take(phi, r_hi);
            }
        }
        b
    };
    x0 += sensor[0];
    x1 += sensor[0];
    y0 += sensor[1];
    y1 += sensor[1];

    let to_index = |c: f64| (c - window.origin()) / rho;
    let i_lo = to_index(x0).floor().max(0.0) as usize;
    let i_hi = (to_index(x1).ceil().min(n as f64)).max(0.0) as usize;
    let j_lo_box = to_index(y0).floor().max(0.0) as usize;
    let j_hi_box = (to_index(y1).ceil().min(n as f64)).max(0.0) as usize;
    if i_lo >= i_hi || j_lo_box >= j_hi_box {
        return;
    }

    let norm = rho * rho / (2.0 * PI * eta_r * eta_theta);
    let inv_r = 1.0 / eta_r;
    let inv_t = 1.0 / eta_theta;
    let cutoff = 0.5 * SUPPORT * SUPPORT;
    for i in i_lo..i_hi {
        let px = window.center(i) - sensor[0];
        let rem_hi = r_hi * r_hi - px * px;
        if rem_hi < 0.0 {
            continue;
        }
        let a = rem_hi.sqrt();
        let b = (r_lo * r_lo - px * px).max(0.0).sqrt();
        // dy lies in [-a, -b] or [b, a]; pad each by a pixel and merge overlaps
        let cols = |lo: f64, hi: f64| {
            let j0 = to_index(sensor[1] + lo - rho).floor().max(j_lo_box as f64) as usize;
            let j1 = to_index(sensor[1] + hi + rho).ceil().min(j_hi_box as f64).max(j0 as f64) as usize;
            (j0, j1)
        };
        let (l0, l1) = cols(-a, -b);
        let (u0, u1) = cols(b, a);
        let ranges = if l1 >= u0 {
            [(l0.min(u0), l1.max(u1)), (0, 0)]
        } else {
            [(l0, l1), (u0, u1)]
        };
        for (j0, j1) in ranges {
            for j in j0..j1 {
                let py = window.center(j) - sensor[1];
                let r = px.hypot(py);
                let er = (r - r_hat) * inv_r;
                let et = wrap_angle(py.atan2(px) - theta_hat) * inv_t;
                let e = 0.5 * (er * er + et * et);
                if e < cutoff {
                    image[i * n + j] += norm * (-e).exp();
                }
            }
        }
    }
}

/// Pixel-integrated sum of per-measurement likelihoods over the window.
///
/// Isotropic models go through exactly the same path as
/// [`rasterize_gaussian`]; range-bearing models use the pixel-centre value
/// times the cell area.
pub fn rasterize_density(
    measurements: &PointSet,
    models: &[MeasurementModel],
    window: &WindowSpec,
) -> Result<IntensityImage> {
    if models.len() != measurements.len() {
        return Err(Error::invalid(format!(
            "{} measurement models for {} measurements",
            models.len(),
            measurements.len()
        )));
    }
    if measurements.dim() != window.dim {
        return Err(Error::DimensionMismatch {
            expected: window.dim,
            actual: measurements.dim(),
        });
    }
    let mut image = IntensityImage::zeros(*window, 1);
    for (z, model) in measurements.iter().zip(models) {
        model.validate()?;
        match *model {
            MeasurementModel::IsotropicGaussian { sigma } => {
                add_gaussian(image.data_mut(), window, z, sigma);
            }
            MeasurementModel::RangeBearing {
                sensor,
                eta_r,
                eta_theta,
            } => {
                if window.dim != 2 {
                    return Err(Error::invalid("range-bearing models need a 2-D window"));
                }
                add_range_bearing(image.data_mut(), window, z, sensor, eta_r, eta_theta);
            }
        }
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(width: f64, rho: f64) -> WindowSpec {
        WindowSpec::new(width, rho, 2).unwrap()
    }

    #[test]
    fn center_density_value() {
        // continuous density at the pulse centre is 1 / (2 pi sigma^2)
        let sigma: f64 = 10.0;
        let peak = 1.0 / (2.0 * PI * sigma * sigma);
        assert!((peak - 1.5915e-3).abs() < 1e-7);
        // a 1 m cell around the centre holds about peak * area
        let w = win(101.0, 1.0);
        let img = rasterize_gaussian(&PointSet::planar(&[[0.0, 0.0]]), &w, sigma).unwrap();
        let c = 50 * 101 + 50;
        assert!((img.data()[c] - peak).abs() / peak < 1e-3);
    }

    #[test]
    fn empty_set_gives_zero_image() {
        let w = win(100.0, 1.0);
        let img = rasterize_gaussian(&PointSet::empty(2), &w, 3.0).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
        let img = rasterize_density(&PointSet::empty(2), &[], &w).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interior_points_preserve_mass() {
        let w = win(1000.0, 1000.0 / 128.0);
        let set = PointSet::planar(&[[0.0, 0.0], [-300.0, 220.0], [410.0, -400.0]]);
        let img = rasterize_gaussian(&set, &w, 10.0).unwrap();
        assert!((img.sum() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn outside_points_leave_tails() {
        let w = win(100.0, 1.0);
        let img = rasterize_gaussian(&PointSet::planar(&[[52.0, 0.0]]), &w, 5.0).unwrap();
        let s = img.sum();
        assert!(s > 0.3 && s < 0.5, "tail mass {s}");
    }

    #[test]
    fn one_dimensional_window() {
        let w = WindowSpec::new(64.0, 1.0, 1).unwrap();
        let set = PointSet::from_flat(1, vec![0.0, 10.0]).unwrap();
        let img = rasterize_gaussian(&set, &w, 2.0).unwrap();
        assert_eq!(img.data().len(), 64);
        assert!((img.sum() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_arguments() {
        let w = win(10.0, 1.0);
        let set = PointSet::planar(&[[0.0, 0.0]]);
        assert!(rasterize_gaussian(&set, &w, 0.0).is_err());
        let w1 = WindowSpec::new(10.0, 1.0, 1).unwrap();
        assert!(matches!(
            rasterize_gaussian(&set, &w1, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(rasterize_density(&set, &[], &w).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let t = k as f64 * 0.7;
            let w = wrap_angle(t);
            assert!(w > -PI && w <= PI);
            assert!(((t - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((t - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn isotropic_density_matches_gaussian_bitwise() {
        let w = win(200.0, 2.5);
        let set = PointSet::planar(&[[3.3, -40.1], [90.0, 99.0]]);
        let a = rasterize_gaussian(&set, &w, 7.0).unwrap();
        let models = vec![MeasurementModel::IsotropicGaussian { sigma: 7.0 }; 2];
        let b = rasterize_density(&set, &models, &w).unwrap();
        assert_eq!(a, b);
    }

    /// Dense evaluation over the whole grid, no culling.
    fn dense_range_bearing(w: &WindowSpec, z: [f64; 2], s: [f64; 2], er: f64, et: f64) -> Vec<f64> {
        let n = w.pixels();
        let r_hat = (z[0] - s[0]).hypot(z[1] - s[1]);
        let th = (z[1] - s[1]).atan2(z[0] - s[0]);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (w.center(i) - s[0], w.center(j) - s[1]);
                let dr = (x.hypot(y) - r_hat) / er;
                let dt = wrap_angle(y.atan2(x) - th) / et;
                out[i * n + j] = w.resolution * w.resolution / (2.0 * PI * er * et)
                    * (-0.5 * (dr * dr + dt * dt)).exp();
            }
        }
        out
    }

    #[test]
    fn range_bearing_matches_dense_evaluation() {
        let w = win(400.0, 5.0);
        for (s, r, th) in [
            ([-300.0, 50.0], 320.0, 0.1),
            ([0.0, 0.0], 120.0, 2.9),
            ([0.0, 0.0], 120.0, -3.1),
            ([150.0, 150.0], 180.0, -2.3),
            ([10.0, -5.0], 30.0, 1.0),
        ] {
            let z = [s[0] + r * f64::cos(th), s[1] + r * f64::sin(th)];
            let model = MeasurementModel::RangeBearing {
                sensor: s,
                eta_r: 10.0,
                eta_theta: 0.035,
            };
            let img = rasterize_density(&PointSet::planar(&[z]), &[model], &w).unwrap();
            let dense = dense_range_bearing(&w, z, s, 10.0, 0.035);
            let peak = dense.iter().cloned().fold(0.0, f64::max);
            for (a, b) in img.data().iter().zip(&dense) {
                assert!((a - b).abs() <= 1e-9 * peak.max(1e-300), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn range_bearing_peak_location() {
        let w = win(1000.0, 1000.0 / 128.0);
        let s = [-700.0, -200.0];
        let (r, th) = (900.0f64, 0.3f64);
        let target = [s[0] + r * th.cos(), s[1] + r * th.sin()];
        let model = MeasurementModel::RangeBearing {
            sensor: s,
            eta_r: 10.0,
            eta_theta: 0.035,
        };
        let img = rasterize_density(&PointSet::planar(&[target]), &[model], &w).unwrap();
        let (arg, _) = img
            .data()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let n = w.pixels();
        let (i, j) = (arg / n, arg % n);
        assert!((w.center(i) - target[0]).abs() <= w.resolution);
        assert!((w.center(j) - target[1]).abs() <= w.resolution);
    }
}
