//! Losses, set distances and the window-transfer bound.

mod assign;
mod bound;
mod lemma;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{IntensityImage, PointSet};

pub use assign::min_cost_assignment;
pub use bound::{bound_constant, estimate_loss_large, BoundInputs, BoundReport, LossEstimate, RunningStats};
pub use lemma::{lemma1_sides, verify_lemma1, LemmaReport};

/// Mean squared pixel difference of two images of the same shape.
pub fn mse_windowed(predicted: &IntensityImage, target: &IntensityImage) -> Result<f64> {
    if predicted.window() != target.window() || predicted.channels() != target.channels() {
        return Err(Error::shape("predicted and target images differ in shape"));
    }
    let n = predicted.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = predicted
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

/// How unmatched elements and far pairs are charged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OspaForm {
    /// Squared distances untruncated, `c` per missing element.
    #[default]
    Uncut,
    /// Squared distances cut at `c²`, `c²` per missing element.
    Standard,
}

/// OSPA distance with cutoff `c`, order 2.
pub fn ospa(truth: &PointSet, estimate: &PointSet, cutoff: f64) -> Result<f64> {
    ospa_with(truth, estimate, cutoff, OspaForm::Uncut)
}

pub fn ospa_with(truth: &PointSet, estimate: &PointSet, cutoff: f64, form: OspaForm) -> Result<f64> {
    if truth.dim() != estimate.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            actual: estimate.dim(),
        });
    }
    if !(cutoff > 0.0) {
        return Err(Error::invalid("OSPA cutoff must be positive"));
    }
    let (small, large) = if truth.len() <= estimate.len() {
        (truth, estimate)
    } else {
        (estimate, truth)
    };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return Ok(0.0);
    }
    let cut2 = cutoff * cutoff;
    let mut cost = Vec::with_capacity(m * n);
    for x in small.iter() {
        for y in large.iter() {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            cost.push(match form {
                OspaForm::Uncut => d2,
                OspaForm::Standard => d2.min(cut2),
            });
        }
    }
    let assignment = min_cost_assignment(&cost, m, n);
    let matched: f64 = assignment.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum();
    let per_missing = match form {
        OspaForm::Uncut => cutoff,
        OspaForm::Standard => cut2,
    };
    Ok(((matched + per_missing * (n - m) as f64) / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::WindowSpec;

    fn brute_ospa(x: &PointSet, y: &PointSet, c: f64) -> f64 {
        let (s, l) = if x.len() <= y.len() { (x, y) } else { (y, x) };
        let (m, n) = (s.len(), l.len());
        if n == 0 {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let d: f64 = (0..m)
                .map(|i| {
                    let (a, b) = (s.point(i), l.point(p[i]));
                    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
                })
                .sum();
            best = best.min(d);
        });
        ((best + c * (n - m) as f64) / n as f64).sqrt()
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn mse_examples() {
        let w = WindowSpec::new(4.0, 1.0, 2).unwrap();
        let a = IntensityImage::from_data(w, 1, (0..16).map(|v| v as f64).collect()).unwrap();
        let b = IntensityImage::from_data(w, 1, a.data().iter().map(|v| v + 2.0).collect()).unwrap();
        assert_eq!(mse_windowed(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_windowed(&b, &a).unwrap(), 4.0);
        let other = IntensityImage::zeros(WindowSpec::new(5.0, 1.0, 2).unwrap(), 1);
        assert!(mse_windowed(&a, &other).is_err());
    }

    #[test]
    fn ospa_examples() {
        let o = PointSet::planar(&[[0.0, 0.0]]);
        assert_eq!(ospa(&o, &o, 500.0).unwrap(), 0.0);
        assert_eq!(ospa(&o, &PointSet::planar(&[[3.0, 4.0]]), 500.0).unwrap(), 5.0);
        let three = PointSet::planar(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]);
        let v = ospa(&three, &PointSet::empty(2), 500.0).unwrap();
        assert!((v - 500f64.sqrt()).abs() < 1e-12);
        assert_eq!(ospa(&PointSet::empty(2), &PointSet::empty(2), 500.0).unwrap(), 0.0);
        assert!(ospa(&o, &PointSet::empty(1), 500.0).is_err());
    }

    #[test]
    fn standard_form_truncates() {
        let a = PointSet::planar(&[[0.0, 0.0]]);
        let b = PointSet::planar(&[[1000.0, 0.0]]);
        assert_eq!(ospa_with(&a, &b, 100.0, OspaForm::Standard).unwrap(), 100.0);
        assert_eq!(ospa_with(&a, &PointSet::empty(2), 100.0, OspaForm::Standard).unwrap(), 100.0);
    }

    #[test]
    fn ospa_is_symmetric_and_matches_enumeration() {
        let mut s = 99u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 100.0
        };
        for trial in 0..60 {
            let (n, m) = (trial % 5 + 1, (trial / 5) % 4);
            let x = PointSet::planar(&(0..n).map(|_| [next(), next()]).collect::<Vec<_>>());
            let y = PointSet::planar(&(0..m).map(|_| [next(), next()]).collect::<Vec<_>>());
            let a = ospa(&x, &y, 500.0).unwrap();
            assert!((a - ospa(&y, &x, 500.0).unwrap()).abs() < 1e-12);
            assert!((a - brute_ospa(&x, &y, 500.0)).abs() < 1e-9);
        }
    }
}
