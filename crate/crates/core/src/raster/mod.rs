//! Point sets, windows, and intensity images.
//!
//! A point set is turned into an image by placing one density kernel per
//! element and integrating it over every pixel cell of a centred window.
//! Tensor axis `a` always corresponds to coordinate `a`, stored row-major.

mod extract;
mod render;

pub use extract::{estimate_cardinality, extract_points, ExtractMethod};
pub use render::{rasterize_density, rasterize_gaussian, MeasurementModel};
pub(crate) use render::wrap_angle;

use crate::error::{Error, Result};

/// A finite set of `dim`-dimensional points, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn empty(dim: usize) -> Self {
        assert!(dim > 0, "point dimension must be positive");
        PointSet {
            dim,
            coords: Vec::new(),
        }
    }

    /// Builds a set from flat coordinates `[x0, y0, x1, y1, ...]`.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::shape(format!(
                "{} coordinates do not split into {dim}-vectors",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: impl IntoIterator<Item = P>) -> Result<Self> {
        let mut coords = Vec::new();
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    pub fn planar(points: &[[f64; 2]]) -> Self {
        Self::from_points(2, points.iter()).expect("planar points must be finite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "point dimension mismatch");
        self.coords.extend_from_slice(p);
    }

    pub fn extend(&mut self, other: &PointSet) {
        assert_eq!(other.dim, self.dim, "point dimension mismatch");
        self.coords.extend_from_slice(&other.coords);
    }

    /// Points whose coordinates all lie in the open box `(-half, half)`.
    pub fn inside_box(&self, half: f64) -> PointSet {
        let mut out = PointSet::empty(self.dim);
        for p in self.iter().filter(|p| p.iter().all(|c| c.abs() < half)) {
            out.push(p);
        }
        out
    }

    pub fn translated(&self, offset: &[f64]) -> PointSet {
        assert_eq!(offset.len(), self.dim);
        let coords = self
            .coords
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(offset).map(|(a, b)| a + b))
            .collect();
        PointSet {
            dim: self.dim,
            coords,
        }
    }
}

/// A hypercube of width `width` centred on the origin, sampled every
/// `resolution` metres along each axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub width: f64,
    pub resolution: f64,
    pub dim: usize,
}

impl WindowSpec {
    pub fn new(width: f64, resolution: f64, dim: usize) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!("window width must be positive, got {width}")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid(format!(
                "window resolution must be positive, got {resolution}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("window dimension must be positive"));
        }
        let w = WindowSpec {
            width,
            resolution,
            dim,
        };
        if w.pixels() == 0 {
            return Err(Error::invalid(format!(
                "window of width {width} holds no pixel at resolution {resolution}"
            )));
        }
        Ok(w)
    }

    /// A square window with `pixels` samples per axis at the given resolution.
    pub fn with_pixels(pixels: usize, resolution: f64, dim: usize) -> Result<Self> {
        Self::new(pixels as f64 * resolution, resolution, dim)
    }

    /// Samples per axis, `floor(width / resolution)`.
    pub fn pixels(&self) -> usize {
        // absorb rounding in ratios such as 1000 / (1000 / 128)
        (self.width / self.resolution + 1e-9).floor() as usize
    }

    pub fn len(&self) -> usize {
        self.pixels().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of the lower edge of cell `k` along any axis.
    pub fn edge(&self, k: usize) -> f64 {
        self.origin() + k as f64 * self.resolution
    }

    pub fn center(&self, k: usize) -> f64 {
        self.origin() + (k as f64 + 0.5) * self.resolution
    }

    /// Lower edge of the sampled grid.
    pub fn origin(&self) -> f64 {
        -(self.pixels() as f64) * self.resolution / 2.0
    }

    /// Half-width of the sampled grid.
    pub fn half_extent(&self) -> f64 {
        self.pixels() as f64 * self.resolution / 2.0
    }
}

/// A rank-`dim` tensor (times `channels`) of intensities over a window.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage {
    data: Vec<f64>,
    window: WindowSpec,
    channels: usize,
}

impl IntensityImage {
    pub fn zeros(window: WindowSpec, channels: usize) -> Self {
        assert!(channels > 0, "image needs at least one channel");
        IntensityImage {
            data: vec![0.0; window.len() * channels],
            window,
            channels,
        }
    }

    pub fn from_data(window: WindowSpec, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("image needs at least one channel"));
        }
        if data.len() != window.len() * channels {
            return Err(Error::shape(format!(
                "expected {} values for {channels} channel(s) of {} pixels, got {}",
                window.len() * channels,
                window.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("image contains non-finite values".into()));
        }
        Ok(IntensityImage {
            data,
            window,
            channels,
        })
    }

    /// Concatenates single-channel frames along the channel axis.
    pub fn stack(frames: &[&IntensityImage]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero frames"))?;
        let mut data = Vec::with_capacity(first.data.len() * frames.len());
        let mut channels = 0;
        for f in frames {
            if f.window != first.window {
                return Err(Error::shape("stacked frames must share a window"));
            }
            data.extend_from_slice(&f.data);
            channels += f.channels;
        }
        Ok(IntensityImage {
            data,
            window: first.window,
            channels,
        })
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dim(&self) -> usize {
        self.window.dim
    }

    pub fn pixels(&self) -> usize {
        self.window.pixels()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.window.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Translates the image content by whole pixels along each axis,
    /// filling vacated cells with zero.
    pub fn shifted(&self, offset: &[isize]) -> IntensityImage {
        assert_eq!(offset.len(), self.dim());
        let n = self.pixels() as isize;
        let d = self.dim();
        let mut out = IntensityImage::zeros(self.window, self.channels);
        let per_channel = self.window.len();
        let mut idx = vec![0isize; d];
        for flat in 0..per_channel {
            let mut rem = flat;
            for a in (0..d).rev() {
                idx[a] = (rem % n as usize) as isize;
                rem /= n as usize;
            }
            let mut dest = 0usize;
            let mut inside = true;
            for a in 0..d {
                let j = idx[a] + offset[a];
                if j < 0 || j >= n {
                    inside = false;
                    break;
                }
                dest = dest * n as usize + j as usize;
            }
            if inside {
                for c in 0..self.channels {
                    out.data[c * per_channel + dest] = self.data[c * per_channel + flat];
                }
            }
        }
        out
    }

    /// Binary P5 PGM of channel 0 of a 2-D image, scaled so the largest
    /// value maps to 255. Returns the file bytes and the scale factor
    /// (intensity per grey level). Negative values render black.
    pub fn to_pgm(&self, log_display: bool) -> Result<(Vec<u8>, f64)> {
        if self.dim() != 2 {
            return Err(Error::invalid("PGM export needs a 2-D image"));
        }
        let n = self.pixels();
        let values: Vec<f64> = self
            .channel(0)
            .iter()
            .map(|&v| {
                let v = v.max(0.0);
                // display-only contrast stretch
                if log_display {
                    (v + 1e-3).ln() - 1e-3f64.ln()
                } else {
                    v
                }
            })
            .collect();
        let max = values.iter().cloned().fold(0.0, f64::max);
        let scale = if max > 0.0 { max / 255.0 } else { 1.0 };
        let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
        // rows are the second coordinate, top row is +y
        for row in (0..n).rev() {
            for col in 0..n {
                let v = values[col * n + row];
                bytes.push((v / scale).round().clamp(0.0, 255.0) as u8);
            }
        }
        Ok((bytes, scale))
    }
}
