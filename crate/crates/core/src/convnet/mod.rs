//! Fully convolutional encoder / hidden / decoder networks.
//!
//! Encoders are strided correlations, decoders are transposed correlations
//! (or nearest-neighbour upsampling followed by a correlation), hidden
//! layers are stride-1 correlations. Every layer ends in a pointwise
//! nonlinearity. Spatial dimension is 1 or 2; 1-D signals are stored with
//! height 1.

pub mod conv;
mod net;
mod optim;
mod train;

pub use conv::Real;
pub use net::{backward, conv_forward, forward, layer_forward, Gradients};
pub use optim::{AdamW, AdamWConfig};
pub use train::{mse_loss, train, train_from, PairSource, TrainConfig, TrainReport, VecPairs};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Encoder,
    Hidden,
    Decoder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Nonlinearity {
    LeakyRelu { slope: f64 },
    Relu,
    Tanh,
    Identity,
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::LeakyRelu { slope: 0.01 }
    }
}

impl Nonlinearity {
    pub fn apply<T: Real>(&self, z: T) -> T {
        match *self {
            Nonlinearity::LeakyRelu { slope } => {
                if z > T::zero() {
                    z
                } else {
                    z * T::from_f64_lossy(slope)
                }
            }
            Nonlinearity::Relu => z.max(T::zero()),
            Nonlinearity::Tanh => z.tanh(),
            Nonlinearity::Identity => z,
        }
    }

    pub fn derivative<T: Real>(&self, z: T) -> T {
        match *self {
            Nonlinearity::LeakyRelu { slope } => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::from_f64_lossy(slope)
                }
            }
            Nonlinearity::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Nonlinearity::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Nonlinearity::Identity => T::one(),
        }
    }

    /// `|s(a) - s(b)| <= |a - b|` and `s(0) = 0`.
    pub fn is_normalized_lipschitz(&self) -> bool {
        match *self {
            Nonlinearity::LeakyRelu { slope } => slope.abs() <= 1.0,
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    ZeroSame,
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleMode {
    #[default]
    Transposed,
    NearestConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_features: usize,
    pub out_features: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub resample: usize,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default = "yes")]
    pub bias: bool,
    #[serde(default)]
    pub upsample: UpsampleMode,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn hidden(in_features: usize, out_features: usize, kernel: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Hidden,
            in_features,
            out_features,
            kernel,
            resample: 1,
            nonlinearity: Nonlinearity::default(),
            padding: Padding::ZeroSame,
            bias: true,
            upsample: UpsampleMode::Transposed,
        }
    }

    pub fn encoder(in_features: usize, out_features: usize, kernel: usize, resample: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Encoder,
            resample,
            ..Self::hidden(in_features, out_features, kernel)
        }
    }

    pub fn decoder(in_features: usize, out_features: usize, kernel: usize, resample: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Decoder,
            resample,
            ..Self::hidden(in_features, out_features, kernel)
        }
    }

    pub fn with_nonlinearity(mut self, s: Nonlinearity) -> Self {
        self.nonlinearity = s;
        self
    }

    pub fn with_padding(mut self, p: Padding) -> Self {
        self.padding = p;
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_upsample(mut self, mode: UpsampleMode) -> Self {
        self.upsample = mode;
        self
    }

    /// Whether the filter is applied as a transposed correlation.
    pub fn is_transposed(&self) -> bool {
        self.kind == LayerKind::Decoder && self.upsample == UpsampleMode::Transposed
    }

    /// Effective stride of the correlation inside the layer.
    pub fn stride(&self) -> usize {
        match self.kind {
            LayerKind::Encoder => self.resample,
            LayerKind::Hidden => 1,
            LayerKind::Decoder => match self.upsample {
                UpsampleMode::Transposed => self.resample,
                UpsampleMode::NearestConv => 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.out_features == 0 {
            return Err(Error::invalid("feature counts must be positive"));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::invalid(format!("kernel width must be odd, got {}", self.kernel)));
        }
        if self.resample == 0 {
            return Err(Error::invalid("resample factor must be at least 1"));
        }
        if self.kind == LayerKind::Hidden && self.resample != 1 {
            return Err(Error::invalid("hidden layers do not resample"));
        }
        if !self.nonlinearity.is_normalized_lipschitz() {
            return Err(Error::invalid("nonlinearity must be 1-Lipschitz"));
        }
        Ok(())
    }

    /// Number of filter taps for spatial dimension `dim`.
    pub fn taps(&self, dim: usize) -> usize {
        self.kernel.pow(dim as u32)
    }

    pub fn weight_len(&self, dim: usize) -> usize {
        self.in_features * self.out_features * self.taps(dim)
    }
}

/// Ordered layers plus the spatial dimension they operate on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let arch = Architecture { dim, layers };
        arch.validate()?;
        Ok(arch)
    }

    /// Symmetric encoder / hidden / decoder stack. Encoders and decoders use
    /// `(kernel, features, resample)`, hidden layers `(kernel, features)`.
    #[allow(clippy::too_many_arguments)]
    pub fn encoder_decoder(
        dim: usize,
        in_features: usize,
        out_features: usize,
        n_resample: usize,
        resample_layer: (usize, usize, usize),
        n_hidden: usize,
        hidden_layer: (usize, usize),
    ) -> Result<Self> {
        let (k_e, f_e, m) = resample_layer;
        let (k_h, f_h) = hidden_layer;
        let mut layers = Vec::new();
        let mut f = in_features;
        for _ in 0..n_resample {
            layers.push(LayerSpec::encoder(f, f_e, k_e, m));
            f = f_e;
        }
        for _ in 0..n_hidden {
            layers.push(LayerSpec::hidden(f, f_h, k_h));
            f = f_h;
        }
        for i in 0..n_resample {
            let out = if i + 1 == n_resample { out_features } else { f_e };
            layers.push(LayerSpec::decoder(f, out, k_e, m));
            f = out;
        }
        if n_resample == 0 && f != out_features {
            layers.push(LayerSpec::hidden(f, out_features, 1));
        }
        Self::new(dim, layers)
    }

    /// 2 encoders (K=5, F=16, M=2), 2 hidden (K=1, F=64), 2 decoders.
    pub fn desk(in_features: usize) -> Self {
        Self::encoder_decoder(2, in_features, 1, 2, (5, 16, 2), 2, (1, 64)).expect("valid preset")
    }

    /// 3 encoders (K=9, F=128, M=2), 4 hidden (K=1, F=1024), 3 decoders.
    pub fn paper(in_features: usize) -> Self {
        Self::encoder_decoder(2, in_features, 1, 3, (9, 128, 2), 4, (1, 1024)).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::invalid(format!(
                "networks support 1-D and 2-D signals, got dimension {}",
                self.dim
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_features != pair[1].in_features {
                return Err(Error::shape(format!(
                    "layer {i} emits {} features but layer {} expects {}",
                    pair[0].out_features,
                    i + 1,
                    pair[1].in_features
                )));
            }
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    pub fn in_features(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_features)
    }

    pub fn out_features(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_features)
    }

    /// Product of the resample factors of all encoder layers.
    pub fn total_downsample(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Encoder)
            .map(|l| l.resample)
            .product()
    }

    pub fn uses_padding(&self) -> bool {
        self.layers.iter().any(|l| l.padding == Padding::ZeroSame && l.kernel > 1)
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        for l in &mut self.layers {
            l.bias = bias;
        }
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        for l in &mut self.layers {
            l.padding = padding;
        }
        self
    }

    pub fn with_nonlinearity(mut self, s: Nonlinearity) -> Self {
        for l in &mut self.layers {
            l.nonlinearity = s;
        }
        self
    }

    /// Spatial length after every layer for an input of length `n` along
    /// one axis, or an error if some layer cannot accept its input.
    pub fn trace_length(&self, n: usize) -> Result<Vec<usize>> {
        let mut sizes = vec![n];
        let mut cur = n;
        for (i, l) in self.layers.iter().enumerate() {
            let k = l.kernel;
            let m = l.resample;
            cur = match (l.kind, l.padding) {
                (LayerKind::Decoder, Padding::ZeroSame) => cur * m,
                (LayerKind::Decoder, Padding::None) => match l.upsample {
                    UpsampleMode::Transposed => (cur - 1) * m + k,
                    UpsampleMode::NearestConv => {
                        if cur * m < k {
                            return Err(Error::shape(format!("layer {i}: input shorter than kernel")));
                        }
                        cur * m - k + 1
                    }
                },
                (_, Padding::ZeroSame) => {
                    if cur % l.stride() != 0 {
                        return Err(Error::shape(format!(
                            "layer {i}: length {cur} is not divisible by resample factor {}",
                            l.stride()
                        )));
                    }
                    cur / l.stride()
                }
                (_, Padding::None) => {
                    if cur < k {
                        return Err(Error::shape(format!("layer {i}: input shorter than kernel")));
                    }
                    (cur - k) / l.stride() + 1
                }
            };
            if cur == 0 {
                return Err(Error::shape(format!("layer {i} produces an empty signal")));
            }
            sizes.push(cur);
        }
        Ok(sizes)
    }

    /// Input-index interval `[lo, hi]` that output index `o` of layer `l`
    /// reads, before clipping to the valid range.
    fn reads(l: &LayerSpec, o: isize) -> (isize, isize) {
        let k = l.kernel as isize;
        let m = l.resample as isize;
        let pad = match l.padding {
            Padding::ZeroSame => k / 2,
            Padding::None => 0,
        };
        match (l.kind, l.upsample) {
            (LayerKind::Decoder, UpsampleMode::Transposed) => {
                // o = m * n + tap - pad for tap in [0, k)
                let lo = (o + pad - k + 1).div_euclid(m) + ((o + pad - k + 1).rem_euclid(m) != 0) as isize;
                let hi = (o + pad).div_euclid(m);
                (lo, hi)
            }
            (LayerKind::Decoder, UpsampleMode::NearestConv) => {
                let lo = o - pad;
                let hi = o - pad + k - 1;
                (lo.div_euclid(m), hi.div_euclid(m))
            }
            _ => {
                let s = l.stride() as isize;
                (o * s - pad, o * s - pad + k - 1)
            }
        }
    }

    /// Smallest border width such that every output index at least that far
    /// from both ends of an `n`-long axis is computed without touching any
    /// padded or truncated value. Also returns the widest input footprint
    /// of those outputs.
    pub fn padding_free_margin(&self, n: usize) -> Result<(usize, usize)> {
        let sizes = self.trace_length(n)?;
        let out_n = *sizes.last().unwrap();
        let mut clean = vec![true; out_n];
        let mut extent = 0usize;
        for (o, flag) in clean.iter_mut().enumerate() {
            let (mut lo, mut hi) = (o as isize, o as isize);
            for (li, l) in self.layers.iter().enumerate().rev() {
                let (a, _) = Self::reads(l, lo);
                let (_, b) = Self::reads(l, hi);
                lo = a;
                hi = b;
                if lo < 0 || hi >= sizes[li] as isize {
                    *flag = false;
                }
            }
            if *flag {
                extent = extent.max((hi - lo + 1) as usize);
            }
        }
        let margin_lo = clean.iter().position(|&c| c).unwrap_or(out_n);
        let margin_hi = clean.iter().rev().position(|&c| c).unwrap_or(out_n);
        // interior must be contiguous for the margin to describe it
        let margin = margin_lo.max(margin_hi);
        if out_n > 2 * margin && clean[margin..out_n - margin].iter().any(|c| !c) {
            return Err(Error::shape("padding-affected pixels inside the interior"));
        }
        Ok((margin, extent))
    }
}

/// Filters (and optional biases) of one layer. Filters are stored
/// `out x in x taps`, except transposed decoder filters, which are stored
/// `in x out x taps`: the layout of the correlation they are the adjoint of.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: Architecture,
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> NetworkParams<T> {
    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` filters, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::stream(seed, u64::MAX);
        let layers = arch
            .layers
            .iter()
            .map(|l| {
                let taps = l.taps(arch.dim);
                let limit = (6.0 / ((l.in_features + l.out_features) * taps) as f64).sqrt();
                let weight = (0..l.weight_len(arch.dim))
                    .map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit)))
                    .collect();
                let bias = l.bias.then(|| vec![T::zero(); l.out_features]);
                LayerParams { weight, bias }
            })
            .collect();
        Ok(NetworkParams {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn from_layers(arch: Architecture, layers: Vec<LayerParams<T>>) -> Result<Self> {
        arch.validate()?;
        if layers.len() != arch.layers.len() {
            return Err(Error::shape("one parameter set per layer required"));
        }
        for (spec, p) in arch.layers.iter().zip(&layers) {
            if p.weight.len() != spec.weight_len(arch.dim) {
                return Err(Error::shape(format!(
                    "filter holds {} values, layer needs {}",
                    p.weight.len(),
                    spec.weight_len(arch.dim)
                )));
            }
            match (&p.bias, spec.bias) {
                (Some(b), true) if b.len() == spec.out_features => {}
                (None, false) => {}
                _ => return Err(Error::shape("bias does not match the layer spec")),
            }
            if p.weight.iter().chain(p.bias.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite network parameter".into()));
            }
        }
        Ok(NetworkParams { arch, layers })
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.as_ref().map_or(0, Vec::len))
            .sum()
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::from_f64_lossy(x.to_f64().unwrap())).collect();
        NetworkParams {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: conv(&l.weight),
                    bias: l.bias.as_ref().map(conv),
                })
                .collect(),
        }
    }

    /// Per-layer filter norms. For a layer mixing channels, the absolute
    /// tap sums form a matrix `A[out][in]`; the layer norm is
    /// `sqrt(max_row_sum(A) * max_col_sum(A))`, which bounds the l2 gain of
    /// the layer and equals the plain L1 norm of a single-channel filter.
    pub fn filter_l1_norms(&self) -> Vec<f64> {
        let dim = self.arch.dim;
        self.arch
            .layers
            .iter()
            .zip(&self.layers)
            .map(|(spec, p)| {
                let taps = spec.taps(dim);
                let (fo, fi) = (spec.out_features, spec.in_features);
                let mut a = vec![0.0f64; fo * fi];
                for (idx, chunk) in p.weight.chunks_exact(taps).enumerate() {
                    let s: f64 = chunk.iter().map(|w| w.to_f64().unwrap().abs()).sum();
                    let (o, i) = if spec.is_transposed() {
                        (idx % fo, idx / fo)
                    } else {
                        (idx / fi, idx % fi)
                    };
                    a[o * fi + i] = s;
                }
                let row = (0..fo)
                    .map(|o| a[o * fi..(o + 1) * fi].iter().sum::<f64>())
                    .fold(0.0, f64::max);
                let col = (0..fi)
                    .map(|i| (0..fo).map(|o| a[o * fi + i]).sum::<f64>())
                    .fold(0.0, f64::max);
                // nearest-neighbour upsampling scales l2 norms by sqrt(M^d)
                let upsample_gain = match (spec.kind, spec.upsample) {
                    (LayerKind::Decoder, UpsampleMode::NearestConv) => (spec.resample.pow(dim as u32) as f64).sqrt(),
                    _ => 1.0,
                };
                (row * col).sqrt() * upsample_gain
            })
            .collect()
    }

    /// `H`, the product of all layer filter norms.
    pub fn filter_l1_product(&self) -> f64 {
        self.filter_l1_norms().iter().product()
    }
}

/// Channel-major `channels x height x width` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} values do not fill a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    /// Wraps a 1-D or 2-D intensity image.
    pub fn from_image(image: &crate::raster::IntensityImage) -> Result<Self> {
        let n = image.pixels();
        let (h, w) = match image.dim() {
            1 => (1, n),
            2 => (n, n),
            d => return Err(Error::invalid(format!("no tensor layout for {d}-D images"))),
        };
        let data = image.data().iter().map(|&v| T::from_f64_lossy(v)).collect();
        Self::new(image.channels(), h, w, data)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Crops `margin` pixels from every spatial border (height too, unless
    /// the tensor is 1-D).
    pub fn crop(&self, margin: usize) -> Tensor<T> {
        let mh = if self.height == 1 { 0 } else { margin };
        let (h, w) = (self.height - 2 * mh, self.width - 2 * margin);
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in mh..mh + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + margin..row + margin + w]);
            }
        }
        Tensor {
            channels: self.channels,
            height: h,
            width: w,
            data,
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|x| U::from_f64_lossy(x.to_f64().unwrap())).collect(),
        }
    }
}
