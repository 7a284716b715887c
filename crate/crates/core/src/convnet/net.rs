use super::conv::{self, ConvGeometry, Real};
use super::{LayerKind, LayerParams, LayerSpec, NetworkParams, Padding, Tensor, UpsampleMode};
use crate::error::{Error, Result};

/// Gradients with the same layout as [`NetworkParams::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: vec![T::zero(); l.weight.len()],
                    bias: l.bias.as_ref().map(|b| vec![T::zero(); b.len()]),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x = *x + *y;
            }
            if let (Some(ab), Some(bb)) = (a.bias.as_mut(), b.bias.as_ref()) {
                for (x, y) in ab.iter_mut().zip(bb) {
                    *x = *x + *y;
                }
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            for x in l.weight.iter_mut().chain(l.bias.iter_mut().flatten()) {
                *x = *x * s;
            }
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter().flatten()).copied())
            .collect()
    }
}

/// Everything one layer needs to run forward and backward on a given
/// input shape.
#[derive(Clone, Copy, Debug)]
struct Plan {
    geom: ConvGeometry,
    out_h: usize,
    out_w: usize,
    /// Spatial shape after nearest-neighbour upsampling, if any.
    upsampled: Option<(usize, usize)>,
}

fn plan(spec: &LayerSpec, dim: usize, channels: usize, h: usize, w: usize) -> Result<Plan> {
    if channels != spec.in_features {
        return Err(Error::shape(format!(
            "layer expects {} input features, got {channels}",
            spec.in_features
        )));
    }
    if dim == 1 && h != 1 {
        return Err(Error::shape("1-D layers need height-1 inputs"));
    }
    let k = spec.kernel;
    let m = spec.resample;
    let pad = match spec.padding {
        Padding::ZeroSame => k / 2,
        Padding::None => 0,
    };
    let two_d = dim == 2;
    let geometry = |channels, height, width, stride| ConvGeometry {
        channels,
        height,
        width,
        kernel_h: if two_d { k } else { 1 },
        kernel_w: k,
        stride_h: if two_d { stride } else { 1 },
        stride_w: stride,
        pad_h: if two_d { pad } else { 0 },
        pad_w: pad,
    };
    let check_divisible = |n: usize, s: usize| {
        if spec.padding == Padding::ZeroSame && n % s != 0 {
            Err(Error::shape(format!(
                "spatial size {n} is not divisible by resample factor {s}"
            )))
        } else {
            Ok(())
        }
    };
    match (spec.kind, spec.upsample) {
        (LayerKind::Decoder, UpsampleMode::Transposed) => {
            let grow = |n: usize| match spec.padding {
                Padding::ZeroSame => n * m,
                Padding::None => (n - 1) * m + k,
            };
            let out_h = if two_d { grow(h) } else { 1 };
            let out_w = grow(w);
            let geom = geometry(spec.out_features, out_h, out_w, m);
            geom.validate()?;
            if geom.out_height() != h || geom.out_width() != w {
                return Err(Error::shape("transposed layer does not invert its geometry"));
            }
            Ok(Plan {
                geom,
                out_h,
                out_w,
                upsampled: None,
            })
        }
        (LayerKind::Decoder, UpsampleMode::NearestConv) => {
            let (uh, uw) = (if two_d { h * m } else { 1 }, w * m);
            let geom = geometry(channels, uh, uw, 1);
            geom.validate()?;
            Ok(Plan {
                geom,
                out_h: geom.out_height(),
                out_w: geom.out_width(),
                upsampled: Some((uh, uw)),
            })
        }
        _ => {
            let s = spec.stride();
            if two_d {
                check_divisible(h, s)?;
            }
            check_divisible(w, s)?;
            let geom = geometry(channels, h, w, s);
            geom.validate()?;
            Ok(Plan {
                geom,
                out_h: geom.out_height(),
                out_w: geom.out_width(),
                upsampled: None,
            })
        }
    }
}

fn upsample_nearest<T: Real>(x: &[T], c: usize, h: usize, w: usize, uh: usize, uw: usize) -> Vec<T> {
    let (mh, mw) = (uh / h, uw / w);
    let mut out = vec![T::zero(); c * uh * uw];
    for ch in 0..c {
        for y in 0..uh {
            for xo in 0..uw {
                out[(ch * uh + y) * uw + xo] = x[(ch * h + y / mh) * w + xo / mw];
            }
        }
    }
    out
}

fn upsample_nearest_adjoint<T: Real>(g: &[T], c: usize, h: usize, w: usize, uh: usize, uw: usize) -> Vec<T> {
    let (mh, mw) = (uh / h, uw / w);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..uh {
            for xo in 0..uw {
                let d = &mut out[(ch * h + y / mh) * w + xo / mw];
                *d = *d + g[(ch * uh + y) * uw + xo];
            }
        }
    }
    out
}

/// Pre-activation of one layer.
fn linear<T: Real>(spec: &LayerSpec, p: &LayerParams<T>, plan: &Plan, x: &[T], h: usize, w: usize) -> Result<Vec<T>> {
    let bias = p.bias.as_deref();
    match plan.upsampled {
        Some((uh, uw)) => {
            let up = upsample_nearest(x, spec.in_features, h, w, uh, uw);
            conv::conv_forward(&up, &plan.geom, &p.weight, spec.out_features, bias)
        }
        None if spec.is_transposed() => {
            conv::conv_transpose_forward(x, &plan.geom, &p.weight, spec.in_features, bias)
        }
        None => conv::conv_forward(x, &plan.geom, &p.weight, spec.out_features, bias),
    }
}

/// Single strided correlation of a tensor with a `out x in x taps` filter.
#[allow(clippy::too_many_arguments)]
pub fn conv_forward<T: Real>(
    input: &Tensor<T>,
    weight: &[T],
    out_features: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
    dim: usize,
) -> Result<Tensor<T>> {
    let spec = LayerSpec {
        kind: if stride == 1 { LayerKind::Hidden } else { LayerKind::Encoder },
        resample: stride,
        padding,
        ..LayerSpec::hidden(input.channels, out_features, kernel)
    };
    let plan = plan(&spec, dim, input.channels, input.height, input.width)?;
    let data = conv::conv_forward(&input.data, &plan.geom, weight, out_features, None)?;
    Tensor::new(out_features, plan.out_h, plan.out_w, data)
}

/// Correlation, resampling and nonlinearity of one layer.
pub fn layer_forward<T: Real>(spec: &LayerSpec, p: &LayerParams<T>, dim: usize, input: &Tensor<T>) -> Result<Tensor<T>> {
    let plan = plan(spec, dim, input.channels, input.height, input.width)?;
    let mut z = linear(spec, p, &plan, &input.data, input.height, input.width)?;
    for v in z.iter_mut() {
        *v = spec.nonlinearity.apply(*v);
    }
    Tensor::new(spec.out_features, plan.out_h, plan.out_w, z)
}

/// Network output `x_L` for input `x_0`.
pub fn forward<T: Real>(params: &NetworkParams<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let mut x = input.clone();
    for (spec, p) in params.arch.layers.iter().zip(&params.layers) {
        x = layer_forward(spec, p, params.arch.dim, &x)?;
    }
    Ok(x)
}

struct Cache<T> {
    plan: Plan,
    input: Tensor<T>,
    pre: Vec<T>,
}

/// Forward pass keeping what backpropagation needs.
fn forward_cached<T: Real>(params: &NetworkParams<T>, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
    let dim = params.arch.dim;
    let mut caches = Vec::with_capacity(params.layers.len());
    let mut x = input.clone();
    for (spec, p) in params.arch.layers.iter().zip(&params.layers) {
        let plan = plan(spec, dim, x.channels, x.height, x.width)?;
        let pre = linear(spec, p, &plan, &x.data, x.height, x.width)?;
        let out = pre.iter().map(|&v| spec.nonlinearity.apply(v)).collect();
        let next = Tensor::new(spec.out_features, plan.out_h, plan.out_w, out)?;
        caches.push(Cache { plan, input: x, pre });
        x = next;
    }
    Ok((x, caches))
}

fn backward_cached<T: Real>(params: &NetworkParams<T>, caches: &[Cache<T>], grad_output: Vec<T>) -> Gradients<T> {
    let mut grads = Gradients::zeros_like(params);
    let mut g = grad_output;
    for (li, cache) in caches.iter().enumerate().rev() {
        let spec = &params.arch.layers[li];
        let p = &params.layers[li];
        let gp = &mut grads.layers[li];
        for (gv, &z) in g.iter_mut().zip(&cache.pre) {
            *gv = *gv * spec.nonlinearity.derivative(z);
        }
        let x = &cache.input;
        let plan = &cache.plan;
        let dbias = gp.bias.as_deref_mut();
        g = match plan.upsampled {
            Some((uh, uw)) => {
                let up = upsample_nearest(&x.data, x.channels, x.height, x.width, uh, uw);
                let dup = conv::conv_backward(&up, &plan.geom, &p.weight, spec.out_features, &g, &mut gp.weight, dbias);
                upsample_nearest_adjoint(&dup, x.channels, x.height, x.width, uh, uw)
            }
            None if spec.is_transposed() => {
                conv::conv_transpose_backward(&x.data, &plan.geom, &p.weight, spec.in_features, &g, &mut gp.weight, dbias)
            }
            None => conv::conv_backward(&x.data, &plan.geom, &p.weight, spec.out_features, &g, &mut gp.weight, dbias),
        };
    }
    grads
}

/// Reverse-mode gradient of `<grad_output, forward(params, input)>` with
/// respect to every filter and bias.
pub fn backward<T: Real>(params: &NetworkParams<T>, input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Gradients<T>> {
    let (out, caches) = forward_cached(params, input)?;
    if (out.channels, out.height, out.width) != (grad_output.channels, grad_output.height, grad_output.width) {
        return Err(Error::shape(format!(
            "output gradient is {}x{}x{}, network output is {}x{}x{}",
            grad_output.channels, grad_output.height, grad_output.width, out.channels, out.height, out.width
        )));
    }
    Ok(backward_cached(params, &caches, grad_output.data.clone()))
}

/// Mean squared error over the output with `margin` pixels trimmed from
/// every border, and its gradient. The loss is accumulated in `f64`.
pub(crate) fn loss_and_gradients<T: Real>(
    params: &NetworkParams<T>,
    input: &Tensor<T>,
    target: &Tensor<T>,
    margin: usize,
) -> Result<(f64, Gradients<T>)> {
    let (out, caches) = forward_cached(params, input)?;
    if (out.channels, out.height, out.width) != (target.channels, target.height, target.width) {
        return Err(Error::shape(format!(
            "target is {}x{}x{}, network output is {}x{}x{}",
            target.channels, target.height, target.width, out.channels, out.height, out.width
        )));
    }
    let mh = if out.height == 1 { 0 } else { margin };
    if out.width <= 2 * margin || out.height <= 2 * mh {
        return Err(Error::shape("loss margin leaves no pixels"));
    }
    let count = out.channels * (out.height - 2 * mh) * (out.width - 2 * margin);
    let scale = 2.0 / count as f64;
    let mut sum = 0.0f64;
    let mut grad = vec![T::zero(); out.data.len()];
    for c in 0..out.channels {
        for y in mh..out.height - mh {
            let row = (c * out.height + y) * out.width;
            for x in margin..out.width - margin {
                let i = row + x;
                let diff = out.data[i].to_f64().unwrap() - target.data[i].to_f64().unwrap();
                sum += diff * diff;
                grad[i] = T::from_f64_lossy(scale * diff);
            }
        }
    }
    Ok((sum / count as f64, backward_cached(params, &caches, grad)))
}
