//! Strided 1-D/2-D convolution and its adjoint, lowered to GEMM through
//! `im2col` / `col2im`.
//!
//! All operators are cross-correlations, `z[o, n] = sum_{i, m} w[o, i, m] x[i, s*n + m - p]`.
//! Flipping the learned kernel turns this into the convolution form; the
//! two are interchangeable for training and for every norm used here.

use std::borrow::Cow;
use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Floating-point element type of the network (`f32` or `f64`).
pub trait Real: Float + FromPrimitive + Sum + Debug + Default + Send + Sync + 'static {
    /// `C <- alpha * A B + beta * C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "GEMM operand out of bounds");
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                check_extent(c.len(), m, n, rsc, csc);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand was bounds-checked against its
                // strides above, and `c` does not alias `a` or `b`.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Shape of one strided correlation from `channels x height x width` to
/// `out_height x out_width` per output channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad_h - self.kernel_h) / self.stride_h + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad_w - self.kernel_w) / self.stride_w + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return Err(Error::invalid("kernel and stride must be positive"));
        }
        if self.height + 2 * self.pad_h < self.kernel_h || self.width + 2 * self.pad_w < self.kernel_w {
            return Err(Error::shape(format!(
                "{}x{} input is smaller than the {}x{} kernel",
                self.height, self.width, self.kernel_h, self.kernel_w
            )));
        }
        Ok(())
    }

    pub fn patch(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn out_len(&self) -> usize {
        self.out_height() * self.out_width()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1
            && self.kernel_w == 1
            && self.stride_h == 1
            && self.stride_w == 1
            && self.pad_h == 0
            && self.pad_w == 0
    }
}

/// Unfolds input patches into a `(C*kh*kw) x (oh*ow)` matrix.
pub fn im2col<'a, T: Real>(x: &'a [T], g: &ConvGeometry) -> Cow<'a, [T]> {
    if g.is_pointwise() {
        return Cow::Borrowed(x);
    }
    let (oh, ow) = (g.out_height(), g.out_width());
    let mut cols = vec![T::zero(); g.patch() * oh * ow];
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride_h + ki) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride_w + kj) as isize - g.pad_w as isize;
                        if ix >= 0 && ix < g.width as isize {
                            *o = src[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    Cow::Owned(cols)
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into `x`.
pub fn col2im<T: Real>(cols: &[T], g: &ConvGeometry, x: &mut [T]) {
    if g.is_pointwise() {
        for (a, b) in x.iter_mut().zip(cols) {
            *a = *a + *b;
        }
        return;
    }
    let (oh, ow) = (g.out_height(), g.out_width());
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride_h + ki) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..ow {
                        let ix = (ox * g.stride_w + kj) as isize - g.pad_w as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Strided correlation. `weight` is `out_channels x (C*kh*kw)`.
pub fn conv_forward<T: Real>(
    x: &[T],
    g: &ConvGeometry,
    weight: &[T],
    out_channels: usize,
    bias: Option<&[T]>,
) -> Result<Vec<T>> {
    g.validate()?;
    if x.len() != g.channels * g.height * g.width {
        return Err(Error::shape(format!(
            "input has {} values, geometry expects {}",
            x.len(),
            g.channels * g.height * g.width
        )));
    }
    if weight.len() != out_channels * g.patch() {
        return Err(Error::shape(format!(
            "filter has {} values, expected {}",
            weight.len(),
            out_channels * g.patch()
        )));
    }
    let n = g.out_len();
    let cols = im2col(x, g);
    let mut y = vec![T::zero(); out_channels * n];
    if let Some(b) = bias {
        for (o, &bo) in b.iter().enumerate() {
            y[o * n..(o + 1) * n].fill(bo);
        }
    }
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    let k = g.patch();
    T::gemm(out_channels, k, n, T::one(), weight, k as isize, 1, &cols, n as isize, 1, beta, &mut y, n as isize, 1);
    Ok(y)
}

/// Gradients of [`conv_forward`]: accumulates `dW` (and `db`) and returns `dx`.
pub fn conv_backward<T: Real>(
    x: &[T],
    g: &ConvGeometry,
    weight: &[T],
    out_channels: usize,
    dy: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
) -> Vec<T> {
    let n = g.out_len();
    let k = g.patch();
    let cols = im2col(x, g);
    // dW += dY cols^T
    T::gemm(out_channels, n, k, T::one(), dy, n as isize, 1, &cols, 1, n as isize, T::one(), dweight, k as isize, 1);
    if let Some(db) = dbias {
        for (o, d) in db.iter_mut().enumerate() {
            *d = *d + dy[o * n..(o + 1) * n].iter().copied().sum::<T>();
        }
    }
    // dcols = W^T dY
    let mut dcols = vec![T::zero(); k * n];
    T::gemm(k, out_channels, n, T::one(), weight, 1, k as isize, dy, n as isize, 1, T::zero(), &mut dcols, n as isize, 1);
    let mut dx = vec![T::zero(); g.channels * g.height * g.width];
    col2im(&dcols, g, &mut dx);
    dx
}

/// Transposed (fractionally strided) correlation: the adjoint of the
/// correlation described by `g`, which maps the `out_channels x height x
/// width` result of this call down to the `in_channels x oh x ow` input.
/// `weight` is `in_channels x (out_channels*kh*kw)`.
pub fn conv_transpose_forward<T: Real>(
    x: &[T],
    g: &ConvGeometry,
    weight: &[T],
    in_channels: usize,
    bias: Option<&[T]>,
) -> Result<Vec<T>> {
    g.validate()?;
    let n = g.out_len();
    if x.len() != in_channels * n {
        return Err(Error::shape(format!(
            "transposed input has {} values, expected {}",
            x.len(),
            in_channels * n
        )));
    }
    let k = g.patch();
    if weight.len() != in_channels * k {
        return Err(Error::shape(format!(
            "transposed filter has {} values, expected {}",
            weight.len(),
            in_channels * k
        )));
    }
    // cols = W^T x
    let mut cols = vec![T::zero(); k * n];
    T::gemm(k, in_channels, n, T::one(), weight, 1, k as isize, x, n as isize, 1, T::zero(), &mut cols, n as isize, 1);
    let plane = g.height * g.width;
    let mut y = vec![T::zero(); g.channels * plane];
    if let Some(b) = bias {
        for (o, &bo) in b.iter().enumerate() {
            y[o * plane..(o + 1) * plane].fill(bo);
        }
    }
    col2im(&cols, g, &mut y);
    Ok(y)
}

/// Gradients of [`conv_transpose_forward`]; returns `dx`.
pub fn conv_transpose_backward<T: Real>(
    x: &[T],
    g: &ConvGeometry,
    weight: &[T],
    in_channels: usize,
    dy: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
) -> Vec<T> {
    let n = g.out_len();
    let k = g.patch();
    let plane = g.height * g.width;
    if let Some(db) = dbias {
        for (o, d) in db.iter_mut().enumerate() {
            *d = *d + dy[o * plane..(o + 1) * plane].iter().copied().sum::<T>();
        }
    }
    let dcols = im2col(dy, g);
    // dW += x dcols^T
    T::gemm(in_channels, n, k, T::one(), x, n as isize, 1, &dcols, 1, n as isize, T::one(), dweight, k as isize, 1);
    // dx = W dcols
    let mut dx = vec![T::zero(); in_channels * n];
    T::gemm(in_channels, k, n, T::one(), weight, k as isize, 1, &dcols, n as isize, 1, T::zero(), &mut dx, n as isize, 1);
    dx
}
