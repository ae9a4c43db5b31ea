//! Convolution kernels: im2col lowering onto a single GEMM, and the adjoint
//! scatter used by the backward pass.

use crate::error::{Error, Result};

/// How out-of-range input coordinates are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Mirror about the edge pixel, without repeating it (`dcb|abcd|cba`).
    #[default]
    Reflect,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub padding: Padding,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn new(
        input: (usize, usize, usize),
        weight_shape: &[usize],
        stride: usize,
        pad: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (c_in, h, w) = input;
        let [c_out, wc_in, kh, kw] = weight_shape[..] else {
            return Err(Error::Dimension(format!(
                "conv weight must be C_out×C_in×k×k, got {weight_shape:?}"
            )));
        };
        if wc_in != c_in {
            return Err(Error::Dimension(format!(
                "conv input has {c_in} channels but weight expects {wc_in}"
            )));
        }
        if kh != kw || kh == 0 {
            return Err(Error::Dimension(format!(
                "conv kernel must be square and non-empty, got {kh}×{kw}"
            )));
        }
        if stride == 0 {
            return Err(Error::Dimension("conv stride must be positive".into()));
        }
        let k = kh;
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::Dimension(format!(
                "padded input {}×{} is smaller than kernel {k}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            pad,
            padding,
            h_out: (h + 2 * pad - k) / stride + 1,
            w_out: (w + 2 * pad - k) / stride + 1,
        })
    }

    /// Rows of the lowered matrix (`C_in·k·k`).
    pub fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn out_pixels(&self) -> usize {
        self.h_out * self.w_out
    }

    /// A 1×1 stride-1 unpadded convolution reads the input as its own im2col.
    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Source index along one axis for every (kernel tap, output position),
    /// or `None` where zero padding applies.
    fn axis_map(&self, n: usize, n_out: usize) -> Vec<Option<usize>> {
        let mut map = Vec::with_capacity(self.k * n_out);
        for tap in 0..self.k {
            for o in 0..n_out {
                let i = (o * self.stride + tap) as isize - self.pad as isize;
                map.push(match self.padding {
                    Padding::Reflect => Some(reflect_index(i, n)),
                    Padding::Zero => (i >= 0 && (i as usize) < n).then_some(i as usize),
                });
            }
        }
        map
    }
}

/// Reflects `i` into `0..n` with period `2(n-1)`; any overhang is valid.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Lowers `input` (C_in×H×W) into a `patch_len × out_pixels` row-major matrix.
pub fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let rows = g.axis_map(g.h, g.h_out);
    let cols = g.axis_map(g.w, g.w_out);
    let n = g.out_pixels();
    let mut out = vec![0.0; g.patch_len() * n];
    let mut dst = out.chunks_exact_mut(n);
    for c in 0..g.c_in {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = dst.next().expect("patch row");
                for oy in 0..g.h_out {
                    let Some(iy) = rows[ky * g.h_out + oy] else {
                        continue;
                    };
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    let out_row = &mut row[oy * g.w_out..(oy + 1) * g.w_out];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        if let Some(ix) = cols[kx * g.w_out + ox] {
                            *o = src[ix];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters lowered gradients back onto the input grid,
/// accumulating where padding reflects several taps onto the same pixel.
pub fn col2im(cols_grad: &[f64], g: &ConvGeom) -> Vec<f64> {
    let rows = g.axis_map(g.h, g.h_out);
    let cols = g.axis_map(g.w, g.w_out);
    let n = g.out_pixels();
    let mut out = vec![0.0; g.c_in * g.h * g.w];
    let mut src_rows = cols_grad.chunks_exact(n);
    for c in 0..g.c_in {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = src_rows.next().expect("patch row");
                for oy in 0..g.h_out {
                    let Some(iy) = rows[ky * g.h_out + oy] else {
                        continue;
                    };
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for (ox, v) in row[oy * g.w_out..(oy + 1) * g.w_out].iter().enumerate() {
                        if let Some(ix) = cols[kx * g.w_out + ox] {
                            dst[ix] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Row-major `C = A·B` (or `A·Bᵀ` / `Aᵀ·B` via the transpose flags).
/// `a` is `m×k` after transposition, `b` is `k×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_transposed { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_transposed { (1, k) } else { (n, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above against the stated strides,
    // so every access stays inside `a`, `b` and `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
