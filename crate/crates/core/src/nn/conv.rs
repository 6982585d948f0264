//! Strided convolution and transposed convolution with explicit backward
//! passes.

use ndarray::{linalg::general_mat_mul, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use super::ops::{as_mat, as_mat_mut, col2im, im2col, ConvGeom};
use super::{init_normal, Mode, Param};
use crate::error::Result;
use crate::scalar::Scalar;

/// Upper bound on the transient im2col patch matrix in eval mode; large
/// inputs (e.g. the feature extractor at full resolution) are processed in
/// output-row strips instead of one matrix.
const EVAL_COLS_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    pub w: Param<F>, // (out_c, in_c, k, k)
    pub b: Param<F>, // (out_c)
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Option<(Array2<F>, ConvGeom)>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Conv2d {
            w: Param::new(init_normal(&[out_c, in_c, k, k], init_std, rng)),
            b: Param::new(ndarray::ArrayD::zeros(ndarray::IxDyn(&[out_c]))),
            in_c,
            out_c,
            k,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn out_dims(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        let g = ConvGeom::new(self.in_c, in_h, in_w, self.k, self.stride, self.pad)?;
        Ok((g.out_h, g.out_w))
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Result<Array3<F>> {
        let (c, h, w) = x.dim();
        if c != self.in_c {
            return Err(crate::error::Error::shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_c
            )));
        }
        let g = ConvGeom::new(self.in_c, h, w, self.k, self.stride, self.pad)?;
        let rows = g.patch_rows();
        let w_mat = as_mat(&self.w.value, self.out_c, rows);

        let mut out = Array3::zeros((self.out_c, g.out_h, g.out_w));
        if mode == Mode::Train || rows * g.out_cols() <= EVAL_COLS_BUDGET {
            let cols = im2col(x, &g);
            {
                let mut out_mat = out
                    .view_mut()
                    .into_shape_with_order((self.out_c, g.out_cols()))
                    .expect("contiguous output");
                general_mat_mul(F::one(), &w_mat, &cols.view(), F::zero(), &mut out_mat);
            }
            if mode == Mode::Train {
                self.cache = Some((cols, g));
            }
        } else {
            // Strip-wise evaluation to bound the patch-matrix size.
            let strip = (EVAL_COLS_BUDGET / (rows * g.out_w)).max(1);
            let mut oy = 0;
            while oy < g.out_h {
                let rows_here = strip.min(g.out_h - oy);
                // A strip of output rows reads input rows
                // [oy*stride - pad, (oy+rows_here-1)*stride - pad + k).
                let sub = ConvGeom {
                    in_c: g.in_c,
                    in_h: g.in_h,
                    in_w: g.in_w,
                    k: g.k,
                    stride: g.stride,
                    pad: g.pad,
                    out_h: rows_here,
                    out_w: g.out_w,
                };
                let cols = im2col_strip(x, &sub, oy);
                let mut strip_out = Array2::zeros((self.out_c, rows_here * g.out_w));
                general_mat_mul(F::one(), &w_mat, &cols.view(), F::zero(), &mut strip_out);
                let strip_view = strip_out
                    .into_shape_with_order((self.out_c, rows_here, g.out_w))
                    .expect("contiguous strip");
                out.slice_mut(ndarray::s![.., oy..oy + rows_here, ..])
                    .assign(&strip_view);
                oy += rows_here;
            }
        }
        for ch in 0..self.out_c {
            let bias = self.b.value[[ch]];
            out.index_axis_mut(ndarray::Axis(0), ch)
                .mapv_inplace(|v| v + bias);
        }
        Ok(out)
    }

    /// Backward pass; accumulates parameter grads and returns dL/dx.
    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        let (cols, g) = self.cache.take().expect("forward(Train) before backward");
        let rows = g.patch_rows();
        let g_mat = gout
            .view()
            .into_shape_with_order((self.out_c, g.out_cols()))
            .expect("contiguous grad");

        {
            let mut dw = as_mat_mut(&mut self.w.grad, self.out_c, rows);
            general_mat_mul(F::one(), &g_mat, &cols.t(), F::one(), &mut dw);
        }
        for ch in 0..self.out_c {
            let s: F = gout.index_axis(ndarray::Axis(0), ch).iter().copied().sum();
            self.b.grad[[ch]] += s;
        }
        let w_mat = as_mat(&self.w.value, self.out_c, rows);
        let mut dcols = Array2::zeros((rows, g.out_cols()));
        general_mat_mul(F::one(), &w_mat.t(), &g_mat, F::zero(), &mut dcols);
        col2im(&dcols, &g)
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut super::ParamRefs<'a, F>) {
        // Safety: distinct fields, distinct borrows.
        let (w, b) = (&mut self.w, &mut self.b);
        out.push((format!("{prefix}.w"), w));
        out.push((format!("{prefix}.b"), b));
    }
}

/// im2col for a strip of output rows starting at `oy0` (geometry's `out_h`
/// is the strip height).
fn im2col_strip<F: Scalar>(x: &Array3<F>, g: &ConvGeom, oy0: usize) -> Array2<F> {
    let xs = x.as_slice().expect("standard layout input");
    let mut cols = Array2::zeros((g.patch_rows(), g.out_h * g.out_w));
    let ncols = g.out_h * g.out_w;
    let cs = cols.as_slice_mut().expect("standard layout cols");
    for c in 0..g.in_c {
        let x_plane = &xs[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cs[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = ((oy + oy0) * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src_row = &x_plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let base = oy * g.out_w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[base + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Transposed convolution: output spatial size is
/// `(in - 1) * stride - 2 * pad + k`. Weight layout (in_c, out_c, k, k).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<F> {
    pub w: Param<F>,
    pub b: Param<F>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Option<(Array2<F>, ConvGeom)>, // (x as matrix, output-side geometry)
}

impl<F: Scalar> ConvTranspose2d<F> {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ConvTranspose2d {
            w: Param::new(init_normal(&[in_c, out_c, k, k], init_std, rng)),
            b: Param::new(ndarray::ArrayD::zeros(ndarray::IxDyn(&[out_c]))),
            in_c,
            out_c,
            k,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn out_dims(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        let oh = ((in_h - 1) * self.stride + self.k) as isize - 2 * self.pad as isize;
        let ow = ((in_w - 1) * self.stride + self.k) as isize - 2 * self.pad as isize;
        if oh <= 0 || ow <= 0 {
            return Err(crate::error::Error::shape(format!(
                "transposed conv collapses {in_h}x{in_w} to {oh}x{ow}"
            )));
        }
        Ok((oh as usize, ow as usize))
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Result<Array3<F>> {
        let (c, h, w) = x.dim();
        if c != self.in_c {
            return Err(crate::error::Error::shape(format!(
                "transposed conv expects {} input channels, got {c}",
                self.in_c
            )));
        }
        let (oh, ow) = self.out_dims(h, w)?;
        // Forward here is the adjoint of a conv mapping (out_c, oh, ow) to
        // (in spatial h, w): reuse that conv's geometry.
        let g = ConvGeom::new(self.out_c, oh, ow, self.k, self.stride, self.pad)?;
        debug_assert_eq!((g.out_h, g.out_w), (h, w));

        let x_mat = x
            .view()
            .into_shape_with_order((self.in_c, h * w))
            .expect("contiguous input")
            .to_owned();
        let w_mat = as_mat(&self.w.value, self.in_c, self.out_c * self.k * self.k);
        let mut cols = Array2::zeros((self.out_c * self.k * self.k, h * w));
        general_mat_mul(F::one(), &w_mat.t(), &x_mat.view(), F::zero(), &mut cols);
        let mut out = col2im(&cols, &g);
        for ch in 0..self.out_c {
            let bias = self.b.value[[ch]];
            out.index_axis_mut(ndarray::Axis(0), ch)
                .mapv_inplace(|v| v + bias);
        }
        if mode == Mode::Train {
            self.cache = Some((x_mat, g));
        }
        Ok(out)
    }

    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        let (x_mat, g) = self.cache.take().expect("forward(Train) before backward");
        let dcols = im2col(gout, &g);
        {
            let mut dw = as_mat_mut(&mut self.w.grad, self.in_c, self.out_c * self.k * self.k);
            general_mat_mul(F::one(), &x_mat.view(), &dcols.t(), F::one(), &mut dw);
        }
        for ch in 0..self.out_c {
            let s: F = gout.index_axis(ndarray::Axis(0), ch).iter().copied().sum();
            self.b.grad[[ch]] += s;
        }
        let w_mat = as_mat(&self.w.value, self.in_c, self.out_c * self.k * self.k);
        let n = x_mat.dim().1;
        let mut dx = Array2::zeros((self.in_c, n));
        general_mat_mul(F::one(), &w_mat, &dcols.view(), F::zero(), &mut dx);
        let (h, w) = (g.out_h, g.out_w);
        dx.into_shape_with_order((self.in_c, h, w))
            .expect("contiguous grad")
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut super::ParamRefs<'a, F>) {
        let (w, b) = (&mut self.w, &mut self.b);
        out.push((format!("{prefix}.w"), w));
        out.push((format!("{prefix}.b"), b));
    }
}
