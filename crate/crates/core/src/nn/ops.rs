//! Convolution geometry and the im2col/col2im pair.
//!
//! `im2col` and `col2im` are exact adjoints of one another; both the
//! forward convolution and every gradient path are expressed through them
//! plus a matrix product, which keeps the backward passes mechanical.

use ndarray::{Array2, Array3, ArrayD, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry of a (square-kernel) convolution from an input plane set to an
/// output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 || k == 0 {
            return Err(Error::Config("kernel and stride must be positive".into()));
        }
        let eff_h = in_h + 2 * pad;
        let eff_w = in_w + 2 * pad;
        if eff_h < k || eff_w < k {
            return Err(Error::shape(format!(
                "input {in_h}x{in_w} (pad {pad}) smaller than kernel {k}"
            )));
        }
        Ok(ConvGeom {
            in_c,
            in_h,
            in_w,
            k,
            stride,
            pad,
            out_h: (eff_h - k) / stride + 1,
            out_w: (eff_w - k) / stride + 1,
        })
    }

    pub fn patch_rows(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn out_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds `x` into a (in_c·k·k, out_h·out_w) patch matrix; out-of-bounds
/// reads are zero (virtual zero padding).
pub fn im2col<F: Scalar>(x: &Array3<F>, g: &ConvGeom) -> Array2<F> {
    debug_assert_eq!(x.dim(), (g.in_c, g.in_h, g.in_w));
    let xs = x.as_slice().expect("standard layout input");
    let mut cols = Array2::zeros((g.patch_rows(), g.out_cols()));
    {
        let cs = cols.as_slice_mut().expect("standard layout cols");
        let ncols = g.out_cols();
        for c in 0..g.in_c {
            let x_plane = &xs[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
            for ki in 0..g.k {
                for kj in 0..g.k {
                    let row = (c * g.k + ki) * g.k + kj;
                    let dst = &mut cs[row * ncols..(row + 1) * ncols];
                    for oy in 0..g.out_h {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
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
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds patch columns back into an input-
/// shaped tensor.
pub fn col2im<F: Scalar>(cols: &Array2<F>, g: &ConvGeom) -> Array3<F> {
    debug_assert_eq!(cols.dim(), (g.patch_rows(), g.out_cols()));
    let cs = cols.as_slice().expect("standard layout cols");
    let mut x = Array3::zeros((g.in_c, g.in_h, g.in_w));
    {
        let xs = x.as_slice_mut().expect("standard layout output");
        let ncols = g.out_cols();
        for c in 0..g.in_c {
            let x_plane = &mut xs[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
            for ki in 0..g.k {
                for kj in 0..g.k {
                    let row = (c * g.k + ki) * g.k + kj;
                    let src = &cs[row * ncols..(row + 1) * ncols];
                    for oy in 0..g.out_h {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.in_h as isize {
                            continue;
                        }
                        let base = oy * g.out_w;
                        let dst_row =
                            &mut x_plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                        for ox in 0..g.out_w {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.in_w as isize {
                                dst_row[ix as usize] += src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Views a dynamic-dim tensor as a 2D matrix (must be contiguous).
pub fn as_mat<F: Scalar>(a: &ArrayD<F>, rows: usize, cols: usize) -> ArrayView2<'_, F> {
    a.view()
        .into_shape_with_order((rows, cols))
        .expect("contiguous tensor reshapes to matrix")
}

pub fn as_mat_mut<F: Scalar>(a: &mut ArrayD<F>, rows: usize, cols: usize) -> ArrayViewMut2<'_, F> {
    a.view_mut()
        .into_shape_with_order((rows, cols))
        .expect("contiguous tensor reshapes to matrix")
}

/// Stacks `a` over `b` along the channel axis.
pub fn concat_channels<F: Scalar>(a: &Array3<F>, b: &Array3<F>) -> Result<Array3<F>> {
    let (ca, ha, wa) = a.dim();
    let (cb, hb, wb) = b.dim();
    if (ha, wa) != (hb, wb) {
        return Err(Error::shape(format!(
            "channel concat with mismatched planes: {ha}x{wa} vs {hb}x{wb}"
        )));
    }
    let mut out = Array3::zeros((ca + cb, ha, wa));
    out.slice_mut(ndarray::s![..ca, .., ..]).assign(a);
    out.slice_mut(ndarray::s![ca.., .., ..]).assign(b);
    Ok(out)
}

/// Splits along the channel axis after `c0` channels.
pub fn split_channels<F: Scalar>(x: &Array3<F>, c0: usize) -> (Array3<F>, Array3<F>) {
    let a = x.slice(ndarray::s![..c0, .., ..]).to_owned();
    let b = x.slice(ndarray::s![c0.., .., ..]).to_owned();
    (a, b)
}
