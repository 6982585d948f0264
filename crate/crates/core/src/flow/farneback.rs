//! Built-in dense optical flow.
//!
//! Classical polynomial-expansion flow over an image pyramid: each image is
//! approximated per pixel by a local quadratic `f(p + w) ≈ c + bᵀw + wᵀAw`
//! fitted under a Gaussian applicability window, and the displacement `d`
//! solves the windowed least-squares system
//!
//! ```text
//! A = (A1(p) + A2(p + d0)) / 2
//! Δb = -0.5 (b2(p + d0) - b1(p)) + A d0
//! (Σ w AᵀA) d = Σ w AᵀΔb
//! ```
//!
//! iterated a few times per pyramid level, coarse to fine. All internal
//! arithmetic is f64 so results are identical regardless of the scalar
//! type the caller stores flow in.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FarnebackParams {
    /// Pyramid levels (1 = no pyramid).
    pub levels: usize,
    /// Averaging window for the displacement solve, odd.
    pub win_size: usize,
    /// Displacement iterations per level.
    pub iterations: usize,
    /// Polynomial-expansion neighborhood (full window size, odd).
    pub poly_n: usize,
    /// Gaussian applicability sigma for the expansion window.
    pub poly_sigma: f64,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        FarnebackParams {
            levels: 3,
            win_size: 13,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FarnebackParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("levels must be >= 1".into()));
        }
        if self.win_size.is_multiple_of(2) || self.win_size < 3 {
            return Err(Error::Config("win_size must be odd and >= 3".into()));
        }
        if self.poly_n.is_multiple_of(2) || self.poly_n < 3 {
            return Err(Error::Config("poly_n must be odd and >= 3".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.poly_sigma <= 0.0 {
            return Err(Error::Config("poly_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pixel quadratic coefficients: (bx, by, axx, ayy, axy).
struct PolyExpansion {
    coef: Vec<[f64; 5]>,
    h: usize,
    w: usize,
}

impl PolyExpansion {
    #[inline]
    fn at(&self, y: usize, x: usize) -> &[f64; 5] {
        &self.coef[y * self.w + x]
    }

    /// Bilinear interpolation with clamped borders.
    fn sample(&self, fy: f64, fx: f64) -> [f64; 5] {
        let fy = fy.clamp(0.0, (self.h - 1) as f64);
        let fx = fx.clamp(0.0, (self.w - 1) as f64);
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let y1 = (y0 + 1).min(self.h - 1);
        let x1 = (x0 + 1).min(self.w - 1);
        let wy = fy - y0 as f64;
        let wx = fx - x0 as f64;
        let mut out = [0.0; 5];
        for (k, slot) in out.iter_mut().enumerate() {
            let top = self.at(y0, x0)[k] * (1.0 - wx) + self.at(y0, x1)[k] * wx;
            let bot = self.at(y1, x0)[k] * (1.0 - wx) + self.at(y1, x1)[k] * wx;
            *slot = top * (1.0 - wy) + bot * wy;
        }
        out
    }
}

/// Gauss-Jordan inverse of a small square matrix.
fn invert(mut m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-12, "singular applicability Gram matrix");
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                for j in 0..n {
                    m[row][j] -= f * m[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Fits the quadratic model at every pixel of `img`.
fn poly_expansion(img: &Array2<f64>, poly_n: usize, sigma: f64) -> PolyExpansion {
    let (h, w) = img.dim();
    let n2 = (poly_n / 2) as i64;

    // Applicability and basis values over the window; basis order
    // [1, x, y, x², y², xy].
    let mut offsets = Vec::new();
    for dy in -n2..=n2 {
        for dx in -n2..=n2 {
            let a = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let (x, y) = (dx as f64, dy as f64);
            offsets.push((dy, dx, a, [1.0, x, y, x * x, y * y, x * y]));
        }
    }
    // Gram matrix of the weighted basis, inverted once.
    let mut gram = vec![vec![0.0; 6]; 6];
    for (_, _, a, basis) in &offsets {
        for k in 0..6 {
            for l in 0..6 {
                gram[k][l] += a * basis[k] * basis[l];
            }
        }
    }
    let ginv = invert(gram);

    let mut coef = vec![[0.0; 5]; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut m = [0.0f64; 6];
            for (dy, dx, a, basis) in &offsets {
                let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                let val = a * img[[yy, xx]];
                for k in 0..6 {
                    m[k] += val * basis[k];
                }
            }
            let mut r = [0.0f64; 6];
            for (k, rk) in r.iter_mut().enumerate() {
                for (l, ml) in m.iter().enumerate() {
                    *rk += ginv[k][l] * ml;
                }
            }
            // (bx, by, axx, ayy, axy) with A12 = axy / 2.
            coef[(y as usize) * w + x as usize] = [r[1], r[2], r[3], r[4], r[5] / 2.0];
        }
    }
    PolyExpansion { coef, h, w }
}

/// 5-tap binomial blur + 2x decimation.
fn downsample(img: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let kernel = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut tmp = Array2::zeros((h, w));
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let xx = (x + i as i64 - 2).clamp(0, w as i64 - 1) as usize;
                acc += k * img[[y as usize, xx]];
            }
            tmp[[y as usize, x as usize]] = acc / 16.0;
        }
    }
    let mut blurred = Array2::zeros((h, w));
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let yy = (y + i as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += k * tmp[[yy, x as usize]];
            }
            blurred[[y as usize, x as usize]] = acc / 16.0;
        }
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    Array2::from_shape_fn((oh, ow), |(y, x)| blurred[[y * 2, x * 2]])
}

/// Normalized box blur with clamped borders, separable.
fn box_blur(src: &Array2<f64>, k: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let r = (k / 2) as i64;
    let norm = 1.0 / k as f64;
    let mut tmp = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for d in -r..=r {
                let xx = (x + d).clamp(0, w as i64 - 1) as usize;
                acc += src[[y, xx]];
            }
            tmp[[y, x as usize]] = acc * norm;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h as i64 {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                let yy = (y + d).clamp(0, h as i64 - 1) as usize;
                acc += tmp[[yy, x]];
            }
            out[[y as usize, x]] = acc * norm;
        }
    }
    out
}

fn upsample_flow(
    u: &Array2<f64>,
    v: &Array2<f64>,
    h: usize,
    w: usize,
) -> (Array2<f64>, Array2<f64>) {
    let scale_x = w as f64 / u.dim().1 as f64;
    let scale_y = h as f64 / u.dim().0 as f64;
    let up = crate::imgproc::resize_bilinear_2d(u, h, w).mapv(|x| x * scale_x);
    let vp = crate::imgproc::resize_bilinear_2d(v, h, w).mapv(|x| x * scale_y);
    (up, vp)
}

/// One displacement refinement at a single pyramid level.
fn refine(
    r1: &PolyExpansion,
    r2: &PolyExpansion,
    u: &Array2<f64>,
    v: &Array2<f64>,
    win_size: usize,
) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = u.dim();
    let mut g11 = Array2::zeros((h, w));
    let mut g12 = Array2::zeros((h, w));
    let mut g22 = Array2::zeros((h, w));
    let mut h1 = Array2::zeros((h, w));
    let mut h2 = Array2::zeros((h, w));

    for y in 0..h {
        for x in 0..w {
            let (du, dv) = (u[[y, x]], v[[y, x]]);
            let c1 = r1.at(y, x);
            let c2 = r2.sample(y as f64 + dv, x as f64 + du);
            let a11 = 0.5 * (c1[2] + c2[2]);
            let a22 = 0.5 * (c1[3] + c2[3]);
            let a12 = 0.5 * (c1[4] + c2[4]);
            let db1 = -0.5 * (c2[0] - c1[0]) + a11 * du + a12 * dv;
            let db2 = -0.5 * (c2[1] - c1[1]) + a12 * du + a22 * dv;
            // Normal equations for A d = Δb (A symmetric).
            g11[[y, x]] = a11 * a11 + a12 * a12;
            g12[[y, x]] = a12 * (a11 + a22);
            g22[[y, x]] = a22 * a22 + a12 * a12;
            h1[[y, x]] = a11 * db1 + a12 * db2;
            h2[[y, x]] = a12 * db1 + a22 * db2;
        }
    }

    let g11 = box_blur(&g11, win_size);
    let g12 = box_blur(&g12, win_size);
    let g22 = box_blur(&g22, win_size);
    let h1 = box_blur(&h1, win_size);
    let h2 = box_blur(&h2, win_size);

    let mut nu = Array2::zeros((h, w));
    let mut nv = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let det = g11[[y, x]] * g22[[y, x]] - g12[[y, x]] * g12[[y, x]];
            let trace = g11[[y, x]] + g22[[y, x]];
            if det.abs() > 1e-9 * (1.0 + trace * trace) {
                nu[[y, x]] = (g22[[y, x]] * h1[[y, x]] - g12[[y, x]] * h2[[y, x]]) / det;
                nv[[y, x]] = (g11[[y, x]] * h2[[y, x]] - g12[[y, x]] * h1[[y, x]]) / det;
            } else {
                nu[[y, x]] = u[[y, x]];
                nv[[y, x]] = v[[y, x]];
            }
        }
    }
    (nu, nv)
}

/// Dense flow from `f1` to `f2`: the content of `f1` at `p` appears at
/// `p + (u, v)` in `f2`.
pub fn farneback_flow(
    f1: &Array2<f64>,
    f2: &Array2<f64>,
    params: &FarnebackParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    params.validate()?;
    if f1.dim() != f2.dim() {
        return Err(Error::shape(format!(
            "flow inputs differ: {:?} vs {:?}",
            f1.dim(),
            f2.dim()
        )));
    }

    let mut pyr1 = vec![f1.clone()];
    let mut pyr2 = vec![f2.clone()];
    for _ in 1..params.levels {
        let next = downsample(pyr1.last().unwrap());
        // Stop once the level is too small for the expansion window.
        if next.dim().0 < params.poly_n * 2 || next.dim().1 < params.poly_n * 2 {
            break;
        }
        pyr1.push(next);
        pyr2.push(downsample(pyr2.last().unwrap()));
    }

    let coarsest = pyr1.len() - 1;
    let dim = pyr1[coarsest].dim();
    let mut u = Array2::zeros(dim);
    let mut v = Array2::zeros(dim);
    for level in (0..=coarsest).rev() {
        let (h, w) = pyr1[level].dim();
        if (u.dim().0, u.dim().1) != (h, w) {
            let (uu, vv) = upsample_flow(&u, &v, h, w);
            u = uu;
            v = vv;
        }
        let r1 = poly_expansion(&pyr1[level], params.poly_n, params.poly_sigma);
        let r2 = poly_expansion(&pyr2[level], params.poly_n, params.poly_sigma);
        for _ in 0..params.iterations {
            let (nu, nv) = refine(&r1, &r2, &u, &v, params.win_size);
            u = nu;
            v = nv;
        }
    }
    Ok((u, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Array2::zeros((h, w));
        for v in img.iter_mut() {
            *v = rng.random::<f64>();
        }
        // Light smoothing keeps the expansion well conditioned.
        box_blur(&img, 3)
    }

    fn shift_torus(img: &Array2<f64>, dy: i64, dx: i64) -> Array2<f64> {
        let (h, w) = img.dim();
        Array2::from_shape_fn((h, w), |(y, x)| {
            let yy = (y as i64 - dy).rem_euclid(h as i64) as usize;
            let xx = (x as i64 - dx).rem_euclid(w as i64) as usize;
            img[[yy, xx]]
        })
    }

    fn median(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    }

    #[test]
    fn identical_frames_give_near_zero_flow() {
        let img = noise_image(48, 48, 11);
        let (u, v) = farneback_flow(&img, &img, &FarnebackParams::default()).unwrap();
        let max = u
            .iter()
            .chain(v.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(max <= 0.1, "max |flow| = {max}");
    }

    #[test]
    fn recovers_one_pixel_diagonal_shift() {
        let img = noise_image(64, 64, 3);
        let shifted = shift_torus(&img, 1, 1);
        let (u, v) = farneback_flow(&img, &shifted, &FarnebackParams::default()).unwrap();
        // Interior mean, away from the wrap seam.
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for y in 8..56 {
            for x in 8..56 {
                us.push(u[[y, x]]);
                vs.push(v[[y, x]]);
            }
        }
        let mu = us.iter().sum::<f64>() / us.len() as f64;
        let mv = vs.iter().sum::<f64>() / vs.len() as f64;
        assert!((mu - 1.0).abs() <= 0.25, "mean u = {mu}");
        assert!((mv - 1.0).abs() <= 0.25, "mean v = {mv}");
    }

    #[test]
    fn recovers_two_pixel_block_shift() {
        // Textured block on a textured background, moved 2 px right.
        let bg = noise_image(64, 64, 5);
        let block = noise_image(64, 64, 6);
        let place = |shift: i64| {
            let mut img = bg.clone();
            for y in 20..44 {
                for x in (16 + shift)..(40 + shift) {
                    img[[y, x as usize]] = block[[y, (x - shift) as usize]];
                }
            }
            img
        };
        let f1 = place(0);
        let f2 = place(2);
        let (u, v) = farneback_flow(&f1, &f2, &FarnebackParams::default()).unwrap();
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for y in 24..40 {
            for x in 20..36 {
                us.push(u[[y, x]]);
                vs.push(v[[y, x]]);
            }
        }
        let mu = median(us);
        let mv = median(vs);
        assert!((1.5..=2.5).contains(&mu), "median u = {mu}");
        assert!((-0.5..=0.5).contains(&mv), "median v = {mv}");
    }

    #[test]
    fn mismatched_sizes_error() {
        let a = Array2::<f64>::zeros((16, 16));
        let b = Array2::<f64>::zeros((16, 18));
        assert!(farneback_flow(&a, &b, &FarnebackParams::default()).is_err());
    }
}
