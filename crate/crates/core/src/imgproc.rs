//! Shared raster operations: bilinear resampling, grayscale handling and
//! PNG encode/decode helpers.
//!
//! Images are `Array3<F>` in channel-major (c, h, w) layout with values in
//! `[0, 1]`. All resampling here is plain bilinear with half-pixel centers;
//! a same-size resize is an exact copy so repeated preprocessing is
//! bit-stable.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Decoded raster, before preprocessing.
pub enum Raster<F> {
    Gray(Array2<F>),
    Rgb(Array3<F>),
}

impl<F: Scalar> Raster<F> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Raster::Gray(g) => g.dim(),
            Raster::Rgb(p) => (p.dim().1, p.dim().2),
        }
    }
}

/// Reads an image file into `[0, 1]` channel data.
pub fn load_raster<F: Scalar>(path: &Path) -> Result<Raster<F>> {
    let img_err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| img_err(format!("open failed: {e}")))?
        .with_guessed_format()
        .map_err(|e| img_err(format!("format detection failed: {e}")))?;
    let img = reader
        .decode()
        .map_err(|e| img_err(format!("decode failed: {e}")))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(img_err("zero-area image".into()));
    }
    Ok(match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let mut out = Array2::zeros((h, w));
            for (x, y, p) in g.enumerate_pixels() {
                out[[y as usize, x as usize]] = F::of(p.0[0] as f64 / 255.0);
            }
            Raster::Gray(out)
        }
        DynamicImage::ImageLuma16(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let mut out = Array2::zeros((h, w));
            for (x, y, p) in g.enumerate_pixels() {
                out[[y as usize, x as usize]] = F::of(p.0[0] as f64 / 65535.0);
            }
            Raster::Gray(out)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let mut out = Array3::zeros((3, h, w));
            for (x, y, p) in rgb.enumerate_pixels() {
                for c in 0..3 {
                    out[[c, y as usize, x as usize]] = F::of(p.0[c] as f64 / 255.0);
                }
            }
            Raster::Rgb(out)
        }
    })
}

/// Replicates a single-channel image into three identical channels.
pub fn gray_to_rgb<F: Scalar>(gray: &Array2<F>) -> Array3<F> {
    let (h, w) = gray.dim();
    let mut out = Array3::zeros((3, h, w));
    for c in 0..3 {
        out.index_axis_mut(ndarray::Axis(0), c).assign(gray);
    }
    out
}

/// Bilinear resize of a single channel with half-pixel sample centers.
///
/// Same-size calls return an exact copy.
pub fn resize_bilinear_2d<F: Scalar>(src: &Array2<F>, out_h: usize, out_w: usize) -> Array2<F> {
    let (h, w) = src.dim();
    if (h, w) == (out_h, out_w) {
        return src.clone();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Array2::zeros((out_h, out_w));
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = F::of(fy - y0 as f64);
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = F::of(fx - x0 as f64);
            let one = F::one();
            let top = src[[y0, x0]] * (one - wx) + src[[y0, x1]] * wx;
            let bot = src[[y1, x0]] * (one - wx) + src[[y1, x1]] * wx;
            out[[oy, ox]] = top * (one - wy) + bot * wy;
        }
    }
    out
}

/// Bilinear resize applied per channel.
pub fn resize_bilinear<F: Scalar>(src: &Array3<F>, out_h: usize, out_w: usize) -> Array3<F> {
    let (c, h, w) = src.dim();
    if (h, w) == (out_h, out_w) {
        return src.clone();
    }
    let mut out = Array3::zeros((c, out_h, out_w));
    for ch in 0..c {
        let plane = src.index_axis(ndarray::Axis(0), ch).to_owned();
        out.index_axis_mut(ndarray::Axis(0), ch)
            .assign(&resize_bilinear_2d(&plane, out_h, out_w));
    }
    out
}

/// True when all channels of `pixels` are identical.
pub fn channels_identical<F: Scalar>(pixels: &Array3<F>) -> bool {
    let (c, h, w) = pixels.dim();
    if c <= 1 {
        return true;
    }
    let first = pixels.index_axis(ndarray::Axis(0), 0);
    for ch in 1..c {
        let plane = pixels.index_axis(ndarray::Axis(0), ch);
        for y in 0..h {
            for x in 0..w {
                if plane[[y, x]] != first[[y, x]] {
                    return false;
                }
            }
        }
    }
    true
}

fn to_u8<F: Scalar>(v: F) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `[0, 1]` channel data as an 8-bit PNG. Grayscale output when all
/// channels are identical, RGB otherwise.
pub fn save_png<F: Scalar>(pixels: &Array3<F>, path: &Path) -> Result<()> {
    let (c, h, w) = pixels.dim();
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {c}")));
    }
    let io_err = |e: image::ImageError| Error::Image {
        path: path.to_path_buf(),
        message: format!("encode failed: {e}"),
    };
    if channels_identical(pixels) {
        let mut buf = ImageBuffer::<Luma<u8>, Vec<u8>>::new(w as u32, h as u32);
        for (x, y, p) in buf.enumerate_pixels_mut() {
            *p = Luma([to_u8(pixels[[0, y as usize, x as usize]])]);
        }
        buf.save(path).map_err(io_err)
    } else {
        let mut buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(w as u32, h as u32);
        for (x, y, p) in buf.enumerate_pixels_mut() {
            for ch in 0..3 {
                p.0[ch] = to_u8(pixels[[ch, y as usize, x as usize]]);
            }
        }
        buf.save(path).map_err(io_err)
    }
}

/// Writes an RGB PNG regardless of channel equality.
pub fn save_rgb_png<F: Scalar>(pixels: &Array3<F>, path: &Path) -> Result<()> {
    let (c, h, w) = pixels.dim();
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {c}")));
    }
    let mut buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(w as u32, h as u32);
    for (x, y, p) in buf.enumerate_pixels_mut() {
        for ch in 0..3 {
            p.0[ch] = to_u8(pixels[[ch, y as usize, x as usize]]);
        }
    }
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: format!("encode failed: {e}"),
    })
}

/// Writes non-negative data as a 16-bit grayscale PNG, scaled by `scale`.
pub fn save_gray16_png<F: Scalar>(values: &Array2<F>, scale: f64, path: &Path) -> Result<()> {
    let (h, w) = values.dim();
    let mut buf = ImageBuffer::<Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for (x, y, p) in buf.enumerate_pixels_mut() {
        let v = (values[[y as usize, x as usize]].as_f64() * scale)
            .round()
            .clamp(0.0, 65535.0);
        *p = Luma([v as u16]);
    }
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: format!("encode failed: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_resize_is_identity() {
        let src = Array2::from_shape_fn((5, 7), |(y, x)| (y * 7 + x) as f64 / 34.0);
        let out = resize_bilinear_2d(&src, 5, 7);
        assert_eq!(src, out);
    }

    #[test]
    fn constant_image_resizes_to_constant() {
        let src = Array2::from_elem((8, 8), 0.25f32);
        let out = resize_bilinear_2d(&src, 3, 5);
        for v in out.iter() {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn downsample_preserves_mean_roughly() {
        let src = Array2::from_shape_fn((16, 16), |(y, x)| ((y + x) % 2) as f64);
        let out = resize_bilinear_2d(&src, 8, 8);
        let mean: f64 = out.iter().sum::<f64>() / 64.0;
        assert!((mean - 0.5).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn gray_round_trips_through_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let gray = Array2::from_shape_fn((4, 6), |(y, x)| ((y * 6 + x) as f64) / 255.0);
        let img = gray_to_rgb::<f64>(&gray);
        save_png(&img, &path).unwrap();
        match load_raster::<f64>(&path).unwrap() {
            Raster::Gray(g) => {
                for (a, b) in g.iter().zip(gray.iter()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            Raster::Rgb(_) => panic!("expected grayscale"),
        }
    }
}
