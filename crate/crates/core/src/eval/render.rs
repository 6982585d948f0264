//! Deterministic plot and overlay rendering.
//!
//! Everything is drawn onto a plain RGB canvas and written as PNG with no
//! fonts or timestamps, so identical inputs regenerate byte-identical
//! files.

use std::path::{Path, PathBuf};

use ndarray::Array3;

use super::{roc_points, ScoreSeries};
use crate::dataset::Frame;
use crate::error::Result;
use crate::flow::FlowImage;
use crate::imgproc;
use crate::inference::HeatMap;
use crate::scalar::Scalar;

struct Canvas {
    pixels: Array3<f32>, // (3, h, w)
}

impl Canvas {
    fn new(h: usize, w: usize) -> Self {
        Canvas {
            pixels: Array3::from_elem((3, h, w), 1.0),
        }
    }

    fn put(&mut self, y: i64, x: i64, rgb: [f32; 3]) {
        let (_, h, w) = self.pixels.dim();
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            return;
        }
        for (c, &v) in rgb.iter().enumerate() {
            self.pixels[[c, y as usize, x as usize]] = v;
        }
    }

    fn line(&mut self, mut y0: i64, mut x0: i64, y1: i64, x1: i64, rgb: [f32; 3]) {
        let dy = (y1 - y0).abs();
        let dx = (x1 - x0).abs();
        let sy = if y0 < y1 { 1 } else { -1 };
        let sx = if x0 < x1 { 1 } else { -1 };
        let mut err = dx - dy;
        loop {
            self.put(y0, x0, rgb);
            if y0 == y1 && x0 == x1 {
                break;
            }
            let e2 = 2 * err;
            if e2 > -dy {
                err -= dy;
                x0 += sx;
            }
            if e2 < dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        imgproc::save_rgb_png(&self.pixels, path)
    }
}

const MARGIN: usize = 24;
const SIZE: usize = 360;

/// ROC curve plot: gray quartile grid, gray chance diagonal, dark curve.
pub fn render_roc_curve(series: &ScoreSeries, path: &Path) -> Result<()> {
    let labels: Vec<u8> = series.entries.iter().map(|e| e.label).collect();
    let scores: Vec<f64> = series.entries.iter().map(|e| e.score).collect();
    let points = roc_points(&labels, &scores)?;
    let mut canvas = Canvas::new(SIZE, SIZE);
    let plot = (SIZE - 2 * MARGIN) as f64;
    let to_px = |fpr: f64, tpr: f64| -> (i64, i64) {
        let x = MARGIN as f64 + fpr * plot;
        let y = MARGIN as f64 + (1.0 - tpr) * plot;
        (y.round() as i64, x.round() as i64)
    };
    let grid = [0.82, 0.82, 0.82];
    for q in [0.25, 0.5, 0.75] {
        let (y0, x0) = to_px(q, 0.0);
        let (y1, x1) = to_px(q, 1.0);
        canvas.line(y0, x0, y1, x1, grid);
        let (y0, x0) = to_px(0.0, q);
        let (y1, x1) = to_px(1.0, q);
        canvas.line(y0, x0, y1, x1, grid);
    }
    let (dy0, dx0) = to_px(0.0, 0.0);
    let (dy1, dx1) = to_px(1.0, 1.0);
    canvas.line(dy0, dx0, dy1, dx1, [0.6, 0.6, 0.6]);
    let axis = [0.0, 0.0, 0.0];
    let (ay0, ax0) = to_px(0.0, 1.0);
    let (ay1, ax1) = to_px(0.0, 0.0);
    let (ay2, ax2) = to_px(1.0, 0.0);
    canvas.line(ay0, ax0, ay1, ax1, axis);
    canvas.line(ay1, ax1, ay2, ax2, axis);
    let curve = [0.1, 0.2, 0.7];
    for w in points.windows(2) {
        let (y0, x0) = to_px(w[0].0, w[0].1);
        let (y1, x1) = to_px(w[1].0, w[1].1);
        canvas.line(y0, x0, y1, x1, curve);
    }
    canvas.save(path)
}

/// Heat rendered over the frame: heat gates brightness, so regions with no
/// difference stay black and hot regions glow red with the frame texture
/// underneath.
pub fn render_heatmap_overlay<F: Scalar>(
    frame: &Frame<F>,
    map: &HeatMap<F>,
    path: &Path,
) -> Result<()> {
    let (h, w) = (frame.height(), frame.width());
    let heat = imgproc::resize_bilinear_2d(&map.values, h, w);
    let mut max = F::zero();
    for &v in heat.iter() {
        max = max.max(v);
    }
    let mut out = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let strength = if max > F::zero() {
                (heat[[y, x]] / max).as_f64()
            } else {
                0.0
            };
            let gray = frame.pixels[[0, y, x]].as_f64();
            out[[0, y, x]] = (strength * (0.4 + 0.6 * gray)) as f32;
            out[[1, y, x]] = (strength * 0.35 * gray) as f32;
            out[[2, y, x]] = (strength * 0.35 * gray) as f32;
        }
    }
    imgproc::save_rgb_png(&out, path)
}

/// Color flow image as 8-bit RGB PNG.
pub fn render_flow_png<F: Scalar>(image: &FlowImage<F>, path: &Path) -> Result<()> {
    let pixels = image.pixels.mapv(|v| v.as_f64() as f32);
    imgproc::save_rgb_png(&pixels, path)
}

/// Renders whatever artifacts are present; missing pieces are skipped with
/// a warning. Returns the paths written.
pub fn render_outputs<F: Scalar>(
    series_per_config: &[(String, ScoreSeries)],
    heatmaps: &[(Frame<F>, HeatMap<F>, String)],
    flow_images: &[(FlowImage<F>, String)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| crate::error::Error::io(format!("creating {}", out_dir.display()), e))?;
    let mut written = Vec::new();
    for (name, series) in series_per_config {
        let path = out_dir.join(format!("roc_{name}.png"));
        match render_roc_curve(series, &path) {
            Ok(()) => written.push(path),
            Err(e) => eprintln!("warning: skipping ROC plot for {name}: {e}"),
        }
    }
    for (frame, map, name) in heatmaps {
        let path = out_dir.join(format!("heatmap_{name}.png"));
        match render_heatmap_overlay(frame, map, &path) {
            Ok(()) => written.push(path),
            Err(e) => eprintln!("warning: skipping heat-map overlay {name}: {e}"),
        }
    }
    for (image, name) in flow_images {
        let path = out_dir.join(format!("flow_{name}.png"));
        match render_flow_png(image, &path) {
            Ok(()) => written.push(path),
            Err(e) => eprintln!("warning: skipping flow image {name}: {e}"),
        }
    }
    Ok(written)
}
