//! From trained bundle to refined anomaly heat maps and frame scores.
//!
//! Per frame `t` (the last frame of a clip has no flow and is dropped):
//! translate, compare against the observed representation by channel-summed
//! squared differences, optionally fuse the two directions' video-wise
//! normalized maps, optionally suppress small difference regions with
//! binary morphology, take the root-mean-square score α, and normalize
//! scores video-wise last.

pub mod morphology;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use morphology::{closing, dilate, erode, opening, BorderPolicy, Mask};

use crate::dataset::{Frame, VideoClip};
use crate::error::{Error, Result};
use crate::flow::{FlowImage, FlowImageProvider};
use crate::gan::{translate, Direction, ModelBundle};
use crate::scalar::Scalar;
use crate::vgg::{FeatureExtractorSpec, Vgg16};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatMapDomain {
    Flow,
    Frame,
    Fused,
}

/// Non-negative m×n grid of channel-summed squared differences.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap<F> {
    pub values: Array2<F>,
    pub domain: HeatMapDomain,
    pub t: usize,
}

impl<F: Scalar> HeatMap<F> {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Δ from a flow-image pair: per pixel, squared differences summed over
/// channels.
pub fn heatmap_from_flow_pair<F: Scalar>(
    observed: &FlowImage<F>,
    generated: &FlowImage<F>,
) -> Result<HeatMap<F>> {
    squared_diff_map(
        &observed.pixels,
        &generated.pixels,
        HeatMapDomain::Flow,
        observed.t,
    )
}

fn squared_diff_map<F: Scalar>(
    a: &ndarray::Array3<F>,
    b: &ndarray::Array3<F>,
    domain: HeatMapDomain,
    t: usize,
) -> Result<HeatMap<F>> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "heat map over mismatched shapes {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let (c, h, w) = a.dim();
    let mut values = Array2::zeros((h, w));
    for ch in 0..c {
        let pa = a.index_axis(ndarray::Axis(0), ch);
        let pb = b.index_axis(ndarray::Axis(0), ch);
        ndarray::Zip::from(&mut values)
            .and(&pa)
            .and(&pb)
            .for_each(|v, &x, &y| {
                let d = x - y;
                *v += d * d;
            });
    }
    Ok(HeatMap { values, domain, t })
}

/// Feature map of `frame` at the extractor's tap layer.
pub fn semantic_features<F: Scalar>(
    frame: &Frame<F>,
    extractor: &mut Vgg16<F>,
    spec: &FeatureExtractorSpec,
) -> Result<ndarray::Array3<F>> {
    extractor.features(frame, spec.tap)
}

/// Δ from a frame pair: squared differences of the two feature maps,
/// summed over feature channels; spatial size is the feature grid.
pub fn heatmap_from_frame_pair<F: Scalar>(
    original: &Frame<F>,
    translated: &Frame<F>,
    extractor: &mut Vgg16<F>,
    spec: &FeatureExtractorSpec,
) -> Result<HeatMap<F>> {
    let fa = extractor.features(original, spec.tap)?;
    let fb = extractor.features(translated, spec.tap)?;
    let mut map = squared_diff_map(&fa, &fb, HeatMapDomain::Frame, original.source_index)?;
    map.t = original.source_index;
    Ok(map)
}

/// Anomaly score α: root of the heat-map mean.
pub fn anomaly_score<F: Scalar>(map: &HeatMap<F>) -> F {
    let n = F::of(map.values.len() as f64);
    (map.values.iter().copied().sum::<F>() / n).sqrt()
}

/// Min-max normalization over one clip's scores; constant input maps to
/// all zeros.
pub fn normalize_scores<F: Scalar>(scores: &[F]) -> Result<Vec<F>> {
    if scores.is_empty() {
        return Err(Error::Eval("cannot normalize an empty sequence".into()));
    }
    let mut min = scores[0];
    let mut max = scores[0];
    for &s in scores {
        min = min.min(s);
        max = max.max(s);
    }
    let range = max - min;
    if range <= F::zero() {
        return Ok(vec![F::zero(); scores.len()]);
    }
    Ok(scores.iter().map(|&s| (s - min) / range).collect())
}

/// Min-max normalization of heat maps over a clip, with the min/max taken
/// over all entries of all maps.
pub fn normalize_heatmaps<F: Scalar>(maps: &[HeatMap<F>]) -> Result<Vec<HeatMap<F>>> {
    if maps.is_empty() {
        return Err(Error::Eval("cannot normalize an empty sequence".into()));
    }
    let mut min = maps[0].values[[0, 0]];
    let mut max = min;
    for m in maps {
        for &v in m.values.iter() {
            min = min.min(v);
            max = max.max(v);
        }
    }
    let range = max - min;
    Ok(maps
        .iter()
        .map(|m| HeatMap {
            values: if range <= F::zero() {
                Array2::zeros(m.values.dim())
            } else {
                m.values.mapv(|v| (v - min) / range)
            },
            domain: m.domain,
            t: m.t,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResampleRule {
    /// Bilinearly upsample the smaller map to the larger grid.
    #[default]
    BilinearUpsample,
    /// Sizes must already match.
    Strict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Weight of the flow-direction map in the sum.
    pub lambda_h: f64,
    pub resample: ResampleRule,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            lambda_h: 1.0,
            resample: ResampleRule::default(),
        }
    }
}

/// Weighted sum of the two directions' normalized maps:
/// fused = frame_map + λ_h · flow_map.
pub fn fuse_heatmaps<F: Scalar>(
    frame_map: &HeatMap<F>,
    flow_map: &HeatMap<F>,
    cfg: &FusionConfig,
) -> Result<HeatMap<F>> {
    if !cfg.lambda_h.is_finite() || cfg.lambda_h < 0.0 {
        return Err(Error::Config("lambda_h must be finite and >= 0".into()));
    }
    let target = (
        frame_map.dims().0.max(flow_map.dims().0),
        frame_map.dims().1.max(flow_map.dims().1),
    );
    let resize = |m: &HeatMap<F>| -> Result<Array2<F>> {
        if m.dims() == target {
            Ok(m.values.clone())
        } else {
            match cfg.resample {
                ResampleRule::BilinearUpsample => Ok(crate::imgproc::resize_bilinear_2d(
                    &m.values, target.0, target.1,
                )),
                ResampleRule::Strict => Err(Error::shape(format!(
                    "fusion inputs {:?} vs {:?} with resampling disabled",
                    frame_map.dims(),
                    flow_map.dims()
                ))),
            }
        }
    };
    let a = resize(frame_map)?;
    let b = resize(flow_map)?;
    let lambda = F::of(cfg.lambda_h);
    Ok(HeatMap {
        values: &a + &b.mapv(|v| v * lambda),
        domain: HeatMapDomain::Fused,
        t: frame_map.t,
    })
}

/// Binarization threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum TauRule {
    /// Fixed threshold; 0 marks every positive entry.
    Absolute(f64),
    /// Per-clip percentile of all heat-map entries (0..100).
    ClipPercentile(f64),
}

impl Default for TauRule {
    fn default() -> Self {
        TauRule::Absolute(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// Δ* = Δ · mask: magnitudes survive inside kept regions.
    #[default]
    MaskedMagnitude,
    /// Δ* = mask (0/1 map).
    MaskOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSuppressionConfig {
    pub tau: TauRule,
    /// Structuring element side, odd.
    pub kernel: usize,
    pub border: BorderPolicy,
    pub combine: CombineRule,
}

impl Default for NoiseSuppressionConfig {
    fn default() -> Self {
        NoiseSuppressionConfig {
            tau: TauRule::default(),
            kernel: 7,
            border: BorderPolicy::default(),
            combine: CombineRule::default(),
        }
    }
}

impl NoiseSuppressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_multiple_of(2) || self.kernel == 0 {
            return Err(Error::Config("suppression kernel must be odd".into()));
        }
        match self.tau {
            TauRule::Absolute(t) if !t.is_finite() || t < 0.0 => {
                Err(Error::Config("tau must be finite and >= 0".into()))
            }
            TauRule::ClipPercentile(p) if !(0.0..=100.0).contains(&p) => {
                Err(Error::Config("percentile must be in [0, 100]".into()))
            }
            _ => Ok(()),
        }
    }
}

/// mask = 1 where Δ > τ.
pub fn binarize<F: Scalar>(map: &HeatMap<F>, tau: F) -> Mask {
    map.values.mapv(|v| u8::from(v > tau))
}

/// Refined map Δ*: binarize, close, open, recombine.
pub fn suppress_noise<F: Scalar>(
    map: &HeatMap<F>,
    cfg: &NoiseSuppressionConfig,
    tau: F,
) -> Result<HeatMap<F>> {
    cfg.validate()?;
    let mask = binarize(map, tau);
    let mask = closing(&mask, cfg.kernel, cfg.border)?;
    let mask = opening(&mask, cfg.kernel, cfg.border)?;
    let values = match cfg.combine {
        CombineRule::MaskedMagnitude => {
            let mut v = map.values.clone();
            ndarray::Zip::from(&mut v).and(&mask).for_each(|x, &m| {
                if m == 0 {
                    *x = F::zero();
                }
            });
            v
        }
        CombineRule::MaskOnly => mask.mapv(|m| F::of(m as f64)),
    };
    Ok(HeatMap {
        values,
        domain: map.domain,
        t: map.t,
    })
}

/// Resolves a [`TauRule`] against a clip's maps.
pub fn resolve_tau<F: Scalar>(maps: &[HeatMap<F>], rule: TauRule) -> F {
    match rule {
        TauRule::Absolute(t) => F::of(t),
        TauRule::ClipPercentile(p) => {
            let mut all: Vec<F> = maps.iter().flat_map(|m| m.values.iter().copied()).collect();
            all.sort_by(|a, b| a.partial_cmp(b).expect("finite heat-map entries"));
            if all.is_empty() {
                return F::zero();
            }
            let idx = ((p / 100.0) * (all.len() - 1) as f64).round() as usize;
            all[idx.min(all.len() - 1)]
        }
    }
}

/// Which translation direction(s) produce the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDirection {
    /// Predict flow from the frame; compare flow images directly.
    #[default]
    Flow,
    /// Predict the frame from flow; compare feature maps.
    Frame,
    /// Weighted sum of both directions' normalized maps.
    Fused,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub direction: ScoreDirection,
    pub fusion: FusionConfig,
    pub suppression: Option<NoiseSuppressionConfig>,
    pub extractor: FeatureExtractorSpec,
    /// Keep the generator's dropout active while scoring. Off by default
    /// so anomaly scores are deterministic.
    pub stochastic_translation: bool,
}

/// Scores for one frame of a clip.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameScore {
    pub t: usize,
    pub alpha_raw: f64,
    pub alpha_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

/// Result of scoring one clip: N−1 frame scores plus the final heat maps.
#[derive(Debug, Clone)]
pub struct ClipScore<F> {
    pub clip_id: String,
    pub frames: Vec<FrameScore>,
    pub heatmaps: Vec<HeatMap<F>>,
}

/// Serialized per-clip score manifest.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreManifest {
    pub clip_id: String,
    pub config_hash: String,
    pub m_ref: f64,
    /// Scale by which heat-map PNG values were multiplied into u16 range.
    pub heatmap_scale: f64,
    pub frames: Vec<FrameScore>,
}

/// Holds the bundle plus lazily built extractor for repeated clip scoring.
pub struct Scorer<F: Scalar> {
    pub bundle: ModelBundle<F>,
    pub cfg: PipelineConfig,
    extractor: Option<Vgg16<F>>,
}

impl<F: Scalar> Scorer<F> {
    pub fn new(bundle: ModelBundle<F>, cfg: PipelineConfig) -> Self {
        Scorer {
            bundle,
            cfg,
            extractor: None,
        }
    }

    fn extractor(&mut self) -> Result<&mut Vgg16<F>> {
        if self.extractor.is_none() {
            self.extractor = Some(Vgg16::new(&self.cfg.extractor)?);
        }
        Ok(self.extractor.as_mut().expect("just built"))
    }

    /// Scores every frame of `clip` except the last.
    ///
    /// Heat maps → (fusion of video-wise normalized maps) → suppression →
    /// α → video-wise score normalization.
    pub fn score_clip(
        &mut self,
        clip: &VideoClip<F>,
        flows: &dyn FlowImageProvider<F>,
    ) -> Result<ClipScore<F>> {
        if clip.len() < 2 {
            return Err(Error::Dataset(format!(
                "clip {} has fewer than 2 frames",
                clip.clip_id
            )));
        }
        let n_scored = clip.len() - 1;
        let m_ref = self.bundle.m_ref;
        let stochastic = self.cfg.stochastic_translation;
        if let Some(g) = self.bundle.g_ab.as_mut() {
            g.force_dropout(stochastic);
        }
        if let Some(g) = self.bundle.g_ba.as_mut() {
            g.force_dropout(stochastic);
        }

        let mut flow_maps = Vec::new();
        let mut frame_maps = Vec::new();
        let want_flow = matches!(
            self.cfg.direction,
            ScoreDirection::Flow | ScoreDirection::Fused
        );
        let want_frame = matches!(
            self.cfg.direction,
            ScoreDirection::Frame | ScoreDirection::Fused
        );

        for t in 0..n_scored {
            let frame = clip.frame(t)?;
            let observed = flows.flow_image(&clip.clip_id, t)?;
            if want_flow {
                let gen = self.bundle.generator(Direction::AToB)?;
                let predicted_pixels = translate(gen, &frame.pixels)?;
                let predicted = FlowImage {
                    pixels: predicted_pixels,
                    m_ref,
                    t,
                };
                flow_maps.push(heatmap_from_flow_pair(&observed, &predicted)?);
            }
            if want_frame {
                let gen = self.bundle.generator(Direction::BToA)?;
                let translated_pixels = translate(gen, &observed.pixels)?;
                let translated = Frame {
                    pixels: translated_pixels,
                    source_index: t,
                };
                let spec = self.cfg.extractor.clone();
                let extractor = self.extractor()?;
                frame_maps.push(heatmap_from_frame_pair(
                    &frame,
                    &translated,
                    extractor,
                    &spec,
                )?);
            }
        }

        let maps = match self.cfg.direction {
            ScoreDirection::Flow => flow_maps,
            ScoreDirection::Frame => frame_maps,
            ScoreDirection::Fused => {
                let frame_norm = normalize_heatmaps(&frame_maps)?;
                let flow_norm = normalize_heatmaps(&flow_maps)?;
                frame_norm
                    .iter()
                    .zip(flow_norm.iter())
                    .map(|(c, o)| fuse_heatmaps(c, o, &self.cfg.fusion))
                    .collect::<Result<Vec<_>>>()?
            }
        };

        let maps = match &self.cfg.suppression {
            Some(ns) => {
                let tau = resolve_tau(&maps, ns.tau);
                maps.iter()
                    .map(|m| suppress_noise(m, ns, tau))
                    .collect::<Result<Vec<_>>>()?
            }
            None => maps,
        };

        let raw: Vec<F> = maps.iter().map(anomaly_score).collect();
        let norm = normalize_scores(&raw)?;
        let frames = (0..n_scored)
            .map(|t| FrameScore {
                t,
                alpha_raw: raw[t].as_f64(),
                alpha_norm: norm[t].as_f64(),
                label: clip.labels.as_ref().map(|l| l[t]),
            })
            .collect();
        Ok(ClipScore {
            clip_id: clip.clip_id.clone(),
            frames,
            heatmaps: maps,
        })
    }
}

/// Writes per-frame 16-bit heat-map PNGs plus the JSON score manifest.
///
/// The per-clip scale factor mapping heat values into the u16 range is
/// recorded in the manifest.
pub fn write_clip_artifacts<F: Scalar>(
    score: &ClipScore<F>,
    m_ref: F,
    config_hash: &str,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut max = F::zero();
    for m in &score.heatmaps {
        for &v in m.values.iter() {
            max = max.max(v);
        }
    }
    let scale = if max > F::zero() {
        65535.0 / max.as_f64()
    } else {
        1.0
    };
    for m in &score.heatmaps {
        let path = dir.join(format!("{}_{:04}.png", score.clip_id, m.t));
        crate::imgproc::save_gray16_png(&m.values, scale, &path)?;
    }
    let manifest = ScoreManifest {
        clip_id: score.clip_id.clone(),
        config_hash: config_hash.to_string(),
        m_ref: m_ref.as_f64(),
        heatmap_scale: scale,
        frames: score.frames.clone(),
    };
    let path = dir.join(format!("{}.scores.json", score.clip_id));
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Eval(format!("manifest encode: {e}")))?;
    std::fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads back a score manifest.
pub fn read_score_manifest(path: &Path) -> Result<ScoreManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Eval(format!("manifest decode: {e}")))
}

/// Frame-indexed map of all clips' scores (used by the experiment runners).
pub type ClipScores<F> = BTreeMap<String, ClipScore<F>>;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn map_from(values: Array2<f64>) -> HeatMap<f64> {
        HeatMap {
            values,
            domain: HeatMapDomain::Flow,
            t: 0,
        }
    }

    #[test]
    fn flow_heatmap_single_pixel_arithmetic() {
        let mut a = Array3::<f64>::zeros((3, 2, 2));
        let b = Array3::zeros((3, 2, 2));
        a[[0, 0, 1]] = 0.1;
        a[[1, 0, 1]] = 0.2;
        a[[2, 0, 1]] = 0.2;
        let oa = FlowImage {
            pixels: a,
            m_ref: 1.0,
            t: 0,
        };
        let ob = FlowImage {
            pixels: b,
            m_ref: 1.0,
            t: 0,
        };
        let map = heatmap_from_flow_pair(&oa, &ob).unwrap();
        assert!((map.values[[0, 1]] - 0.09).abs() < 1e-12);
        assert_eq!(map.values[[0, 0]], 0.0);
        assert_eq!(map.values[[1, 0]], 0.0);
        assert_eq!(map.values[[1, 1]], 0.0);
    }

    #[test]
    fn identical_images_give_zero_map() {
        let a = Array3::from_elem((3, 4, 4), 0.7f64);
        let img = FlowImage {
            pixels: a,
            m_ref: 1.0,
            t: 0,
        };
        let map = heatmap_from_flow_pair(&img, &img).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_matches_triple_loop_oracle() {
        use rand::Rng;
        let mut rng = crate::nn::seeded_rng(1, "hm-oracle");
        let a = Array3::from_shape_fn((3, 5, 6), |_| rng.random::<f64>());
        let b = Array3::from_shape_fn((3, 5, 6), |_| rng.random::<f64>());
        let map = squared_diff_map(&a, &b, HeatMapDomain::Flow, 0).unwrap();
        for y in 0..5 {
            for x in 0..6 {
                let mut expect = 0.0;
                for c in 0..3 {
                    expect += (a[[c, y, x]] - b[[c, y, x]]).powi(2);
                }
                assert!((map.values[[y, x]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_is_root_mean() {
        let map = map_from(Array2::from_elem((4, 4), 0.25));
        assert!((anomaly_score(&map) - 0.5).abs() < 1e-12);
        let zero = map_from(Array2::zeros((3, 3)));
        assert_eq!(anomaly_score(&zero), 0.0);
    }

    #[test]
    fn score_normalization_examples() {
        assert_eq!(
            normalize_scores(&[2.0, 4.0, 6.0]).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            normalize_scores(&[3.0, 3.0, 3.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        assert!(normalize_scores::<f64>(&[]).is_err());
    }

    #[test]
    fn fusion_weights_and_identity() {
        let c = map_from(Array2::from_elem((4, 4), 0.5));
        let o = map_from(Array2::from_elem((4, 4), 0.25));
        let zero_weight = fuse_heatmaps(
            &c,
            &o,
            &FusionConfig {
                lambda_h: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(zero_weight.values, c.values);
        let same = fuse_heatmaps(
            &c,
            &c,
            &FusionConfig {
                lambda_h: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(same.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert_eq!(same.domain, HeatMapDomain::Fused);
    }

    #[test]
    fn fusion_upsamples_smaller_map() {
        let small = map_from(Array2::from_elem((4, 4), 1.0));
        let big = map_from(Array2::from_elem((8, 8), 1.0));
        let fused = fuse_heatmaps(&small, &big, &FusionConfig::default()).unwrap();
        assert_eq!(fused.dims(), (8, 8));
        // Constant maps upsample to the same constant: fused = 1 + 1.
        assert!(fused.values.iter().all(|&v| (v - 2.0).abs() < 1e-9));
        let strict = FusionConfig {
            resample: ResampleRule::Strict,
            ..Default::default()
        };
        assert!(fuse_heatmaps(&small, &big, &strict).is_err());
    }

    #[test]
    fn binarize_thresholds() {
        let map = map_from(Array2::from_shape_vec((1, 2), vec![0.4, 0.6]).unwrap());
        let m = binarize(&map, 0.5);
        assert_eq!(m, Array2::from_shape_vec((1, 2), vec![0u8, 1]).unwrap());
        let zeros = map_from(Array2::zeros((3, 3)));
        assert!(binarize(&zeros, 0.0).iter().all(|&v| v == 0));
        let pos = map_from(Array2::from_elem((2, 2), 0.1));
        assert!(binarize(&pos, 0.0).iter().all(|&v| v == 1));
    }

    #[test]
    fn suppression_removes_specks_keeps_blob() {
        let mut values = Array2::zeros((32, 32));
        // One large 20x20 blob.
        for y in 4..24 {
            for x in 4..24 {
                values[[y, x]] = 0.8;
            }
        }
        // Scattered single-pixel specks.
        for (y, x) in [(0, 30), (29, 2), (30, 30), (1, 1)] {
            values[[y, x]] = 0.9;
        }
        let map = map_from(values);
        let cfg = NoiseSuppressionConfig::default();
        let refined = suppress_noise(&map, &cfg, 0.0).unwrap();
        for (y, x) in [(0, 30), (29, 2), (30, 30), (1, 1)] {
            assert_eq!(refined.values[[y, x]], 0.0, "speck at ({y},{x}) survived");
        }
        // Blob interior preserved with its magnitude; boundary erosion
        // allowed up to 3 px for the 7x7 kernel.
        for y in 7..21 {
            for x in 7..21 {
                assert_eq!(refined.values[[y, x]], 0.8);
            }
        }
        // Δ* ≤ Δ pointwise.
        for (r, o) in refined.values.iter().zip(map.values.iter()) {
            assert!(r <= o);
        }
    }

    #[test]
    fn suppression_of_zero_map_is_zero() {
        let map = map_from(Array2::zeros((8, 8)));
        let refined = suppress_noise(&map, &NoiseSuppressionConfig::default(), 0.0).unwrap();
        assert!(refined.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn huge_blob_alpha_nearly_preserved() {
        let values = Array2::from_elem((32, 32), 0.5f64);
        let map = map_from(values);
        let before = anomaly_score(&map);
        let refined = suppress_noise(&map, &NoiseSuppressionConfig::default(), 0.0).unwrap();
        let after = anomaly_score(&refined);
        assert!((before - after).abs() / before < 0.1, "{before} vs {after}");
    }

    #[test]
    fn percentile_tau_resolution() {
        let map = map_from(Array2::from_shape_vec((1, 5), vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap());
        let tau = resolve_tau(&[map], TauRule::ClipPercentile(50.0));
        assert_eq!(tau, 2.0);
    }

    proptest! {
        #[test]
        fn normalization_preserves_argsort(scores in proptest::collection::vec(0.0f64..10.0, 2..40)) {
            let normed = normalize_scores(&scores).unwrap();
            let mut idx1: Vec<usize> = (0..scores.len()).collect();
            let mut idx2 = idx1.clone();
            idx1.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
            idx2.sort_by(|&a, &b| normed[a].partial_cmp(&normed[b]).unwrap().then(a.cmp(&b)));
            prop_assert_eq!(idx1, idx2);
            for &v in &normed {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn fusion_is_homogeneous(a in 0.0f64..3.0, vals in proptest::collection::vec(0.0f64..1.0, 16)) {
            let x = map_from(Array2::from_shape_vec((4, 4), vals.clone()).unwrap());
            let y = map_from(Array2::from_shape_vec((4, 4), vals.into_iter().rev().collect()).unwrap());
            let cfg = FusionConfig::default();
            let fused = fuse_heatmaps(&x, &y, &cfg).unwrap();
            let xs = map_from(x.values.mapv(|v| v * a));
            let ys = map_from(y.values.mapv(|v| v * a));
            let fused_scaled = fuse_heatmaps(&xs, &ys, &cfg).unwrap();
            for (s, f) in fused_scaled.values.iter().zip(fused.values.iter()) {
                prop_assert!((s - a * f).abs() < 1e-9);
            }
        }

        #[test]
        fn suppression_never_increases_mass(vals in proptest::collection::vec(0.0f64..1.0, 64)) {
            let map = map_from(Array2::from_shape_vec((8, 8), vals).unwrap());
            let refined = suppress_noise(&map, &NoiseSuppressionConfig::default(), 0.2).unwrap();
            for (r, o) in refined.values.iter().zip(map.values.iter()) {
                prop_assert!(r <= o, "Δ* must be dominated by Δ");
            }
        }
    }
}
