//! Dense optical flow for consecutive frame pairs and its color-image
//! encoding.
//!
//! Flow either comes from the built-in classical backend
//! ([`farneback::farneback_flow`]) or from precomputed Middlebury `.flo`
//! files laid out as `<dir>/<clip_id>/<t>.flo`, where `t` indexes the
//! earlier frame of the pair. Flow for the last frame of a clip is
//! undefined and that frame is dropped from scoring.

pub mod farneback;
pub mod flo;
pub mod hsi;

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

pub use farneback::FarnebackParams;
pub use hsi::{decode_flow_hsi, encode_flow_hsi, flow_to_hsi_components};

use crate::dataset::{DatasetManifest, Frame, VideoClip};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-pixel 2D motion vectors (px/frame) between frames `t` and `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<F> {
    pub u: Array2<F>,
    pub v: Array2<F>,
    /// Time step of the earlier frame of the pair.
    pub t: usize,
}

impl<F: Scalar> FlowField<F> {
    pub fn dims(&self) -> (usize, usize) {
        self.u.dim()
    }

    pub fn max_magnitude(&self) -> F {
        let mut max = F::zero();
        for (u, v) in self.u.iter().zip(self.v.iter()) {
            let m = (*u * *u + *v * *v).sqrt();
            if m > max {
                max = m;
            }
        }
        max
    }
}

/// A flow field encoded as a 3-channel image in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowImage<F> {
    pub pixels: Array3<F>,
    /// Magnitude that saturates the intensity channel (px/frame).
    pub m_ref: F,
    pub t: usize,
}

impl<F: Scalar> FlowImage<F> {
    pub fn dims(&self) -> (usize, usize) {
        (self.pixels.dim().1, self.pixels.dim().2)
    }
}

/// Where flow fields come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FlowBackendSpec {
    /// Classical polynomial-expansion pyramidal flow computed on the fly.
    Builtin {
        #[serde(default)]
        params: FarnebackParams,
    },
    /// Middlebury `.flo` files under `directory/<clip_id>/<t>.flo`.
    Precomputed { directory: PathBuf },
}

impl Default for FlowBackendSpec {
    fn default() -> Self {
        FlowBackendSpec::Builtin {
            params: FarnebackParams::default(),
        }
    }
}

fn to_gray_f64<F: Scalar>(frame: &Frame<F>) -> Array2<f64> {
    let (_, h, w) = frame.pixels.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        (frame.pixels[[0, y, x]].as_f64()
            + frame.pixels[[1, y, x]].as_f64()
            + frame.pixels[[2, y, x]].as_f64())
            / 3.0
    })
}

/// Dense flow between two consecutive frames using the built-in backend.
pub fn compute_flow<F: Scalar>(
    f_t: &Frame<F>,
    f_t1: &Frame<F>,
    spec: &FlowBackendSpec,
) -> Result<FlowField<F>> {
    let params =
        match spec {
            FlowBackendSpec::Builtin { params } => params,
            FlowBackendSpec::Precomputed { .. } => return Err(Error::Config(
                "compute_flow requires the builtin backend; use load_precomputed_flow for files"
                    .into(),
            )),
        };
    if f_t.pixels.dim() != f_t1.pixels.dim() {
        return Err(Error::shape(format!(
            "frame sizes differ: {:?} vs {:?}",
            f_t.pixels.dim(),
            f_t1.pixels.dim()
        )));
    }
    let g1 = to_gray_f64(f_t);
    let g2 = to_gray_f64(f_t1);
    let (u, v) = farneback::farneback_flow(&g1, &g2, params)?;
    Ok(FlowField {
        u: u.mapv(F::of),
        v: v.mapv(F::of),
        t: f_t.source_index,
    })
}

/// Loads the precomputed flow for pair `(t, t+1)` of `clip_id`.
pub fn load_precomputed_flow<F: Scalar>(
    directory: &std::path::Path,
    clip_id: &str,
    t: usize,
) -> Result<FlowField<F>> {
    let path = directory.join(clip_id).join(format!("{t}.flo"));
    let mut field = flo::load_flo(&path)?;
    field.t = t;
    Ok(field)
}

/// Resolves flow fields per (clip, pair index) from a backend.
#[derive(Debug, Clone)]
pub struct FlowSource {
    pub backend: FlowBackendSpec,
}

impl FlowSource {
    pub fn new(backend: FlowBackendSpec) -> Self {
        FlowSource { backend }
    }

    pub fn field<F: Scalar>(&self, clip: &VideoClip<F>, t: usize) -> Result<FlowField<F>> {
        match &self.backend {
            FlowBackendSpec::Builtin { params } => {
                let spec = FlowBackendSpec::Builtin {
                    params: params.clone(),
                };
                let f_t = clip.frame(t)?;
                let f_t1 = clip.frame(t + 1)?;
                compute_flow(&f_t, &f_t1, &spec)
            }
            FlowBackendSpec::Precomputed { directory } => {
                let field = load_precomputed_flow::<F>(directory, &clip.clip_id, t)?;
                let frame = clip.frame(t)?;
                let expect = (frame.height(), frame.width());
                if field.dims() != expect {
                    return Err(Error::shape(format!(
                        "precomputed flow for {}/{t} is {:?}, clip frames are {:?}",
                        clip.clip_id,
                        field.dims(),
                        expect
                    )));
                }
                Ok(field)
            }
        }
    }
}

/// Maximum ground-truth flow magnitude over the training split; the
/// persisted reference that keeps train and inference encodings consistent.
pub fn compute_m_ref<F: Scalar>(manifest: &DatasetManifest<F>, source: &FlowSource) -> Result<F> {
    let mut max = F::zero();
    let mut saw_pair = false;
    for clip in manifest.train_clips() {
        for t in 0..clip.len().saturating_sub(1) {
            let field = source.field(clip, t)?;
            saw_pair = true;
            let m = field.max_magnitude();
            if m > max {
                max = m;
            }
        }
    }
    if !saw_pair {
        return Err(Error::Dataset(
            "no training frame pairs available for m_ref".into(),
        ));
    }
    // Degenerate still-camera data: fall back to 1 px/frame so encoding
    // stays defined.
    if max <= F::zero() {
        max = F::one();
    }
    Ok(max)
}

/// Supplies the encoded flow image for any (clip, pair) on request.
pub trait FlowImageProvider<F: Scalar> {
    fn flow_image(&self, clip_id: &str, t: usize) -> Result<FlowImage<F>>;
    fn m_ref(&self) -> F;
}

/// Encodes flow fields from a [`FlowSource`] on demand with a fixed `m_ref`.
pub struct EncodedFlowSource<'a, F> {
    manifest: &'a DatasetManifest<F>,
    source: FlowSource,
    m_ref: F,
}

impl<'a, F: Scalar> EncodedFlowSource<'a, F> {
    pub fn new(manifest: &'a DatasetManifest<F>, source: FlowSource, m_ref: F) -> Self {
        EncodedFlowSource {
            manifest,
            source,
            m_ref,
        }
    }
}

impl<F: Scalar> FlowImageProvider<F> for EncodedFlowSource<'_, F> {
    fn flow_image(&self, clip_id: &str, t: usize) -> Result<FlowImage<F>> {
        let clip = self
            .manifest
            .clip(clip_id)
            .ok_or_else(|| Error::Dataset(format!("unknown clip {clip_id}")))?;
        if t + 1 >= clip.len() {
            return Err(Error::Dataset(format!(
                "no flow for pair ({clip_id}, {t}): clip has {} frames",
                clip.len()
            )));
        }
        let field = self.source.field(clip, t)?;
        encode_flow_hsi(&field, self.m_ref)
    }

    fn m_ref(&self) -> F {
        self.m_ref
    }
}

/// Fully materialized flow images, keyed by (clip, pair index).
pub struct MemoryFlowProvider<F> {
    images: BTreeMap<(String, usize), FlowImage<F>>,
    m_ref: F,
}

impl<F: Scalar> MemoryFlowProvider<F> {
    pub fn new(m_ref: F) -> Self {
        MemoryFlowProvider {
            images: BTreeMap::new(),
            m_ref,
        }
    }

    /// Encodes and stores every pair of every clip in `manifest`.
    pub fn materialize(
        manifest: &DatasetManifest<F>,
        source: &FlowSource,
        m_ref: F,
    ) -> Result<Self> {
        let mut provider = MemoryFlowProvider::new(m_ref);
        for clip in &manifest.clips {
            for t in 0..clip.len().saturating_sub(1) {
                let field = source.field(clip, t)?;
                let image = encode_flow_hsi(&field, m_ref)?;
                provider.insert(&clip.clip_id, t, image);
            }
        }
        Ok(provider)
    }

    pub fn insert(&mut self, clip_id: &str, t: usize, image: FlowImage<F>) {
        self.images.insert((clip_id.to_string(), t), image);
    }
}

impl<F: Scalar> FlowImageProvider<F> for MemoryFlowProvider<F> {
    fn flow_image(&self, clip_id: &str, t: usize) -> Result<FlowImage<F>> {
        self.images
            .get(&(clip_id.to_string(), t))
            .cloned()
            .ok_or_else(|| Error::Dataset(format!("no flow image for pair ({clip_id}, {t})")))
    }

    fn m_ref(&self) -> F {
        self.m_ref
    }
}
