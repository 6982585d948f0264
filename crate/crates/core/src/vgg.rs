//! VGG-16 convolutional feature extractor for the semantic (frame-side)
//! heat maps.
//!
//! Only the convolutional trunk exists here: 13 3x3 conv layers in five
//! blocks with 2x2 max pooling between blocks. Features are taken after
//! the tap layer's ReLU. Weights load from a tensor archive (see
//! [`crate::gan::checkpoint`]) with keys `conv{b}_{i}.w` / `conv{b}_{i}.b`;
//! when no pretrained file is available a fixed-seed randomly initialized
//! copy of the same architecture keeps the pipeline and tests hermetic —
//! accuracy claims only hold with pretrained weights.

use std::path::PathBuf;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::gan::checkpoint::read_archive;
use crate::nn::conv::Conv2d;
use crate::nn::layers::MaxPool2d;
use crate::nn::{seeded_rng, Mode};
use crate::scalar::Scalar;

/// Channel widths per block.
const BLOCK_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
/// Convs per block.
const BLOCK_SIZES: [usize; 5] = [2, 2, 3, 3, 3];

/// One of the 13 conv layers, named like `3-3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VggLayer {
    pub block: u8,
    pub index: u8,
}

impl VggLayer {
    pub fn new(block: u8, index: u8) -> Result<Self> {
        if !(1..=5).contains(&block)
            || index == 0
            || index as usize > BLOCK_SIZES[block as usize - 1]
        {
            return Err(Error::Config(format!("unknown conv layer {block}-{index}")));
        }
        Ok(VggLayer { block, index })
    }

    pub fn parse(name: &str) -> Result<Self> {
        let (b, i) = name
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("unknown conv layer {name}")))?;
        let block: u8 = b
            .parse()
            .map_err(|_| Error::Config(format!("unknown conv layer {name}")))?;
        let index: u8 = i
            .parse()
            .map_err(|_| Error::Config(format!("unknown conv layer {name}")))?;
        VggLayer::new(block, index)
    }

    /// All 13 conv layers in network order.
    pub fn all() -> Vec<VggLayer> {
        let mut out = Vec::new();
        for (b, &n) in BLOCK_SIZES.iter().enumerate() {
            for i in 1..=n {
                out.push(VggLayer {
                    block: b as u8 + 1,
                    index: i as u8,
                });
            }
        }
        out
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.block, self.index)
    }

    /// Spatial downscale factor at this layer's output (pools before it).
    pub fn downscale(&self) -> usize {
        1 << (self.block as usize - 1)
    }

    pub fn channels(&self) -> usize {
        BLOCK_WIDTHS[self.block as usize - 1]
    }
}

impl TryFrom<String> for VggLayer {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        VggLayer::parse(&s)
    }
}

impl From<VggLayer> for String {
    fn from(l: VggLayer) -> String {
        l.name()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum VggWeightsSource {
    /// Tensor archive with kind `vgg16_weights`.
    Pretrained { path: PathBuf },
    /// Fixed-seed random initialization of the same architecture.
    Seeded { seed: u64 },
}

/// Input normalization constants applied to `[0, 1]` frames.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for ChannelStats {
    fn default() -> Self {
        // ImageNet statistics, the convention pretrained weights expect.
        ChannelStats {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureExtractorSpec {
    pub tap: VggLayer,
    pub weights: VggWeightsSource,
    pub normalization: ChannelStats,
}

impl Default for FeatureExtractorSpec {
    fn default() -> Self {
        FeatureExtractorSpec {
            tap: VggLayer { block: 3, index: 3 },
            weights: VggWeightsSource::Seeded { seed: 0 },
            normalization: ChannelStats::default(),
        }
    }
}

pub struct Vgg16<F> {
    convs: Vec<(VggLayer, Conv2d<F>)>,
    pool: MaxPool2d,
    stats: ChannelStats,
}

impl<F: Scalar> Vgg16<F> {
    pub fn new(spec: &FeatureExtractorSpec) -> Result<Self> {
        let mut convs = Vec::new();
        let mut in_c = 3;
        match &spec.weights {
            VggWeightsSource::Seeded { seed } => {
                let mut rng = seeded_rng(*seed, "vgg16.init");
                for layer in VggLayer::all() {
                    let out_c = layer.channels();
                    // He-style scale keeps activations bounded through the stack.
                    let std = (2.0 / (in_c * 9) as f64).sqrt();
                    convs.push((layer, Conv2d::new(in_c, out_c, 3, 1, 1, std, &mut rng)));
                    in_c = out_c;
                }
            }
            VggWeightsSource::Pretrained { path } => {
                let (meta, tensors) = read_archive::<F>(path)?;
                let meta: serde_json::Value = serde_json::from_str(&meta)
                    .map_err(|e| Error::Checkpoint(format!("weights meta decode: {e}")))?;
                if meta.get("kind").and_then(|k| k.as_str()) != Some("vgg16_weights") {
                    return Err(Error::Checkpoint(format!(
                        "{} is not a vgg16_weights archive",
                        path.display()
                    )));
                }
                let mut by_name: std::collections::BTreeMap<_, _> = tensors.into_iter().collect();
                let mut rng = seeded_rng(0, "vgg16.placeholder");
                for layer in VggLayer::all() {
                    let out_c = layer.channels();
                    let mut conv = Conv2d::new(in_c, out_c, 3, 1, 1, 1e-3, &mut rng);
                    let key = format!("conv{}_{}", layer.block, layer.index);
                    let w = by_name
                        .remove(&format!("{key}.w"))
                        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}.w")))?;
                    let b = by_name
                        .remove(&format!("{key}.b"))
                        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}.b")))?;
                    if w.shape() != [out_c, in_c, 3, 3] || b.shape() != [out_c] {
                        return Err(Error::Checkpoint(format!(
                            "tensor {key} has unexpected shape {:?}/{:?}",
                            w.shape(),
                            b.shape()
                        )));
                    }
                    conv.w.value = w;
                    conv.b.value = b;
                    convs.push((layer, conv));
                    in_c = out_c;
                }
            }
        }
        Ok(Vgg16 {
            convs,
            pool: MaxPool2d::new(),
            stats: spec.normalization.clone(),
        })
    }

    fn normalize(&self, frame: &Frame<F>) -> Array3<F> {
        let mut x = frame.pixels.clone();
        for c in 0..3 {
            let mean = F::of(self.stats.mean[c]);
            let std = F::of(self.stats.std[c]);
            x.index_axis_mut(ndarray::Axis(0), c)
                .mapv_inplace(|v| (v - mean) / std);
        }
        x
    }

    fn check_input(&self, frame: &Frame<F>, deepest: VggLayer) -> Result<()> {
        let div = deepest.downscale();
        let (h, w) = (frame.height(), frame.width());
        if h % div != 0 || w % div != 0 || h / div == 0 || w / div == 0 {
            return Err(Error::shape(format!(
                "input {h}x{w} not divisible by {div} required for conv {}",
                deepest.name()
            )));
        }
        Ok(())
    }

    /// Feature map (channels, h, w) after the tap layer's ReLU.
    pub fn features(&mut self, frame: &Frame<F>, tap: VggLayer) -> Result<Array3<F>> {
        Ok(self
            .features_multi(frame, &[tap])?
            .pop()
            .expect("one tap requested"))
    }

    /// Features at several taps from one forward pass, in `taps` order.
    pub fn features_multi(
        &mut self,
        frame: &Frame<F>,
        taps: &[VggLayer],
    ) -> Result<Vec<Array3<F>>> {
        if taps.is_empty() {
            return Err(Error::Config("no tap layers requested".into()));
        }
        let deepest = *taps.iter().max().unwrap();
        self.check_input(frame, deepest)?;
        let mut outputs: Vec<Option<Array3<F>>> = vec![None; taps.len()];
        let mut x = self.normalize(frame);
        let mut remaining = taps.len();
        for (layer, conv) in &mut self.convs {
            let layer = *layer;
            let y = conv.forward(&x, Mode::Eval)?;
            // ReLU.
            x = y.mapv(|v| v.max(F::zero()));
            for (slot, tap) in outputs.iter_mut().zip(taps.iter()) {
                if *tap == layer && slot.is_none() {
                    *slot = Some(x.clone());
                    remaining -= 1;
                }
            }
            if remaining == 0 {
                break;
            }
            // Pool at block ends while deeper taps remain.
            let is_block_end = layer.index as usize == BLOCK_SIZES[layer.block as usize - 1];
            if is_block_end && layer.block < deepest.block {
                x = self.pool.forward(&x, Mode::Eval);
            }
        }
        Ok(outputs
            .into_iter()
            .map(|o| o.expect("all taps visited"))
            .collect())
    }
}
