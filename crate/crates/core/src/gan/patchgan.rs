//! Patch-level conditional discriminator.
//!
//! The condition and candidate images are concatenated along channels and
//! pushed through a stack of 4x4 convolutions: `n_layers` stride-2 stages,
//! one stride-1 stage, then a stride-1 projection to a single channel. The
//! result is an h'xw' map of per-patch scores rather than one scalar. The
//! vanilla variant applies a sigmoid to the map; the least-squares variant
//! uses the raw scores.

use ndarray::{Array2, Array3};

use super::DiscriminatorSpec;
use crate::error::{Error, Result};
use crate::nn::conv::Conv2d;
use crate::nn::layers::{InstanceNorm2d, LeakyRelu, Sigmoid};
use crate::nn::ops::{concat_channels, split_channels};
use crate::nn::{seeded_rng, Mode, ParamRefs};
use crate::scalar::Scalar;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
struct DiscStage<F> {
    conv: Conv2d<F>,
    norm: Option<InstanceNorm2d<F>>,
    act: Option<LeakyRelu<F>>,
}

#[derive(Debug, Clone)]
pub struct PatchDiscriminator<F> {
    spec: DiscriminatorSpec,
    stages: Vec<DiscStage<F>>,
    sigmoid: Option<Sigmoid<F>>,
    cond_channels: usize,
}

impl<F: Scalar> PatchDiscriminator<F> {
    /// `sigmoid_output` is true for the vanilla loss variant.
    pub fn new(spec: &DiscriminatorSpec, sigmoid_output: bool, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded_rng(seed, "patchgan.init");
        let mut stages = Vec::new();
        let mut in_c = spec.cond_channels + spec.target_channels;
        let mut width = spec.base_width;
        for i in 0..spec.n_layers {
            stages.push(DiscStage {
                conv: Conv2d::new(in_c, width, 4, 2, 1, INIT_STD, &mut rng),
                norm: (spec.norm && i > 0).then(|| InstanceNorm2d::new(width)),
                act: Some(LeakyRelu::new(0.2)),
            });
            in_c = width;
            width = (width * 2).min(spec.base_width * 8);
        }
        stages.push(DiscStage {
            conv: Conv2d::new(in_c, width, 4, 1, 1, INIT_STD, &mut rng),
            norm: spec.norm.then(|| InstanceNorm2d::new(width)),
            act: Some(LeakyRelu::new(0.2)),
        });
        stages.push(DiscStage {
            conv: Conv2d::new(width, 1, 4, 1, 1, INIT_STD, &mut rng),
            norm: None,
            act: None,
        });
        Ok(PatchDiscriminator {
            spec: spec.clone(),
            stages,
            sigmoid: sigmoid_output.then(Sigmoid::new),
            cond_channels: spec.cond_channels,
        })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    /// Patch-map dimensions for a given input size, or an error when the
    /// stack collapses below a 2x2 patch map.
    pub fn patch_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (mut ph, mut pw) = (h, w);
        for stage in &self.stages {
            let g = crate::nn::ops::ConvGeom::new(
                1,
                ph,
                pw,
                stage.conv.k,
                stage.conv.stride,
                stage.conv.pad,
            )?;
            ph = g.out_h;
            pw = g.out_w;
        }
        if ph < 2 || pw < 2 {
            return Err(Error::shape(format!(
                "input {h}x{w} yields a {ph}x{pw} patch map; need at least 2x2 \
                 (patch-level decisions)"
            )));
        }
        Ok((ph, pw))
    }

    /// Scores candidate `x` conditioned on `a`; returns the patch map.
    pub fn forward(&mut self, cond: &Array3<F>, cand: &Array3<F>, mode: Mode) -> Result<Array2<F>> {
        if cond.dim().0 != self.spec.cond_channels {
            return Err(Error::shape(format!(
                "condition has {} channels, discriminator expects {}",
                cond.dim().0,
                self.spec.cond_channels
            )));
        }
        if cand.dim().0 != self.spec.target_channels {
            return Err(Error::shape(format!(
                "candidate has {} channels, discriminator expects {}",
                cand.dim().0,
                self.spec.target_channels
            )));
        }
        let mut cur = concat_channels(cond, cand)?;
        for stage in &mut self.stages {
            cur = stage.conv.forward(&cur, mode)?;
            if let Some(n) = &mut stage.norm {
                cur = n.forward(&cur, mode);
            }
            if let Some(a) = &mut stage.act {
                cur = a.forward(&cur, mode);
            }
        }
        if let Some(s) = &mut self.sigmoid {
            cur = s.forward(&cur, mode);
        }
        let (c, ph, pw) = cur.dim();
        debug_assert_eq!(c, 1);
        if ph < 2 || pw < 2 {
            return Err(Error::shape(format!(
                "patch map collapsed to {ph}x{pw}; input too small for the layer plan"
            )));
        }
        Ok(cur.index_axis(ndarray::Axis(0), 0).to_owned())
    }

    /// Backpropagates dL/d(patch map); returns (dL/d cond, dL/d cand).
    pub fn backward(&mut self, gout: &Array2<F>) -> (Array3<F>, Array3<F>) {
        let (ph, pw) = gout.dim();
        let mut g = gout
            .clone()
            .into_shape_with_order((1, ph, pw))
            .expect("contiguous patch grad");
        if let Some(s) = &mut self.sigmoid {
            g = s.backward(&g);
        }
        for stage in self.stages.iter_mut().rev() {
            if let Some(a) = &mut stage.act {
                g = a.backward(&g);
            }
            if let Some(n) = &mut stage.norm {
                g = n.backward(&g);
            }
            g = stage.conv.backward(&g);
        }
        split_channels(&g, self.cond_channels)
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamRefs<'a, F>) {
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage
                .conv
                .params_mut(&format!("{prefix}.stage{i}.conv"), out);
            if let Some(n) = &mut stage.norm {
                n.params_mut(&format!("{prefix}.stage{i}.norm"), out);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        let mut refs = Vec::new();
        self.params_mut("d", &mut refs);
        for (_, p) in refs {
            p.zero_grad();
        }
    }

    /// Distance to the nearest piecewise-linear activation kink seen by
    /// the last forward pass.
    pub fn kink_margin(&self) -> F {
        let mut margin = F::infinity();
        for stage in &self.stages {
            if let Some(a) = &stage.act {
                if let Some(m) = a.last_kink_margin {
                    margin = margin.min(m);
                }
            }
        }
        margin
    }
}
