//! Cross-channel translation GANs: network specs, losses, training and
//! checkpointing.
//!
//! Domain A is the appearance channel (camera frames), domain B the motion
//! channel (flow images). Dataset and flow code keep images in `[0, 1]`;
//! this module remaps to `[-1, 1]` at its boundary and the generators end
//! in tanh.

pub mod checkpoint;
pub mod loss;
pub mod patchgan;
pub mod train;
pub mod unet;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

pub use patchgan::PatchDiscriminator;
pub use train::{train, train_resume, StepRecord, TrainLog};
pub use unet::UnetGenerator;

use crate::error::{Error, Result};
use crate::nn::adam::AdamConfig;
use crate::nn::Mode;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Vanilla,
    Lsgan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Appearance → motion (frame to flow image).
    AToB,
    /// Motion → appearance.
    BToA,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::AToB => "a_to_b",
            Direction::BToA => "b_to_a",
        }
    }
}

/// Which (G, D) pairs a run trains, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// One direction trained in isolation.
    IndependentAToB,
    IndependentBToA,
    /// Both directions trained in isolation, sequentially.
    IndependentBoth,
    /// Both directions advanced each step; required for a cycle term.
    Simultaneous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Feature width of the outermost level; deeper levels double up to 8x.
    pub base_width: usize,
    /// Encoder/decoder levels; input sides must be divisible by 2^depth.
    pub depth: usize,
    /// Dropout probability (the injected noise).
    pub dropout: f64,
    /// Number of innermost decoder levels with dropout.
    pub dropout_levels: usize,
    pub skip_connections: bool,
    pub norm: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            in_channels: 3,
            out_channels: 3,
            base_width: 64,
            depth: 8,
            dropout: 0.5,
            dropout_levels: 3,
            skip_connections: true,
            norm: true,
        }
    }
}

impl GeneratorSpec {
    /// A small configuration for desk-scale runs.
    pub fn tiny() -> Self {
        GeneratorSpec {
            base_width: 8,
            depth: 3,
            ..GeneratorSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("generator depth must be >= 1".into()));
        }
        if self.base_width == 0 {
            return Err(Error::Config("generator base_width must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("generator channels must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Errors unless `h`×`w` survives `depth` halvings.
    pub fn validate_input(&self, h: usize, w: usize) -> Result<()> {
        let div = 1usize << self.depth;
        if h == 0 || w == 0 || !h.is_multiple_of(div) || !w.is_multiple_of(div) {
            return Err(Error::shape(format!(
                "generator of depth {} needs input divisible by {div}, got {h}x{w}",
                self.depth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorSpec {
    /// Channels of the conditioning image.
    pub cond_channels: usize,
    /// Channels of the candidate image.
    pub target_channels: usize,
    pub base_width: usize,
    /// Stride-2 stages; 3 gives the 70x70 receptive-field plan.
    pub n_layers: usize,
    pub norm: bool,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            cond_channels: 3,
            target_channels: 3,
            base_width: 64,
            n_layers: 3,
            norm: true,
        }
    }
}

impl DiscriminatorSpec {
    pub fn tiny() -> Self {
        DiscriminatorSpec {
            base_width: 8,
            n_layers: 2,
            ..DiscriminatorSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.n_layers == 0 {
            return Err(Error::Config(
                "discriminator base_width and n_layers must be >= 1".into(),
            ));
        }
        if self.cond_channels == 0 || self.target_channels == 0 {
            return Err(Error::Config("discriminator channels must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub loss_variant: LossVariant,
    pub lambda_l1: f64,
    /// 0 disables the cycle term (baseline).
    pub lambda_cyc: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub direction_mode: DirectionMode,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_variant: LossVariant::Vanilla,
            lambda_l1: 100.0,
            lambda_cyc: 0.0,
            epochs: 10,
            adam: AdamConfig::default(),
            batch_size: 1,
            seed: 0,
            direction_mode: DirectionMode::IndependentAToB,
            generator: GeneratorSpec::default(),
            discriminator: DiscriminatorSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        if !self.lambda_l1.is_finite() || self.lambda_l1 < 0.0 {
            return Err(Error::Config("lambda_l1 must be finite and >= 0".into()));
        }
        if !self.lambda_cyc.is_finite() || self.lambda_cyc < 0.0 {
            return Err(Error::Config("lambda_cyc must be finite and >= 0".into()));
        }
        if self.lambda_cyc > 0.0 && self.direction_mode != DirectionMode::Simultaneous {
            return Err(Error::Config(
                "lambda_cyc > 0 requires the simultaneous direction mode".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean loss terms, keyed by term name for stable ordering.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub terms: std::collections::BTreeMap<String, f64>,
}

/// Trained generators/discriminators plus everything needed to reproduce
/// and reuse them.
#[derive(Debug, Clone)]
pub struct ModelBundle<F: Scalar> {
    pub g_ab: Option<UnetGenerator<F>>,
    pub g_ba: Option<UnetGenerator<F>>,
    pub d_a: Option<PatchDiscriminator<F>>,
    pub d_b: Option<PatchDiscriminator<F>>,
    pub loss_variant: LossVariant,
    pub m_ref: F,
    pub config: TrainConfig,
    pub loss_history: Vec<EpochLoss>,
    /// Optimizer step counters per network ("g_ab", "d_b", ...), kept so a
    /// resumed run continues Adam bias correction where it left off.
    pub adam_steps: std::collections::BTreeMap<String, u64>,
}

impl<F: Scalar> ModelBundle<F> {
    pub fn generator(&mut self, dir: Direction) -> Result<&mut UnetGenerator<F>> {
        let g = match dir {
            Direction::AToB => self.g_ab.as_mut(),
            Direction::BToA => self.g_ba.as_mut(),
        };
        g.ok_or_else(|| {
            Error::Config(format!(
                "bundle has no generator for direction {}",
                dir.tag()
            ))
        })
    }

    pub fn trained_directions(&self) -> Vec<Direction> {
        let mut out = Vec::new();
        if self.g_ab.is_some() {
            out.push(Direction::AToB);
        }
        if self.g_ba.is_some() {
            out.push(Direction::BToA);
        }
        out
    }
}

/// `[0, 1]` → `[-1, 1]` at the module boundary.
pub fn to_signed<F: Scalar>(img01: &Array3<F>) -> Array3<F> {
    img01.mapv(|v| v + v - F::one())
}

/// `[-1, 1]` → `[0, 1]`.
pub fn to_unit<F: Scalar>(img: &Array3<F>) -> Array3<F> {
    let half = F::of(0.5);
    img.mapv(|v| (v + F::one()) * half)
}

/// Runs one translation: `[0, 1]` image in, `[0, 1]` image out.
/// Deterministic unless the generator's dropout is forced on.
pub fn translate<F: Scalar>(
    generator: &mut UnetGenerator<F>,
    input01: &Array3<F>,
) -> Result<Array3<F>> {
    let x = to_signed(input01);
    let y = generator.forward(&x, Mode::Eval)?;
    Ok(to_unit(&y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_remap_round_trips() {
        let img = Array3::from_shape_fn((3, 4, 4), |(c, y, x)| {
            (c as f64 * 0.3 + y as f64 * 0.05 + x as f64 * 0.01).min(1.0)
        });
        let back = to_unit(&to_signed(&img));
        for (a, b) in back.iter().zip(img.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cycle_requires_simultaneous() {
        let config = TrainConfig {
            lambda_cyc: 10.0,
            direction_mode: DirectionMode::IndependentAToB,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
        let ok = TrainConfig {
            lambda_cyc: 10.0,
            direction_mode: DirectionMode::Simultaneous,
            ..TrainConfig::default()
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn negative_lambdas_rejected() {
        let config = TrainConfig {
            lambda_l1: -1.0,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
    }
}
