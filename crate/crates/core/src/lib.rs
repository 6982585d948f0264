//! Cross-channel anomaly detection for static-camera video.
//!
//! Trains conditional image-to-image translators between the appearance
//! domain (camera frames) and the motion domain (color-encoded optical
//! flow), then scores unseen frames by the disparity between predicted and
//! observed representations, optionally refined by morphological noise
//! suppression and fused across both translation directions.
//!
//! The crate is organized along the pipeline:
//!
//! - [`dataset`]: UCSD-layout ingestion, preprocessing, synthetic scenes
//! - [`flow`]: built-in dense flow, `.flo` files, flow ↔ color codec
//! - [`nn`] / [`gan`]: translation networks, losses, training
//! - [`vgg`]: the perceptual feature extractor for the frame direction
//! - [`inference`]: heat maps, noise suppression, clip scoring
//! - [`eval`]: frame-level ROC/AUC, experiment runners, report rendering
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! concrete aliases for the common instantiations live at the crate root.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod flow;
pub mod gan;
pub mod imgproc;
pub mod inference;
pub mod nn;
pub mod scalar;
pub mod vgg;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for training and scoring.
pub type DefaultScalar = f32;

pub type Frame32 = dataset::Frame<f32>;
pub type Frame64 = dataset::Frame<f64>;
pub type VideoClip32 = dataset::VideoClip<f32>;
pub type DatasetManifest32 = dataset::DatasetManifest<f32>;
pub type FlowField32 = flow::FlowField<f32>;
pub type FlowField64 = flow::FlowField<f64>;
pub type FlowImage32 = flow::FlowImage<f32>;
pub type HeatMap32 = inference::HeatMap<f32>;
pub type HeatMap64 = inference::HeatMap<f64>;
pub type ModelBundle32 = gan::ModelBundle<f32>;
