//! Minimal neural-network stack: convolutions, normalization, activations,
//! dropout and Adam, with hand-wired backpropagation.
//!
//! Activations are single-sample `Array3<F>` tensors in (channel, row, col)
//! layout; batching is done by gradient accumulation in the trainer. Every
//! layer caches what its backward pass needs when run in [`Mode::Train`]
//! and skips caching in [`Mode::Eval`]. Gradients accumulate into
//! [`Param::grad`] until explicitly cleared, so a batch is just repeated
//! forward/backward before one optimizer step.

pub mod adam;
pub mod conv;
pub mod layers;
pub mod ops;

use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub value: ArrayD<F>,
    pub grad: ArrayD<F>,
    pub m: ArrayD<F>,
    pub v: ArrayD<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(value: ArrayD<F>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        let m = ArrayD::zeros(value.raw_dim());
        let v = ArrayD::zeros(value.raw_dim());
        Param { value, grad, m, v }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Named mutable references to a network's parameters, in a fixed order.
pub type ParamRefs<'a, F> = Vec<(String, &'a mut Param<F>)>;

/// Deterministic sub-seed derivation: FNV-1a over the tag, mixed with the
/// base seed, so independent components get independent streams.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn seeded_rng(base: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag))
}

/// Fills a tensor with N(0, std) draws; sampling happens in f64 so the
/// stream is identical for every scalar type.
pub fn init_normal<F: Scalar>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> ArrayD<F> {
    let normal = Normal::new(0.0f64, std).expect("positive std");
    let mut out = ArrayD::zeros(ndarray::IxDyn(shape));
    for v in out.iter_mut() {
        *v = F::of(normal.sample(rng));
    }
    out
}
