//! Pointwise activations, dropout, instance normalization and max pooling.

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, Param, ParamRefs};
use crate::scalar::Scalar;

/// Leaky ReLU; `alpha = 0` gives plain ReLU.
#[derive(Debug, Clone)]
pub struct LeakyRelu<F> {
    pub alpha: F,
    /// Smallest |input| seen by the last forward: the distance to this
    /// layer's nearest piecewise-linear kink. Finite-difference gradient
    /// checks need their step to stay well inside this margin.
    pub last_kink_margin: Option<F>,
    cache: Option<Array3<F>>,
}

impl<F: Scalar> LeakyRelu<F> {
    pub fn new(alpha: f64) -> Self {
        LeakyRelu {
            alpha: F::of(alpha),
            last_kink_margin: None,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Array3<F> {
        let alpha = self.alpha;
        let y = x.mapv(|v| if v > F::zero() { v } else { alpha * v });
        let mut margin = F::infinity();
        for &v in x.iter() {
            margin = margin.min(v.abs());
        }
        self.last_kink_margin = Some(margin);
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        let x = self.cache.take().expect("forward(Train) before backward");
        let alpha = self.alpha;
        let mut g = gout.clone();
        g.zip_mut_with(&x, |gv, &xv| {
            if xv <= F::zero() {
                *gv *= alpha;
            }
        });
        g
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tanh<F> {
    cache: Option<Array3<F>>,
}

impl<F: Scalar> Tanh<F> {
    pub fn new() -> Self {
        Tanh { cache: None }
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Array3<F> {
        let y = x.mapv(|v| v.tanh());
        if mode == Mode::Train {
            self.cache = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        let y = self.cache.take().expect("forward(Train) before backward");
        let mut g = gout.clone();
        g.zip_mut_with(&y, |gv, &yv| *gv *= F::one() - yv * yv);
        g
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<F> {
    cache: Option<Array3<F>>,
}

impl<F: Scalar> Sigmoid<F> {
    pub fn new() -> Self {
        Sigmoid { cache: None }
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Array3<F> {
        let y = x.mapv(|v| F::one() / (F::one() + (-v).exp()));
        if mode == Mode::Train {
            self.cache = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        let y = self.cache.take().expect("forward(Train) before backward");
        let mut g = gout.clone();
        g.zip_mut_with(&y, |gv, &yv| *gv *= yv * (F::one() - yv));
        g
    }
}

/// Inverted dropout driven by an owned seeded stream; this is the injected
/// noise of the generator. Active in `Train` mode, identity in `Eval`
/// unless `force` is set.
#[derive(Debug, Clone)]
pub struct Dropout<F> {
    pub p: f64,
    pub force: bool,
    rng: ChaCha8Rng,
    mask: Option<Array3<F>>,
}

impl<F: Scalar> Dropout<F> {
    pub fn new(p: f64, rng: ChaCha8Rng) -> Self {
        Dropout {
            p,
            force: false,
            rng,
            mask: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Array3<F> {
        let active = self.p > 0.0 && (mode == Mode::Train || self.force);
        if !active {
            self.mask = None;
            return x.clone();
        }
        let keep = F::of(1.0 / (1.0 - self.p));
        let mut mask = Array3::zeros(x.dim());
        for v in mask.iter_mut() {
            if self.rng.random::<f64>() >= self.p {
                *v = keep;
            }
        }
        let y = x * &mask;
        if mode == Mode::Train {
            self.mask = Some(mask);
        }
        y
    }

    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        match self.mask.take() {
            Some(mask) => gout * &mask,
            None => gout.clone(),
        }
    }
}

/// Per-channel normalization over the spatial plane with learned affine.
///
/// With single-sample training this plays the role batch norm has in the
/// original translation setup, without running statistics to carry around.
#[derive(Debug, Clone)]
pub struct InstanceNorm2d<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub eps: F,
    cache: Option<(Array3<F>, Vec<F>)>, // (xhat, inv_std per channel)
}

impl<F: Scalar> InstanceNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        InstanceNorm2d {
            gamma: Param::new(ndarray::ArrayD::from_elem(
                ndarray::IxDyn(&[channels]),
                F::one(),
            )),
            beta: Param::new(ndarray::ArrayD::zeros(ndarray::IxDyn(&[channels]))),
            eps: F::of(1e-5),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Array3<F> {
        let (c, h, w) = x.dim();
        let n = F::of((h * w) as f64);
        let mut xhat = Array3::zeros((c, h, w));
        let mut inv_stds = Vec::with_capacity(c);
        for ch in 0..c {
            let plane = x.index_axis(ndarray::Axis(0), ch);
            let mean = plane.iter().copied().sum::<F>() / n;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let inv_std = F::one() / (var + self.eps).sqrt();
            inv_stds.push(inv_std);
            let mut dst = xhat.index_axis_mut(ndarray::Axis(0), ch);
            for (d, &s) in dst.iter_mut().zip(plane.iter()) {
                *d = (s - mean) * inv_std;
            }
        }
        let mut y = xhat.clone();
        for ch in 0..c {
            let gamma = self.gamma.value[[ch]];
            let beta = self.beta.value[[ch]];
            y.index_axis_mut(ndarray::Axis(0), ch)
                .mapv_inplace(|v| gamma * v + beta);
        }
        if mode == Mode::Train {
            self.cache = Some((xhat, inv_stds));
        }
        y
    }

    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        let (xhat, inv_stds) = self.cache.take().expect("forward(Train) before backward");
        let (c, h, w) = gout.dim();
        let n = F::of((h * w) as f64);
        let mut dx = Array3::zeros((c, h, w));
        for (ch, inv_std) in inv_stds.iter().enumerate().take(c) {
            let g = gout.index_axis(ndarray::Axis(0), ch);
            let xh = xhat.index_axis(ndarray::Axis(0), ch);
            let sum_g = g.iter().copied().sum::<F>();
            let sum_gx = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<F>();
            self.beta.grad[[ch]] += sum_g;
            self.gamma.grad[[ch]] += sum_gx;
            let gamma = self.gamma.value[[ch]];
            let scale = gamma * *inv_std;
            let mut dst = dx.index_axis_mut(ndarray::Axis(0), ch);
            for ((d, &gv), &xv) in dst.iter_mut().zip(g.iter()).zip(xh.iter()) {
                *d = scale * (gv - sum_g / n - xv * sum_gx / n);
            }
        }
        dx
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamRefs<'a, F>) {
        let (g, b) = (&mut self.gamma, &mut self.beta);
        out.push((format!("{prefix}.gamma"), g));
        out.push((format!("{prefix}.beta"), b));
    }
}

/// 2x2 stride-2 max pooling (used by the feature extractor).
#[derive(Debug, Clone, Default)]
pub struct MaxPool2d {
    cache: Option<(Vec<usize>, (usize, usize, usize))>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        MaxPool2d { cache: None }
    }

    pub fn forward<F: Scalar>(&mut self, x: &Array3<F>, mode: Mode) -> Array3<F> {
        let (c, h, w) = x.dim();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Array3::zeros((c, oh, ow));
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = x[[ch, oy * 2, ox * 2]];
                    let mut best_idx = (oy * 2) * w + ox * 2;
                    for dy in 0..2 {
                        for dxx in 0..2 {
                            let v = x[[ch, oy * 2 + dy, ox * 2 + dxx]];
                            if v > best {
                                best = v;
                                best_idx = (oy * 2 + dy) * w + (ox * 2 + dxx);
                            }
                        }
                    }
                    out[[ch, oy, ox]] = best;
                    argmax[(ch * oh + oy) * ow + ox] = best_idx;
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((argmax, (c, h, w)));
        }
        out
    }

    pub fn backward<F: Scalar>(&mut self, gout: &Array3<F>) -> Array3<F> {
        let (argmax, (c, h, w)) = self.cache.take().expect("forward(Train) before backward");
        let (_, oh, ow) = gout.dim();
        let mut dx = Array3::zeros((c, h, w));
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let flat = argmax[(ch * oh + oy) * ow + ox];
                    dx[[ch, flat / w, flat % w]] += gout[[ch, oy, ox]];
                }
            }
        }
        dx
    }
}
