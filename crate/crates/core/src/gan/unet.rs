//! Encoder–decoder generator with skip connections.
//!
//! Encoder levels are stride-2 4x4 convolutions (LeakyReLU 0.2), decoder
//! levels stride-2 4x4 transposed convolutions (ReLU), with each decoder
//! level consuming the matching encoder activation through a channel
//! concat. The output layer ends in tanh, so outputs live in `[-1, 1]`
//! like the inputs. Dropout on the innermost decoder levels is the
//! injected noise; it stays active in training mode and is off at
//! inference unless forced.

use ndarray::Array3;

use super::GeneratorSpec;
use crate::error::Result;
use crate::nn::conv::{Conv2d, ConvTranspose2d};
use crate::nn::layers::{Dropout, InstanceNorm2d, LeakyRelu, Tanh};
use crate::nn::{seeded_rng, Mode, ParamRefs};
use crate::scalar::Scalar;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
struct EncBlock<F> {
    conv: Conv2d<F>,
    norm: Option<InstanceNorm2d<F>>,
    act: LeakyRelu<F>,
}

#[derive(Debug, Clone)]
struct DecBlock<F> {
    convt: ConvTranspose2d<F>,
    norm: Option<InstanceNorm2d<F>>,
    dropout: Option<Dropout<F>>,
    relu: Option<LeakyRelu<F>>,
    tanh: Option<Tanh<F>>,
}

#[derive(Debug, Clone)]
pub struct UnetGenerator<F> {
    spec: GeneratorSpec,
    widths: Vec<usize>,
    enc: Vec<EncBlock<F>>,
    dec: Vec<DecBlock<F>>,
    /// Cached encoder activations (training forward only).
    skips: Option<Vec<Array3<F>>>,
}

impl<F: Scalar> UnetGenerator<F> {
    pub fn new(spec: &GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let depth = spec.depth;
        let widths: Vec<usize> = (0..depth)
            .map(|i| spec.base_width * (1 << i.min(3)))
            .collect();
        let mut rng = seeded_rng(seed, "unet.init");
        let mut enc = Vec::with_capacity(depth);
        for i in 0..depth {
            let in_c = if i == 0 {
                spec.in_channels
            } else {
                widths[i - 1]
            };
            let use_norm = spec.norm && i > 0 && i + 1 < depth;
            enc.push(EncBlock {
                conv: Conv2d::new(in_c, widths[i], 4, 2, 1, INIT_STD, &mut rng),
                norm: use_norm.then(|| InstanceNorm2d::new(widths[i])),
                act: LeakyRelu::new(0.2),
            });
        }
        let mut dec = Vec::with_capacity(depth);
        for j in 0..depth {
            let is_inner = j + 1 == depth;
            let in_c = if !is_inner && spec.skip_connections {
                widths[j] * 2
            } else {
                widths[j]
            };
            let out_c = if j == 0 {
                spec.out_channels
            } else {
                widths[j - 1]
            };
            let use_norm = spec.norm && j > 0;
            let use_dropout = spec.dropout > 0.0 && j + spec.dropout_levels >= depth;
            dec.push(DecBlock {
                convt: ConvTranspose2d::new(in_c, out_c, 4, 2, 1, INIT_STD, &mut rng),
                norm: use_norm.then(|| InstanceNorm2d::new(out_c)),
                dropout: use_dropout.then(|| {
                    Dropout::new(spec.dropout, seeded_rng(seed, &format!("unet.drop{j}")))
                }),
                relu: (j > 0).then(|| LeakyRelu::new(0.0)),
                tanh: (j == 0).then(Tanh::new),
            });
        }
        Ok(UnetGenerator {
            spec: spec.clone(),
            widths,
            enc,
            dec,
            skips: None,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Keep dropout active even in eval mode (stochastic inference).
    pub fn force_dropout(&mut self, force: bool) {
        for block in &mut self.dec {
            if let Some(d) = &mut block.dropout {
                d.force = force;
            }
        }
    }

    pub fn forward(&mut self, x: &Array3<F>, mode: Mode) -> Result<Array3<F>> {
        let (c, h, w) = x.dim();
        if c != self.spec.in_channels {
            return Err(crate::error::Error::shape(format!(
                "generator expects {} channels, got {c}",
                self.spec.in_channels
            )));
        }
        self.spec.validate_input(h, w)?;

        let mut acts = Vec::with_capacity(self.spec.depth);
        let mut cur = x.clone();
        for block in &mut self.enc {
            cur = block.conv.forward(&cur, mode)?;
            if let Some(n) = &mut block.norm {
                cur = n.forward(&cur, mode);
            }
            cur = block.act.forward(&cur, mode);
            acts.push(cur.clone());
        }

        let depth = self.spec.depth;
        let mut y = acts[depth - 1].clone();
        for j in (0..depth).rev() {
            let input = if j + 1 != depth && self.spec.skip_connections {
                crate::nn::ops::concat_channels(&y, &acts[j])?
            } else {
                y
            };
            let block = &mut self.dec[j];
            let mut out = block.convt.forward(&input, mode)?;
            if let Some(n) = &mut block.norm {
                out = n.forward(&out, mode);
            }
            if let Some(d) = &mut block.dropout {
                out = d.forward(&out, mode);
            }
            if let Some(r) = &mut block.relu {
                out = r.forward(&out, mode);
            }
            if let Some(t) = &mut block.tanh {
                out = t.forward(&out, mode);
            }
            y = out;
        }
        if mode == Mode::Train {
            self.skips = Some(acts);
        }
        Ok(y)
    }

    /// Backpropagates dL/d(output); accumulates parameter grads and
    /// returns dL/d(input).
    pub fn backward(&mut self, gout: &Array3<F>) -> Array3<F> {
        self.skips.take().expect("forward(Train) before backward");
        let depth = self.spec.depth;
        let mut skip_grads: Vec<Option<Array3<F>>> = (0..depth).map(|_| None).collect();
        let mut g = gout.clone();
        for j in 0..depth {
            let block = &mut self.dec[j];
            if let Some(t) = &mut block.tanh {
                g = t.backward(&g);
            }
            if let Some(r) = &mut block.relu {
                g = r.backward(&g);
            }
            if let Some(d) = &mut block.dropout {
                g = d.backward(&g);
            }
            if let Some(n) = &mut block.norm {
                g = n.backward(&g);
            }
            let gin = block.convt.backward(&g);
            if j + 1 == depth {
                accumulate(&mut skip_grads[depth - 1], gin);
                break;
            } else if self.spec.skip_connections {
                let (gy, gh) = crate::nn::ops::split_channels(&gin, self.widths[j]);
                accumulate(&mut skip_grads[j], gh);
                g = gy;
            } else {
                g = gin;
            }
        }

        let mut g_cur = skip_grads[depth - 1].take().expect("bottleneck grad");
        for i in (0..depth).rev() {
            let block = &mut self.enc[i];
            let mut gb = block.act.backward(&g_cur);
            if let Some(n) = &mut block.norm {
                gb = n.backward(&gb);
            }
            let gin = block.conv.backward(&gb);
            if i == 0 {
                return gin;
            }
            g_cur = match skip_grads[i - 1].take() {
                Some(acc) => acc + &gin,
                None => gin,
            };
        }
        unreachable!("loop returns at i == 0")
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamRefs<'a, F>) {
        for (i, block) in self.enc.iter_mut().enumerate() {
            block.conv.params_mut(&format!("{prefix}.enc{i}.conv"), out);
            if let Some(n) = &mut block.norm {
                n.params_mut(&format!("{prefix}.enc{i}.norm"), out);
            }
        }
        for (j, block) in self.dec.iter_mut().enumerate() {
            block
                .convt
                .params_mut(&format!("{prefix}.dec{j}.convt"), out);
            if let Some(n) = &mut block.norm {
                n.params_mut(&format!("{prefix}.dec{j}.norm"), out);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        let mut refs = Vec::new();
        self.params_mut("g", &mut refs);
        for (_, p) in refs {
            p.zero_grad();
        }
    }

    /// Distance to the nearest piecewise-linear activation kink seen by
    /// the last forward pass.
    pub fn kink_margin(&self) -> F {
        let mut margin = F::infinity();
        for block in &self.enc {
            if let Some(m) = block.act.last_kink_margin {
                margin = margin.min(m);
            }
        }
        for block in &self.dec {
            if let Some(r) = &block.relu {
                if let Some(m) = r.last_kink_margin {
                    margin = margin.min(m);
                }
            }
        }
        margin
    }
}

fn accumulate<F: Scalar>(slot: &mut Option<Array3<F>>, grad: Array3<F>) {
    *slot = Some(match slot.take() {
        Some(acc) => acc + &grad,
        None => grad,
    });
}
