//! Loss terms for both GAN variants, with their gradients w.r.t. the
//! discriminator patch scores / generated images.
//!
//! Value functions implement the objectives as written; `*_grad` variants
//! additionally return the analytic derivative the trainer backpropagates.
//! Scores for the vanilla variant are probabilities in `[0, 1]` and are
//! clamped to `[ε, 1-ε]` (ε = 1e-7) before any logarithm.

use ndarray::{Array2, Array3};

use super::LossVariant;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const EPS_CLAMP: f64 = 1e-7;

fn check_probs<F: Scalar>(scores: &Array2<F>, what: &str) -> Result<()> {
    for &s in scores.iter() {
        if !(F::zero()..=F::one()).contains(&s) {
            return Err(Error::Config(format!(
                "{what} score {s} outside [0, 1]; vanilla losses need probabilities"
            )));
        }
    }
    Ok(())
}

fn clamp01<F: Scalar>(s: F) -> F {
    let eps = F::of(EPS_CLAMP);
    s.max(eps).min(F::one() - eps)
}

/// Conditional adversarial value `mean(log d_real) + mean(log(1 - d_fake))`:
/// the quantity the discriminator maximizes and the generator minimizes.
/// Zero at the discriminator optimum, `2 ln ½` when D outputs ½ everywhere.
pub fn vanilla_cgan_loss<F: Scalar>(d_real: &Array2<F>, d_fake: &Array2<F>) -> Result<F> {
    check_probs(d_real, "d_real")?;
    check_probs(d_fake, "d_fake")?;
    let nr = F::of(d_real.len() as f64);
    let nf = F::of(d_fake.len() as f64);
    let real: F = d_real.iter().map(|&s| clamp01(s).ln()).sum();
    let fake: F = d_fake.iter().map(|&s| (F::one() - clamp01(s)).ln()).sum();
    Ok(real / nr + fake / nf)
}

/// Discriminator objective for the vanilla variant (the negated adversarial
/// value, minimized), split into per-score gradients.
pub fn vanilla_disc_loss_grad<F: Scalar>(
    d_real: &Array2<F>,
    d_fake: &Array2<F>,
) -> Result<(F, Array2<F>, Array2<F>)> {
    let value = -vanilla_cgan_loss(d_real, d_fake)?;
    let nr = F::of(d_real.len() as f64);
    let nf = F::of(d_fake.len() as f64);
    let g_real = d_real.mapv(|s| -F::one() / (clamp01(s) * nr));
    let g_fake = d_fake.mapv(|s| F::one() / ((F::one() - clamp01(s)) * nf));
    Ok((value, g_real, g_fake))
}

/// Non-saturating generator adversarial term `-mean(log d_fake)`.
pub fn vanilla_gen_adv_loss<F: Scalar>(d_fake: &Array2<F>) -> Result<F> {
    check_probs(d_fake, "d_fake")?;
    let n = F::of(d_fake.len() as f64);
    let s: F = d_fake.iter().map(|&s| clamp01(s).ln()).sum();
    Ok(-s / n)
}

pub fn vanilla_gen_adv_loss_grad<F: Scalar>(d_fake: &Array2<F>) -> Result<(F, Array2<F>)> {
    let value = vanilla_gen_adv_loss(d_fake)?;
    let n = F::of(d_fake.len() as f64);
    let grad = d_fake.mapv(|s| -F::one() / (clamp01(s) * n));
    Ok((value, grad))
}

/// Least-squares generator loss `½ mean (d_fake - 1)²`.
pub fn lsgan_generator_loss<F: Scalar>(d_fake: &Array2<F>) -> F {
    let n = F::of(d_fake.len() as f64);
    let half = F::of(0.5);
    let s: F = d_fake
        .iter()
        .map(|&s| (s - F::one()) * (s - F::one()))
        .sum();
    half * s / n
}

pub fn lsgan_generator_loss_grad<F: Scalar>(d_fake: &Array2<F>) -> (F, Array2<F>) {
    let n = F::of(d_fake.len() as f64);
    let value = lsgan_generator_loss(d_fake);
    let grad = d_fake.mapv(|s| (s - F::one()) / n);
    (value, grad)
}

/// Least-squares discriminator loss `½ mean (d_real - 1)² + ½ mean d_fake²`.
pub fn lsgan_discriminator_loss<F: Scalar>(d_real: &Array2<F>, d_fake: &Array2<F>) -> F {
    let nr = F::of(d_real.len() as f64);
    let nf = F::of(d_fake.len() as f64);
    let half = F::of(0.5);
    let real: F = d_real
        .iter()
        .map(|&s| (s - F::one()) * (s - F::one()))
        .sum();
    let fake: F = d_fake.iter().map(|&s| s * s).sum();
    half * real / nr + half * fake / nf
}

pub fn lsgan_discriminator_loss_grad<F: Scalar>(
    d_real: &Array2<F>,
    d_fake: &Array2<F>,
) -> (F, Array2<F>, Array2<F>) {
    let value = lsgan_discriminator_loss(d_real, d_fake);
    let nr = F::of(d_real.len() as f64);
    let nf = F::of(d_fake.len() as f64);
    let g_real = d_real.mapv(|s| (s - F::one()) / nr);
    let g_fake = d_fake.mapv(|s| s / nf);
    (value, g_real, g_fake)
}

/// Real-sample half of the discriminator objective, with its gradient:
/// `-mean log d_real` (vanilla) or `½ mean (d_real - 1)²` (least squares).
pub fn disc_real_term<F: Scalar>(
    variant: LossVariant,
    d_real: &Array2<F>,
) -> Result<(F, Array2<F>)> {
    let n = F::of(d_real.len() as f64);
    match variant {
        LossVariant::Vanilla => {
            check_probs(d_real, "d_real")?;
            let value: F = -d_real.iter().map(|&s| clamp01(s).ln()).sum::<F>() / n;
            let grad = d_real.mapv(|s| -F::one() / (clamp01(s) * n));
            Ok((value, grad))
        }
        LossVariant::Lsgan => {
            let half = F::of(0.5);
            let value: F = half
                * d_real
                    .iter()
                    .map(|&s| (s - F::one()) * (s - F::one()))
                    .sum::<F>()
                / n;
            let grad = d_real.mapv(|s| (s - F::one()) / n);
            Ok((value, grad))
        }
    }
}

/// Generated-sample half of the discriminator objective, with gradient:
/// `-mean log(1 - d_fake)` (vanilla) or `½ mean d_fake²` (least squares).
pub fn disc_fake_term<F: Scalar>(
    variant: LossVariant,
    d_fake: &Array2<F>,
) -> Result<(F, Array2<F>)> {
    let n = F::of(d_fake.len() as f64);
    match variant {
        LossVariant::Vanilla => {
            check_probs(d_fake, "d_fake")?;
            let value: F = -d_fake
                .iter()
                .map(|&s| (F::one() - clamp01(s)).ln())
                .sum::<F>()
                / n;
            let grad = d_fake.mapv(|s| F::one() / ((F::one() - clamp01(s)) * n));
            Ok((value, grad))
        }
        LossVariant::Lsgan => {
            let half = F::of(0.5);
            let value: F = half * d_fake.iter().map(|&s| s * s).sum::<F>() / n;
            let grad = d_fake.mapv(|s| s / n);
            Ok((value, grad))
        }
    }
}

/// Generator adversarial term, with gradient: non-saturating
/// `-mean log d_fake` (vanilla) or `½ mean (d_fake - 1)²` (least squares).
pub fn gen_adv_term<F: Scalar>(variant: LossVariant, d_fake: &Array2<F>) -> Result<(F, Array2<F>)> {
    match variant {
        LossVariant::Vanilla => vanilla_gen_adv_loss_grad(d_fake),
        LossVariant::Lsgan => Ok(lsgan_generator_loss_grad(d_fake)),
    }
}

/// Mean absolute difference over all pixels and channels.
pub fn l1_loss<F: Scalar>(generated: &Array3<F>, target: &Array3<F>) -> Result<F> {
    if generated.dim() != target.dim() {
        return Err(Error::shape(format!(
            "l1 over mismatched shapes {:?} vs {:?}",
            generated.dim(),
            target.dim()
        )));
    }
    let n = F::of(generated.len() as f64);
    let s: F = generated
        .iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    Ok(s / n)
}

/// L1 plus its (sub)gradient w.r.t. `generated`.
pub fn l1_loss_grad<F: Scalar>(
    generated: &Array3<F>,
    target: &Array3<F>,
) -> Result<(F, Array3<F>)> {
    let value = l1_loss(generated, target)?;
    let n = F::of(generated.len() as f64);
    let mut grad = Array3::zeros(generated.dim());
    ndarray::Zip::from(&mut grad)
        .and(generated)
        .and(target)
        .for_each(|g, &a, &b| {
            *g = if a > b {
                F::one() / n
            } else if a < b {
                -F::one() / n
            } else {
                F::zero()
            };
        });
    Ok((value, grad))
}

/// Pixel-wise L1 between an input and its round-trip reconstruction.
pub fn cycle_consistency_loss<F: Scalar>(
    input: &Array3<F>,
    reconstructed: &Array3<F>,
) -> Result<F> {
    l1_loss(reconstructed, input)
}

/// Weighted generator objective: `adversarial + λ_L1·L1 + λ_cyc·cyc`.
/// The least-squares discriminator objective is the bare discriminator
/// term ([`lsgan_discriminator_loss`]) and takes no weights.
pub fn composite_loss<F: Scalar>(
    _variant: LossVariant,
    adversarial: F,
    l1: F,
    cycle: F,
    lambda_l1: F,
    lambda_cyc: F,
) -> Result<F> {
    if lambda_l1 < F::zero() || lambda_cyc < F::zero() {
        return Err(Error::Config("loss weights must be non-negative".into()));
    }
    Ok(adversarial + lambda_l1 * l1 + lambda_cyc * cycle)
}
