//! Training loops for the cross-channel translators.
//!
//! Baseline mode trains each direction's (G, D) pair in isolation. The
//! cycle-consistent mode advances both directions every optimization step
//! in a fixed alternating order — update D_B, then G_{A→B}, then D_A, then
//! G_{B→A} — with the weighted cycle term added to each generator's
//! composite objective. Sample order is reshuffled per epoch from the run
//! seed, and all loss terms are checked finite every step.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array3;
use rand::seq::SliceRandom;

use super::loss::{disc_fake_term, disc_real_term, gen_adv_term, l1_loss, l1_loss_grad};
use super::{
    to_signed, Direction, DirectionMode, EpochLoss, LossVariant, ModelBundle, PatchDiscriminator,
    TrainConfig, UnetGenerator,
};
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::flow::FlowImageProvider;
use crate::nn::adam::Adam;
use crate::nn::{derive_seed, Mode, Param};
use crate::scalar::Scalar;

/// One loss-term observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub term: String,
    pub value: f64,
}

/// Full per-step loss log of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    /// CSV with header `epoch,step,term,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_stamped(path, None)
    }

    /// Same CSV with a `# config <hash>` comment line when a hash is given.
    pub fn write_csv_stamped(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        let mut out = String::new();
        if let Some(hash) = config_hash {
            out.push_str(&format!("# config {hash}\n"));
        }
        out.push_str("epoch,step,term,value\n");
        for r in &self.steps {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.step, r.term, r.value));
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    fn epoch_means(&self) -> Vec<EpochLoss> {
        let mut acc: BTreeMap<usize, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
        for r in &self.steps {
            let slot = acc
                .entry(r.epoch)
                .or_default()
                .entry(r.term.clone())
                .or_insert((0.0, 0));
            slot.0 += r.value;
            slot.1 += 1;
        }
        acc.into_iter()
            .map(|(epoch, terms)| EpochLoss {
                epoch,
                terms: terms
                    .into_iter()
                    .map(|(k, (sum, n))| (k, sum / n as f64))
                    .collect(),
            })
            .collect()
    }
}

/// A training sample: frame index `t` of a train clip.
#[derive(Debug, Clone)]
struct SampleRef {
    clip_idx: usize,
    t: usize,
}

struct DirectionCtx<F: Scalar> {
    dir: Direction,
    gen: UnetGenerator<F>,
    disc: PatchDiscriminator<F>,
    adam_g: Adam,
    adam_d: Adam,
}

fn scale_grads<F: Scalar>(params: &mut [(String, &mut Param<F>)], factor: F) {
    for (_, p) in params.iter_mut() {
        p.grad.mapv_inplace(|g| g * factor);
    }
}

/// Loaded sample in network coordinates ([-1, 1]).
struct Pair<F> {
    a: Array3<F>,
    b: Array3<F>,
}

fn load_pair<F: Scalar>(
    manifest: &DatasetManifest<F>,
    flows: &dyn FlowImageProvider<F>,
    train_clip_ids: &[String],
    sample: &SampleRef,
) -> Result<Pair<F>> {
    let clip_id = &train_clip_ids[sample.clip_idx];
    let clip = manifest
        .clip(clip_id)
        .ok_or_else(|| Error::Dataset(format!("unknown clip {clip_id}")))?;
    let frame = clip.frame(sample.t)?;
    let flow = flows.flow_image(clip_id, sample.t).map_err(|e| {
        Error::Dataset(format!(
            "missing flow for pair ({clip_id}, {}): {e}",
            sample.t
        ))
    })?;
    Ok(Pair {
        a: to_signed(&frame.pixels),
        b: to_signed(&flow.pixels),
    })
}

/// In direction A→B the condition is the A image and the generator maps
/// A to B; swapped for B→A.
fn orient<F>(dir: Direction, pair: &Pair<F>) -> (&Array3<F>, &Array3<F>) {
    match dir {
        Direction::AToB => (&pair.a, &pair.b),
        Direction::BToA => (&pair.b, &pair.a),
    }
}

struct StepLosses {
    d_loss: f64,
    g_adv: f64,
    g_l1: f64,
    g_cyc: f64,
    g_total: f64,
}

/// One discriminator update over a batch.
fn update_discriminator<F: Scalar>(
    ctx: &mut DirectionCtx<F>,
    variant: LossVariant,
    batch: &[Pair<F>],
) -> Result<f64> {
    ctx.disc.zero_grad();
    let mut total = F::zero();
    for pair in batch {
        let (input, target) = orient(ctx.dir, pair);
        let fake = ctx.gen.forward(input, Mode::Train)?;
        let d_real = ctx.disc.forward(input, target, Mode::Train)?;
        let (v_real, g_real) = disc_real_term(variant, &d_real)?;
        ctx.disc.backward(&g_real);
        let d_fake = ctx.disc.forward(input, &fake, Mode::Train)?;
        let (v_fake, g_fake) = disc_fake_term(variant, &d_fake)?;
        ctx.disc.backward(&g_fake);
        total += v_real + v_fake;
    }
    let inv = F::of(1.0 / batch.len() as f64);
    let mut refs = Vec::new();
    ctx.disc.params_mut("d", &mut refs);
    scale_grads(&mut refs, inv);
    ctx.adam_d.step(&mut refs);
    Ok((total * inv).as_f64())
}

/// One generator update over a batch; `cycle` carries the counterpart
/// generator and the cycle weight when the composite includes Eq-style
/// reconstruction.
fn update_generator<F: Scalar>(
    ctx: &mut DirectionCtx<F>,
    other_gen: Option<&mut UnetGenerator<F>>,
    variant: LossVariant,
    lambda_l1: F,
    lambda_cyc: F,
    batch: &[Pair<F>],
) -> Result<(f64, f64, f64, f64)> {
    ctx.gen.zero_grad();
    let mut other = other_gen;
    let (mut adv_s, mut l1_s, mut cyc_s, mut tot_s) = (F::zero(), F::zero(), F::zero(), F::zero());
    for pair in batch {
        let (input, target) = orient(ctx.dir, pair);
        let fake = ctx.gen.forward(input, Mode::Train)?;
        let d_fake = ctx.disc.forward(input, &fake, Mode::Train)?;
        let (adv, g_scores) = gen_adv_term(variant, &d_fake)?;
        let (_, g_fake_adv) = ctx.disc.backward(&g_scores);
        let (l1v, g_l1) = l1_loss_grad(&fake, target)?;

        let mut g_fake = g_fake_adv + &g_l1.mapv(|g| g * lambda_l1);
        let mut cyc = F::zero();
        if let Some(og) = other.as_deref_mut() {
            if lambda_cyc > F::zero() {
                let rec = og.forward(&fake, Mode::Train)?;
                let (cv, g_rec) = l1_loss_grad(&rec, input)?;
                let g_back = og.backward(&g_rec.mapv(|g| g * lambda_cyc));
                g_fake += &g_back;
                cyc = cv;
            }
        }
        ctx.gen.backward(&g_fake);
        adv_s += adv;
        l1_s += l1v;
        cyc_s += cyc;
        tot_s += adv + lambda_l1 * l1v + lambda_cyc * cyc;
    }
    let inv = F::of(1.0 / batch.len() as f64);
    let mut refs = Vec::new();
    ctx.gen.params_mut("g", &mut refs);
    scale_grads(&mut refs, inv);
    ctx.adam_g.step(&mut refs);
    Ok((
        (adv_s * inv).as_f64(),
        (l1_s * inv).as_f64(),
        (cyc_s * inv).as_f64(),
        (tot_s * inv).as_f64(),
    ))
}

fn record_step(
    log: &mut TrainLog,
    epoch: usize,
    step: usize,
    dir: Direction,
    losses: &StepLosses,
) -> Result<()> {
    let terms = [
        ("d_loss", losses.d_loss),
        ("g_adv", losses.g_adv),
        ("g_l1", losses.g_l1),
        ("g_cyc", losses.g_cyc),
        ("g_total", losses.g_total),
    ];
    for (name, value) in terms {
        if !value.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step,
                term: format!("{}.{name}", dir.tag()),
            });
        }
        log.steps.push(StepRecord {
            epoch,
            step,
            term: format!("{}.{name}", dir.tag()),
            value,
        });
    }
    Ok(())
}

fn collect_samples<F: Scalar>(
    manifest: &DatasetManifest<F>,
) -> Result<(Vec<String>, Vec<SampleRef>)> {
    let mut ids = Vec::new();
    let mut samples = Vec::new();
    for clip in manifest.train_clips() {
        if clip.len() < 2 {
            return Err(Error::Dataset(format!(
                "train clip {} has fewer than 2 frames",
                clip.clip_id
            )));
        }
        let clip_idx = ids.len();
        ids.push(clip.clip_id.clone());
        for t in 0..clip.len() - 1 {
            samples.push(SampleRef { clip_idx, t });
        }
    }
    if samples.is_empty() {
        return Err(Error::Dataset("no training clips in manifest".into()));
    }
    Ok((ids, samples))
}

fn build_ctx<F: Scalar>(config: &TrainConfig, dir: Direction) -> Result<DirectionCtx<F>> {
    let sigmoid = config.loss_variant == LossVariant::Vanilla;
    let (g_tag, d_tag) = match dir {
        Direction::AToB => ("g_ab", "d_b"),
        Direction::BToA => ("g_ba", "d_a"),
    };
    Ok(DirectionCtx {
        dir,
        gen: UnetGenerator::new(&config.generator, derive_seed(config.seed, g_tag))?,
        disc: PatchDiscriminator::new(
            &config.discriminator,
            sigmoid,
            derive_seed(config.seed, d_tag),
        )?,
        adam_g: Adam::new(config.adam.clone()),
        adam_d: Adam::new(config.adam.clone()),
    })
}

fn validate_against_data<F: Scalar>(
    config: &TrainConfig,
    manifest: &DatasetManifest<F>,
) -> Result<()> {
    let (h, w) = manifest.resolution;
    config.generator.validate_input(h, w)?;
    // The discriminator plan must leave a real patch grid at this size.
    let probe = PatchDiscriminator::<F>::new(
        &config.discriminator,
        config.loss_variant == LossVariant::Vanilla,
        0,
    )?;
    probe.patch_dims(h, w)?;
    Ok(())
}

/// Runs the loop for a set of directions over `epochs`, mutating ctxs.
fn run_epochs<F: Scalar>(
    ctxs: &mut [DirectionCtx<F>],
    simultaneous_cycle: bool,
    manifest: &DatasetManifest<F>,
    flows: &dyn FlowImageProvider<F>,
    config: &TrainConfig,
    epoch_range: std::ops::Range<usize>,
    log: &mut TrainLog,
) -> Result<()> {
    let (ids, mut samples) = collect_samples(manifest)?;
    let lambda_l1 = F::of(config.lambda_l1);
    let lambda_cyc = F::of(config.lambda_cyc);
    for epoch in epoch_range {
        let mut rng =
            crate::nn::seeded_rng(derive_seed(config.seed, "shuffle"), &epoch.to_string());
        samples.shuffle(&mut rng);
        let mut step = 0usize;
        let mut start = 0usize;
        while start < samples.len() {
            let end = (start + config.batch_size).min(samples.len());
            let batch: Vec<Pair<F>> = samples[start..end]
                .iter()
                .map(|s| load_pair(manifest, flows, &ids, s))
                .collect::<Result<_>>()?;

            if simultaneous_cycle {
                // Fixed alternating order: D_B, G_{A→B}, D_A, G_{B→A}.
                let (ab, ba) = ctxs.split_at_mut(1);
                let ab = &mut ab[0];
                let ba = &mut ba[0];
                let d_b = update_discriminator(ab, config.loss_variant, &batch)?;
                let (adv, l1v, cyc, tot) = update_generator(
                    ab,
                    Some(&mut ba.gen),
                    config.loss_variant,
                    lambda_l1,
                    lambda_cyc,
                    &batch,
                )?;
                record_step(
                    log,
                    epoch,
                    step,
                    Direction::AToB,
                    &StepLosses {
                        d_loss: d_b,
                        g_adv: adv,
                        g_l1: l1v,
                        g_cyc: cyc,
                        g_total: tot,
                    },
                )?;
                let d_a = update_discriminator(ba, config.loss_variant, &batch)?;
                let (adv, l1v, cyc, tot) = update_generator(
                    ba,
                    Some(&mut ab.gen),
                    config.loss_variant,
                    lambda_l1,
                    lambda_cyc,
                    &batch,
                )?;
                record_step(
                    log,
                    epoch,
                    step,
                    Direction::BToA,
                    &StepLosses {
                        d_loss: d_a,
                        g_adv: adv,
                        g_l1: l1v,
                        g_cyc: cyc,
                        g_total: tot,
                    },
                )?;
            } else {
                for ctx in ctxs.iter_mut() {
                    let d = update_discriminator(ctx, config.loss_variant, &batch)?;
                    let (adv, l1v, _, tot) = update_generator(
                        ctx,
                        None,
                        config.loss_variant,
                        lambda_l1,
                        F::zero(),
                        &batch,
                    )?;
                    let dir = ctx.dir;
                    record_step(
                        log,
                        epoch,
                        step,
                        dir,
                        &StepLosses {
                            d_loss: d,
                            g_adv: adv,
                            g_l1: l1v,
                            g_cyc: 0.0,
                            g_total: tot,
                        },
                    )?;
                }
            }
            step += 1;
            start = end;
        }
    }
    Ok(())
}

/// Trains per `config` on the manifest's train split and returns the bundle
/// plus the per-step loss log.
pub fn train<F: Scalar>(
    manifest: &DatasetManifest<F>,
    flows: &dyn FlowImageProvider<F>,
    config: &TrainConfig,
) -> Result<(ModelBundle<F>, TrainLog)> {
    config.validate()?;
    validate_against_data(config, manifest)?;

    let mut log = TrainLog::default();
    let mut bundle = ModelBundle {
        g_ab: None,
        g_ba: None,
        d_a: None,
        d_b: None,
        loss_variant: config.loss_variant,
        m_ref: flows.m_ref(),
        config: config.clone(),
        loss_history: Vec::new(),
        adam_steps: BTreeMap::new(),
    };

    match config.direction_mode {
        DirectionMode::Simultaneous => {
            let mut ctxs = vec![
                build_ctx::<F>(config, Direction::AToB)?,
                build_ctx::<F>(config, Direction::BToA)?,
            ];
            run_epochs(
                &mut ctxs,
                true,
                manifest,
                flows,
                config,
                0..config.epochs,
                &mut log,
            )?;
            let ba = ctxs.pop().unwrap();
            let ab = ctxs.pop().unwrap();
            bundle.adam_steps.insert("g_ab".into(), ab.adam_g.t);
            bundle.adam_steps.insert("d_b".into(), ab.adam_d.t);
            bundle.adam_steps.insert("g_ba".into(), ba.adam_g.t);
            bundle.adam_steps.insert("d_a".into(), ba.adam_d.t);
            bundle.g_ab = Some(ab.gen);
            bundle.d_b = Some(ab.disc);
            bundle.g_ba = Some(ba.gen);
            bundle.d_a = Some(ba.disc);
        }
        mode => {
            let dirs: &[Direction] = match mode {
                DirectionMode::IndependentAToB => &[Direction::AToB],
                DirectionMode::IndependentBToA => &[Direction::BToA],
                DirectionMode::IndependentBoth => &[Direction::AToB, Direction::BToA],
                DirectionMode::Simultaneous => unreachable!(),
            };
            // Each direction trained in isolation, one full run after the
            // other.
            for &dir in dirs {
                let mut ctxs = vec![build_ctx::<F>(config, dir)?];
                run_epochs(
                    &mut ctxs,
                    false,
                    manifest,
                    flows,
                    config,
                    0..config.epochs,
                    &mut log,
                )?;
                let ctx = ctxs.pop().unwrap();
                match dir {
                    Direction::AToB => {
                        bundle.adam_steps.insert("g_ab".into(), ctx.adam_g.t);
                        bundle.adam_steps.insert("d_b".into(), ctx.adam_d.t);
                        bundle.g_ab = Some(ctx.gen);
                        bundle.d_b = Some(ctx.disc);
                    }
                    Direction::BToA => {
                        bundle.adam_steps.insert("g_ba".into(), ctx.adam_g.t);
                        bundle.adam_steps.insert("d_a".into(), ctx.adam_d.t);
                        bundle.g_ba = Some(ctx.gen);
                        bundle.d_a = Some(ctx.disc);
                    }
                }
            }
        }
    }

    bundle.loss_history = log.epoch_means();
    Ok((bundle, log))
}

/// Continues training a bundle for `additional_epochs`, preserving Adam
/// state and epoch numbering.
pub fn train_resume<F: Scalar>(
    mut bundle: ModelBundle<F>,
    manifest: &DatasetManifest<F>,
    flows: &dyn FlowImageProvider<F>,
    additional_epochs: usize,
) -> Result<(ModelBundle<F>, TrainLog)> {
    if additional_epochs == 0 {
        return Err(Error::Config("additional_epochs must be >= 1".into()));
    }
    let config = bundle.config.clone();
    config.validate()?;
    validate_against_data(&config, manifest)?;
    let epochs_done = bundle
        .loss_history
        .iter()
        .map(|e| e.epoch + 1)
        .max()
        .unwrap_or(0);
    let range = epochs_done..epochs_done + additional_epochs;

    let restore_ctx = |bundle: &mut ModelBundle<F>, dir: Direction| -> Result<DirectionCtx<F>> {
        let (gen, disc, g_tag, d_tag) = match dir {
            Direction::AToB => (bundle.g_ab.take(), bundle.d_b.take(), "g_ab", "d_b"),
            Direction::BToA => (bundle.g_ba.take(), bundle.d_a.take(), "g_ba", "d_a"),
        };
        let gen = gen.ok_or_else(|| {
            Error::Checkpoint(format!("bundle missing generator for {}", dir.tag()))
        })?;
        let disc = disc.ok_or_else(|| {
            Error::Checkpoint(format!("bundle missing discriminator for {}", dir.tag()))
        })?;
        let mut adam_g = Adam::new(config.adam.clone());
        adam_g.t = bundle.adam_steps.get(g_tag).copied().unwrap_or(0);
        let mut adam_d = Adam::new(config.adam.clone());
        adam_d.t = bundle.adam_steps.get(d_tag).copied().unwrap_or(0);
        Ok(DirectionCtx {
            dir,
            gen,
            disc,
            adam_g,
            adam_d,
        })
    };

    let mut log = TrainLog::default();
    match config.direction_mode {
        DirectionMode::Simultaneous => {
            let mut ctxs = vec![
                restore_ctx(&mut bundle, Direction::AToB)?,
                restore_ctx(&mut bundle, Direction::BToA)?,
            ];
            run_epochs(&mut ctxs, true, manifest, flows, &config, range, &mut log)?;
            let ba = ctxs.pop().unwrap();
            let ab = ctxs.pop().unwrap();
            bundle.adam_steps.insert("g_ab".into(), ab.adam_g.t);
            bundle.adam_steps.insert("d_b".into(), ab.adam_d.t);
            bundle.adam_steps.insert("g_ba".into(), ba.adam_g.t);
            bundle.adam_steps.insert("d_a".into(), ba.adam_d.t);
            bundle.g_ab = Some(ab.gen);
            bundle.d_b = Some(ab.disc);
            bundle.g_ba = Some(ba.gen);
            bundle.d_a = Some(ba.disc);
        }
        mode => {
            let dirs: &[Direction] = match mode {
                DirectionMode::IndependentAToB => &[Direction::AToB],
                DirectionMode::IndependentBToA => &[Direction::BToA],
                DirectionMode::IndependentBoth => &[Direction::AToB, Direction::BToA],
                DirectionMode::Simultaneous => unreachable!(),
            };
            for &dir in dirs {
                let mut ctxs = vec![restore_ctx(&mut bundle, dir)?];
                run_epochs(
                    &mut ctxs,
                    false,
                    manifest,
                    flows,
                    &config,
                    range.clone(),
                    &mut log,
                )?;
                let ctx = ctxs.pop().unwrap();
                match dir {
                    Direction::AToB => {
                        bundle.adam_steps.insert("g_ab".into(), ctx.adam_g.t);
                        bundle.adam_steps.insert("d_b".into(), ctx.adam_d.t);
                        bundle.g_ab = Some(ctx.gen);
                        bundle.d_b = Some(ctx.disc);
                    }
                    Direction::BToA => {
                        bundle.adam_steps.insert("g_ba".into(), ctx.adam_g.t);
                        bundle.adam_steps.insert("d_a".into(), ctx.adam_d.t);
                        bundle.g_ba = Some(ctx.gen);
                        bundle.d_a = Some(ctx.disc);
                    }
                }
            }
        }
    }
    let mut history = log.epoch_means();
    bundle.loss_history.append(&mut history);
    Ok((bundle, log))
}

/// Mean L1 between translated and target flow images over held-out pairs.
pub fn held_out_l1<F: Scalar>(
    gen: &mut UnetGenerator<F>,
    manifest: &DatasetManifest<F>,
    flows: &dyn FlowImageProvider<F>,
    dir: Direction,
) -> Result<F> {
    let mut total = F::zero();
    let mut count = 0usize;
    for clip in manifest.test_clips() {
        for t in 0..clip.len().saturating_sub(1) {
            let frame = clip.frame(t)?;
            let flow = flows.flow_image(&clip.clip_id, t)?;
            let pair = Pair {
                a: to_signed(&frame.pixels),
                b: to_signed(&flow.pixels),
            };
            let (input, target) = orient(dir, &pair);
            let out = gen.forward(input, Mode::Eval)?;
            total += l1_loss(&out, target)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Dataset("no held-out pairs".into()));
    }
    Ok(total / F::of(count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::{generate_synthetic_dataset, SyntheticSceneConfig};
    use crate::flow::{compute_m_ref, FlowBackendSpec, FlowSource, MemoryFlowProvider};
    use crate::gan::{DiscriminatorSpec, GeneratorSpec};

    fn tiny_setup() -> (
        crate::dataset::DatasetManifest<f32>,
        MemoryFlowProvider<f32>,
    ) {
        let config = SyntheticSceneConfig {
            canvas: (32, 32),
            train_clips: 1,
            test_clips: 1,
            frames_per_clip: 5,
            movers_per_clip: 1,
            schedule: vec![],
            ..SyntheticSceneConfig::default()
        };
        let manifest = generate_synthetic_dataset::<f32>(&config).unwrap();
        let source = FlowSource::new(FlowBackendSpec::default());
        let m_ref = compute_m_ref(&manifest, &source).unwrap();
        let flows = MemoryFlowProvider::materialize(&manifest, &source, m_ref).unwrap();
        (manifest, flows)
    }

    fn tiny_train_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 1,
            seed,
            generator: GeneratorSpec {
                base_width: 2,
                depth: 2,
                dropout: 0.5,
                dropout_levels: 1,
                ..GeneratorSpec::default()
            },
            discriminator: DiscriminatorSpec {
                base_width: 2,
                n_layers: 1,
                ..DiscriminatorSpec::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn baseline_smoke_run_and_history() {
        let (manifest, flows) = tiny_setup();
        let config = tiny_train_config(3);
        let (bundle, log) = train(&manifest, &flows, &config).unwrap();
        assert!(bundle.g_ab.is_some());
        assert!(bundle.d_b.is_some());
        assert!(bundle.g_ba.is_none());
        assert_eq!(bundle.loss_history.len(), 1);
        assert!(log.steps.iter().all(|s| s.value.is_finite()));
        assert!(log.steps.iter().any(|s| s.term == "a_to_b.g_l1"));
    }

    #[test]
    fn seeded_runs_reproduce_loss_history() {
        let (manifest, flows) = tiny_setup();
        let config = tiny_train_config(11);
        let (_, log1) = train(&manifest, &flows, &config).unwrap();
        let (_, log2) = train(&manifest, &flows, &config).unwrap();
        assert_eq!(log1, log2);
    }

    #[test]
    fn cycle_mode_trains_all_four_networks() {
        let (manifest, flows) = tiny_setup();
        let mut config = tiny_train_config(5);
        config.direction_mode = DirectionMode::Simultaneous;
        config.lambda_cyc = 10.0;
        config.loss_variant = LossVariant::Lsgan;
        let (bundle, log) = train(&manifest, &flows, &config).unwrap();
        assert!(bundle.g_ab.is_some() && bundle.g_ba.is_some());
        assert!(bundle.d_a.is_some() && bundle.d_b.is_some());
        assert!(log
            .steps
            .iter()
            .any(|s| s.term == "b_to_a.g_cyc" && s.value > 0.0));
    }

    #[test]
    fn resume_continues_epoch_numbering() {
        let (manifest, flows) = tiny_setup();
        let config = tiny_train_config(7);
        let (bundle, _) = train(&manifest, &flows, &config).unwrap();
        let (resumed, log) = train_resume(bundle, &manifest, &flows, 1).unwrap();
        assert_eq!(resumed.loss_history.len(), 2);
        assert_eq!(resumed.loss_history[1].epoch, 1);
        assert!(log.steps.iter().all(|s| s.epoch == 1));
    }

    #[test]
    fn training_reduces_held_out_l1() {
        let (manifest, flows) = tiny_setup();
        let mut config = tiny_train_config(13);
        config.epochs = 4;
        let mut untrained =
            UnetGenerator::<f32>::new(&config.generator, derive_seed(config.seed, "g_ab")).unwrap();
        let before = held_out_l1(&mut untrained, &manifest, &flows, Direction::AToB).unwrap();
        let (mut bundle, _) = train(&manifest, &flows, &config).unwrap();
        let after = held_out_l1(
            bundle.g_ab.as_mut().unwrap(),
            &manifest,
            &flows,
            Direction::AToB,
        )
        .unwrap();
        assert!(
            after < before,
            "held-out L1 did not improve: {after} vs {before}"
        );
    }
}
