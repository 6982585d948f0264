//! Acceptance suite: one test per gating criterion, each printing a
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`).
//!
//! Every oracle here is written independently of the implementation path
//! it checks: scalar loops for the losses and heat maps, central finite
//! differences for the gradients, a direct double loop over the
//! structuring element for morphology, and the O(P·N) pairwise statistic
//! for the AUC.

use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use flowgan::dataset::synthetic::{AnomalyWindow, SpriteShape, SpriteSpec, SyntheticSceneConfig};
use flowgan::dataset::Frame;
use flowgan::eval::{roc_auc, ExperimentReport, ReportRow, RowStatus, ScoreSeries};
use flowgan::flow::{
    compute_m_ref, decode_flow_hsi, encode_flow_hsi, farneback::farneback_flow,
    farneback::FarnebackParams, FlowBackendSpec, FlowField, FlowSource, MemoryFlowProvider,
};
use flowgan::gan::loss::{
    composite_loss, cycle_consistency_loss, disc_fake_term, disc_real_term, gen_adv_term, l1_loss,
    l1_loss_grad, lsgan_discriminator_loss, lsgan_generator_loss, vanilla_cgan_loss,
};
use flowgan::gan::{
    DirectionMode, DiscriminatorSpec, GeneratorSpec, LossVariant, PatchDiscriminator, TrainConfig,
    UnetGenerator,
};
use flowgan::inference::{
    anomaly_score, heatmap_from_flow_pair, morphology, suppress_noise, HeatMap, HeatMapDomain,
    NoiseSuppressionConfig, PipelineConfig, ScoreDirection, Scorer,
};
use flowgan::nn::{seeded_rng, Mode, Param};
use flowgan::vgg::{FeatureExtractorSpec, Vgg16, VggLayer};

fn report(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {criterion}: {detail}");
    assert!(pass, "{criterion}: {detail}");
}

fn rand_scores(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |_| lo + rng.random::<f64>() * (hi - lo))
}

// ---------------------------------------------------------------------
// Criterion 1 — loss formula oracles
// ---------------------------------------------------------------------

#[test]
fn criterion_1_loss_formula_oracles() {
    let started = Instant::now();
    let mut rng = seeded_rng(101, "acceptance-losses");
    let mut max_err = 0.0f64;

    for _ in 0..100 {
        let h = 2 + (rng.random::<u32>() % 6) as usize;
        let w = 2 + (rng.random::<u32>() % 6) as usize;
        let d_real = rand_scores(&mut rng, h, w, 0.01, 0.99);
        let d_fake = rand_scores(&mut rng, h, w, 0.01, 0.99);
        let n = (h * w) as f64;

        // Scalar-loop oracles, written against the formulas directly.
        let mut vanilla = 0.0;
        let mut ls_g = 0.0;
        let mut ls_d = 0.0;
        for i in 0..h {
            for j in 0..w {
                vanilla += d_real[[i, j]].ln() / n + (1.0 - d_fake[[i, j]]).ln() / n;
                ls_g += 0.5 * (d_fake[[i, j]] - 1.0).powi(2) / n;
                ls_d += 0.5 * (d_real[[i, j]] - 1.0).powi(2) / n + 0.5 * d_fake[[i, j]].powi(2) / n;
            }
        }
        max_err = max_err.max((vanilla_cgan_loss(&d_real, &d_fake).unwrap() - vanilla).abs());
        max_err = max_err.max((lsgan_generator_loss(&d_fake) - ls_g).abs());
        max_err = max_err.max((lsgan_discriminator_loss(&d_real, &d_fake) - ls_d).abs());

        let a = Array3::from_shape_fn((3, h, w), |_| rng.random::<f64>() * 2.0 - 1.0);
        let b = Array3::from_shape_fn((3, h, w), |_| rng.random::<f64>() * 2.0 - 1.0);
        let mut l1 = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            l1 += (x - y).abs();
        }
        l1 /= (3 * h * w) as f64;
        max_err = max_err.max((l1_loss(&a, &b).unwrap() - l1).abs());
        max_err = max_err.max((cycle_consistency_loss(&b, &a).unwrap() - l1).abs());

        let (adv, l1t, cyc) = (
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        );
        let (w1, w2) = (rng.random::<f64>() * 100.0, rng.random::<f64>() * 10.0);
        let composite = composite_loss(LossVariant::Lsgan, adv, l1t, cyc, w1, w2).unwrap();
        max_err = max_err.max((composite - (adv + w1 * l1t + w2 * cyc)).abs());
    }

    // Closed-form points.
    let half = Array2::from_elem((4, 4), 0.5f64);
    let vanilla_half = vanilla_cgan_loss(&half, &half).unwrap();
    let closed_ok = (vanilla_half - (-1.3863)).abs() < 1e-4
        && (lsgan_discriminator_loss(&half, &half) - 0.25).abs() < 1e-4;

    let elapsed = started.elapsed().as_secs_f64();
    report(
        "criterion 1 (loss formula oracles)",
        max_err < 1e-6 && closed_ok && elapsed < 10.0,
        &format!(
            "max |impl - oracle| = {max_err:.2e}, vanilla(0.5) = {vanilla_half:.5}, {elapsed:.2}s"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 2 — gradient check on a toy network
// ---------------------------------------------------------------------

struct Toy {
    g_ab: UnetGenerator<f64>,
    g_ba: UnetGenerator<f64>,
    disc: PatchDiscriminator<f64>,
    a: Array3<f64>,
    b: Array3<f64>,
    lambda_l1: f64,
    lambda_cyc: f64,
}

fn toy_setup(variant: LossVariant, seed: u64) -> Toy {
    let gen_spec = GeneratorSpec {
        base_width: 2,
        depth: 1,
        dropout: 0.0,
        norm: false,
        ..GeneratorSpec::default()
    };
    let disc_spec = DiscriminatorSpec {
        base_width: 2,
        n_layers: 1,
        norm: false,
        ..DiscriminatorSpec::default()
    };
    let mut rng = seeded_rng(seed, "toy-data");
    let mut toy = Toy {
        g_ab: UnetGenerator::new(&gen_spec, seed + 1).unwrap(),
        g_ba: UnetGenerator::new(&gen_spec, seed + 2).unwrap(),
        disc: PatchDiscriminator::new(&disc_spec, variant == LossVariant::Vanilla, seed + 3)
            .unwrap(),
        a: Array3::from_shape_fn((3, 8, 8), |_| rng.random::<f64>() * 1.6 - 0.8),
        b: Array3::from_shape_fn((3, 8, 8), |_| rng.random::<f64>() * 1.6 - 0.8),
        lambda_l1: 100.0,
        lambda_cyc: 10.0,
    };
    // Fresh train-scale weights leave the chained generator's activations
    // clustered at zero; the check is valid at any parameter point, so use
    // a better-conditioned one with unit-scale signals everywhere.
    for (_, p) in toy.all_params() {
        p.value.mapv_inplace(|w| w * 8.0);
    }
    toy
}

impl Toy {
    fn param_count(&mut self) -> usize {
        self.all_params().iter().map(|(_, p)| p.len()).sum()
    }

    fn all_params(&mut self) -> Vec<(String, &mut Param<f64>)> {
        let mut refs = Vec::new();
        self.g_ab.params_mut("g_ab", &mut refs);
        self.g_ba.params_mut("g_ba", &mut refs);
        self.disc.params_mut("d_b", &mut refs);
        refs
    }

    fn zero_grads(&mut self) {
        for (_, p) in self.all_params() {
            p.zero_grad();
        }
    }

    /// Generator composite objective value (dropout off, so Eval == Train).
    fn composite_value(&mut self, variant: LossVariant) -> f64 {
        let fake = self.g_ab.forward(&self.a, Mode::Eval).unwrap();
        let scores = self.disc.forward(&self.a, &fake, Mode::Eval).unwrap();
        let (adv, _) = gen_adv_term(variant, &scores).unwrap();
        let l1 = l1_loss(&fake, &self.b).unwrap();
        let rec = self.g_ba.forward(&fake, Mode::Eval).unwrap();
        let cyc = cycle_consistency_loss(&self.a, &rec).unwrap();
        composite_loss(variant, adv, l1, cyc, self.lambda_l1, self.lambda_cyc).unwrap()
    }

    /// Analytic gradient pass mirroring the objective above.
    fn composite_backward(&mut self, variant: LossVariant) {
        self.zero_grads();
        let fake = self.g_ab.forward(&self.a, Mode::Train).unwrap();
        let scores = self.disc.forward(&self.a, &fake, Mode::Train).unwrap();
        let (_, g_scores) = gen_adv_term(variant, &scores).unwrap();
        let (_, g_fake_adv) = self.disc.backward(&g_scores);
        let (_, g_l1) = l1_loss_grad(&fake, &self.b).unwrap();
        let rec = self.g_ba.forward(&fake, Mode::Train).unwrap();
        let (_, g_rec) = l1_loss_grad(&rec, &self.a).unwrap();
        let g_cycle = self.g_ba.backward(&g_rec.mapv(|g| g * self.lambda_cyc));
        let total = g_fake_adv + &g_l1.mapv(|g| g * self.lambda_l1) + &g_cycle;
        self.g_ab.backward(&total);
    }

    /// Discriminator objective value with a frozen fake sample.
    fn disc_value(&mut self, variant: LossVariant, fake: &Array3<f64>) -> f64 {
        let d_real = self.disc.forward(&self.a, &self.b, Mode::Eval).unwrap();
        let d_fake = self.disc.forward(&self.a, fake, Mode::Eval).unwrap();
        let (vr, _) = disc_real_term(variant, &d_real).unwrap();
        let (vf, _) = disc_fake_term(variant, &d_fake).unwrap();
        vr + vf
    }

    fn disc_backward(&mut self, variant: LossVariant, fake: &Array3<f64>) {
        self.zero_grads();
        let d_real = self.disc.forward(&self.a, &self.b, Mode::Train).unwrap();
        let (_, g_real) = disc_real_term(variant, &d_real).unwrap();
        self.disc.backward(&g_real);
        let d_fake = self.disc.forward(&self.a, fake, Mode::Train).unwrap();
        let (_, g_fake) = disc_fake_term(variant, &d_fake).unwrap();
        self.disc.backward(&g_fake);
    }
}

fn max_rel_error<V: FnMut(&mut Toy) -> f64>(toy: &mut Toy, mut value: V, analytic: &[f64]) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (pi, a) in analytic.iter().enumerate() {
        let perturb = |toy: &mut Toy, delta: f64, pi: usize| {
            let mut refs = toy.all_params();
            let mut seen = 0usize;
            for (_, p) in refs.iter_mut() {
                if pi < seen + p.len() {
                    p.value.as_slice_mut().unwrap()[pi - seen] += delta;
                    return;
                }
                seen += p.len();
            }
            unreachable!("param index in range");
        };
        perturb(toy, h, pi);
        let fp = value(toy);
        perturb(toy, -2.0 * h, pi);
        let fm = value(toy);
        perturb(toy, h, pi);
        let fd = (fp - fm) / (2.0 * h);
        let denom = a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((a - fd).abs() / denom);
    }
    worst
}

fn collect_grads(toy: &mut Toy) -> Vec<f64> {
    toy.all_params()
        .iter()
        .flat_map(|(_, p)| p.grad.iter().copied().collect::<Vec<_>>())
        .collect()
}

/// The objectives are piecewise-smooth: L1 has kinks where generated ==
/// target, and every leaky-ReLU pre-activation crossing zero is a slope
/// change. Central differences at a fixed step are only a valid oracle
/// when the evaluation point keeps all kinks outside the step, so the
/// fixture seed is chosen (deterministically, first candidate to qualify)
/// on that margin — a precondition independent of the gradients under
/// test.
fn toy_with_margin(variant: LossVariant) -> Toy {
    // Perturbing any parameter by h moves a pre-activation by at most
    // h * |d pre-act / d theta|, and those sensitivities are below ~1 for
    // this toy (unit-scale inputs, 0.02-scale weights), so a margin of
    // 10x the pinned step guarantees no kink is crossed by any probe.
    const MARGIN: f64 = 1e-4;
    for candidate in 0..64u64 {
        let seed = 7_000 + candidate * 97 + variant as u64;
        let mut toy = toy_setup(variant, seed);
        let fake = toy.g_ab.forward(&toy.a, Mode::Eval).unwrap();
        let _ = toy.disc.forward(&toy.a, &fake, Mode::Eval).unwrap();
        let rec = toy.g_ba.forward(&fake, Mode::Eval).unwrap();
        let mut margin = toy
            .g_ab
            .kink_margin()
            .min(toy.g_ba.kink_margin())
            .min(toy.disc.kink_margin());
        // The frozen-fake discriminator pass visits different activations.
        let _ = toy.disc.forward(&toy.a, &toy.b, Mode::Eval).unwrap();
        margin = margin.min(toy.disc.kink_margin());
        let l1_gap = fake
            .iter()
            .zip(toy.b.iter())
            .chain(rec.iter().zip(toy.a.iter()))
            .map(|(x, y)| (x - y).abs())
            .fold(f64::INFINITY, f64::min);
        if margin > MARGIN && l1_gap > MARGIN {
            return toy;
        }
    }
    panic!("no toy fixture with a safe kink margin among the candidates");
}

#[test]
fn criterion_2_gradient_check() {
    let started = Instant::now();
    let mut worst = 0.0f64;

    for variant in [LossVariant::Vanilla, LossVariant::Lsgan] {
        let mut toy = toy_with_margin(variant);
        let n_params = toy.param_count();
        assert!(n_params <= 1000, "toy network has {n_params} params");
        let fake = toy.g_ab.forward(&toy.a, Mode::Eval).unwrap();

        toy.composite_backward(variant);
        let analytic = collect_grads(&mut toy);
        worst = worst.max(max_rel_error(
            &mut toy,
            |t| t.composite_value(variant),
            &analytic,
        ));

        // Discriminator objective (bare term) with the fake frozen.
        let frozen = fake.clone();
        toy.disc_backward(variant, &frozen);
        let analytic = collect_grads(&mut toy);
        worst = worst.max(max_rel_error(
            &mut toy,
            |t| t.disc_value(variant, &frozen),
            &analytic,
        ));
    }

    let elapsed = started.elapsed().as_secs_f64();
    report(
        "criterion 2 (gradient check)",
        worst < 1e-4 && elapsed < 60.0,
        &format!("max relative error = {worst:.2e} over both variants, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------
// Criterion 3 — morphology vs brute force
// ---------------------------------------------------------------------

/// Direct double loop over the k×k structuring element, independent of the
/// separable implementation.
fn brute_morph(mask: &Array2<u8>, k: usize, dilating: bool) -> Array2<u8> {
    let (h, w) = mask.dim();
    let r = (k / 2) as i64;
    let outside = if dilating { 0 } else { 1 };
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = outside;
        for dy in -r..=r {
            for dx in -r..=r {
                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                let v = if yy < 0 || yy >= h as i64 || xx < 0 || xx >= w as i64 {
                    outside
                } else {
                    mask[[yy as usize, xx as usize]]
                };
                acc = if dilating { acc.max(v) } else { acc.min(v) };
            }
        }
        acc
    })
}

#[test]
fn criterion_3_morphology_oracle() {
    let started = Instant::now();
    let mut rng = seeded_rng(303, "acceptance-morph");
    let border = morphology::BorderPolicy::NonSpurious;
    let mut checked = 0usize;

    for _ in 0..1000 {
        let h = 1 + (rng.random::<u32>() % 16) as usize;
        let w = 1 + (rng.random::<u32>() % 16) as usize;
        let mask = Array2::from_shape_fn((h, w), |_| (rng.random::<u32>() % 2) as u8);
        for k in [3usize, 5, 7] {
            let dil = morphology::dilate(&mask, k, border).unwrap();
            let ero = morphology::erode(&mask, k, border).unwrap();
            assert_eq!(dil, brute_morph(&mask, k, true), "dilate {h}x{w} k={k}");
            assert_eq!(ero, brute_morph(&mask, k, false), "erode {h}x{w} k={k}");

            let open = morphology::opening(&mask, k, border).unwrap();
            let close = morphology::closing(&mask, k, border).unwrap();
            assert_eq!(
                open,
                brute_morph(&brute_morph(&mask, k, false), k, true),
                "opening {h}x{w} k={k}"
            );
            assert_eq!(
                close,
                brute_morph(&brute_morph(&mask, k, true), k, false),
                "closing {h}x{w} k={k}"
            );

            // Idempotence, anti-extensivity/extensivity.
            assert_eq!(morphology::opening(&open, k, border).unwrap(), open);
            assert_eq!(morphology::closing(&close, k, border).unwrap(), close);
            for ((o, m), c) in open.iter().zip(mask.iter()).zip(close.iter()) {
                assert!(o <= m && m <= c);
            }

            // Monotonicity against a superset mask.
            let mut sup = mask.clone();
            for (i, v) in sup.iter_mut().enumerate() {
                if i % 5 == 0 {
                    *v = 1;
                }
            }
            let open_sup = morphology::opening(&sup, k, border).unwrap();
            let close_sup = morphology::closing(&sup, k, border).unwrap();
            for (a, b) in open.iter().zip(open_sup.iter()) {
                assert!(a <= b, "opening must be monotone");
            }
            for (a, b) in close.iter().zip(close_sup.iter()) {
                assert!(a <= b, "closing must be monotone");
            }
            checked += 1;
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    report(
        "criterion 3 (morphology oracle)",
        checked == 3000 && elapsed < 30.0,
        &format!("{checked} mask/kernel cases exact vs brute force, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------
// Criterion 4 — scoring oracles
// ---------------------------------------------------------------------

#[test]
fn criterion_4_scoring_oracles() {
    let mut rng = seeded_rng(404, "acceptance-score");
    let mut alpha_err = 0.0f64;
    let mut map_err = 0.0f64;
    let mut dominated = true;

    for _ in 0..50 {
        let h = 3 + (rng.random::<u32>() % 14) as usize;
        let w = 3 + (rng.random::<u32>() % 14) as usize;

        // Heat map from a random flow-image pair vs triple loop.
        let a = Array3::from_shape_fn((3, h, w), |_| rng.random::<f64>());
        let b = Array3::from_shape_fn((3, h, w), |_| rng.random::<f64>());
        let oa = flowgan::flow::FlowImage {
            pixels: a.clone(),
            m_ref: 1.0,
            t: 0,
        };
        let ob = flowgan::flow::FlowImage {
            pixels: b.clone(),
            m_ref: 1.0,
            t: 0,
        };
        let map = heatmap_from_flow_pair(&oa, &ob).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut expect = 0.0;
                for c in 0..3 {
                    expect += (a[[c, y, x]] - b[[c, y, x]]).powi(2);
                }
                map_err = map_err.max((map.values[[y, x]] - expect).abs());
            }
        }

        // α vs the √(mean) scalar oracle.
        let mut sum = 0.0;
        for v in map.values.iter() {
            sum += v;
        }
        let alpha_oracle = (sum / (h * w) as f64).sqrt();
        alpha_err = alpha_err.max((anomaly_score(&map) - alpha_oracle).abs());

        // Refinement never exceeds the original pointwise.
        let tau = rng.random::<f64>() * 0.5;
        let refined = suppress_noise(&map, &NoiseSuppressionConfig::default(), tau).unwrap();
        for (r, o) in refined.values.iter().zip(map.values.iter()) {
            if r > o {
                dominated = false;
            }
        }
    }

    report(
        "criterion 4 (scoring oracles)",
        alpha_err < 1e-9 && map_err < 1e-7 && dominated,
        &format!("alpha err = {alpha_err:.2e}, heat-map err = {map_err:.2e}, refined <= original: {dominated}"),
    );
}

/// Architecture arithmetic: the default tap on a full-resolution frame.
#[test]
fn criterion_4b_feature_map_arithmetic() {
    let mut rng = seeded_rng(405, "acceptance-vgg");
    let gray = Array2::from_shape_fn((256, 256), |_| rng.random::<f32>());
    let frame = Frame {
        pixels: flowgan::imgproc::gray_to_rgb(&gray),
        source_index: 0,
    };
    let mut vgg = Vgg16::<f32>::new(&FeatureExtractorSpec::default()).unwrap();
    let features = vgg
        .features(&frame, VggLayer::parse("3-3").unwrap())
        .unwrap();
    report(
        "criterion 4b (feature extractor arithmetic)",
        features.dim() == (256, 64, 64),
        &format!("conv 3-3 on 256x256 gives {:?}", features.dim()),
    );
}

// ---------------------------------------------------------------------
// Criterion 5 — AUC oracle
// ---------------------------------------------------------------------

fn pairwise_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut hits = 0.0;
    let mut total = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            total += 1.0;
            hits += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    hits / total
}

#[test]
fn criterion_5_auc_oracle() {
    let mut rng = seeded_rng(505, "acceptance-auc");
    let mut max_err = 0.0f64;
    let mut max_invariance_err = 0.0f64;

    for case in 0..200 {
        let n = 4 + (rng.random::<u32>() % 80) as usize;
        let mut labels: Vec<u8> = (0..n).map(|_| (rng.random::<u32>() % 2) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Quantized scores so ties actually occur.
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() * 6.0).round() / 6.0)
            .collect();
        let fast = roc_auc(&labels, &scores).unwrap();
        let slow = pairwise_auc(&labels, &scores);
        max_err = max_err.max((fast - slow).abs());

        // Strictly increasing transform leaves the AUC unchanged.
        let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s + 0.1).exp()).collect();
        let t = roc_auc(&labels, &transformed).unwrap();
        max_invariance_err = max_invariance_err.max((fast - t).abs());

        if case == 0 {
            let ties = vec![0.5; n];
            assert_eq!(
                roc_auc(&labels, &ties).unwrap(),
                0.5,
                "all ties must be 0.5"
            );
        }
    }

    report(
        "criterion 5 (AUC oracle)",
        max_err < 1e-9 && max_invariance_err < 1e-12,
        &format!(
            "pairwise err = {max_err:.2e}, transform err = {max_invariance_err:.2e}, ties = 0.5"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 6 — flow codec and builtin flow
// ---------------------------------------------------------------------

#[test]
fn criterion_6_flow_codec_and_builtin() {
    let mut rng = seeded_rng(606, "acceptance-flow");
    let mut codec_err = 0.0f64;
    for _ in 0..50 {
        let n = 4 + (rng.random::<u32>() % 12) as usize;
        let m_ref = 0.5 + rng.random::<f64>() * 3.0;
        let limit = 0.98 * m_ref;
        let mut u = Array2::zeros((n, n));
        let mut v = Array2::zeros((n, n));
        for y in 0..n {
            for x in 0..n {
                let mag = rng.random::<f64>() * limit;
                let ang = rng.random::<f64>() * std::f64::consts::TAU;
                u[[y, x]] = mag * ang.cos();
                v[[y, x]] = mag * ang.sin();
            }
        }
        let field = FlowField { u, v, t: 0 };
        let decoded = decode_flow_hsi(&encode_flow_hsi(&field, m_ref).unwrap());
        for y in 0..n {
            for x in 0..n {
                codec_err = codec_err
                    .max((decoded.u[[y, x]] - field.u[[y, x]]).abs() / m_ref)
                    .max((decoded.v[[y, x]] - field.v[[y, x]]).abs() / m_ref);
            }
        }
    }

    // Builtin flow on integer torus translations of textured noise.
    let base = {
        let mut img = Array2::zeros((64, 64));
        for val in img.iter_mut() {
            *val = rng.random::<f64>();
        }
        // Mild smoothing for a well-conditioned expansion.
        let mut sm = img.clone();
        for y in 0..64i64 {
            for x in 0..64i64 {
                let mut acc = 0.0;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        acc += img[[
                            (y + dy).rem_euclid(64) as usize,
                            (x + dx).rem_euclid(64) as usize,
                        ]];
                    }
                }
                sm[[y as usize, x as usize]] = acc / 9.0;
            }
        }
        sm
    };
    let mut worst_median = 0.0f64;
    for (dy, dx) in [(0i64, 1i64), (1, 0), (1, 1), (0, 2), (2, 1), (-1, 1)] {
        let shifted = Array2::from_shape_fn((64, 64), |(y, x)| {
            base[[
                (y as i64 - dy).rem_euclid(64) as usize,
                (x as i64 - dx).rem_euclid(64) as usize,
            ]]
        });
        let (u, v) = farneback_flow(&base, &shifted, &FarnebackParams::default()).unwrap();
        let mut du = Vec::new();
        let mut dv = Vec::new();
        for y in 8..56 {
            for x in 8..56 {
                du.push((u[[y, x]] - dx as f64).abs());
                dv.push((v[[y, x]] - dy as f64).abs());
            }
        }
        du.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        worst_median = worst_median.max(du[du.len() / 2]).max(dv[dv.len() / 2]);
    }

    report(
        "criterion 6 (flow codec + builtin flow)",
        codec_err <= 0.02 && worst_median <= 0.5,
        &format!(
            "codec err = {:.4} of m_ref (<= 0.02), worst median shift err = {worst_median:.3} px (<= 0.5)",
            codec_err
        ),
    );
}

// ---------------------------------------------------------------------
// Criteria 7 & 8 — synthetic end-to-end and determinism
// ---------------------------------------------------------------------

fn e2e_scene() -> SyntheticSceneConfig {
    SyntheticSceneConfig {
        canvas: (64, 64),
        train_clips: 3,
        test_clips: 2,
        frames_per_clip: 20,
        movers_per_clip: 2,
        normal: SpriteSpec {
            shape: SpriteShape::Square,
            size: (7.0, 10.0),
            speed: (1.5, 2.5),
            heading_deg: (-10.0, 10.0),
        },
        anomaly: SpriteSpec {
            shape: SpriteShape::Disk,
            size: (12.0, 15.0),
            speed: (5.0, 6.0),
            heading_deg: (200.0, 250.0),
        },
        schedule: vec![
            AnomalyWindow {
                test_clip: 0,
                start: 6,
                end: 12,
            },
            AnomalyWindow {
                test_clip: 1,
                start: 3,
                end: 9,
            },
            AnomalyWindow {
                test_clip: 1,
                start: 14,
                end: 18,
            },
        ],
        seed: 7,
    }
}

fn e2e_train_config(variant: LossVariant, cycle: bool) -> TrainConfig {
    TrainConfig {
        loss_variant: variant,
        lambda_cyc: if cycle { 10.0 } else { 0.0 },
        direction_mode: if cycle {
            DirectionMode::Simultaneous
        } else {
            DirectionMode::IndependentAToB
        },
        epochs: 4,
        seed: 7,
        generator: GeneratorSpec {
            base_width: 8,
            depth: 3,
            ..GeneratorSpec::default()
        },
        discriminator: DiscriminatorSpec {
            base_width: 8,
            n_layers: 2,
            ..DiscriminatorSpec::default()
        },
        ..TrainConfig::default()
    }
}

struct E2eRun {
    auc_vanilla: f64,
    auc_lsgan_cyc: f64,
    loss_csvs: Vec<String>,
    manifests: Vec<String>,
    report_csv: String,
}

fn e2e_run(out_dir: &std::path::Path) -> E2eRun {
    std::fs::create_dir_all(out_dir).unwrap();
    let scene = e2e_scene();
    let manifest = flowgan::dataset::synthetic::generate_synthetic_dataset::<f32>(&scene).unwrap();
    let source = FlowSource::new(FlowBackendSpec::default());
    let m_ref = compute_m_ref(&manifest, &source).unwrap();
    let flows = MemoryFlowProvider::materialize(&manifest, &source, m_ref).unwrap();

    let mut loss_csvs = Vec::new();
    let mut manifests = Vec::new();
    let mut rows = Vec::new();
    let mut aucs = Vec::new();

    for (name, variant, cycle) in [
        ("VanillaGAN (baseline)", LossVariant::Vanilla, false),
        ("LSGAN (cyc.-con.)", LossVariant::Lsgan, true),
    ] {
        let config = e2e_train_config(variant, cycle);
        let (bundle, log) = flowgan::gan::train(&manifest, &flows, &config).unwrap();
        let csv_path = out_dir.join(format!("loss_{}.csv", name.len()));
        log.write_csv(&csv_path).unwrap();
        loss_csvs.push(std::fs::read_to_string(&csv_path).unwrap());

        let mut scorer = Scorer::new(
            bundle,
            PipelineConfig {
                direction: ScoreDirection::Flow,
                ..PipelineConfig::default()
            },
        );
        let mut clip_scores = Vec::new();
        for clip in manifest.test_clips() {
            let score = scorer.score_clip(clip, &flows).unwrap();
            flowgan::inference::write_clip_artifacts(
                &score,
                m_ref,
                "acceptance",
                &out_dir.join(name.replace(' ', "_")),
            )
            .unwrap();
            manifests.push(
                std::fs::read_to_string(
                    out_dir
                        .join(name.replace(' ', "_"))
                        .join(format!("{}.scores.json", score.clip_id)),
                )
                .unwrap(),
            );
            clip_scores.push(score);
        }
        let series = ScoreSeries::from_clip_scores(&clip_scores).unwrap();
        let auc = series.auc().unwrap();
        aucs.push(auc);
        rows.push(ReportRow {
            name: name.to_string(),
            direction: "flow".into(),
            auc: Some(auc),
            runtime_s: 0.0,
            status: RowStatus::Ok,
        });
    }

    let report = ExperimentReport {
        title: "synthetic end-to-end".into(),
        config_hash: "acceptance".into(),
        rows,
    };
    E2eRun {
        auc_vanilla: aucs[0],
        auc_lsgan_cyc: aucs[1],
        loss_csvs,
        manifests,
        report_csv: report.to_csv(),
    }
}

#[test]
fn criteria_7_and_8_end_to_end_and_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run1 = e2e_run(&dir.path().join("run1"));
    let run2 = e2e_run(&dir.path().join("run2"));

    // Criterion 7: both configurations reach the AUC bar, and suppression
    // strictly reduces alpha on a speck-only fixture clip.
    let mut rng = seeded_rng(707, "specks");
    let mut strictly_reduced = true;
    for t in 0..8 {
        let mut values = Array2::zeros((32, 32));
        for _ in 0..6 {
            let y = (rng.random::<u32>() % 32) as usize;
            let x = (rng.random::<u32>() % 32) as usize;
            values[[y, x]] = 0.5 + rng.random::<f64>() * 0.5;
        }
        let map = HeatMap {
            values,
            domain: HeatMapDomain::Flow,
            t,
        };
        let raw = anomaly_score(&map);
        let refined = suppress_noise(&map, &NoiseSuppressionConfig::default(), 0.0).unwrap();
        let refined_alpha = anomaly_score(&refined);
        if refined_alpha >= raw {
            strictly_reduced = false;
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    report(
        "criterion 7 (synthetic end-to-end)",
        run1.auc_vanilla >= 0.85 && run1.auc_lsgan_cyc >= 0.85 && strictly_reduced,
        &format!(
            "vanilla baseline AUC = {:.3}, lsgan cyc AUC = {:.3} (>= 0.85), speck alpha strictly reduced = {strictly_reduced}, {elapsed:.0}s total",
            run1.auc_vanilla, run1.auc_lsgan_cyc
        ),
    );

    report(
        "criterion 8 (seeded determinism)",
        run1.loss_csvs == run2.loss_csvs
            && run1.manifests == run2.manifests
            && run1.report_csv == run2.report_csv,
        &format!(
            "loss histories identical: {}, score manifests identical: {}, report CSVs identical: {}",
            run1.loss_csvs == run2.loss_csvs,
            run1.manifests == run2.manifests,
            run1.report_csv == run2.report_csv
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9 — reproduction machinery (non-gating numbers)
// ---------------------------------------------------------------------

#[test]
fn criterion_9_reproduction_report_shape() {
    // The full-scale reproduction needs the real dataset and pretrained
    // weights; what is gated here is that the machinery runs to completion
    // and that the ladder report carries the published reference rows for
    // manual comparison.
    let scene = SyntheticSceneConfig {
        frames_per_clip: 8,
        train_clips: 1,
        test_clips: 1,
        movers_per_clip: 1,
        schedule: vec![AnomalyWindow {
            test_clip: 0,
            start: 2,
            end: 5,
        }],
        ..e2e_scene()
    };
    let manifest = flowgan::dataset::synthetic::generate_synthetic_dataset::<f32>(&scene).unwrap();
    let mut base = e2e_train_config(LossVariant::Vanilla, false);
    base.epochs = 1;
    let opts = flowgan::eval::ExperimentOptions {
        base,
        measure_runtime: false,
        config_hash: "acceptance".into(),
        ..Default::default()
    };
    let output = flowgan::eval::run_ablation(
        &manifest,
        &FlowBackendSpec::default(),
        &flowgan::eval::standard_ablation_configs(),
        &opts,
    )
    .unwrap();
    let csv = output.report.to_csv();

    let measured_rows = output
        .report
        .rows
        .iter()
        .filter(|r| r.status == RowStatus::Ok)
        .count();
    let reference_values = ["0.937", "0.948", "0.957", "0.954", "0.976", "0.980"];
    let has_references = reference_values.iter().all(|v| csv.contains(v));
    let script =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/reproduce_ped2.sh");

    report(
        "criterion 9 (reproduction machinery)",
        measured_rows == 6 && has_references && script.is_file(),
        &format!(
            "6-config ladder ran ({measured_rows} ok rows), reference rows present: {has_references}, script present: {}",
            script.is_file()
        ),
    );
}
