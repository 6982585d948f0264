//! Subcommand implementations. Each takes the validated [`RunConfig`],
//! performs its work under `config.out`, and prints a short summary.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use flowgan::dataset::synthetic::generate_synthetic_dataset;
use flowgan::dataset::{export_ucsd_layout, load_ucsd_dataset, DatasetManifest};
use flowgan::eval::{
    render::render_outputs, run_ablation, run_flow_comparison, run_vgg_layer_sweep,
    standard_ablation_configs, ExperimentOptions, ExperimentOutput, ScoreSeries,
};
use flowgan::flow::{compute_m_ref, encode_flow_hsi, flo, FlowBackendSpec, FlowSource};
use flowgan::gan::checkpoint::{load_bundle, save_bundle};
use flowgan::gan::{train, train_resume};
use flowgan::inference::{write_clip_artifacts, Scorer};
use flowgan::vgg::VggLayer;

use crate::config::{DatasetKind, ExperimentKind, RunConfig};

type F = flowgan::DefaultScalar;

/// Loads (ucsd) or regenerates (synthetic) the dataset described by the
/// config.
pub fn resolve_dataset(config: &RunConfig) -> anyhow::Result<DatasetManifest<F>> {
    Ok(match config.dataset.kind {
        DatasetKind::Synthetic => {
            let synth = config
                .dataset
                .synthetic
                .as_ref()
                .context("missing [dataset.synthetic]")?;
            generate_synthetic_dataset::<F>(synth)?
        }
        DatasetKind::Ucsd => {
            load_ucsd_dataset::<F>(&config.dataset.root, config.dataset.resolution)?
        }
    })
}

fn ensure_out(config: &RunConfig) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    Ok(config.out.clone())
}

fn backend_spec(config: &RunConfig) -> anyhow::Result<FlowBackendSpec> {
    config.flow.backend_spec()
}

fn resolve_m_ref(
    config: &RunConfig,
    manifest: &DatasetManifest<F>,
    source: &FlowSource,
) -> anyhow::Result<F> {
    if config.flow.m_ref > 0.0 {
        Ok(config.flow.m_ref as F)
    } else {
        Ok(compute_m_ref(manifest, source)?)
    }
}

/// `synth`: generate the configured synthetic dataset and export it in the
/// UCSD layout under `dataset.root`.
pub fn cmd_synth(config: &RunConfig) -> anyhow::Result<()> {
    if config.dataset.kind != DatasetKind::Synthetic {
        bail!("synth requires dataset.kind = \"synthetic\"");
    }
    let manifest = resolve_dataset(config)?;
    std::fs::create_dir_all(&config.dataset.root)
        .with_context(|| format!("creating {}", config.dataset.root.display()))?;
    export_ucsd_layout(&manifest, &config.dataset.root)?;
    let meta = serde_json::json!({
        "config_hash": config.hash(),
        "seed": config.seed,
        "clips": manifest.clips.len(),
        "frames": manifest.total_frames(),
    });
    std::fs::write(
        config.dataset.root.join("synthetic.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    println!(
        "wrote {} clips ({} frames) to {}",
        manifest.clips.len(),
        manifest.total_frames(),
        config.dataset.root.display()
    );
    Ok(())
}

/// `flow`: compute dense flow for every consecutive pair of every clip and
/// write `.flo` files (plus color PNGs when requested).
pub fn cmd_flow(config: &RunConfig, png: bool) -> anyhow::Result<()> {
    let manifest = resolve_dataset(config)?;
    let out = ensure_out(config)?;
    let spec = backend_spec(config)?;
    if matches!(spec, FlowBackendSpec::Precomputed { .. }) {
        bail!("the flow command computes flow; it needs flow.backend = \"builtin\"");
    }
    let source = FlowSource::new(spec);
    let m_ref = resolve_m_ref(config, &manifest, &source)?;
    let flow_dir = out.join("flows");
    let png_dir = out.join("flow_png");
    let mut files = 0usize;
    for clip in &manifest.clips {
        let clip_dir = flow_dir.join(&clip.clip_id);
        std::fs::create_dir_all(&clip_dir)?;
        if png {
            std::fs::create_dir_all(png_dir.join(&clip.clip_id))?;
        }
        for t in 0..clip.len().saturating_sub(1) {
            let field = source.field(clip, t)?;
            flo::save_flo(&field, &clip_dir.join(format!("{t}.flo")))?;
            if png {
                let image = encode_flow_hsi(&field, m_ref)?;
                flowgan::eval::render::render_flow_png(
                    &image,
                    &png_dir.join(&clip.clip_id).join(format!("{t}.png")),
                )?;
            }
            files += 1;
        }
    }
    println!(
        "wrote {files} flow fields to {} (m_ref = {m_ref})",
        flow_dir.display()
    );
    Ok(())
}

/// `train`: train per `[train]` and write the checkpoint and per-step loss
/// CSV.
pub fn cmd_train(config: &RunConfig, resume: Option<&Path>) -> anyhow::Result<()> {
    let manifest = resolve_dataset(config)?;
    let out = ensure_out(config)?;
    let spec = backend_spec(config)?;
    let source = FlowSource::new(spec.clone());
    let m_ref = resolve_m_ref(config, &manifest, &source)?;
    let flows = flowgan::eval::provider_for(&manifest, &spec, m_ref)?;

    let (mut bundle, log) = match resume {
        Some(ckpt) => {
            let prev = load_bundle::<F>(ckpt)
                .with_context(|| format!("cannot resume from {}", ckpt.display()))?;
            train_resume(prev, &manifest, flows.as_ref(), config.train.epochs)?
        }
        None => train(&manifest, flows.as_ref(), &config.train)?,
    };

    let ckpt_path = out.join("checkpoint.fgar");
    save_bundle(&mut bundle, &ckpt_path, &config.hash())?;
    let csv_path = out.join("loss_history.csv");
    log.write_csv_stamped(&csv_path, Some(&config.hash()))?;
    let last = bundle.loss_history.last();
    println!(
        "trained {} epoch(s); checkpoint {}; losses {}",
        bundle.loss_history.len(),
        ckpt_path.display(),
        csv_path.display()
    );
    if let Some(epoch) = last {
        for (term, value) in &epoch.terms {
            println!("  {term}: {value:.6}");
        }
    }
    Ok(())
}

/// `score`: run the inference pipeline over every test clip, writing heat
/// maps and score manifests.
pub fn cmd_score(config: &RunConfig, checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let manifest = resolve_dataset(config)?;
    let out = ensure_out(config)?;
    let ckpt_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join("checkpoint.fgar"));
    if !ckpt_path.is_file() {
        bail!(
            "checkpoint {} not found; run `train` first or pass --checkpoint",
            ckpt_path.display()
        );
    }
    let bundle = load_bundle::<F>(&ckpt_path)?;
    let spec = backend_spec(config)?;
    let m_ref = bundle.m_ref;
    let flows = flowgan::eval::provider_for(&manifest, &spec, m_ref)?;
    let scores_dir = out.join("scores");
    let hash = config.hash();
    let mut scorer = Scorer::new(bundle, config.pipeline.clone());
    let mut clips = 0usize;
    for clip in manifest.test_clips() {
        let score = scorer.score_clip(clip, flows.as_ref())?;
        write_clip_artifacts(&score, m_ref, &hash, &scores_dir)?;
        let mean: f64 =
            score.frames.iter().map(|f| f.alpha_raw).sum::<f64>() / score.frames.len() as f64;
        println!(
            "clip {}: {} frames scored, mean alpha {:.4}",
            score.clip_id,
            score.frames.len(),
            mean
        );
        clips += 1;
    }
    if clips == 0 {
        bail!("no test clips in the dataset");
    }
    println!("score manifests under {}", scores_dir.display());
    Ok(())
}

fn write_series(out: &Path, series: &[(String, ScoreSeries)]) -> anyhow::Result<()> {
    let dir = out.join("series");
    std::fs::create_dir_all(&dir)?;
    for (name, s) in series {
        let safe: String = name
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        std::fs::write(
            dir.join(format!("{safe}.json")),
            serde_json::to_string_pretty(s)?,
        )?;
    }
    Ok(())
}

/// `eval`: run the configured experiment, writing report CSV, text table,
/// per-config score series and ROC plots.
pub fn cmd_eval(config: &RunConfig) -> anyhow::Result<()> {
    let manifest = resolve_dataset(config)?;
    let out = ensure_out(config)?;
    let spec = backend_spec(config)?;
    let opts = ExperimentOptions {
        base: config.train.clone(),
        suppression: config.suppression_or_default(),
        extractor: config.pipeline.extractor.clone(),
        lambda_cyc: config.eval.lambda_cyc,
        measure_runtime: config.eval.measure_runtime,
        config_hash: config.hash(),
    };

    let output: ExperimentOutput = match config.eval.experiment {
        ExperimentKind::Ablation => {
            run_ablation(&manifest, &spec, &standard_ablation_configs(), &opts)?
        }
        ExperimentKind::FlowComparison => {
            let mut sources = vec![("builtin".to_string(), spec.clone())];
            for named in &config.eval.flow_sources {
                sources.push((
                    named.name.clone(),
                    FlowBackendSpec::Precomputed {
                        directory: named.directory.clone(),
                    },
                ));
            }
            run_flow_comparison(&manifest, &sources, &opts)?
        }
        ExperimentKind::VggSweep => {
            let layers: Vec<VggLayer> = if config.eval.layers.is_empty() {
                VggLayer::all()
            } else {
                config
                    .eval
                    .layers
                    .iter()
                    .map(|l| VggLayer::parse(l))
                    .collect::<flowgan::Result<_>>()?
            };
            // The sweep needs a motion→appearance generator.
            let mut tc = config.train.clone();
            tc.direction_mode = flowgan::gan::DirectionMode::IndependentBToA;
            tc.lambda_cyc = 0.0;
            let source = FlowSource::new(spec.clone());
            let m_ref = resolve_m_ref(config, &manifest, &source)?;
            let flows = flowgan::eval::provider_for(&manifest, &spec, m_ref)?;
            let (mut bundle, _) = train(&manifest, flows.as_ref(), &tc)?;
            run_vgg_layer_sweep(&manifest, &mut bundle, &layers, &spec, &opts)?
        }
    };

    output.report.write_csv(&out.join("report.csv"))?;
    let text = output.report.render_text();
    std::fs::write(out.join("report.txt"), &text)?;
    write_series(&out, &output.series)?;
    if config.eval.plots {
        render_outputs::<F>(&output.series, &[], &[], &out.join("plots"))?;
    }
    print!("{text}");
    println!("report at {}", out.join("report.csv").display());
    Ok(())
}
