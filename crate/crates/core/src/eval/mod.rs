//! Frame-level evaluation: rank-based ROC/AUC, the experiment runners
//! behind the report tables, and plot/report emission.
//!
//! Evaluation is frame-level only; per-clip normalized scores are
//! concatenated across clips before the AUC is taken. Published Ped2
//! reference results are carried along as non-gating annotation rows in
//! every report so desk-scale runs can be eyeballed against them.

pub mod render;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::flow::{
    compute_m_ref, FlowBackendSpec, FlowImageProvider, FlowSource, MemoryFlowProvider,
};
use crate::gan::{train, DirectionMode, LossVariant, ModelBundle, TrainConfig};
use crate::inference::{
    normalize_scores, ClipScore, HeatMap, HeatMapDomain, NoiseSuppressionConfig, PipelineConfig,
    ScoreDirection, Scorer,
};
use crate::scalar::Scalar;
use crate::vgg::{FeatureExtractorSpec, Vgg16, VggLayer};

/// One scored, labeled frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub clip_id: String,
    pub t: usize,
    pub score: f64,
    pub label: u8,
}

/// Frame-level scores with labels, concatenated across clips.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub entries: Vec<SeriesEntry>,
}

impl ScoreSeries {
    pub fn from_clip_scores<F: Scalar>(scores: &[ClipScore<F>]) -> Result<Self> {
        let mut entries = Vec::new();
        for clip in scores {
            for f in &clip.frames {
                let label = f.label.ok_or_else(|| {
                    Error::Eval(format!(
                        "clip {} frame {} has no label; evaluation needs labeled clips",
                        clip.clip_id, f.t
                    ))
                })?;
                entries.push(SeriesEntry {
                    clip_id: clip.clip_id.clone(),
                    t: f.t,
                    score: f.alpha_norm,
                    label,
                });
            }
        }
        Ok(ScoreSeries { entries })
    }

    pub fn auc(&self) -> Result<f64> {
        let labels: Vec<u8> = self.entries.iter().map(|e| e.label).collect();
        let scores: Vec<f64> = self.entries.iter().map(|e| e.score).collect();
        roc_auc(&labels, &scores)
    }
}

/// Rank-based AUC (Mann–Whitney) with ties counted as ½; equals the
/// trapezoidal area under the ROC curve.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Eval(format!(
            "{} labels for {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Eval("empty score series".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Eval(format!("label {bad} is not binary")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Eval("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Eval(
            "AUC needs both classes present in the series".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average ranks over tie groups (1-based ranks).
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(ranks.iter())
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let p = pos as f64;
    let n = neg as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC polyline as (fpr, tpr) points, threshold descending.
pub fn roc_points(labels: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Eval("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Eval("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0f64, 0.0f64);
    let mut prev = f64::INFINITY;
    for &idx in &order {
        if scores[idx] != prev {
            points.push((fp / neg, tp / pos));
            prev = scores[idx];
        }
        if labels[idx] == 1 {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
    }
    points.push((1.0, 1.0));
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed(String),
    /// Published result carried for manual comparison; never asserted.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub direction: String,
    pub auc: Option<f64>,
    pub runtime_s: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub title: String,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// CSV with header `config,direction,auc,runtime_s,status`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# {} (config {})\n", self.title, self.config_hash);
        out.push_str("config,direction,auc,runtime_s,status\n");
        for r in &self.rows {
            let auc = r.auc.map(|a| format!("{a:.6}")).unwrap_or_default();
            let status = match &r.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Failed(msg) => format!("failed: {}", msg.replace(',', ";")),
                RowStatus::Reference => "reference".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.name, r.direction, auc, r.runtime_s, status
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Fixed-width text table.
    pub fn render_text(&self) -> String {
        let mut out = format!("{}\n", self.title);
        out.push_str(&format!(
            "{:<40} {:<10} {:>8} {:>10}  {}\n",
            "config", "direction", "AUC", "runtime_s", "status"
        ));
        for r in &self.rows {
            let auc = r
                .auc
                .map(|a| format!("{:.1}%", a * 100.0))
                .unwrap_or_else(|| "-".into());
            let status = match &r.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Failed(m) => format!("FAILED: {m}"),
                RowStatus::Reference => "reference".to_string(),
            };
            out.push_str(&format!(
                "{:<40} {:<10} {:>8} {:>10.1}  {}\n",
                r.name, r.direction, auc, r.runtime_s, status
            ));
        }
        out
    }
}

/// Published Ped2 reference AUCs for the method ladder, as annotation rows.
pub const ABLATION_REFERENCE: [(&str, f64); 6] = [
    ("VanillaGAN (baseline)", 0.937),
    ("VanillaGAN (cyc.-con.)", 0.948),
    ("VanillaGAN (cyc.-con. + noise supp.)", 0.957),
    ("LSGAN (baseline)", 0.954),
    ("LSGAN (cyc.-con.)", 0.976),
    ("LSGAN (cyc.-con. + noise supp.)", 0.980),
];

/// Published Ped2 reference AUCs per flow method (frame/fused/flow).
pub const FLOW_REFERENCE: [(&str, f64, f64, f64); 3] = [
    ("Brox", 0.785, 0.858, 0.937),
    ("Farneback", 0.696, 0.808, 0.842),
    ("FlowNet2", 0.660, 0.750, 0.815),
];

/// Published Ped2 reference AUC for the conv 3-3 feature tap.
pub const VGG_REFERENCE: (&str, f64) = ("3-3", 0.785);

/// Report plus the per-configuration score series behind each row.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub series: Vec<(String, ScoreSeries)>,
}

/// One row of the method ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: String,
    pub loss_variant: LossVariant,
    pub cycle: bool,
    pub noise_suppression: bool,
}

/// The six-row ladder: baseline / cycle / cycle + suppression per variant.
pub fn standard_ablation_configs() -> Vec<AblationConfig> {
    let mut out = Vec::new();
    for (variant, vname) in [
        (LossVariant::Vanilla, "VanillaGAN"),
        (LossVariant::Lsgan, "LSGAN"),
    ] {
        out.push(AblationConfig {
            name: format!("{vname} (baseline)"),
            loss_variant: variant,
            cycle: false,
            noise_suppression: false,
        });
        out.push(AblationConfig {
            name: format!("{vname} (cyc.-con.)"),
            loss_variant: variant,
            cycle: true,
            noise_suppression: false,
        });
        out.push(AblationConfig {
            name: format!("{vname} (cyc.-con. + noise supp.)"),
            loss_variant: variant,
            cycle: true,
            noise_suppression: true,
        });
    }
    out
}

pub struct ExperimentOptions {
    pub base: TrainConfig,
    pub suppression: NoiseSuppressionConfig,
    pub extractor: FeatureExtractorSpec,
    /// Cycle weight applied when a config enables the cycle term.
    pub lambda_cyc: f64,
    /// Record wall-clock runtimes; disable for bit-reproducible reports.
    pub measure_runtime: bool,
    pub config_hash: String,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            base: TrainConfig::default(),
            suppression: NoiseSuppressionConfig::default(),
            extractor: FeatureExtractorSpec::default(),
            lambda_cyc: 10.0,
            measure_runtime: true,
            config_hash: String::new(),
        }
    }
}

/// Materializes flow images up front for small datasets, computes on
/// demand otherwise.
pub fn provider_for<'a, F: Scalar>(
    manifest: &'a DatasetManifest<F>,
    backend: &FlowBackendSpec,
    m_ref: F,
) -> Result<Box<dyn FlowImageProvider<F> + 'a>> {
    const MATERIALIZE_LIMIT: usize = 2000;
    let source = FlowSource::new(backend.clone());
    if manifest.total_frames() <= MATERIALIZE_LIMIT {
        Ok(Box::new(MemoryFlowProvider::materialize(
            manifest, &source, m_ref,
        )?))
    } else {
        Ok(Box::new(crate::flow::EncodedFlowSource::new(
            manifest, source, m_ref,
        )))
    }
}

fn train_config_for(base: &TrainConfig, cfg: &AblationConfig, lambda_cyc: f64) -> TrainConfig {
    let mut tc = base.clone();
    tc.loss_variant = cfg.loss_variant;
    if cfg.cycle {
        tc.direction_mode = DirectionMode::Simultaneous;
        tc.lambda_cyc = if base.lambda_cyc > 0.0 {
            base.lambda_cyc
        } else {
            lambda_cyc
        };
    } else {
        tc.direction_mode = DirectionMode::IndependentAToB;
        tc.lambda_cyc = 0.0;
    }
    tc
}

/// Scores every test clip with the given pipeline.
pub fn score_test_split<F: Scalar>(
    bundle: ModelBundle<F>,
    pipeline: PipelineConfig,
    manifest: &DatasetManifest<F>,
    flows: &dyn FlowImageProvider<F>,
) -> Result<Vec<ClipScore<F>>> {
    let mut scorer = Scorer::new(bundle, pipeline);
    let mut out = Vec::new();
    for clip in manifest.test_clips() {
        out.push(scorer.score_clip(clip, flows)?);
    }
    if out.is_empty() {
        return Err(Error::Eval("manifest has no test clips".into()));
    }
    Ok(out)
}

/// The method-ladder experiment: one AUC row per configuration, with
/// bundles shared across rows that differ only in post-processing.
pub fn run_ablation<F: Scalar>(
    manifest: &DatasetManifest<F>,
    backend: &FlowBackendSpec,
    configs: &[AblationConfig],
    opts: &ExperimentOptions,
) -> Result<ExperimentOutput> {
    let source = FlowSource::new(backend.clone());
    let m_ref = compute_m_ref(manifest, &source)?;
    let flows = provider_for(manifest, backend, m_ref)?;
    let mut bundles: BTreeMap<String, ModelBundle<F>> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut all_series = Vec::new();

    for cfg in configs {
        let started = Instant::now();
        let row = (|| -> Result<(f64, ScoreSeries)> {
            let key = format!("{:?}-{}", cfg.loss_variant, cfg.cycle);
            if !bundles.contains_key(&key) {
                let tc = train_config_for(&opts.base, cfg, opts.lambda_cyc);
                let (bundle, _) = train(manifest, flows.as_ref(), &tc)?;
                bundles.insert(key.clone(), bundle);
            }
            let bundle = bundles.get(&key).expect("just inserted").clone();
            let pipeline = PipelineConfig {
                direction: ScoreDirection::Flow,
                suppression: cfg.noise_suppression.then(|| opts.suppression.clone()),
                extractor: opts.extractor.clone(),
                ..PipelineConfig::default()
            };
            let scores = score_test_split(bundle, pipeline, manifest, flows.as_ref())?;
            let series = ScoreSeries::from_clip_scores(&scores)?;
            let auc = series.auc()?;
            Ok((auc, series))
        })();
        let runtime_s = if opts.measure_runtime {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        rows.push(match row {
            Ok((auc, series)) => {
                all_series.push((cfg.name.clone(), series));
                ReportRow {
                    name: cfg.name.clone(),
                    direction: "flow".into(),
                    auc: Some(auc),
                    runtime_s,
                    status: RowStatus::Ok,
                }
            }
            Err(e) => ReportRow {
                name: cfg.name.clone(),
                direction: "flow".into(),
                auc: None,
                runtime_s,
                status: RowStatus::Failed(e.to_string()),
            },
        });
    }
    for (name, auc) in ABLATION_REFERENCE {
        rows.push(ReportRow {
            name: format!("reference: {name}"),
            direction: "flow".into(),
            auc: Some(auc),
            runtime_s: 0.0,
            status: RowStatus::Reference,
        });
    }
    Ok(ExperimentOutput {
        report: ExperimentReport {
            title: "GAN-based cross-channel anomaly detection ladder".into(),
            config_hash: opts.config_hash.clone(),
            rows,
        },
        series: all_series,
    })
}

/// Per flow source: baseline both-direction training, then frame / fused /
/// flow scoring columns.
pub fn run_flow_comparison<F: Scalar>(
    manifest: &DatasetManifest<F>,
    sources: &[(String, FlowBackendSpec)],
    opts: &ExperimentOptions,
) -> Result<ExperimentOutput> {
    let mut rows = Vec::new();
    let mut all_series = Vec::new();
    for (name, backend) in sources {
        let started = Instant::now();
        let result = (|| -> Result<Vec<(String, f64, ScoreSeries)>> {
            let source = FlowSource::new(backend.clone());
            let m_ref = compute_m_ref(manifest, &source)?;
            let flows = provider_for(manifest, backend, m_ref)?;
            let mut tc = opts.base.clone();
            tc.direction_mode = DirectionMode::IndependentBoth;
            tc.lambda_cyc = 0.0;
            let (bundle, _) = train(manifest, flows.as_ref(), &tc)?;
            let mut out = Vec::new();
            for (direction, tag) in [
                (ScoreDirection::Frame, "frame"),
                (ScoreDirection::Fused, "fused"),
                (ScoreDirection::Flow, "flow"),
            ] {
                let pipeline = PipelineConfig {
                    direction,
                    extractor: opts.extractor.clone(),
                    ..PipelineConfig::default()
                };
                let scores = score_test_split(bundle.clone(), pipeline, manifest, flows.as_ref())?;
                let series = ScoreSeries::from_clip_scores(&scores)?;
                let auc = series.auc()?;
                out.push((tag.to_string(), auc, series));
            }
            Ok(out)
        })();
        let runtime_s = if opts.measure_runtime {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        match result {
            Ok(cols) => {
                for (direction, auc, series) in cols {
                    all_series.push((format!("{name}_{direction}"), series));
                    rows.push(ReportRow {
                        name: name.clone(),
                        direction,
                        auc: Some(auc),
                        runtime_s,
                        status: RowStatus::Ok,
                    });
                }
            }
            Err(e) => {
                eprintln!("warning: flow source {name} skipped: {e}");
                rows.push(ReportRow {
                    name: name.clone(),
                    direction: "-".into(),
                    auc: None,
                    runtime_s,
                    status: RowStatus::Failed(e.to_string()),
                });
            }
        }
    }
    for (name, frame, fused, flow) in FLOW_REFERENCE {
        for (direction, auc) in [("frame", frame), ("fused", fused), ("flow", flow)] {
            rows.push(ReportRow {
                name: format!("reference: {name}"),
                direction: direction.into(),
                auc: Some(auc),
                runtime_s: 0.0,
                status: RowStatus::Reference,
            });
        }
    }
    Ok(ExperimentOutput {
        report: ExperimentReport {
            title: "Optical flow method comparison".into(),
            config_hash: opts.config_hash.clone(),
            rows,
        },
        series: all_series,
    })
}

/// AUC per feature tap layer, frame-direction pipeline, one extractor
/// forward per frame.
pub fn run_vgg_layer_sweep<F: Scalar>(
    manifest: &DatasetManifest<F>,
    bundle: &mut ModelBundle<F>,
    layers: &[VggLayer],
    backend: &FlowBackendSpec,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutput> {
    if layers.is_empty() {
        return Err(Error::Config("no layers requested".into()));
    }
    let started = Instant::now();
    let source = FlowSource::new(backend.clone());
    let m_ref = if bundle.m_ref > F::zero() {
        bundle.m_ref
    } else {
        compute_m_ref(manifest, &source)?
    };
    let flows = provider_for(manifest, backend, m_ref)?;
    let mut extractor = Vgg16::<F>::new(&opts.extractor)?;

    // maps[layer][clip] = per-frame heat maps.
    let mut per_layer: Vec<Vec<Vec<HeatMap<F>>>> = vec![Vec::new(); layers.len()];
    let mut labels_per_clip: Vec<Vec<u8>> = Vec::new();
    for clip in manifest.test_clips() {
        for maps in per_layer.iter_mut() {
            maps.push(Vec::new());
        }
        let clip_labels = clip
            .labels
            .as_ref()
            .ok_or_else(|| Error::Eval(format!("clip {} has no labels", clip.clip_id)))?;
        labels_per_clip.push(clip_labels[..clip.len() - 1].to_vec());
        for t in 0..clip.len() - 1 {
            let frame = clip.frame(t)?;
            let observed = flows.flow_image(&clip.clip_id, t)?;
            let gen = bundle.generator(crate::gan::Direction::BToA)?;
            let translated_pixels = crate::gan::translate(gen, &observed.pixels)?;
            let translated = crate::dataset::Frame {
                pixels: translated_pixels,
                source_index: t,
            };
            let fa = extractor.features_multi(&frame, layers)?;
            let fb = extractor.features_multi(&translated, layers)?;
            for (k, (xa, xb)) in fa.iter().zip(fb.iter()).enumerate() {
                let mut values = ndarray::Array2::zeros((xa.dim().1, xa.dim().2));
                for c in 0..xa.dim().0 {
                    let pa = xa.index_axis(ndarray::Axis(0), c);
                    let pb = xb.index_axis(ndarray::Axis(0), c);
                    ndarray::Zip::from(&mut values)
                        .and(&pa)
                        .and(&pb)
                        .for_each(|v, &p, &q| {
                            let d = p - q;
                            *v += d * d;
                        });
                }
                let clip_slot = per_layer[k].last_mut().expect("pushed above");
                clip_slot.push(HeatMap {
                    values,
                    domain: HeatMapDomain::Frame,
                    t,
                });
            }
        }
    }

    let runtime_s = if opts.measure_runtime {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let mut rows = Vec::new();
    let mut all_series = Vec::new();
    let clip_ids: Vec<String> = manifest.test_clips().map(|c| c.clip_id.clone()).collect();
    for (k, layer) in layers.iter().enumerate() {
        let mut entries = Vec::new();
        for ((clip_maps, clip_labels), clip_id) in per_layer[k]
            .iter()
            .zip(labels_per_clip.iter())
            .zip(clip_ids.iter())
        {
            let raw: Vec<F> = clip_maps
                .iter()
                .map(crate::inference::anomaly_score)
                .collect();
            let norm = normalize_scores(&raw)?;
            for (t, (s, &l)) in norm.iter().zip(clip_labels.iter()).enumerate() {
                entries.push(SeriesEntry {
                    clip_id: clip_id.clone(),
                    t,
                    score: s.as_f64(),
                    label: l,
                });
            }
        }
        let series = ScoreSeries { entries };
        let auc = series.auc()?;
        all_series.push((format!("conv_{}", layer.name()), series));
        rows.push(ReportRow {
            name: format!("conv {}", layer.name()),
            direction: "frame".into(),
            auc: Some(auc),
            runtime_s,
            status: RowStatus::Ok,
        });
    }
    rows.push(ReportRow {
        name: format!("reference: conv {}", VGG_REFERENCE.0),
        direction: "frame".into(),
        auc: Some(VGG_REFERENCE.1),
        runtime_s: 0.0,
        status: RowStatus::Reference,
    });
    Ok(ExperimentOutput {
        report: ExperimentReport {
            title: "Feature tap layer sweep".into(),
            config_hash: opts.config_hash.clone(),
            rows,
        },
        series: all_series,
    })
}
