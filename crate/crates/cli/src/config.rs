//! Run configuration: one TOML file drives every subcommand, with flags
//! overriding (`--seed` wins over `seed`, `--out` over `out`). Unknown
//! keys are rejected, and the whole file is validated before any command
//! does work. A stable hash of the effective config is stamped into every
//! artifact.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use flowgan::dataset::synthetic::SyntheticSceneConfig;
use flowgan::flow::{FarnebackParams, FlowBackendSpec};
use flowgan::gan::TrainConfig;
use flowgan::inference::{NoiseSuppressionConfig, PipelineConfig};
use flowgan::vgg::VggLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Ucsd,
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// Dataset root: source tree for `ucsd`, export target for `synth`.
    pub root: PathBuf,
    /// Preprocessing resolution (height, width).
    pub resolution: (usize, usize),
    #[serde(default)]
    pub synthetic: Option<SyntheticSceneConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowBackendKind {
    #[default]
    Builtin,
    Precomputed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub backend: FlowBackendKind,
    /// `.flo` directory for the precomputed backend.
    pub directory: Option<PathBuf>,
    pub params: FarnebackParams,
    /// 0 = derive from the training split (maximum observed magnitude).
    pub m_ref: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            backend: FlowBackendKind::Builtin,
            directory: None,
            params: FarnebackParams::default(),
            m_ref: 0.0,
        }
    }
}

impl FlowSection {
    pub fn backend_spec(&self) -> anyhow::Result<FlowBackendSpec> {
        Ok(match self.backend {
            FlowBackendKind::Builtin => FlowBackendSpec::Builtin {
                params: self.params.clone(),
            },
            FlowBackendKind::Precomputed => FlowBackendSpec::Precomputed {
                directory: self
                    .directory
                    .clone()
                    .context("flow.backend = \"precomputed\" requires flow.directory")?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Ablation,
    FlowComparison,
    VggSweep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub experiment: ExperimentKind,
    /// Tap layers for the sweep; empty = all 13.
    pub layers: Vec<String>,
    /// Extra named precomputed flow sources for the comparison experiment.
    pub flow_sources: Vec<NamedFlowSource>,
    /// Cycle weight used by ladder rows that enable the cycle term.
    pub lambda_cyc: f64,
    /// Wall-clock runtimes in the report; disable for bit-reproducible CSVs.
    pub measure_runtime: bool,
    /// Render ROC plots.
    pub plots: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            experiment: ExperimentKind::Ablation,
            layers: Vec::new(),
            flow_sources: Vec::new(),
            lambda_cyc: 10.0,
            measure_runtime: true,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFlowSource {
    pub name: String,
    pub directory: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn load(
        path: &Path,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        if let Some(out) = out_override {
            config.out = out;
        }
        // All randomness flows from the single top-level seed.
        config.train.seed = config.seed;
        let seed = config.seed;
        if let Some(synth) = config.synthetic_mut() {
            synth.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn synthetic_mut(&mut self) -> Option<&mut SyntheticSceneConfig> {
        self.dataset.synthetic.as_mut()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match self.dataset.kind {
            DatasetKind::Synthetic => {
                let synth =
                    self.dataset.synthetic.as_ref().context(
                        "dataset.kind = \"synthetic\" requires a [dataset.synthetic] table",
                    )?;
                synth.validate()?;
                if synth.canvas != self.dataset.resolution {
                    bail!(
                        "dataset.resolution {:?} must match dataset.synthetic.canvas {:?}",
                        self.dataset.resolution,
                        synth.canvas
                    );
                }
            }
            DatasetKind::Ucsd => {
                if !self.dataset.root.is_dir() {
                    bail!(
                        "dataset.root {} does not exist or is not a directory",
                        self.dataset.root.display()
                    );
                }
            }
        }
        if self.flow.backend == FlowBackendKind::Precomputed {
            let dir = self
                .flow
                .directory
                .as_ref()
                .context("flow.backend = \"precomputed\" requires flow.directory")?;
            if !dir.is_dir() {
                bail!("flow.directory {} does not exist", dir.display());
            }
        }
        self.flow.params.validate()?;
        if self.flow.m_ref < 0.0 || !self.flow.m_ref.is_finite() {
            bail!("flow.m_ref must be finite and >= 0");
        }
        self.train.validate()?;
        if let Some(ns) = &self.pipeline.suppression {
            ns.validate()?;
        }
        for layer in &self.eval.layers {
            VggLayer::parse(layer)?;
        }
        for source in &self.eval.flow_sources {
            if !source.directory.is_dir() {
                bail!(
                    "eval flow source {} directory {} does not exist",
                    source.name,
                    source.directory.display()
                );
            }
        }
        Ok(())
    }

    /// Stable FNV-1a hash over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    pub fn suppression_or_default(&self) -> NoiseSuppressionConfig {
        self.pipeline.suppression.clone().unwrap_or_default()
    }
}
