//! Checkpoint and tensor-archive IO.
//!
//! One container format serves both model checkpoints and pretrained
//! feature-extractor weights:
//!
//! ```text
//! magic   b"FGAR"
//! version u32 LE (currently 1)
//! meta    u32 LE length + UTF-8 JSON
//! count   u32 LE
//! tensor  name (u16 LE length + UTF-8), dtype u8 (0=f32, 1=f64),
//!         ndim u8, dims u32 LE each, raw little-endian values
//! ```
//!
//! Checkpoints store every parameter tensor keyed by module path plus the
//! Adam moments (`<path>#m`, `<path>#v`), the train-config snapshot, the
//! magnitude reference and the per-epoch loss history in the JSON block.
//! Round trips are bitwise.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{
    Direction, EpochLoss, LossVariant, ModelBundle, PatchDiscriminator, TrainConfig, UnetGenerator,
};
use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};

const MAGIC: &[u8; 4] = b"FGAR";
pub const FORMAT_VERSION: u32 = 1;

/// Named tensors as stored in an archive.
pub type NamedTensors<F> = Vec<(String, ArrayD<F>)>;

pub fn write_archive<F: Scalar>(
    path: &Path,
    meta_json: &str,
    tensors: &[(String, &ArrayD<F>)],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let meta = meta_json.as_bytes();
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(match F::DTYPE {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        });
        buf.push(tensor.ndim() as u8);
        for d in tensor.shape() {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in tensor.iter() {
            v.write_le(&mut buf);
        }
    }
    let mut file =
        fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(&buf)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_archive<F: Scalar>(path: &Path) -> Result<(String, NamedTensors<F>)> {
    let mut file =
        fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "unexpected end of archive {} at offset {}",
                path.display(),
                *off
            )));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    if take(&mut off, 4)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a tensor archive (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported archive version {version}"
        )));
    }
    let meta_len = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let meta = String::from_utf8(take(&mut off, meta_len)?.to_vec())
        .map_err(|e| Error::Checkpoint(format!("meta is not UTF-8: {e}")))?;
    let count = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let mut tensors = Vec::with_capacity(count);
    let scalar_size = F::DTYPE.size_bytes();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut off, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("tensor name is not UTF-8: {e}")))?;
        let dtype = take(&mut off, 1)?[0];
        let want = match F::DTYPE {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        };
        if dtype != want {
            return Err(Error::Checkpoint(format!(
                "tensor {name} stored as {}, requested {}",
                if dtype == 0 { "f32" } else { "f64" },
                F::DTYPE.name()
            )));
        }
        let ndim = take(&mut off, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize);
        }
        let len: usize = dims.iter().product();
        let raw = take(&mut off, len * scalar_size)?;
        let mut data = Vec::with_capacity(len);
        for i in 0..len {
            data.push(F::read_le(&raw[i * scalar_size..(i + 1) * scalar_size]));
        }
        let tensor = ArrayD::from_shape_vec(ndarray::IxDyn(&dims), data)
            .map_err(|e| Error::Checkpoint(format!("tensor {name} shape error: {e}")))?;
        tensors.push((name, tensor));
    }
    Ok((meta, tensors))
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    format_version: u32,
    scalar: String,
    m_ref: f64,
    loss_variant: LossVariant,
    config: TrainConfig,
    loss_history: Vec<EpochLoss>,
    adam_steps: BTreeMap<String, u64>,
    directions: Vec<Direction>,
    #[serde(default)]
    config_hash: String,
}

fn net_tags(bundle: &ModelBundle<impl Scalar>) -> Vec<&'static str> {
    let mut tags = Vec::new();
    if bundle.g_ab.is_some() {
        tags.push("g_ab");
    }
    if bundle.d_b.is_some() {
        tags.push("d_b");
    }
    if bundle.g_ba.is_some() {
        tags.push("g_ba");
    }
    if bundle.d_a.is_some() {
        tags.push("d_a");
    }
    tags
}

/// Persists a trained bundle; `config_hash` is stamped into the meta block
/// (empty string when unused).
pub fn save_bundle<F: Scalar>(
    bundle: &mut ModelBundle<F>,
    path: &Path,
    config_hash: &str,
) -> Result<()> {
    let meta = CheckpointMeta {
        kind: "checkpoint".into(),
        format_version: FORMAT_VERSION,
        scalar: F::DTYPE.name().into(),
        m_ref: bundle.m_ref.as_f64(),
        loss_variant: bundle.loss_variant,
        config: bundle.config.clone(),
        loss_history: bundle.loss_history.clone(),
        adam_steps: bundle.adam_steps.clone(),
        directions: bundle.trained_directions(),
        config_hash: config_hash.into(),
    };
    let meta_json =
        serde_json::to_string(&meta).map_err(|e| Error::Checkpoint(format!("meta encode: {e}")))?;

    let mut owned: Vec<(String, ArrayD<F>)> = Vec::new();
    {
        let mut push_net = |refs: super::super::nn::ParamRefs<'_, F>| {
            for (name, p) in refs {
                owned.push((name.clone(), p.value.clone()));
                owned.push((format!("{name}#m"), p.m.clone()));
                owned.push((format!("{name}#v"), p.v.clone()));
            }
        };
        if let Some(g) = bundle.g_ab.as_mut() {
            let mut refs = Vec::new();
            g.params_mut("g_ab", &mut refs);
            push_net(refs);
        }
        if let Some(d) = bundle.d_b.as_mut() {
            let mut refs = Vec::new();
            d.params_mut("d_b", &mut refs);
            push_net(refs);
        }
        if let Some(g) = bundle.g_ba.as_mut() {
            let mut refs = Vec::new();
            g.params_mut("g_ba", &mut refs);
            push_net(refs);
        }
        if let Some(d) = bundle.d_a.as_mut() {
            let mut refs = Vec::new();
            d.params_mut("d_a", &mut refs);
            push_net(refs);
        }
    }
    let tensor_refs: Vec<(String, &ArrayD<F>)> =
        owned.iter().map(|(n, t)| (n.clone(), t)).collect();
    write_archive(path, &meta_json, &tensor_refs)
}

/// Loads a bundle saved by [`save_bundle`]; networks are rebuilt from the
/// config snapshot and every parameter and Adam moment is restored bitwise.
pub fn load_bundle<F: Scalar>(path: &Path) -> Result<ModelBundle<F>> {
    let (meta_json, tensors) = read_archive::<F>(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_json)
        .map_err(|e| Error::Checkpoint(format!("meta decode: {e}")))?;
    if meta.kind != "checkpoint" {
        return Err(Error::Checkpoint(format!(
            "archive kind {} is not a checkpoint",
            meta.kind
        )));
    }
    let mut by_name: BTreeMap<String, ArrayD<F>> = tensors.into_iter().collect();
    let config = meta.config.clone();
    let sigmoid = meta.loss_variant == LossVariant::Vanilla;

    let mut bundle = ModelBundle {
        g_ab: None,
        g_ba: None,
        d_a: None,
        d_b: None,
        loss_variant: meta.loss_variant,
        m_ref: F::of(meta.m_ref),
        config: config.clone(),
        loss_history: meta.loss_history,
        adam_steps: meta.adam_steps,
    };

    let mut restore = |refs: super::super::nn::ParamRefs<'_, F>| -> Result<()> {
        for (name, p) in refs {
            let value = by_name
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value;
            if let Some(m) = by_name.remove(&format!("{name}#m")) {
                p.m = m;
            }
            if let Some(v) = by_name.remove(&format!("{name}#v")) {
                p.v = v;
            }
        }
        Ok(())
    };

    for dir in &meta.directions {
        match dir {
            Direction::AToB => {
                let mut g = UnetGenerator::new(
                    &config.generator,
                    crate::nn::derive_seed(config.seed, "g_ab"),
                )?;
                let mut refs = Vec::new();
                g.params_mut("g_ab", &mut refs);
                restore(refs)?;
                bundle.g_ab = Some(g);
                let mut d = PatchDiscriminator::new(
                    &config.discriminator,
                    sigmoid,
                    crate::nn::derive_seed(config.seed, "d_b"),
                )?;
                let mut refs = Vec::new();
                d.params_mut("d_b", &mut refs);
                restore(refs)?;
                bundle.d_b = Some(d);
            }
            Direction::BToA => {
                let mut g = UnetGenerator::new(
                    &config.generator,
                    crate::nn::derive_seed(config.seed, "g_ba"),
                )?;
                let mut refs = Vec::new();
                g.params_mut("g_ba", &mut refs);
                restore(refs)?;
                bundle.g_ba = Some(g);
                let mut d = PatchDiscriminator::new(
                    &config.discriminator,
                    sigmoid,
                    crate::nn::derive_seed(config.seed, "d_a"),
                )?;
                let mut refs = Vec::new();
                d.params_mut("d_a", &mut refs);
                restore(refs)?;
                bundle.d_a = Some(d);
            }
        }
    }
    if !by_name.is_empty() {
        let extra: Vec<String> = by_name.keys().take(3).cloned().collect();
        return Err(Error::Checkpoint(format!(
            "archive has {} unexpected tensors (e.g. {:?})",
            by_name.len(),
            extra
        )));
    }
    let _ = net_tags(&bundle);
    Ok(bundle)
}
