//! Middlebury `.flo` file IO.
//!
//! Layout: a 4-byte float sentinel (202021.25), then width and height as
//! 32-bit little-endian integers, then row-major interleaved (u, v) 32-bit
//! floats.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::scalar::Scalar;

pub const FLO_MAGIC: f32 = 202021.25;

pub fn save_flo<F: Scalar>(flow: &FlowField<F>, path: &Path) -> Result<()> {
    let (h, w) = flow.u.dim();
    let mut buf = Vec::with_capacity(12 + h * w * 8);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(w as i32).to_le_bytes());
    buf.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            buf.extend_from_slice(&(flow.u[[y, x]].as_f64() as f32).to_le_bytes());
            buf.extend_from_slice(&(flow.v[[y, x]].as_f64() as f32).to_le_bytes());
        }
    }
    let mut file =
        fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(&buf)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_flo<F: Scalar>(path: &Path) -> Result<FlowField<F>> {
    let mut file =
        fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() < 12 {
        return Err(Error::FlowFormat(format!(
            "unexpected end of flow file {}",
            path.display()
        )));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::FlowFormat(format!(
            "bad magic {magic} in {} (expected {FLO_MAGIC})",
            path.display()
        )));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16 {
        return Err(Error::FlowFormat(format!(
            "implausible dimensions {w}x{h} in {}",
            path.display()
        )));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + h * w * 8;
    if bytes.len() < expected {
        return Err(Error::FlowFormat(format!(
            "unexpected end of flow file {} ({} bytes, need {expected})",
            path.display(),
            bytes.len()
        )));
    }
    let mut u = Array2::zeros((h, w));
    let mut v = Array2::zeros((h, w));
    let mut off = 12;
    for y in 0..h {
        for x in 0..w {
            let uu = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            let vv = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
            if !uu.is_finite() || !vv.is_finite() {
                return Err(Error::FlowFormat(format!(
                    "non-finite flow value at ({y}, {x}) in {}",
                    path.display()
                )));
            }
            u[[y, x]] = F::of(uu as f64);
            v[[y, x]] = F::of(vv as f64);
            off += 8;
        }
    }
    Ok(FlowField { u, v, t: 0 })
}
