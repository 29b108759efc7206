//! Versioned binary model format.
//!
//! Layout (all integers `u32` little-endian, all reals `f64` little-endian):
//!
//! ```text
//! magic "CKN1"
//! input_tag     0 = gradient map, 1 = patch map
//! patch_side    zeroth patch side (0 for gradient map)
//! subtract_mean 0/1 (patch map contrast normalization)
//! epsilon       f64 normalization offset
//! final_size    configured side of the final map
//! n_layers
//! per layer:
//!   patch_side, p, gamma, sigma (f64), epsilon (f64), m
//!   eta       p x f64
//!   W         p*m x f64, row-major
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{CknError, Result};
use crate::feature_map::PatchShape;
use crate::training::LayerParams;

use super::{InputMapKind, NetworkModel};

const MAGIC: &[u8; 4] = b"CKN1";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serializes a model. The layer list must be nonempty.
pub fn save_model(model: &NetworkModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let (tag, side, sub) = match model.input_kind {
        InputMapKind::GradientMap => (0u32, 0u32, 0u32),
        InputMapKind::PatchMap {
            patch_side,
            subtract_mean_color,
        } => (1, patch_side as u32, subtract_mean_color as u32),
    };
    put_u32(&mut out, tag);
    put_u32(&mut out, side);
    put_u32(&mut out, sub);
    put_f64(&mut out, model.epsilon);
    put_u32(&mut out, model.final_target_size as u32);
    put_u32(&mut out, model.layers.len() as u32);
    for layer in &model.layers {
        put_u32(&mut out, layer.patch_shape().side() as u32);
        put_u32(&mut out, layer.num_filters() as u32);
        put_u32(&mut out, layer.gamma() as u32);
        put_f64(&mut out, layer.sigma());
        put_f64(&mut out, model.epsilon);
        put_u32(&mut out, layer.input_len() as u32);
        for &e in layer.eta() {
            put_f64(&mut out, e);
        }
        for &w in layer.filters() {
            put_f64(&mut out, w);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CknError::Truncated {
                what: what.to_string(),
                expected: n,
                found: self.bytes.len() - self.pos,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(8 * n, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Deserializes a model; inverse of [`save_model`] bit for bit.
pub fn load_model(bytes: &[u8]) -> Result<NetworkModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        if &magic[..3] == b"CKN" {
            return Err(CknError::VersionMismatch(format!(
                "unsupported model version '{}'",
                magic[3] as char
            )));
        }
        return Err(CknError::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let tag = r.u32("input kind")?;
    let side = r.u32("zeroth patch side")? as usize;
    let sub = r.u32("mean subtraction flag")?;
    let input_kind = match tag {
        0 => InputMapKind::GradientMap,
        1 => InputMapKind::PatchMap {
            patch_side: side,
            subtract_mean_color: sub != 0,
        },
        other => return Err(CknError::Decode(format!("unknown input kind tag {other}"))),
    };
    let epsilon = r.f64("epsilon")?;
    let final_size = r.u32("final size")? as usize;
    let n_layers = r.u32("layer count")? as usize;
    if n_layers == 0 {
        return Err(CknError::Decode("model has no layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let what = |field: &str| format!("layer {} {field}", k + 1);
        let patch_side = r.u32(&what("patch side"))? as usize;
        let p = r.u32(&what("filter count"))? as usize;
        let gamma = r.u32(&what("gamma"))? as usize;
        let sigma = r.f64(&what("sigma"))?;
        let _layer_eps = r.f64(&what("epsilon"))?;
        let m = r.u32(&what("filter length"))? as usize;
        let eta = Array1::from_vec(r.f64_vec(p, &what("eta"))?);
        let w = Array2::from_shape_vec((p, m), r.f64_vec(p * m, &what("filters"))?)
            .map_err(|e| CknError::Decode(e.to_string()))?;
        let shape = PatchShape::new(patch_side)
            .map_err(|_| CknError::Decode(what("patch side is zero")))?;
        layers.push(
            LayerParams::new(w, eta, sigma, shape, gamma)
                .map_err(|e| CknError::Decode(format!("layer {}: {e}", k + 1)))?,
        );
    }
    if r.pos != bytes.len() {
        return Err(CknError::Decode(format!(
            "{} trailing bytes after model payload",
            bytes.len() - r.pos
        )));
    }
    // chain consistency: layer k's filter length matches the previous layer's
    // channel count times its patch area
    let mut prev_channels = match input_kind {
        InputMapKind::GradientMap => Some(2),
        InputMapKind::PatchMap { .. } => None, // image channels unknown until use
    };
    for (k, layer) in layers.iter().enumerate() {
        let area = layer.patch_shape().side() * layer.patch_shape().side();
        if let Some(pc) = prev_channels {
            if layer.input_len() != area * pc {
                return Err(CknError::Decode(format!(
                    "layer {}: filter length {} inconsistent with {} channels and {}x{} patches",
                    k + 1,
                    layer.input_len(),
                    pc,
                    layer.patch_shape().side(),
                    layer.patch_shape().side()
                )));
            }
        } else if layer.input_len() % area != 0 {
            return Err(CknError::Decode(format!(
                "layer {}: filter length {} is not a multiple of the patch area {area}",
                k + 1,
                layer.input_len()
            )));
        }
        prev_channels = Some(layer.num_filters());
    }
    let model = NetworkModel {
        input_kind,
        layers,
        epsilon,
        final_target_size: final_size,
    };
    model.validate().map_err(|e| CknError::Decode(e.to_string()))?;
    Ok(model)
}

pub fn save_model_file(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    let bytes = save_model(model)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let bytes = std::fs::read(path)?;
    load_model(&bytes)
}
