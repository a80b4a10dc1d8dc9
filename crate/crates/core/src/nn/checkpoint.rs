//! Flat binary model checkpoints.
//!
//! ```text
//! offset  size          field
//! 0       4             magic "KDFM"
//! 4       4             format version (u32 LE, currently 1)
//! 8       12            input height, width, channels (u32 LE each)
//! 20      4             layer count L (u32 LE)
//! 24      25 * L        descriptor table, one entry per layer:
//!                         kind (u8: 0 dense, 1 conv) followed by six u32 LE
//!                         dense: inputs, outputs, 0, 0, 0, 0
//!                         conv:  in_height, in_width, in_channels, filters, kernel, stride
//! ...     8 * n         parameters as f64 LE, layer by layer, weights then bias
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{InputShape, Layer, LayerKind, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"KDFM";
const VERSION: u32 = 1;

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 25 * params.layers.len() + 8 * params.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [params.input.height, params.input.width, params.input.channels, params.layers.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for layer in &params.layers {
        let (tag, dims) = match layer.kind {
            LayerKind::Dense { inputs, outputs } => (0u8, [inputs, outputs, 0, 0, 0, 0]),
            LayerKind::Conv { in_height, in_width, in_channels, filters, kernel, stride } => {
                (1u8, [in_height, in_width, in_channels, filters, kernel, stride])
            }
        };
        out.push(tag);
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for v in params.flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::InvalidInput(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::InvalidInput("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::InvalidInput(format!("unsupported checkpoint version {version}")));
    }
    let input = InputShape { height: r.u32()?, width: r.u32()?, channels: r.u32()? };
    let count = r.u32()?;
    let mut kinds = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = r.take(1)?[0];
        let mut d = [0usize; 6];
        for v in &mut d {
            *v = r.u32()?;
        }
        kinds.push(match tag {
            0 => LayerKind::Dense { inputs: d[0], outputs: d[1] },
            1 => LayerKind::Conv {
                in_height: d[0],
                in_width: d[1],
                in_channels: d[2],
                filters: d[3],
                kernel: d[4],
                stride: d[5],
            },
            other => return Err(Error::InvalidInput(format!("unknown layer kind tag {other}"))),
        });
    }
    let mut layers = Vec::with_capacity(count);
    for kind in kinds {
        if let LayerKind::Conv { in_height, in_width, kernel, stride, .. } = kind {
            if kernel == 0 || stride == 0 || kernel > in_height || kernel > in_width {
                return Err(Error::InvalidInput("invalid conv descriptor".into()));
            }
        }
        let weights = (0..kind.weight_len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let bias = (0..kind.bias_len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        layers.push(Layer { kind, weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidInput(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    let params = ModelParams { input, layers };
    params.validate()?;
    Ok(params)
}

pub fn save(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &to_bytes(params))
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelParams> {
    from_bytes(&fs::read(path)?)
}

/// SHA-256 of the checkpoint encoding, hex.
pub fn checksum(params: &ModelParams) -> String {
    hex::encode(Sha256::digest(to_bytes(params)))
}
