//! Binary parameter checkpoint ("LCAP").
//!
//! Layout, all little-endian:
//! ```text
//! magic "LCAP" | u32 version=1
//! u32 x7 config: d_model, num_layers, num_heads, d_ff, d_out, max_seq_len, input_dim
//! u32 num_tensors
//! then per tensor, in canonical order: u16 name_len | name | u8 ndim |
//! ndim x u32 dims | prod(dims) f64 values
//! ```
//! Round trips are bit-exact.

use std::path::Path;

use crate::encoder::{EncoderConfig, LcaEncoderParams};
use crate::error::{Error, Result};
use crate::io::{atomic_write, cursor::Cursor};

pub const MAGIC: &[u8; 4] = b"LCAP";
pub const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &LcaEncoderParams) -> Result<()> {
    let cfg = &params.config;
    let specs = cfg.tensor_specs();
    let tensors = params.tensors();

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        cfg.d_model,
        cfg.num_layers,
        cfg.num_heads,
        cfg.d_ff,
        cfg.d_out,
        cfg.max_seq_len,
        cfg.input_dim,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for (spec, tensor) in specs.iter().zip(tensors) {
        buf.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(spec.name.as_bytes());
        buf.push(spec.dims.len() as u8);
        for &d in &spec.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor {
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "tensor {}: non-finite parameter",
                    spec.name
                )));
            }
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    atomic_write(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<LcaEncoderParams> {
    let buf = std::fs::read(path)?;
    let mut cur = Cursor::new(&buf, "checkpoint");
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic; not a checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let config = EncoderConfig {
        d_model: cur.u32()? as usize,
        num_layers: cur.u32()? as usize,
        num_heads: cur.u32()? as usize,
        d_ff: cur.u32()? as usize,
        d_out: cur.u32()? as usize,
        max_seq_len: cur.u32()? as usize,
        input_dim: cur.u32()? as usize,
    };
    config.validate().map_err(|e| Error::Format(format!("checkpoint config invalid: {e}")))?;

    let specs = config.tensor_specs();
    let num_tensors = cur.u32()? as usize;
    if num_tensors != specs.len() {
        return Err(Error::Format(format!(
            "checkpoint has {num_tensors} tensors, config implies {}",
            specs.len()
        )));
    }
    let mut params = LcaEncoderParams::zeros(config);
    for (spec, tensor) in specs.iter().zip(params.tensors_mut()) {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Format("tensor name is not valid utf-8".into()))?;
        if name != spec.name {
            return Err(Error::Format(format!(
                "tensor {:?} out of order (expected {:?})",
                name, spec.name
            )));
        }
        let ndim = cur.u8()? as usize;
        if ndim != spec.dims.len() {
            return Err(Error::Format(format!("tensor {name}: rank mismatch")));
        }
        for &expected in &spec.dims {
            let got = cur.u32()? as usize;
            if got != expected {
                return Err(Error::Format(format!(
                    "tensor {name}: dimension {got} (expected {expected})"
                )));
            }
        }
        for v in tensor.iter_mut() {
            let x = cur.f64()?;
            if !x.is_finite() {
                return Err(Error::Validation(format!("tensor {name}: non-finite parameter")));
            }
            *v = x;
        }
    }
    cur.finish()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;

    fn tiny_params() -> LcaEncoderParams {
        let cfg = EncoderConfig {
            d_model: 8,
            num_layers: 2,
            num_heads: 2,
            d_ff: 12,
            d_out: 4,
            max_seq_len: 6,
            input_dim: 5,
        };
        init_params(cfg, 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lcap");
        let params = tiny_params();
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
        // saving the loaded params reproduces the file byte for byte
        let path2 = dir.path().join("model2.lcap");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.lcap");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_checkpoint_never_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lcap");
        save_checkpoint(&path, &tiny_params()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [10usize, 100, bytes.len() - 1] {
            let partial = dir.path().join(format!("cut{cut}.lcap"));
            std::fs::write(&partial, &bytes[..cut]).unwrap();
            assert!(load_checkpoint(&partial).is_err(), "cut at {cut} loaded");
        }
    }
}
