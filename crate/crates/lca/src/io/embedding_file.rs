//! Binary shot-embedding container ("LCAE").
//!
//! Layout, all little-endian:
//! ```text
//! magic "LCAE" | u32 version=1 | u32 dim | u32 frames | u32 num_shots
//! then per shot: u16 id_len | id utf8 | frames*dim f32 values (frame-major)
//! ```
//! Values are stored at 32-bit precision; every shot in one file shares the
//! frame count and dimension. An empty file (`num_shots = 0`) is valid.

use std::path::Path;

use crate::data::{FrameEmbedding, Shot};
use crate::error::{Error, Result};
use crate::io::{atomic_write, cursor::Cursor};

pub const MAGIC: &[u8; 4] = b"LCAE";
pub const VERSION: u32 = 1;

pub fn save_embeddings(path: &Path, shots: &[Shot]) -> Result<()> {
    let (dim, frames) = match shots.first() {
        Some(s) => (s.dim(), s.num_frames()),
        None => (0, 0),
    };
    for s in shots {
        if s.dim() != dim || s.num_frames() != frames {
            return Err(Error::Shape(format!(
                "shot {}: all shots in one file must share frame count and dimension",
                s.id
            )));
        }
        if s.id.len() > u16::MAX as usize {
            return Err(Error::Param(format!("shot id longer than {} bytes", u16::MAX)));
        }
    }

    let mut buf = Vec::with_capacity(20 + shots.len() * (2 + 16 + frames * dim * 4));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(frames as u32).to_le_bytes());
    buf.extend_from_slice(&(shots.len() as u32).to_le_bytes());
    for s in shots {
        buf.extend_from_slice(&(s.id.len() as u16).to_le_bytes());
        buf.extend_from_slice(s.id.as_bytes());
        for frame in s.frames() {
            for &v in frame.as_slice() {
                if !v.is_finite() {
                    return Err(Error::Validation(format!("shot {}: non-finite value", s.id)));
                }
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    atomic_write(path, &buf)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<Shot>> {
    let buf = std::fs::read(path)?;
    let mut cur = Cursor::new(&buf, "embedding file");
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic; not an embedding file".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported embedding file version {version} (expected {VERSION})"
        )));
    }
    let dim = cur.u32()? as usize;
    let frames = cur.u32()? as usize;
    let num_shots = cur.u32()? as usize;
    if num_shots > 0 && (dim == 0 || frames == 0) {
        return Err(Error::Format("non-empty file with zero dim or frame count".into()));
    }

    let mut shots = Vec::with_capacity(num_shots);
    for _ in 0..num_shots {
        let id_len = cur.u16()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| Error::Format("shot id is not valid utf-8".into()))?
            .to_string();
        let mut shot_frames = Vec::with_capacity(frames);
        for _ in 0..frames {
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                let v = cur.f32()?;
                if !v.is_finite() {
                    return Err(Error::Validation(format!("shot {id}: non-finite value")));
                }
                values.push(v as f64);
            }
            shot_frames.push(FrameEmbedding::new(values).map_err(|e| {
                Error::Validation(format!("shot {id}: {e}"))
            })?);
        }
        shots.push(Shot::new(id, shot_frames)?);
    }
    cur.finish()?;
    Ok(shots)
}
