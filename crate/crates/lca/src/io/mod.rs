//! File formats: the binary embedding container, the binary parameter
//! checkpoint, and the JSON manifests tying them together.
//!
//! Every write is atomic (write to a temp file in the same directory, then
//! rename), so a crashed run never leaves a half-written file that loads.

pub mod checkpoint;
pub mod embedding_file;
pub mod manifest;

use std::fs;
use std::path::Path;

use crate::error::Result;

/// Atomically replace `path` with `bytes`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!("{file_name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

pub(crate) mod cursor {
    //! Little helpers for parsing little-endian binary buffers.

    use crate::error::{Error, Result};

    pub struct Cursor<'a> {
        buf: &'a [u8],
        pos: usize,
        what: &'static str,
    }

    impl<'a> Cursor<'a> {
        pub fn new(buf: &'a [u8], what: &'static str) -> Self {
            Self { buf, pos: 0, what }
        }

        pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            if self.pos + n > self.buf.len() {
                return Err(Error::Corrupt(format!(
                    "{}: truncated at byte {} (wanted {} more)",
                    self.what, self.pos, n
                )));
            }
            let out = &self.buf[self.pos..self.pos + n];
            self.pos += n;
            Ok(out)
        }

        pub fn u16(&mut self) -> Result<u16> {
            Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
        }

        pub fn u32(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }

        pub fn f32(&mut self) -> Result<f32> {
            Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }

        pub fn f64(&mut self) -> Result<f64> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }

        pub fn u8(&mut self) -> Result<u8> {
            Ok(self.take(1)?[0])
        }

        pub fn finish(&self) -> Result<()> {
            if self.pos != self.buf.len() {
                return Err(Error::Corrupt(format!(
                    "{}: {} trailing bytes",
                    self.what,
                    self.buf.len() - self.pos
                )));
            }
            Ok(())
        }
    }
}
