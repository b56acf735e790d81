//! Binary model files.
//!
//! ```text
//! "FNGR"                         4 bytes
//! version                        u32 LE (= 1)
//! width scale                    f32 LE
//! tensor count                   u32 LE
//! per tensor:  name length u16, UTF-8 name, rank u8, dims u32 LE × rank
//! tensor data                    f32 LE, declaration order
//! CRC-32 of all preceding bytes  u32 LE
//! ```

use std::fs;
use std::path::Path;

use super::{FinngerModel, ModelError, Result};
use crate::tensor::Element;

pub const MAGIC: &[u8; 4] = b"FNGR";
pub const FORMAT_VERSION: u32 = 1;

/// Header facts about a saved model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfo {
    pub format_version: u32,
    pub width_scale: f64,
    pub checksum: u32,
}

impl ModelInfo {
    /// Short identifier reported by the inference service.
    pub fn version_string(&self) -> String {
        format!("fngr-v{}-w{}-{:08x}", self.format_version, self.width_scale, self.checksum)
    }
}

impl FinngerModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.named_tensors();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        (self.width.as_f64() as f32).write_le(&mut out);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims().len() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for (_, t) in &tensors {
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<ModelInfo> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(info_of(&bytes, self.width.as_f64()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FinngerModel> {
        Ok(FinngerModel::load_with_info(path)?.0)
    }

    pub fn load_with_info(path: impl AsRef<Path>) -> Result<(FinngerModel, ModelInfo)> {
        FinngerModel::from_bytes(&fs::read(path)?)
    }

    /// Parses a model file. The returned model is in eval mode.
    pub fn from_bytes(bytes: &[u8]) -> Result<(FinngerModel, ModelInfo)> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| ModelError::BadMagic)? != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        if bytes.len() < 4 {
            return Err(ModelError::Truncated);
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));

        let width = f32::read_le(r.take(4)?) as f64;
        let mut model = FinngerModel::build(0, width)
            .map_err(|_| ModelError::Architecture(format!("width scale {width}")))?;
        let count = r.u32()? as usize;
        let expected: Vec<(String, Vec<usize>)> = model
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.dims().to_vec()))
            .collect();
        if count != expected.len() {
            return Err(ModelError::Architecture(format!(
                "{count} tensors, expected {}",
                expected.len()
            )));
        }
        for (name, dims) in &expected {
            let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let got_name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| ModelError::Architecture("tensor name is not UTF-8".into()))?;
            let rank = r.take(1)?[0] as usize;
            let mut got_dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                got_dims.push(r.u32()? as usize);
            }
            if got_name != name || &got_dims != dims {
                return Err(ModelError::Architecture(format!(
                    "found {got_name} {got_dims:?}, expected {name} {dims:?}"
                )));
            }
        }
        let floats: usize = expected.iter().map(|(_, d)| d.iter().product::<usize>()).sum();
        if r.pos + floats * f32::BYTES + 4 > bytes.len() {
            return Err(ModelError::Truncated);
        }
        let computed = crc32fast::hash(body);
        if computed != stored {
            return Err(ModelError::Checksum { stored, computed });
        }
        if r.pos + floats * f32::BYTES != body.len() {
            return Err(ModelError::Architecture("trailing bytes after tensor data".into()));
        }
        for t in model.tensors_mut() {
            for v in t.data_mut() {
                *v = f32::read_le(r.take(4)?);
            }
            if t.check_finite().is_err() {
                return Err(ModelError::NonFinite);
            }
        }
        Ok((model, info_of(bytes, width)))
    }
}

fn info_of(bytes: &[u8], width_scale: f64) -> ModelInfo {
    let checksum = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    ModelInfo { format_version: FORMAT_VERSION, width_scale, checksum }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(ModelError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(ModelError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
