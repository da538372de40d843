//! Binary weight file shared by denoiser checkpoints and codecs.
//!
//! ```text
//! "IIDM"                      4 bytes magic
//! version                     u8 (= 1)
//! descriptor length           u64 LE
//! descriptor                  UTF-8 JSON
//! repeated until EOF:
//!   name length               u64 LE
//!   name                      UTF-8
//!   rank                      u64 LE
//!   dims                      rank x u64 LE
//!   values                    prod(dims) x f32 LE, row-major
//! ```
//!
//! Tensors are written in sorted name order. Values are stored as `f32`, so
//! a save/load cycle rounds `f64` parameters to single precision; anything
//! loaded from a file round-trips bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;

use crate::denoiser::{Architecture, DenoiserParams, Tensor, Tensors};
use crate::error::{Error, Result};
use crate::latent::{Codec, CodecKind, LinearPatch};

pub const MAGIC: &[u8; 4] = b"IIDM";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub descriptor: Value,
    pub tensors: Tensors,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::WeightFormat(msg.into())
}

impl WeightFile {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&[VERSION])?;
        let desc = serde_json::to_vec(&self.descriptor)?;
        out.write_all(&(desc.len() as u64).to_le_bytes())?;
        out.write_all(&desc)?;
        for (name, tensor) in &self.tensors {
            out.write_all(&(name.len() as u64).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(tensor.shape.len() as u64).to_le_bytes())?;
            for &d in &tensor.shape {
                out.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(tensor.len() * 4);
            for &v in &tensor.data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = cur.take(1)?[0];
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let desc_len = cur.len_field()?;
        let descriptor = serde_json::from_slice(cur.take(desc_len)?)?;
        let mut tensors = Tensors::new();
        while cur.pos < bytes.len() {
            let name_len = cur.len_field()?;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| format_err("tensor name is not UTF-8"))?
                .to_owned();
            let rank = cur.len_field()?;
            let shape = (0..rank).map(|_| cur.len_field()).collect::<Result<Vec<_>>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| format_err("tensor too large"))?;
            let raw = cur.take(count.checked_mul(4).ok_or_else(|| format_err("tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if tensors.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(format_err(format!("duplicate tensor {name}")));
            }
        }
        Ok(Self { descriptor, tensors })
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes()?)
    }
}

/// Write to a hidden sibling file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err("unexpected end of file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn len_field(&mut self) -> Result<usize> {
        let raw = self.take(8)?;
        let v = u64::from_le_bytes(raw.try_into().unwrap());
        usize::try_from(v).map_err(|_| format_err("length overflows usize"))
    }
}

impl From<&DenoiserParams> for WeightFile {
    fn from(params: &DenoiserParams) -> Self {
        Self {
            descriptor: serde_json::to_value(params.architecture()).expect("architecture serializes"),
            tensors: params.tensors().clone(),
        }
    }
}

impl TryFrom<WeightFile> for DenoiserParams {
    type Error = Error;

    fn try_from(file: WeightFile) -> Result<Self> {
        let arch: Architecture = serde_json::from_value(file.descriptor)?;
        DenoiserParams::new(arch, file.tensors)
    }
}

pub fn save_params(params: &DenoiserParams, path: impl AsRef<Path>) -> Result<()> {
    WeightFile::from(params).save(path)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<DenoiserParams> {
    WeightFile::load(path)?.try_into()
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CodecDescriptor {
    kind: String,
    codec: CodecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patch: Option<usize>,
}

const CODEC_KIND: &str = "codec";
const PROJECTION: &str = "projection";

impl From<&Codec> for WeightFile {
    fn from(codec: &Codec) -> Self {
        let mut tensors = Tensors::new();
        let patch = match codec {
            Codec::Identity => None,
            Codec::LinearPatch(lp) => {
                let n = 3 * lp.patch() * lp.patch();
                tensors.insert(
                    PROJECTION.into(),
                    Tensor::new(vec![n, n], lp.projection().to_vec()).expect("square projection"),
                );
                Some(lp.patch())
            }
        };
        let desc = CodecDescriptor {
            kind: CODEC_KIND.into(),
            codec: codec.kind(),
            patch,
        };
        Self {
            descriptor: serde_json::to_value(desc).expect("descriptor serializes"),
            tensors,
        }
    }
}

impl TryFrom<WeightFile> for Codec {
    type Error = Error;

    fn try_from(mut file: WeightFile) -> Result<Self> {
        let desc: CodecDescriptor = serde_json::from_value(file.descriptor)?;
        if desc.kind != CODEC_KIND {
            return Err(format_err(format!("expected a codec file, got kind {:?}", desc.kind)));
        }
        match desc.codec {
            CodecKind::Identity => Ok(Codec::Identity),
            CodecKind::LinearPatch => {
                let patch = desc.patch.ok_or_else(|| format_err("linear-patch codec without patch size"))?;
                let proj = file
                    .tensors
                    .remove(PROJECTION)
                    .ok_or_else(|| format_err("missing projection tensor"))?;
                Ok(Codec::LinearPatch(LinearPatch::new(patch, proj.data)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::Shape;
    use crate::rng::Seed;

    fn params() -> DenoiserParams {
        let arch = Architecture {
            hidden: vec![5, 4],
            time_dim: 4,
            ..Architecture::standard(Shape::new(2, 2, 1), 2)
        };
        DenoiserParams::init(arch, Seed(1), false).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = WeightFile::from(&params()).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"IIDM");
        assert_eq!(bytes[4], 1);
        let len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let desc: Value = serde_json::from_slice(&bytes[13..13 + len]).unwrap();
        assert_eq!(desc["kind"], "mlp");
        // first tensor in sorted order
        let name_len = u64::from_le_bytes(bytes[13 + len..21 + len].try_into().unwrap()) as usize;
        assert_eq!(&bytes[21 + len..21 + len + name_len], b"layer0.bias");
    }

    #[test]
    fn round_trip_is_bit_exact_after_quantization() {
        let p = params();
        let bytes = WeightFile::from(&p).to_bytes().unwrap();
        let loaded: DenoiserParams = WeightFile::from_bytes(&bytes).unwrap().try_into().unwrap();
        for (name, t) in p.tensors() {
            let l = &loaded.tensors()[name];
            for (a, b) in t.data.iter().zip(&l.data) {
                assert_eq!((*a as f32) as f64, *b);
            }
        }
        let again = WeightFile::from(&loaded).to_bytes().unwrap();
        assert_eq!(bytes, again);
        let reloaded: DenoiserParams = WeightFile::from_bytes(&again).unwrap().try_into().unwrap();
        assert_eq!(reloaded, loaded);
    }

    #[test]
    fn codec_round_trip() {
        let codec = Codec::from_kind(CodecKind::LinearPatch, Seed(3));
        let bytes = WeightFile::from(&codec).to_bytes().unwrap();
        let back: Codec = WeightFile::from_bytes(&bytes).unwrap().try_into().unwrap();
        assert_eq!(back.kind(), CodecKind::LinearPatch);
        let id: Codec = WeightFile::from_bytes(&WeightFile::from(&Codec::Identity).to_bytes().unwrap())
            .unwrap()
            .try_into()
            .unwrap();
        assert_eq!(id, Codec::Identity);
        let as_params: Result<DenoiserParams> = WeightFile::from_bytes(&bytes).unwrap().try_into();
        assert!(as_params.is_err());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = WeightFile::from(&params()).to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(WeightFile::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(WeightFile::from_bytes(&bad).is_err());
        assert!(WeightFile::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
