//! Little-endian binary framing shared by checkpoints, datasets and rollout buffers,
//! plus parameter checkpoints and content hashing.

use crate::action::{DecoderParams, DecoderShape};
use crate::error::{Error, Result};
use crate::policy::{PolicyParams, PolicyShape};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Width of the fixed scenario-id field in binary records.
pub const ID_BYTES: usize = 32;

#[derive(Debug, Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }

    /// Length-prefixed UTF-8 string.
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    /// Zero-padded fixed-width id; longer ids are rejected.
    pub fn id(&mut self, s: &str) -> Result<()> {
        if s.len() > ID_BYTES {
            return Err(Error::Format(format!(
                "scenario id `{s}` exceeds {ID_BYTES} bytes"
            )));
        }
        let mut field = [0u8; ID_BYTES];
        field[..s.len()].copy_from_slice(s.as_bytes());
        self.bytes(&field);
        Ok(())
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "unexpected end of data at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.bytes(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.bytes(n)?.to_vec())
            .map_err(|_| Error::Format("string field is not UTF-8".into()))
    }

    pub fn id(&mut self) -> Result<String> {
        let raw = self.bytes(ID_BYTES)?;
        let end = raw.iter().position(|b| *b == 0).unwrap_or(ID_BYTES);
        String::from_utf8(raw[..end].to_vec())
            .map_err(|_| Error::Format("scenario id is not UTF-8".into()))
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4], what: &str) -> Result<()> {
        if self.bytes(4)? != magic {
            return Err(Error::Format(format!("not a {what} file (bad magic)")));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes atomically via a sibling temporary file, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of a flat parameter vector's exact bit patterns.
pub fn params_hash(values: &[f64]) -> String {
    let mut w = Writer::new();
    w.f64s(values);
    sha256_hex(&w.buf)
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DDCK";
const CHECKPOINT_VERSION: u32 = 1;
const KIND_POLICY: u8 = 1;
const KIND_DECODER: u8 = 2;

fn checkpoint_bytes(kind: u8, dims: &[u32], values: &[f64]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u8(kind);
    w.u32(dims.len() as u32);
    for d in dims {
        w.u32(*d);
    }
    w.u64(values.len() as u64);
    w.f64s(values);
    w.buf
}

fn parse_checkpoint(bytes: &[u8], kind: u8, expected_dims: &[u32]) -> Result<Vec<f64>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC, "checkpoint")?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let k = r.u8()?;
    if k != kind {
        return Err(Error::Format(format!("checkpoint kind {k}, expected {kind}")));
    }
    let n = r.u32()? as usize;
    let dims = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    if dims != expected_dims {
        return Err(Error::Config(format!(
            "checkpoint dimensions {dims:?} do not match expected {expected_dims:?}"
        )));
    }
    let len = r.u64()? as usize;
    let values = r.f64s(len)?;
    r.finish()?;
    Ok(values)
}

fn policy_dims(s: PolicyShape) -> [u32; 3] {
    [s.input as u32, s.hidden as u32, s.value_hidden as u32]
}

fn decoder_dims(s: DecoderShape) -> [u32; 4] {
    [
        s.embedding as u32,
        s.cond_hidden as u32,
        s.latent as u32,
        s.hidden as u32,
    ]
}

pub fn policy_to_bytes(p: &PolicyParams) -> Vec<u8> {
    checkpoint_bytes(KIND_POLICY, &policy_dims(p.shape()), &p.values)
}

pub fn policy_from_bytes(bytes: &[u8], shape: PolicyShape) -> Result<PolicyParams> {
    let values = parse_checkpoint(bytes, KIND_POLICY, &policy_dims(shape))?;
    PolicyParams::from_values(shape, values)
}

pub fn decoder_to_bytes(p: &DecoderParams) -> Vec<u8> {
    checkpoint_bytes(KIND_DECODER, &decoder_dims(p.shape()), &p.values)
}

pub fn decoder_from_bytes(bytes: &[u8], shape: DecoderShape) -> Result<DecoderParams> {
    let values = parse_checkpoint(bytes, KIND_DECODER, &decoder_dims(shape))?;
    DecoderParams::from_values(shape, values)
}

pub fn save_policy(path: &Path, p: &PolicyParams) -> Result<()> {
    write_file(path, &policy_to_bytes(p))
}

pub fn load_policy(path: &Path, shape: PolicyShape) -> Result<PolicyParams> {
    policy_from_bytes(&read_file(path)?, shape)
}

pub fn save_decoder(path: &Path, p: &DecoderParams) -> Result<()> {
    write_file(path, &decoder_to_bytes(p))
}

pub fn load_decoder(path: &Path, shape: DecoderShape) -> Result<DecoderParams> {
    decoder_from_bytes(&read_file(path)?, shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_and_dimension_check() {
        let p = PolicyParams::new(PolicyShape::default(), 3);
        let bytes = policy_to_bytes(&p);
        let q = policy_from_bytes(&bytes, PolicyShape::default()).unwrap();
        assert_eq!(p.values, q.values);
        let other = PolicyShape {
            hidden: 32,
            ..PolicyShape::default()
        };
        assert!(matches!(policy_from_bytes(&bytes, other), Err(Error::Config(_))));
        assert!(matches!(
            decoder_from_bytes(&bytes, DecoderShape::default()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn id_field_is_fixed_width() {
        let mut w = Writer::new();
        w.id("abc").unwrap();
        assert_eq!(w.buf.len(), ID_BYTES);
        assert_eq!(Reader::new(&w.buf).id().unwrap(), "abc");
        assert!(w.id(&"x".repeat(33)).is_err());
    }
}
