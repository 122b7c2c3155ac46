//! Self-describing binary container for named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "PRTC"
//! version  u16      = 1
//! count    u32
//! entry × count:
//!   name_len u16, name (UTF-8)
//!   dtype    u8     (0 = f32, 1 = f64)
//!   ndim     u8
//!   dims     u64 × ndim
//!   payload  numel × (4 | 8) bytes
//! crc32    u32      IEEE CRC-32 of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TensorError};

pub const MAGIC: &[u8; 4] = b"PRTC";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Entry {
    pub fn f64(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Entry {
        Entry {
            name: name.into(),
            dtype: DType::F64,
            shape: shape.to_vec(),
            data,
        }
    }
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Container(msg.into())
}

pub fn encode(entries: &[Entry]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let n: usize = e.shape.iter().product();
        if n != e.data.len() {
            return Err(bad(format!("entry {}: {} values for {:?}", e.name, e.data.len(), e.shape)));
        }
        let name = e.name.as_bytes();
        if name.len() > u16::MAX as usize || e.shape.len() > u8::MAX as usize {
            return Err(bad(format!("entry {} has an oversized header", e.name)));
        }
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(e.dtype.code());
        buf.push(e.shape.len() as u8);
        for &d in &e.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match e.dtype {
            DType::F64 => e.data.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
            DType::F32 => e
                .data
                .iter()
                .for_each(|v| buf.extend_from_slice(&(*v as f32).to_le_bytes())),
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad("truncated container"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    if bytes.len() < MAGIC.len() + 2 + 4 + 4 {
        return Err(bad("truncated container"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if &body[..4] != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    if stored != computed {
        return Err(TensorError::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let nlen = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| bad("entry name is not UTF-8"))?
            .to_owned();
        let dtype = match r.u8()? {
            0 => DType::F32,
            1 => DType::F64,
            other => return Err(bad(format!("unknown dtype code {other}"))),
        };
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("shape overflow"))?;
        let raw = r.take(n.checked_mul(dtype.width()).ok_or_else(|| bad("shape overflow"))?)?;
        let data = match dtype {
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        entries.push(Entry { name, dtype, shape, data });
    }
    if r.pos != body.len() {
        return Err(bad("trailing bytes after last entry"));
    }
    Ok(entries)
}

pub fn write_file(path: &Path, entries: &[Entry]) -> Result<()> {
    let bytes = encode(entries)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<Entry>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Entry> {
        vec![
            Entry::f64("a", &[2, 3], vec![0.1, -2.5, 1e-300, f64::MAX, 0.0, -0.0]),
            Entry::f64("bias", &[1], vec![std::f64::consts::PI]),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let e = sample();
        let back = decode(&encode(&e).unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in e.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let ab: Vec<u64> = a.data.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode(&sample()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(TensorError::Checksum { .. })));
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = encode(&sample()).unwrap();
        assert!(decode(&bytes[..8]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode(&wrong).is_err());
    }

    #[test]
    fn version_checked() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        let err = decode(&bytes).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
