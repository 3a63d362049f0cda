//! Weight file layout, all integers little-endian:
//!
//! ```text
//! magic "LIPTW1" | version u16 | entry count u32
//! per entry: name length u16 | UTF-8 name | rank u8 | dims u32 × rank | f32 × Π dims
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"LIPTW1";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!("{name}: dims {dims:?} hold {numel} values, got {}", data.len())));
        }
        Ok(NamedTensor { name, dims, data })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightFile {
    pub entries: Vec<NamedTensor>,
}

impl WeightFile {
    pub fn new(entries: Vec<NamedTensor>) -> Result<Self> {
        let wf = WeightFile { entries };
        wf.check()?;
        Ok(wf)
    }

    fn check(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::parse(format!("duplicate tensor name {:?}", e.name)));
            }
            if e.name.len() > u16::MAX as usize || e.dims.len() > u8::MAX as usize {
                return Err(Error::parse(format!("tensor {:?} cannot be encoded", e.name)));
            }
            if e.dims.iter().any(|&d| d > u32::MAX as usize) || e.dims.iter().product::<usize>() != e.data.len() {
                return Err(Error::shape(format!("tensor {:?} has inconsistent dims {:?}", e.name, e.dims)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(6)? != MAGIC {
            return Err(Error::parse("not a LIPT weight file (bad magic)"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::parse(format!("unsupported weight file version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name =
                std::str::from_utf8(r.take(len)?).map_err(|_| Error::parse("tensor name is not UTF-8"))?.to_owned();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::parse(format!("tensor {name:?} is too large")))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::parse("tensor too large"))?)?;
            let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            entries.push(NamedTensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::parse(format!("{} trailing bytes after last tensor", bytes.len() - r.pos)));
        }
        WeightFile::new(entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(format!("weight file truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
