//! Flat parameter dump.
//!
//! Layout (all integers u32 little-endian):
//!
//! ```text
//! "PSCP" version
//! repeated until EOF: name_len name(UTF-8) rank dims[rank] payload(f64 LE × Π dims)
//! ```
//!
//! String metadata travels as records named `meta.<key>=<value>` with rank 1
//! and a zero-length payload, so the record grammar stays uniform.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gradkit::{ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"PSCP";
pub const VERSION: u32 = 1;
const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dump {
    pub meta: BTreeMap<String, String>,
    pub params: ParamSet,
}

impl Dump {
    pub fn new(params: ParamSet) -> Self {
        Self {
            meta: BTreeMap::new(),
            params,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("dump has no {key:?} entry")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("dump entry {key:?} has unparsable value {v:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut record = |name: &str, shape: &[usize], data: &[f64]| {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for (k, v) in &self.meta {
            record(&format!("{META_PREFIX}{k}={v}"), &[0], &[]);
        }
        for p in self.params.iter() {
            record(&p.name, p.value.shape(), p.value.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a parameter dump (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dump version {version}")));
        }
        let mut dump = Dump::default();
        while r.pos < bytes.len() {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("record name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("record {name:?} is too large")))?;
            let payload = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("record too large".into()))?)?;
            if let Some(rest) = name.strip_prefix(META_PREFIX) {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("metadata record {name:?} has no '='")))?;
                dump.meta.insert(k.to_string(), v.to_string());
                continue;
            }
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            dump.params
                .insert(name, Tensor::new(shape, data)?)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(dump)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
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
            .ok_or_else(|| Error::Format(format!("dump truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
