//! Self-describing parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SEMGCKPT"
//! version    u32      1
//! meta_len   u32      length of the metadata block
//! meta       UTF-8    "key = value" lines, sorted by key
//! count      u32      number of tensor entries
//! entry*     name_len u32, name (UTF-8), dtype u8 (0 = f32, 1 = f64),
//!            flags u8 (bit 0 = trainable), rank u32, dims u64 * rank,
//!            raw little-endian values
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::tensor::{DType, Real, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SEMGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dtype: DType,
    pub trainable: bool,
    pub shape: Vec<usize>,
    raw: Vec<u8>,
}

impl CheckpointEntry {
    pub fn from_tensor<T: Real>(name: impl Into<String>, tensor: &Tensor<T>, trainable: bool) -> Self {
        let mut raw = Vec::with_capacity(tensor.len() * T::DTYPE.size());
        for &v in tensor.data() {
            v.write_le(&mut raw);
        }
        Self {
            name: name.into(),
            dtype: T::DTYPE,
            trainable,
            shape: tensor.shape().to_vec(),
            raw,
        }
    }

    pub fn from_values<T: Real>(name: impl Into<String>, values: &[T]) -> Self {
        let t = Tensor::from_vec(&[values.len()], values.to_vec()).expect("1-d shape");
        Self::from_tensor(name, &t, false)
    }

    fn values_f64(&self) -> Vec<f64> {
        match self.dtype {
            DType::F32 => self
                .raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::F64 => self
                .raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        }
    }

    /// Decodes the entry, converting precision when the dtypes differ.
    pub fn to_tensor<T: Real>(&self) -> Result<Tensor<T>> {
        Tensor::from_f64(&self.shape, &self.values_f64())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub entries: Vec<CheckpointEntry>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key {key}")))
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("metadata {key} = {raw:?} does not parse")))
    }

    pub fn push(&mut self, entry: CheckpointEntry) {
        self.entries.push(entry);
    }

    pub fn entry(&self, name: &str) -> Result<&CheckpointEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn entries_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a CheckpointEntry> {
        self.entries.iter().filter(move |e| e.name.starts_with(prefix))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype.code());
            out.push(u8::from(e.trainable));
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&e.raw);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len, "metadata")?)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let mut meta = BTreeMap::new();
        for line in meta_text.lines() {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Checkpoint(format!("bad metadata line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = r.u32("entry count")?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let dtype =
                DType::from_code(r.u8("dtype")?).ok_or_else(|| Error::Checkpoint(format!("{name}: unknown dtype")))?;
            let trainable = r.u8("flags")? & 1 == 1;
            let rank = r.u32("rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u64("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * dtype.size(), &name)?.to_vec();
            entries.push(CheckpointEntry {
                name,
                dtype,
                trainable,
                shape,
                raw,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last entry",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { meta, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
