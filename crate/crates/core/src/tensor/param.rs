use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

const MAGIC: &str = "edgegat-checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    trainable: bool,
}

/// Named tensors owned by a model. Non-trainable entries hold buffers such
/// as batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    /// Registers a tensor. Panics on a duplicate name, which is a bug in
    /// model construction.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.entries.push(Entry {
            name,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    /// Places a parameter on `graph`; buffers enter as constants.
    pub fn var<'g>(&self, graph: &'g Graph<T>, id: ParamId) -> Var<'g, T> {
        let e = &self.entries[id.0];
        if e.trainable {
            graph.param(id, e.value.clone())
        } else {
            graph.constant(e.value.clone())
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }

    /// Copies values from `other`, which must hold the same names and shapes.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: model has {}, source has {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Config(format!(
                    "parameter mismatch: {} {:?} vs {} {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
            a.value = b.value.clone();
        }
        Ok(())
    }
}

/// Writes a text header (one `name rows cols trainable` line per tensor)
/// followed by the values as little-endian `f32`, in header order.
pub fn write_checkpoint<T: Real>(store: &ParamStore<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    writeln!(buf, "{MAGIC}").unwrap();
    writeln!(buf, "byte-order little-endian f32").unwrap();
    writeln!(buf, "params {}", store.len()).unwrap();
    for e in &store.entries {
        writeln!(
            buf,
            "{} {} {} {}",
            e.name,
            e.value.rows(),
            e.value.cols(),
            u8::from(e.trainable)
        )
        .unwrap();
    }
    writeln!(buf, "end").unwrap();
    for e in &store.entries {
        for v in e.value.data() {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<ParamStore<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let bad = |msg: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut pos = 0;
    let mut next_line = || -> Result<String> {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| bad("header is not UTF-8"))?
            .to_string();
        pos += end + 1;
        Ok(line)
    };
    if next_line()? != MAGIC {
        return Err(bad("not an edgegat checkpoint"));
    }
    if next_line()? != "byte-order little-endian f32" {
        return Err(bad("unsupported byte order"));
    }
    let count: usize = next_line()?
        .strip_prefix("params ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing parameter count"))?;
    let mut header = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_line()?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad shape in header"));
        if f.len() != 4 {
            return Err(bad("bad header line"));
        }
        header.push((f[0].to_string(), parse(f[1])?, parse(f[2])?, f[3] == "1"));
    }
    if next_line()? != "end" {
        return Err(bad("missing end of header"));
    }
    let mut store = ParamStore::new();
    for (name, rows, cols, trainable) in header {
        let n = rows * cols;
        let chunk = bytes
            .get(pos..pos + 4 * n)
            .ok_or_else(|| bad("truncated payload"))?;
        pos += 4 * n;
        let data = chunk
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        store.add(name, Tensor::from_vec(rows, cols, data)?, trainable);
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(store)
}
