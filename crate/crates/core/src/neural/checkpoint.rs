//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `DNARCKPT`, `u32` version, `u32` count of
//! config pairs each as two length-prefixed UTF-8 strings, `u32` count of
//! tensors each as name, `u32` rank, `u64` dims and `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::{ModelConfig, RrccModel};

const MAGIC: &[u8; 8] = b"DNARCKPT";
const VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes<T: Scalar>(model: &RrccModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let pairs = model.config().to_pairs();
    out.extend_from_slice(&(pairs.len() as u32).to_le_bytes());
    for (k, v) in &pairs {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    let store = model.params();
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for id in store.ids() {
        put_str(&mut out, store.name(id));
        let t = store.value(id);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}

/// Rebuild a model from checkpoint bytes. When `expected` is given its
/// architecture keys must match the stored configuration.
pub fn from_bytes<T: Scalar>(buf: &[u8], expected: Option<&ModelConfig>) -> Result<RrccModel<T>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let n_pairs = c.u32()?;
    let mut pairs = Vec::with_capacity(n_pairs as usize);
    for _ in 0..n_pairs {
        pairs.push((c.string()?, c.string()?));
    }
    let config = ModelConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    if let Some(exp) = expected {
        if let Some(e) = exp.architecture_mismatch(&config) {
            return Err(e);
        }
    }
    let mut model = RrccModel::<T>::new(config)?;
    let n_tensors = c.u32()? as usize;
    if n_tensors != model.params().len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {n_tensors}", model.params().len())));
    }
    for _ in 0..n_tensors {
        let name = c.string()?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let store = model.params_mut();
        let id = store.find(&name).ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name:?}")))?;
        if store.value(id).shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch { expected: store.value(id).shape().to_vec(), found: shape });
        }
        for v in store.value_mut(id).data_mut() {
            *v = T::from_f64_lossy(c.f64()?);
        }
    }
    if c.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(model)
}

pub fn save<T: Scalar>(model: &RrccModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<RrccModel<T>> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf, expected)
}
