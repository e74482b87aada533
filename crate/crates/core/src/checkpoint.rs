//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "HINT"  u32 version
//! u64 text length, UTF-8 `key = value` block
//! u32 tensor count
//! per tensor: u32 name length, name, u32 rank, u64 × rank dims, f64 × numel
//! ```

use std::fs;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::kv::KvDoc;
use crate::nn::Module;

pub const MAGIC: &[u8; 4] = b"HINT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: KvDoc,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
    }

    /// Append every parameter of `m` in declaration order, names prefixed.
    pub fn push_module<M: Module + ?Sized>(&mut self, prefix: &str, m: &M) {
        m.visit(&mut |p| {
            self.push(
                format!("{prefix}{}", p.name()),
                p.shape(),
                p.value().to_vec(),
            );
        });
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor {name:?}")))
    }

    /// Overwrite the parameters of `m` from tensors named `prefix + param name`.
    pub fn load_module<M: Module + ?Sized>(&self, prefix: &str, m: &mut M) -> Result<()> {
        let mut failure = None;
        m.visit_mut(&mut |p| {
            if failure.is_some() {
                return;
            }
            let name = format!("{prefix}{}", p.name());
            match self.get(&name) {
                Ok(t) if t.shape == p.shape() => p.set_data(t.data.clone()),
                Ok(t) => {
                    failure = Some(shape_err!(
                        "tensor {name:?}: checkpoint shape {:?}, model shape {:?}",
                        t.shape,
                        p.shape()
                    ))
                }
                Err(e) => failure = Some(e),
            }
        });
        failure.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let text = self.meta.to_text();
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Unsupported(format!("checkpoint version {version}")));
        }
        let text_len = r.len64()?;
        let text = std::str::from_utf8(r.take(text_len)?)
            .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
        let meta = KvDoc::parse(text)?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.len64()).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor {name:?} is too large")))?;
            let raw = r.take(
                numel
                    .checked_mul(8)
                    .ok_or_else(|| Error::Format("overflow".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last tensor".into()));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        // write then rename so an interrupted save never clobbers a good file
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
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
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn len64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format("length overflows usize".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::default();
        c.meta.insert("step", 7);
        c.push("a", &[2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]);
        c.push("scalar", &[], vec![0.1]);
        c
    }

    #[test]
    fn byte_round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let bits = |t: &NamedTensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.tensors[0]), bits(&c.tensors[0]));
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(b"NOPE"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(Error::Unsupported(_))
        ));
    }
}
