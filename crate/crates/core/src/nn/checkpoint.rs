//! Binary checkpoint container: a TOML metadata header followed by named
//! little-endian `f32` tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor, WeightStore};

const MAGIC: &[u8; 4] = b"PGAN";
pub const FORMAT_VERSION: u32 = 1;
const MAX_RANK: u32 = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new(metadata: impl Into<String>) -> Self {
        Self { metadata: metadata.into(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.push((name.into(), t));
    }

    /// Add every tensor of `store` under `prefix`.
    pub fn push_store<T: Real>(&mut self, prefix: &str, store: &WeightStore<T>) {
        for (name, t) in store.iter() {
            self.push(format!("{prefix}{name}"), t.cast());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrite `store` with the tensors stored under `prefix`. Every
    /// parameter of the store must be present with a matching shape.
    pub fn load_store<T: Real>(&self, prefix: &str, store: &mut WeightStore<T>) -> Result<()> {
        let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let key = format!("{prefix}{name}");
            let t = self.get(&key).ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            let dst = store.get_mut(&name).expect("listed");
            if dst.shape() != t.shape() {
                return Err(Error::Checkpoint(format!("tensor {key} has shape {:?}, expected {:?}", t.shape(), dst.shape())));
            }
            *dst = t.cast();
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_bytes(w, self.metadata.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_bytes(w, name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let metadata = String::from_utf8(read_bytes(r)?).map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let count = read_u32(r)?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(r)?).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = read_u32(r)?;
            if rank > MAX_RANK {
                return Err(Error::Checkpoint(format!("tensor {name} has rank {rank}")));
            }
            let shape: Vec<usize> = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            read_exact(r, &mut raw)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn write_bytes(w: &mut impl Write, b: &[u8]) -> Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    if n > 1 << 24 {
        return Err(Error::Checkpoint(format!("implausible field length {n}")));
    }
    let mut b = vec![0u8; n];
    read_exact(r, &mut b)?;
    Ok(b)
}
