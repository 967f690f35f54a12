//! Named weight tensors and the `WBND` container format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "WBND"  version: u16  count: u32
//! count x { name_len: u16, name: utf-8, rank: u8, dims: rank x u32,
//!           values: prod(dims) x f32 (row-major) }
//! ```
//!
//! Entries are written in name order, so a bundle always serializes to the
//! same bytes.
//!
//! Nothing here is trained. [`SeededInit`] fills bundles from a ChaCha8
//! stream (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`); each value is
//! `(2u - 1) * bound` rounded to `f32`, where `u` is a standard `f32` draw in
//! `[0, 1)`. ChaCha8 output is fixed by its specification, so a seed yields
//! the same bundle on every platform, and since every value is already an
//! `f32` a saved bundle reloads bit-for-bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WBND";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightBundle {
    entries: BTreeMap<String, Tensor>,
}

impl WeightBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    /// Looks up `name` and checks its dims.
    pub fn get(&self, name: &str, dims: &[usize]) -> Result<&Tensor> {
        let t = self
            .entries
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))?;
        if t.dims() != dims {
            return Err(Error::ShapeMismatch(format!(
                "weight {name:?} has dims {:?}, expected {dims:?}",
                t.dims()
            )));
        }
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.entries.len())
            .map_err(|_| Error::InvalidBundle("too many entries".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.entries {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::InvalidBundle(format!("name too long: {name:?}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims().len() as u8);
            for &d in t.dims() {
                let d = u32::try_from(d)
                    .map_err(|_| Error::InvalidBundle(format!("dimension {d} too large")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::InvalidBundle("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::InvalidBundle(format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(r.array()?);
        let mut bundle = WeightBundle::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::InvalidBundle("entry name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(r.array()?) as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::InvalidBundle(format!("dims overflow for {name:?}")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| {
                Error::InvalidBundle(format!("dims overflow for {name:?}"))
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if bundle.entries.contains_key(&name) {
                return Err(Error::InvalidBundle(format!("duplicate entry {name:?}")));
            }
            bundle.insert(name, Tensor::new(dims, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidBundle("trailing bytes".into()));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
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
            .ok_or_else(|| Error::InvalidBundle("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Deterministic pseudo-random initializer.
pub struct SeededInit {
    rng: ChaCha8Rng,
}

impl SeededInit {
    pub fn new(seed: u64) -> Self {
        SeededInit {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform values in `[center - bound, center + bound)`, rounded to f32.
    pub fn uniform(&mut self, dims: &[usize], center: f64, bound: f64) -> Tensor {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| {
                let u: f32 = self.rng.gen();
                (center as f32 + (2.0 * u - 1.0) * bound as f32) as f64
            })
            .collect();
        Tensor::new(dims.to_vec(), data).expect("dims match data")
    }

    /// Convolution weights scaled by `1/sqrt(fan_in)`.
    pub fn conv(&mut self, dims: &[usize; 4]) -> Tensor {
        let fan_in = (dims[1] * dims[2] * dims[3]) as f64;
        self.uniform(dims, 0.0, 1.0 / fan_in.sqrt())
    }
}
