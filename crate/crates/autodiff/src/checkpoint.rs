//! Binary checkpoint formats.
//!
//! # Parameter set (`BBFP`)
//!
//! All integers little-endian.
//!
//! ```text
//! magic      4 bytes  "BBFP"
//! version    u16      1
//! dtype      u8       1 = f32, 2 = f64
//! reserved   u8       0
//! rng_seed   u64
//! count      u32      number of entries
//! manifest   count x { name_len u16, name utf-8, rank u8, dims u32 x rank }
//! values     every entry's data, row-major, in manifest order,
//!            each scalar encoded with the width given by dtype
//! ```
//!
//! Reading converts between precisions, so an `f64` checkpoint loads into
//! an `f32` set and vice versa.
//!
//! # Container (`BBFC`)
//!
//! ```text
//! magic      4 bytes  "BBFC"
//! version    u16      1
//! count      u32      number of sections
//! sections   count x { name_len u16, name utf-8, len u64, payload }
//! ```
//!
//! Section payloads are opaque bytes; trainers store parameter sets and
//! `key=value` text in them.

use crate::error::{Result, TensorError};
use crate::params::ParameterSet;
use crate::real::Real;
use crate::tensor::Tensor;

pub const PARAMS_MAGIC: &[u8; 4] = b"BBFP";
pub const CONTAINER_MAGIC: &[u8; 4] = b"BBFC";
pub const VERSION: u16 = 1;

const MAX_RANK: usize = 8;

fn err(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn new(buf: &'b [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.remaining() < n {
            return Err(err(format!("truncated: need {n} bytes at offset {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
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

    fn name(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| err("name is not utf-8"))
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| err(format!("name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

/// Serializes a parameter set (values only; gradients are not stored).
pub fn encode_params<R: Real>(set: &ParameterSet<R>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(32 + set.num_scalars() * R::BYTES);
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(R::DTYPE);
    out.push(0);
    out.extend_from_slice(&set.rng_seed().to_le_bytes());
    let count = u32::try_from(set.len()).map_err(|_| err("too many entries"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in set.iter() {
        write_name(&mut out, name)?;
        if t.shape().len() > MAX_RANK {
            return Err(err(format!("rank of `{name}` exceeds {MAX_RANK}")));
        }
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| err("extent too large"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    for (_, t) in set.iter() {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

fn read_scalar<R: Real>(bytes: &[u8], dtype: u8) -> R {
    match dtype {
        1 => R::lit(f32::read_le(bytes) as f64),
        _ => R::lit(f64::read_le(bytes)),
    }
}

/// Parses a parameter set. Never panics on malformed input.
pub fn decode_params<R: Real>(bytes: &[u8]) -> Result<ParameterSet<R>> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != PARAMS_MAGIC {
        return Err(err("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let dtype = r.u8()?;
    let width = match dtype {
        1 => 4,
        2 => 8,
        other => return Err(err(format!("unknown dtype {other}"))),
    };
    let _reserved = r.u8()?;
    let seed = r.u64()?;
    let count = r.u32()? as usize;
    let mut manifest = Vec::new();
    let mut total: usize = 0;
    for _ in 0..count {
        let name = r.name()?;
        let rank = r.u8()? as usize;
        if rank > MAX_RANK {
            return Err(err(format!("rank {rank} exceeds {MAX_RANK}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| err("extent overflow"))?;
        total = total.checked_add(n).ok_or_else(|| err("extent overflow"))?;
        manifest.push((name, shape, n));
    }
    let need = total.checked_mul(width).ok_or_else(|| err("extent overflow"))?;
    if r.remaining() != need {
        return Err(err(format!(
            "value section holds {} bytes, manifest requires {need}",
            r.remaining()
        )));
    }
    let mut set = ParameterSet::new(seed);
    for (name, shape, n) in manifest {
        let raw = r.take(n * width)?;
        let data: Vec<R> = raw.chunks_exact(width).map(|c| read_scalar(c, dtype)).collect();
        let t = Tensor::new(shape, data)?;
        set.insert(&name, t).map_err(|_| err(format!("duplicate entry `{name}`")))?;
    }
    Ok(set)
}

/// Ordered named byte sections.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Container {
    sections: Vec<(String, Vec<u8>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a section.
    pub fn put(&mut self, name: &str, payload: Vec<u8>) {
        if let Some(slot) = self.sections.iter_mut().find(|(n, _)| n == name) {
            slot.1 = payload;
        } else {
            self.sections.push((name.to_string(), payload));
        }
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[u8]> {
        self.get(name).ok_or_else(|| err(format!("missing section `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.sections.len()).map_err(|_| err("too many sections"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, payload) in &self.sections {
            write_name(&mut out, name)?;
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        Ok(out)
    }

    /// Parses a container. Never panics on malformed input.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != CONTAINER_MAGIC {
            return Err(err("bad magic"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut c = Container::new();
        for _ in 0..count {
            let name = r.name()?;
            let len = usize::try_from(r.u64()?).map_err(|_| err("section too large"))?;
            let payload = r.take(len)?.to_vec();
            if c.get(&name).is_some() {
                return Err(err(format!("duplicate section `{name}`")));
            }
            c.sections.push((name, payload));
        }
        if r.remaining() != 0 {
            return Err(err("trailing bytes"));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParameterSet<f32> {
        let mut p = ParameterSet::new(42);
        p.insert("enc.w", Tensor::from_f64(&[2, 3], &[1.0, -2.0, 3.5, 0.0, 1e-3, 7.0]).unwrap())
            .unwrap();
        p.insert("head.b", Tensor::from_f64(&[1], &[0.25]).unwrap()).unwrap();
        p
    }

    #[test]
    fn header_layout_is_stable() {
        let bytes = encode_params(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"BBFP");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 42);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        // manifest: "enc.w" rank 2 (2,3); "head.b" rank 1 (1)
        let manifest = 2 + 5 + 1 + 8 + 2 + 6 + 1 + 4;
        assert_eq!(bytes.len(), 20 + manifest + 7 * 4);
    }

    #[test]
    fn cross_precision_load() {
        let bytes = encode_params(&sample()).unwrap();
        let wide: ParameterSet<f64> = decode_params(&bytes).unwrap();
        assert_eq!(wide.get("head.b").unwrap().data(), &[0.25]);
        assert_eq!(wide.rng_seed(), 42);
    }

    #[test]
    fn rejects_truncation_and_oversized_manifest() {
        let bytes = encode_params(&sample()).unwrap();
        for cut in [0, 3, 10, 25, bytes.len() - 1] {
            assert!(decode_params::<f32>(&bytes[..cut]).is_err());
        }
        let mut huge = bytes[..16].to_vec();
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.extend_from_slice(&1u16.to_le_bytes());
        huge.push(b'x');
        huge.push(2);
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_params::<f32>(&huge).is_err());
    }

    #[test]
    fn container_sections() {
        let mut c = Container::new();
        c.put("a", vec![1, 2, 3]);
        c.put("b", vec![]);
        c.put("a", vec![9]);
        let back = Container::decode(&c.encode().unwrap()).unwrap();
        assert_eq!(back.get("a"), Some(&[9u8][..]));
        assert_eq!(back.names().collect::<Vec<_>>(), ["a", "b"]);
        assert!(back.require("zzz").is_err());
    }
}
