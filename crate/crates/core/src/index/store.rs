use std::fs;
use std::path::Path;

use super::VectorIndex;
use crate::catalog::RenderingId;
use crate::encoder::write_atomic;
use crate::error::{Error, Result};
use crate::rng::fnv1a64;

const MAGIC: &[u8; 8] = b"TDINDEX1";
const VERSION: u32 = 1;

impl VectorIndex {
    /// Layout (little-endian): magic `TDINDEX1`, version `u32`, `n: u64`,
    /// `dim: u64`, rendering code `u8`, fingerprint (`u32` length + UTF-8),
    /// `n` ids (`u32` length + UTF-8 each), `n * dim` `f64` values, then a
    /// `u64` FNV-1a checksum of every preceding byte.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        buf.push(self.rendering.code());
        put_str(&mut buf, &self.fingerprint);
        for id in &self.ids {
            put_str(&mut buf, id);
        }
        for v in &self.vectors {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let sum = fnv1a64(&buf);
        buf.extend_from_slice(&sum.to_le_bytes());
        write_atomic(path.as_ref(), &buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |reason: String| Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 8 + 4 + 8 + 8 + 1 + 8 {
            return Err(corrupt("file shorter than header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let n = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let rendering = RenderingId::from_code(r.take(1)?[0])
            .ok_or_else(|| corrupt("unknown rendering code".into()))?;
        let fingerprint = r.string()?;
        let ids = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let expected = n
            .checked_mul(dim)
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| corrupt("shape overflow".into()))?;
        let raw = r.take(expected)?;
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes".into()));
        }
        let vectors = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(VectorIndex {
            ids,
            vectors,
            dim,
            rendering,
            fingerprint,
        })
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptCheckpoint {
                path: Default::default(),
                reason: "unexpected end of index file".into(),
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::CorruptCheckpoint {
            path: Default::default(),
            reason: "id is not valid UTF-8".into(),
        })
    }
}
