//! Flat binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SGMM"  magic
//! u32     format version
//! repeated until EOF:
//!   u32     name length in bytes
//!   [u8]    UTF-8 name
//!   u32     rank
//!   u32[]   dims
//!   f64[]   payload, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{NumError, ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"SGMM";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumError> {
        if self.buf.len() - self.pos < n {
            return Err(NumError::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore, NumError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(NumError::Checkpoint("missing SGMM magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(NumError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let mut store = ParamStore::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| NumError::Checkpoint(format!("record name is not UTF-8: {e}")))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let payload = r.take(
            n.checked_mul(8)
                .ok_or_else(|| NumError::Checkpoint(format!("record `{name}` is too large")))?,
        )?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if store.contains(&name) {
            return Err(NumError::Checkpoint(format!("duplicate record `{name}`")));
        }
        store.insert(&name, Tensor::new(dims, data)?);
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> std::io::Result<()> {
    fs::write(path, encode(store))
}

pub fn load(path: &Path) -> Result<ParamStore, NumError> {
    let bytes =
        fs::read(path).map_err(|e| NumError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
