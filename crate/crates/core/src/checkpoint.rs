//! Versioned binary checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "HWCKPT\0\0"
//! version    u32      currently 1
//! config     u64 length + UTF-8 TOML of the resolved run configuration
//! users      u64 count, then per name: u32 length + UTF-8 bytes
//! items      same as users
//! matrices   u64 count, then per matrix:
//!              u32 length + UTF-8 name, u64 rows, u64 cols,
//!              rows * cols f64 values in row-major order
//! checksum   u32 CRC-32 of every preceding byte
//! ```

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HWCKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_toml: String,
    pub user_names: Vec<String>,
    pub item_names: Vec<String>,
    /// Named matrices in write order.
    pub matrices: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn matrix(&self, name: &str) -> Option<&Array2<f64>> {
        self.matrices.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn require(&self, name: &str) -> Result<&Array2<f64>> {
        self.matrix(name)
            .ok_or_else(|| Error::Checkpoint(format!("matrix `{name}` not present")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_toml.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config_toml.as_bytes());
        for names in [&self.user_names, &self.item_names] {
            out.extend_from_slice(&(names.len() as u64).to_le_bytes());
            for n in names {
                put_str(&mut out, n);
            }
        }
        out.extend_from_slice(&(self.matrices.len() as u64).to_le_bytes());
        for (name, m) in &self.matrices {
            put_str(&mut out, name);
            out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
        }
        let mut r = Reader { bytes, pos: MAGIC.len() };
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version} (this build reads {VERSION})")));
        }
        if bytes.len() < 4 {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let crc_ok = crc32fast::hash(body) == stored;
        r.bytes = body;

        let parse = |r: &mut Reader<'_>| -> Result<Checkpoint> {
            let config_toml = r.string_u64("config")?;
            let user_names = r.names("user ids")?;
            let item_names = r.names("item ids")?;
            let n = r.u64("matrix count")? as usize;
            let mut matrices = Vec::new();
            for k in 0..n {
                let name = r.string_u32(&format!("matrix {k} name"))?;
                let rows = r.u64(&format!("`{name}` rows"))? as usize;
                let cols = r.u64(&format!("`{name}` cols"))? as usize;
                let count = rows
                    .checked_mul(cols)
                    .filter(|c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                    .ok_or_else(|| {
                        Error::Checkpoint(format!(
                            "`{name}` declares shape {rows}x{cols} but only {} payload bytes remain",
                            r.remaining()
                        ))
                    })?;
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    values.push(f64::from_le_bytes(r.take(8, &name)?.try_into().expect("8 bytes")));
                }
                let m = Array2::from_shape_vec((rows, cols), values).expect("length checked");
                matrices.push((name, m));
            }
            if r.remaining() != 0 {
                return Err(Error::Checkpoint(format!("{} trailing bytes after last matrix", r.remaining())));
            }
            Ok(Checkpoint {
                config_toml,
                user_names,
                item_names,
                matrices,
            })
        };
        let parsed = parse(&mut r);
        match (parsed, crc_ok) {
            (Ok(c), true) => Ok(c),
            (Ok(_), false) => Err(Error::Checkpoint(format!("version {version}: checksum mismatch, payload corrupted"))),
            (Err(Error::Checkpoint(m)), _) => Err(Error::Checkpoint(format!("version {version}: {m}"))),
            (Err(e), _) => Err(e),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len().saturating_sub(self.pos)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<String> {
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }

    fn string_u32(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        self.utf8(n, what)
    }

    fn string_u64(&mut self, what: &str) -> Result<String> {
        let n = self.u64(what)? as usize;
        self.utf8(n, what)
    }

    fn names(&mut self, what: &str) -> Result<Vec<String>> {
        let n = self.u64(what)? as usize;
        if n > self.remaining() / 4 {
            return Err(Error::Checkpoint(format!("{what}: count {n} exceeds file size")));
        }
        (0..n).map(|_| self.string_u32(what)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> Checkpoint {
        Checkpoint {
            config_toml: "[model]\ndim = 2\n".into(),
            user_names: vec!["u0".into(), "u1".into()],
            item_names: vec!["i0".into()],
            matrices: vec![("a".into(), array![[1.0, -2.5], [3.0, 1e-300]]), ("b".into(), Array2::zeros((0, 3)))],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn corruption_is_diagnosed() {
        let bytes = sample().to_bytes();
        let err = |b: &[u8]| match Checkpoint::from_bytes(b) {
            Err(e @ Error::Checkpoint(_)) => {
                assert_eq!(e.exit_code(), 3);
                e.to_string()
            }
            other => panic!("{other:?}"),
        };
        assert!(err(b"garbage").contains("magic"));
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(err(&v).contains("unsupported version 9"));
        assert!(err(&bytes[..bytes.len() - 20]).contains("version 1"));
        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 10] ^= 0xff;
        assert!(err(&flipped).contains("checksum"));
    }
}
