//! Named-tensor checkpoint archive.
//!
//! Layout, all little-endian:
//!   magic "WVNC" | version u32 | entry count u32 |
//!   per entry: name length u32, UTF-8 name, ndim u32, dims u64 each,
//!   values f64 each | CRC32 (IEEE) of every preceding byte.
//!
//! Entries are kept sorted by name, so save -> load -> save reproduces the
//! file byte for byte. The CRC is verified before any entry is parsed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use wavenet_core::Tensor;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"WVNC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    /// Insert an entry; names are unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(CliError::Format(format!(
                "duplicate checkpoint entry '{name}'"
            )));
        }
        self.entries.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| CliError::Format(format!("checkpoint missing entry '{name}'")))
    }

    /// Scalar convenience accessor.
    pub fn require_scalar(&self, name: &str) -> Result<f64> {
        let t = self.require(name)?;
        t.item()
            .map_err(|_| CliError::Format(format!("entry '{name}' is not a scalar")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.ndim() as u32).to_le_bytes());
            for &d in tensor.dims() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + 4 {
            return Err(CliError::Format("checkpoint too short".into()));
        }
        // CRC gate first: any corruption, including in length fields, is
        // rejected before parsing trusts them.
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32(body);
        if stored != actual {
            return Err(CliError::Format(format!(
                "checkpoint CRC mismatch: stored {stored:#010x}, computed {actual:#010x}; refusing to load"
            )));
        }
        let mut r = Reader { buf: body, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(CliError::Format(format!(
                "bad checkpoint magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Format(format!(
                "unsupported checkpoint version {version} (have {VERSION})"
            )));
        }
        let count = r.u32()? as usize;
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name_bytes = r.take(name_len)?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| CliError::Format("entry name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let len: usize = dims.iter().product();
            let remaining = r.buf.len() - r.pos;
            if len.checked_mul(8).map_or(true, |b| b > remaining) {
                return Err(CliError::Format(format!(
                    "entry '{name}' claims {len} values but only {remaining} bytes remain"
                )));
            }
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
            }
            let tensor = Tensor::new(&dims, data)
                .map_err(|e| CliError::Format(format!("entry '{name}': {e}")))?;
            ck.insert(&name, tensor)?;
        }
        if r.pos != r.buf.len() {
            return Err(CliError::Format(format!(
                "{} trailing bytes after the last entry",
                r.buf.len() - r.pos
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CliError::Format(msg) => CliError::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CliError::Format(format!(
                "checkpoint truncated at byte {}",
                self.buf.len()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB88320 & mask);
        }
    }
    !crc
}

#[cfg(test)]
mod tests {
    use super::*;
    use wavenet_core::Rng;

    #[test]
    fn crc32_known_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF43926);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut ck = Checkpoint::new();
        let mut rng = Rng::new(1);
        ck.insert("b.weight", Tensor::rand_uniform(&mut rng, &[3, 4])).unwrap();
        ck.insert("a.bias", Tensor::rand_uniform(&mut rng, &[7])).unwrap();
        let bytes1 = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes1).unwrap();
        let bytes2 = back.to_bytes();
        assert_eq!(bytes1, bytes2);
        assert_eq!(back, ck);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut ck = Checkpoint::new();
        ck.insert("x", Tensor::zeros(&[1])).unwrap();
        assert!(ck.insert("x", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn crc_detects_single_bit_flips() {
        let mut ck = Checkpoint::new();
        let mut rng = Rng::new(2);
        ck.insert("w", Tensor::rand_uniform(&mut rng, &[4, 4])).unwrap();
        ck.insert("v", Tensor::rand_uniform(&mut rng, &[16])).unwrap();
        let bytes = ck.to_bytes();
        let mut flip_rng = Rng::new(3);
        for trial in 0..100 {
            let mut corrupted = bytes.clone();
            let bit = flip_rng.below(bytes.len() * 8);
            corrupted[bit / 8] ^= 1 << (bit % 8);
            assert!(
                Checkpoint::from_bytes(&corrupted).is_err(),
                "trial {trial}: flip of bit {bit} went undetected"
            );
        }
    }

    #[test]
    fn truncation_and_bad_magic_rejected() {
        let mut ck = Checkpoint::new();
        ck.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..3]).is_err());
    }
}
