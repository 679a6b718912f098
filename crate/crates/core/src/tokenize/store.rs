//! Binary token store.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"VCRT"  u32 version (=1)
//! u64 n  u32 d  u32 hops  u32 structure_k  u32 content_k  f64 alpha  f64 eps  u64 seed
//! n times:  u64 id  u32 row_count  row_count*(d+1) f32  row_count mask bytes (0/1)
//! u32 CRC-32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VCRT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 * 4 + 8 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreHeader {
    pub n: u64,
    pub d: u32,
    pub hops: u32,
    pub structure_k: u32,
    pub content_k: u32,
    pub alpha: f64,
    pub eps: f64,
    pub seed: u64,
}

impl StoreHeader {
    /// Token rows per node: `1 + L + k_structure + k_content`.
    pub fn rows_per_node(&self) -> usize {
        1 + self.hops as usize + self.structure_k as usize + self.content_k as usize
    }

    pub fn token_width(&self) -> usize {
        self.d as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub id: u64,
    /// Row-major `rows x (d + 1)`.
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
}

impl TokenRecord {
    pub fn row_count(&self) -> usize {
        self.mask.len()
    }

    pub fn row(&self, i: usize, width: usize) -> &[f32] {
        &self.values[i * width..(i + 1) * width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenStore {
    pub header: StoreHeader,
    pub records: Vec<TokenRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Format(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl TokenStore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let width = h.token_width();
        let payload: usize = self.records.iter().map(|r| 12 + r.row_count() * (width * 4 + 1)).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + payload + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&h.n.to_le_bytes());
        for x in [h.d, h.hops, h.structure_k, h.content_k] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&h.alpha.to_le_bytes());
        out.extend_from_slice(&h.eps.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.id.to_le_bytes());
            out.extend_from_slice(&(r.row_count() as u32).to_le_bytes());
            for x in &r.values {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend(r.mask.iter().map(|&m| u8::from(m)));
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        // Checksum first so that corruption is reported as such rather than
        // as whatever structural error the flipped bytes happen to cause.
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let header = StoreHeader {
            n: r.u64("n")?,
            d: r.u32("d")?,
            hops: r.u32("hops")?,
            structure_k: r.u32("structure_k")?,
            content_k: r.u32("content_k")?,
            alpha: r.f64("alpha")?,
            eps: r.f64("eps")?,
            seed: r.u64("seed")?,
        };
        let width = header.token_width();
        let mut records = Vec::with_capacity(header.n.min(1 << 24) as usize);
        for i in 0..header.n {
            let id = r.u64("record id")?;
            let rows = r.u32("row count")? as usize;
            let raw = r.take(rows * width * 4, "token values")?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let mask = r
                .take(rows, "mask")?
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Format(format!("record {i}: mask byte {other}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(TokenRecord { id, values, mask });
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} unexpected trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { header, records })
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".json");
        PathBuf::from(name)
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({ "format": "VCRT", "version": FORMAT_VERSION, "header": self.header })
    }

    /// Writes the store and its `<path>.json` header sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&self.sidecar_json())? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
