//! Embedding matrices and their binary store.
//!
//! Layout (all little-endian):
//! `WVEM` | version u16 | count u64 | dim u32 | space u8 |
//! config length u32 | config UTF-8 | per row: id length u32, id UTF-8 |
//! count·dim f32 payload, row-major.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"WVEM";
pub const EMBEDDING_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSpace {
    /// Backbone representation `h`.
    Backbone,
    /// Projection-head output `z`.
    Projected,
}

impl EmbeddingSpace {
    fn tag(self) -> u8 {
        match self {
            EmbeddingSpace::Backbone => 0,
            EmbeddingSpace::Projected => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(EmbeddingSpace::Backbone),
            1 => Ok(EmbeddingSpace::Projected),
            other => Err(Error::Format(format!("unknown embedding space tag {other}"))),
        }
    }
}

impl std::str::FromStr for EmbeddingSpace {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "backbone" => Ok(EmbeddingSpace::Backbone),
            "projected" => Ok(EmbeddingSpace::Projected),
            other => Err(format!("unknown embedding space {other:?} (backbone or projected)")),
        }
    }
}

/// N×D embeddings with row-aligned identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub ids: Vec<String>,
    pub space: EmbeddingSpace,
    /// Resolved run configuration that produced the matrix.
    pub config: String,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>, space: EmbeddingSpace) -> Result<Self> {
        let m = Self {
            rows: ids.len(),
            dim,
            data,
            ids,
            space,
            config: String::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.rows * self.dim || self.ids.len() != self.rows {
            return Err(Error::Input(format!(
                "embedding matrix shape mismatch: {} rows x {} dims, {} values, {} ids",
                self.rows,
                self.dim,
                self.data.len(),
                self.ids.len()
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Computation(format!(
                "non-finite embedding value in row {} ({})",
                i / self.dim.max(1),
                self.ids[i / self.dim.max(1)]
            )));
        }
        let mut seen = HashSet::with_capacity(self.rows);
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Input(format!("duplicate embedding id {id:?}")));
            }
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Rows as f64 vectors.
    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks_exact(self.dim.max(1))
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect()
    }

    /// Select rows by id, in the given order.
    pub fn select(&self, ids: &[&str]) -> Result<EmbeddingMatrix> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let i = self
                .index_of(id)
                .ok_or_else(|| Error::Input(format!("id {id:?} not in embedding matrix")))?;
            data.extend_from_slice(self.row(i));
        }
        Ok(EmbeddingMatrix {
            rows: ids.len(),
            dim: self.dim,
            data,
            ids: ids.iter().map(|s| s.to_string()).collect(),
            space: self.space,
            config: self.config.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|s| 4 + s.len()).sum();
        let mut out = Vec::with_capacity(23 + self.config.len() + id_bytes + self.data.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.push(self.space.tag());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != EMBEDDING_MAGIC {
            return Err(Error::Format(format!("bad embedding file magic {magic:?}")));
        }
        let version = u16::from_le_bytes(take(&mut r, "version")?);
        if version != EMBEDDING_VERSION {
            return Err(Error::Format(format!("unsupported embedding file version {version}")));
        }
        let rows = u64::from_le_bytes(take(&mut r, "count")?) as usize;
        let dim = u32::from_le_bytes(take(&mut r, "dim")?) as usize;
        let space = EmbeddingSpace::from_tag(take::<1>(&mut r, "space")?[0])?;
        let config = read_string(&mut r, "config")?;
        // each id needs at least its 4-byte length
        if rows > r.len() / 4 {
            return Err(Error::Format(format!("truncated id table: {rows} ids declared")));
        }
        let mut ids = Vec::with_capacity(rows);
        for _ in 0..rows {
            ids.push(read_string(&mut r, "id table")?);
        }
        let want = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("embedding size overflow".into()))?;
        if r.len() != want {
            return Err(Error::Format(format!(
                "payload is {} bytes, expected {want} ({rows} x {dim} x 4)",
                r.len()
            )));
        }
        let data = r
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            rows,
            dim,
            data,
            ids,
            space,
            config,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated embedding file ({what})")))
}

fn take<const N: usize>(r: &mut &[u8], what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    read_exact(r, &mut b, what)?;
    Ok(b)
}

fn read_string(r: &mut &[u8], what: &str) -> Result<String> {
    let len = u32::from_le_bytes(take(r, what)?) as usize;
    if len > r.len() {
        return Err(Error::Format(format!("truncated embedding file ({what})")));
    }
    let (s, rest) = r.split_at(len);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|_| Error::Format(format!("invalid UTF-8 in {what}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrix {
        let mut m = EmbeddingMatrix::new(
            3,
            vec![1.0, -2.5, 0.0, 3.25, 1e-7, -0.0],
            vec!["a".into(), "bé".into()],
            EmbeddingSpace::Projected,
        )
        .unwrap();
        m.config = "{\"seed\":1}".into();
        m
    }

    #[test]
    fn round_trip_bit_exact() {
        let m = sample();
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let bits = |m: &EmbeddingMatrix| m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn rejects_corruption() {
        let mut b = sample().to_bytes();
        b[0] = b'X';
        assert!(matches!(EmbeddingMatrix::from_bytes(&b), Err(Error::Format(_))));
        let b = sample().to_bytes();
        assert!(matches!(EmbeddingMatrix::from_bytes(&b[..b.len() - 1]), Err(Error::Format(_))));
        let mut b = sample().to_bytes();
        b[4] = 9;
        assert!(EmbeddingMatrix::from_bytes(&b).is_err());
    }

    #[test]
    fn file_size_arithmetic() {
        let rows = 10_000;
        let dim = 128;
        let ids: Vec<String> = (0..rows).map(|i| format!("img{i:05}")).collect();
        let m = EmbeddingMatrix::new(dim, vec![0.5; rows * dim], ids, EmbeddingSpace::Backbone).unwrap();
        let header = 4 + 2 + 8 + 4 + 1 + 4;
        let id_table = rows * (4 + 8);
        assert_eq!(m.to_bytes().len(), header + id_table + rows * dim * 4);
    }

    #[test]
    fn validation() {
        assert!(EmbeddingMatrix::new(2, vec![0.0; 4], vec!["a".into(), "a".into()], EmbeddingSpace::Backbone).is_err());
        assert!(EmbeddingMatrix::new(2, vec![f32::NAN, 0.0], vec!["a".into()], EmbeddingSpace::Backbone).is_err());
        assert!(EmbeddingMatrix::new(2, vec![0.0; 3], vec!["a".into()], EmbeddingSpace::Backbone).is_err());
    }
}
