//! Sentence embeddings and the MDSE container.
//!
//! ```text
//! "MDSE" | version u8 = 1 | 3 reserved bytes (0) | D u32 | N u64
//! N x D f32, row-major
//! N x (id_len u32 | id bytes)
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::dist::ByteReader;
use super::CorpusError;
use crate::digest::DigestWriter;

pub const MAGIC: &[u8; 4] = b"MDSE";
pub const VERSION: u8 = 1;

/// One `dim`-dimensional row per sentence id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    /// Build from row-major data. Rejects ragged shapes, non-finite values and
    /// duplicate ids.
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self, CorpusError> {
        if dim == 0 {
            return Err(CorpusError::header("embedding dimension must be at least 1"));
        }
        if data.len() != dim * ids.len() {
            return Err(CorpusError::RowCountMismatch {
                expected: ids.len(),
                found: data.len() / dim,
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(CorpusError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(CorpusError::EmptyId { line: None });
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            dim,
            data,
            ids,
            index,
        })
    }

    pub fn from_rows<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, Vec<f32>)>,
    ) -> Result<Self, CorpusError> {
        let mut dim = None;
        let mut data = Vec::new();
        let mut ids = Vec::new();
        for (id, row) in rows {
            let d = *dim.get_or_insert(row.len());
            if row.len() != d {
                return Err(CorpusError::header(format!(
                    "row {} has dimension {}, expected {d}",
                    ids.len(),
                    row.len()
                )));
            }
            data.extend(row);
            ids.push(id.into());
        }
        Self::new(dim.unwrap_or(1), data, ids)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copy with every non-zero row scaled to unit Euclidean length.
    pub fn normalized(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dim) {
            let norm = row
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for x in row {
                    *x = (f64::from(*x) / norm) as f32;
                }
            }
        }
        Self {
            dim: self.dim,
            data,
            ids: self.ids.clone(),
            index: self.index.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, 0, 0, 0])?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        for id in &self.ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// SHA-256 of the canonical MDSE encoding. Clusterings record it so that
    /// distances are never paired with a different matrix.
    pub fn digest(&self) -> String {
        let mut w = DigestWriter::new();
        self.write_to(&mut w).expect("hashing cannot fail");
        w.finish_hex()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
        self.write_to(io::BufWriter::new(file))
            .map_err(|e| CorpusError::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut r = ByteReader::new(bytes, "MDSE");
        if r.take(4)? != MAGIC {
            return Err(CorpusError::BadMagic { expected: "MDSE" });
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(CorpusError::UnsupportedVersion {
                format: "MDSE",
                version,
            });
        }
        r.take(3)?;
        let dim = r.u32()? as usize;
        let n = r.u64()? as usize;
        if dim == 0 {
            return Err(CorpusError::header("embedding dimension must be at least 1"));
        }
        let values = n.checked_mul(dim).ok_or(CorpusError::RowCountMismatch {
            expected: n,
            found: 0,
        })?;
        let available = (bytes.len().saturating_sub(20)) / 4;
        if values > available {
            return Err(CorpusError::RowCountMismatch {
                expected: n,
                found: available / dim,
            });
        }
        let data = r.f32s(values)?;
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(CorpusError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(r.string()?);
        }
        if !r.is_at_end() {
            return Err(CorpusError::TrailingBytes { format: "MDSE" });
        }
        Self::new(dim, data, ids)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
