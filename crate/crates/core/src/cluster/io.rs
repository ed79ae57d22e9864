//! MDSC clustering files.
//!
//! ```text
//! "MDSC" | version u8 = 1 | converged u8 | 2 reserved bytes (0) | D u32 | N u64
//! k u32 | iterations u32 | seed u64 | objective f64 | input digest (32 bytes)
//! k x D f64 centroids, row-major
//! N x u32 assignment | N x f64 distance
//! H u32 | H x f64 objective history
//! ```

use std::fs;
use std::path::Path;

use super::{Centroids, ClusterError, Clustering};
use crate::corpus::dist::ByteReader;

pub const MAGIC: &[u8; 4] = b"MDSC";
pub const VERSION: u8 = 1;

impl Clustering {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.centroids.dim();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[VERSION, u8::from(self.converged), 0, 0]);
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.assignments.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.iterations as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.objective.to_le_bytes());
        let digest = hex::decode(&self.input_digest).unwrap_or_default();
        let mut raw = [0u8; 32];
        let n = digest.len().min(32);
        raw[..n].copy_from_slice(&digest[..n]);
        out.extend_from_slice(&raw);
        for c in self.centroids.as_slice() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for a in &self.assignments {
            out.extend_from_slice(&a.to_le_bytes());
        }
        for d in &self.distances {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(self.objective_history.len() as u32).to_le_bytes());
        for h in &self.objective_history {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClusterError> {
        let fmt = |e: crate::corpus::CorpusError| ClusterError::Format(e.to_string());
        let mut r = ByteReader::new(bytes, "MDSC");
        if r.take(4).map_err(fmt)? != MAGIC {
            return Err(ClusterError::Format("bad magic bytes, expected \"MDSC\"".into()));
        }
        let version = r.u8().map_err(fmt)?;
        if version != VERSION {
            return Err(ClusterError::Format(format!("unsupported version {version}")));
        }
        let converged = r.u8().map_err(fmt)? != 0;
        r.take(2).map_err(fmt)?;
        let dim = r.u32().map_err(fmt)? as usize;
        let n = r.u64().map_err(fmt)? as usize;
        let k = r.u32().map_err(fmt)? as usize;
        let iterations = r.u32().map_err(fmt)? as usize;
        let seed = r.u64().map_err(fmt)?;
        let objective = r.f64().map_err(fmt)?;
        let input_digest = hex::encode(r.take(32).map_err(fmt)?);
        let mut centroids = Vec::with_capacity(k * dim);
        for _ in 0..k * dim {
            centroids.push(r.f64().map_err(fmt)?);
        }
        let assignments = r.u32s(n).map_err(fmt)?;
        if let Some(bad) = assignments.iter().find(|&&a| a as usize >= k) {
            return Err(ClusterError::Format(format!("assignment {bad} >= k = {k}")));
        }
        let mut distances = Vec::with_capacity(n);
        for _ in 0..n {
            distances.push(r.f64().map_err(fmt)?);
        }
        let h = r.u32().map_err(fmt)? as usize;
        let mut objective_history = Vec::with_capacity(h.min(1 << 16));
        for _ in 0..h {
            objective_history.push(r.f64().map_err(fmt)?);
        }
        if !r.is_at_end() {
            return Err(ClusterError::Format("trailing bytes".into()));
        }
        Ok(Clustering {
            k,
            centroids: Centroids::new(dim, centroids)?,
            assignments,
            distances,
            objective,
            objective_history,
            iterations,
            converged,
            seed,
            input_digest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClusterError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| ClusterError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClusterError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ClusterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
