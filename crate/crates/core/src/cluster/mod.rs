//! Seeded k-means (k-means++ seeding, Lloyd iterations) over sentence
//! embeddings.
//!
//! Only the assignment phase runs in parallel; every reduction happens in
//! input-row order, so a fit is bitwise reproducible for a given seed no
//! matter how many worker threads are available.

mod io;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::EmbeddingMatrix;
use crate::rng::ManifestRng;

pub use io::{MAGIC, VERSION};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("cannot fit {k} clusters to {n} points")]
    TooManyClusters { k: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("malformed clustering file: {0}")]
    Format(String),
}

/// `k` row vectors of dimension `dim`, stored row-major in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    dim: usize,
    data: Vec<f64>,
}

impl Centroids {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, ClusterError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(ClusterError::DimensionMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ClusterError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(ClusterError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }
}

fn squared_distance(point: &[f32], centroid: &[f64]) -> f64 {
    point
        .iter()
        .zip(centroid)
        .map(|(&x, &c)| {
            let d = f64::from(x) - c;
            d * d
        })
        .sum()
}

/// Nearest centroid by squared distance; the lowest index wins exact ties.
fn nearest(point: &[f32], centroids: &Centroids) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centroids.len() {
        let d = squared_distance(point, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Index of the nearest centroid and the Euclidean distance to it.
pub fn assign(point: &[f32], centroids: &Centroids) -> Result<(usize, f64), ClusterError> {
    if point.len() != centroids.dim() {
        return Err(ClusterError::DimensionMismatch {
            expected: centroids.dim(),
            found: point.len(),
        });
    }
    if centroids.is_empty() {
        return Err(ClusterError::ZeroClusters);
    }
    let (j, d2) = nearest(point, centroids);
    Ok((j, d2.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

/// `round(sqrt(n / 2))` clamped to `[2, 1024]`, and never above `n`.
pub fn default_k(n: usize) -> usize {
    let k = ((n as f64 / 2.0).sqrt().round() as usize).clamp(2, 1024);
    k.min(n)
}

fn check_shape(emb: &EmbeddingMatrix, k: usize) -> Result<(), ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > emb.rows() {
        return Err(ClusterError::TooManyClusters { k, n: emb.rows() });
    }
    Ok(())
}

fn seed_rows(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Vec<usize> {
    let n = emb.rows();
    let mut rng = ManifestRng::new(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.index(n);
    chosen.push(first);
    taken[first] = true;
    let c: Vec<f64> = emb.row(first).iter().map(|&x| f64::from(x)).collect();
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| squared_distance(emb.row(i), &c))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.unit_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining point coincides with a chosen centroid
            taken.iter().position(|&t| !t).expect("k <= n")
        };
        chosen.push(next);
        taken[next] = true;
        let c: Vec<f64> = emb.row(next).iter().map(|&x| f64::from(x)).collect();
        d2.par_iter_mut().enumerate().for_each(|(i, w)| {
            *w = w.min(squared_distance(emb.row(i), &c));
        });
        d2[next] = 0.0;
    }
    chosen
}

/// k-means++ seeding: the first centroid is a uniformly drawn point, each
/// further one a point drawn with probability proportional to its squared
/// distance to the nearest centroid chosen so far.
pub fn kmeans_pp_init(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<Centroids, ClusterError> {
    check_shape(emb, k)?;
    let rows = seed_rows(emb, k, seed);
    let mut data = Vec::with_capacity(k * emb.dim());
    for r in rows {
        data.extend(emb.row(r).iter().map(|&x| f64::from(x)));
    }
    Centroids::new(emb.dim(), data)
}

/// A fitted clustering, tied to its input matrix by digest.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Centroids,
    pub assignments: Vec<u32>,
    pub distances: Vec<f64>,
    /// Sum of squared assigned distances.
    pub objective: f64,
    /// Objective after each assignment step, final assignment included.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub input_digest: String,
}

impl Clustering {
    pub fn recomputed_objective(&self) -> f64 {
        self.distances.iter().map(|d| d * d).sum()
    }
}

struct Assignment {
    labels: Vec<u32>,
    squared: Vec<f64>,
}

fn assign_all(emb: &EmbeddingMatrix, centroids: &Centroids) -> Assignment {
    let pairs: Vec<(u32, f64)> = (0..emb.rows())
        .into_par_iter()
        .map(|i| {
            let (j, d2) = nearest(emb.row(i), centroids);
            (j as u32, d2)
        })
        .collect();
    let (labels, squared) = pairs.into_iter().unzip();
    Assignment { labels, squared }
}

/// Lloyd iterations from a k-means++ start until the largest centroid move is
/// below `tol` or `max_iter` is reached.
///
/// A cluster left empty after an assignment step is reseeded with the point
/// farthest from its own centroid (lowest row index on ties; each point
/// reseeds at most one cluster per iteration).
pub fn kmeans_fit(emb: &EmbeddingMatrix, config: &KMeansConfig) -> Result<Clustering, ClusterError> {
    let k = config.k;
    check_shape(emb, k)?;
    let dim = emb.dim();
    let n = emb.rows();
    let mut centroids = kmeans_pp_init(emb, k, config.seed)?;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iter {
        iterations += 1;
        let current = assign_all(emb, &centroids);
        history.push(current.squared.iter().sum::<f64>());

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let j = current.labels[i] as usize;
            counts[j] += 1;
            for (s, &x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(emb.row(i)) {
                *s += f64::from(x);
            }
        }
        let mut next = Centroids::new(dim, sums)?;
        let mut reseeded = vec![false; n];
        for (j, &count) in counts.iter().enumerate() {
            if count == 0 {
                let mut far: Option<usize> = None;
                for (i, &used) in reseeded.iter().enumerate() {
                    if used {
                        continue;
                    }
                    if far.is_none_or(|f| current.squared[i] > current.squared[f]) {
                        far = Some(i);
                    }
                }
                let far = far.expect("k <= n leaves a point to reseed with");
                reseeded[far] = true;
                for (c, &x) in next.row_mut(j).iter_mut().zip(emb.row(far)) {
                    *c = f64::from(x);
                }
            } else {
                let count = count as f64;
                for c in next.row_mut(j) {
                    *c /= count;
                }
            }
        }

        let shift = (0..k)
            .map(|j| {
                centroids
                    .row(j)
                    .iter()
                    .zip(next.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = next;
        if shift < config.tol {
            converged = true;
            break;
        }
    }

    let last = assign_all(emb, &centroids);
    let objective = last.squared.iter().sum::<f64>();
    history.push(objective);
    Ok(Clustering {
        k,
        centroids,
        assignments: last.labels,
        distances: last.squared.into_iter().map(f64::sqrt).collect(),
        objective,
        objective_history: history,
        iterations,
        converged,
        seed: config.seed,
        input_digest: emb.digest(),
    })
}
