//! Ranking, segmentation and seeded sampling of scored corpora.
//!
//! The corpus is sorted by score, cut into `S` contiguous segments of
//! near-equal size, and a fixed-size subset is drawn from one segment for
//! every seed. Each draw is persisted as a [`SelectionManifest`].

mod manifest;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ScoreTable;
use crate::rng::ManifestRng;

pub use manifest::{SegmentIndexSource, SegmentStats, SelectionManifest, MANIFEST_FORMAT};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("score table has no entries")]
    EmptyScores,
    #[error("all {0} entries are missing and the missing policy excludes them")]
    AllMissing(usize),
    #[error("segment count must be at least 1")]
    ZeroSegments,
    #[error("cannot split {len} ranked ids into {segments} segments")]
    TooManySegments { segments: usize, len: usize },
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("segment index {index} out of range for {segments} segments")]
    SegmentIndexOutOfRange { index: usize, segments: usize },
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Format(String),
}

/// Sort order of the ranking. With `Ascending`, the last segment holds the
/// highest values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Ascending,
    Descending,
}

/// Treatment of sentences without a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Leave them out of the ranking; they are listed as unscored.
    #[default]
    Exclude,
    /// Rank them below every scored sentence.
    RankLowest,
    /// Rank them above every scored sentence.
    RankHighest,
}

/// Sentence ids in rank order plus the ids left out of the ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub ids: Vec<String>,
    /// Score of each ranked id, `None` for missing values ranked by policy.
    pub values: Vec<Option<f64>>,
    pub unscored: Vec<String>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Missing-valued ids that the policy placed inside the ranking.
    pub fn missing_ranked(&self) -> impl Iterator<Item = &str> {
        self.ids
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_none())
            .map(|(id, _)| id.as_str())
    }
}

/// Stable sort by value; ties keep corpus order.
pub fn rank(
    scores: &ScoreTable,
    direction: Direction,
    policy: MissingPolicy,
) -> Result<Ranking, SelectionError> {
    if scores.is_empty() {
        return Err(SelectionError::EmptyScores);
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(scores.len());
    let mut missing: Vec<usize> = Vec::new();
    for (i, e) in scores.entries.iter().enumerate() {
        match e.value {
            Some(v) => scored.push((i, v)),
            None => missing.push(i),
        }
    }
    match direction {
        Direction::Ascending => scored.sort_by(|a, b| a.1.total_cmp(&b.1)),
        Direction::Descending => scored.sort_by(|a, b| b.1.total_cmp(&a.1)),
    }
    if scored.is_empty() && policy == MissingPolicy::Exclude {
        return Err(SelectionError::AllMissing(missing.len()));
    }

    let missing_first = matches!(
        (policy, direction),
        (MissingPolicy::RankLowest, Direction::Ascending)
            | (MissingPolicy::RankHighest, Direction::Descending)
    );
    let entry = |i: usize| &scores.entries[i];
    let mut order: Vec<(usize, Option<f64>)> = Vec::with_capacity(scores.len());
    let missing_iter = missing.iter().map(|&i| (i, None));
    let scored_iter = scored.iter().map(|&(i, v)| (i, Some(v)));
    let mut unscored = Vec::new();
    match policy {
        MissingPolicy::Exclude => {
            order.extend(scored_iter);
            unscored.extend(missing.iter().map(|&i| entry(i).id.clone()));
        }
        _ if missing_first => {
            order.extend(missing_iter);
            order.extend(scored_iter);
        }
        _ => {
            order.extend(scored_iter);
            order.extend(missing_iter);
        }
    }
    Ok(Ranking {
        ids: order.iter().map(|&(i, _)| entry(i).id.clone()).collect(),
        values: order.iter().map(|&(_, v)| v).collect(),
        unscored,
    })
}

/// Rank ranges of `segments` contiguous runs over `len` ids. When
/// `len = q * segments + r`, the first `r` runs hold `q + 1` ids.
pub fn segment_bounds(len: usize, segments: usize) -> Result<Vec<Range<usize>>, SelectionError> {
    if segments == 0 {
        return Err(SelectionError::ZeroSegments);
    }
    if segments > len {
        return Err(SelectionError::TooManySegments { segments, len });
    }
    let (q, r) = (len / segments, len % segments);
    let mut start = 0;
    Ok((0..segments)
        .map(|s| {
            let size = q + usize::from(s < r);
            let range = start..start + size;
            start += size;
            range
        })
        .collect())
}

/// Split `ranked` into `segments` contiguous slices.
pub fn segment<T>(ranked: &[T], segments: usize) -> Result<Vec<&[T]>, SelectionError> {
    Ok(segment_bounds(ranked.len(), segments)?
        .into_iter()
        .map(|r| &ranked[r])
        .collect())
}

/// The first `min(n, len)` elements of a seeded Fisher–Yates shuffle of
/// `segment`. Sampling is without replacement.
pub fn sample<T: Clone>(segment: &[T], n: usize, seed: u64) -> Result<Vec<T>, SelectionError> {
    if n == 0 {
        return Err(SelectionError::ZeroSampleSize);
    }
    let take = n.min(segment.len());
    let mut rng = ManifestRng::new(seed);
    let mut pool: Vec<usize> = (0..segment.len()).collect();
    for i in 0..take {
        let j = i + rng.index(pool.len() - i);
        pool.swap(i, j);
    }
    Ok(pool[..take].iter().map(|&i| segment[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub segments: usize,
    /// `None` uses the method's default segment.
    pub segment_index: Option<usize>,
    pub per_segment: usize,
    pub seeds: Vec<u64>,
    pub direction: Direction,
    pub missing: MissingPolicy,
}

impl Default for SelectionConfig {
    /// Four segments, 2,000 sentences per draw, three seeds.
    fn default() -> Self {
        Self {
            segments: 4,
            segment_index: None,
            per_segment: 2000,
            seeds: vec![1, 2, 3],
            direction: Direction::Ascending,
            missing: MissingPolicy::Exclude,
        }
    }
}

/// One manifest per seed for the configured segment.
pub fn select(scores: &ScoreTable, config: &SelectionConfig) -> Result<Vec<SelectionManifest>, SelectionError> {
    let (index, source) = match config.segment_index {
        Some(i) => (i, SegmentIndexSource::Explicit),
        None => (
            scores.method.default_segment(config.segments),
            SegmentIndexSource::MethodDefault,
        ),
    };
    draw(scores, config, &[index], source)
}

/// One manifest per seed for every segment, ranking the table once.
/// `config.segment_index` is ignored.
pub fn select_all_segments(
    scores: &ScoreTable,
    config: &SelectionConfig,
) -> Result<Vec<SelectionManifest>, SelectionError> {
    let indices: Vec<usize> = (0..config.segments).collect();
    draw(scores, config, &indices, SegmentIndexSource::Explicit)
}

fn draw(
    scores: &ScoreTable,
    config: &SelectionConfig,
    indices: &[usize],
    source: SegmentIndexSource,
) -> Result<Vec<SelectionManifest>, SelectionError> {
    if config.seeds.is_empty() {
        return Err(SelectionError::NoSeeds);
    }
    if config.per_segment == 0 {
        return Err(SelectionError::ZeroSampleSize);
    }
    if config.segments == 0 {
        return Err(SelectionError::ZeroSegments);
    }
    if let Some(&index) = indices.iter().find(|&&i| i >= config.segments) {
        return Err(SelectionError::SegmentIndexOutOfRange {
            index,
            segments: config.segments,
        });
    }
    let ranking = rank(scores, config.direction, config.missing)?;
    let bounds = segment_bounds(ranking.len(), config.segments)?;
    let stats: Vec<SegmentStats> = bounds
        .iter()
        .enumerate()
        .map(|(i, r)| SegmentStats::compute(i, r.clone(), &ranking.values[r.clone()]))
        .collect();
    let score_digest = scores.digest();
    let missing_ranked: Vec<String> = ranking.missing_ranked().map(str::to_owned).collect();

    let mut out = Vec::with_capacity(indices.len() * config.seeds.len());
    for &index in indices {
        let chosen = &ranking.ids[bounds[index].clone()];
        for &seed in &config.seeds {
            out.push(SelectionManifest {
                format: MANIFEST_FORMAT.to_owned(),
                tool_version: crate::TOOL_VERSION.to_owned(),
                method: scores.method,
                score_digest: score_digest.clone(),
                bundle_digest: scores.provenance.bundle_digest.clone(),
                params_digest: scores.provenance.params_digest.clone(),
                log_base: scores.provenance.log_base,
                direction: config.direction,
                missing_policy: config.missing,
                segments: config.segments,
                boundaries: bounds.iter().map(|r| [r.start, r.end]).collect(),
                segment_index: index,
                segment_index_source: source,
                per_segment: config.per_segment,
                seed,
                prng: crate::rng::PRNG_ID.to_owned(),
                ranked_count: ranking.len(),
                segment_stats: stats.clone(),
                selected: sample(chosen, config.per_segment, seed)?,
                unscored: ranking.unscored.clone(),
                missing_ranked: missing_ranked.clone(),
            });
        }
    }
    Ok(out)
}
