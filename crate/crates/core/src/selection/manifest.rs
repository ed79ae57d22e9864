use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Direction, MissingPolicy, SelectionError};
use crate::metrics::{LogBase, MdsMethod};

pub const MANIFEST_FORMAT: &str = "mds-selection/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentIndexSource {
    MethodDefault,
    Explicit,
}

/// Score summary of one segment. Min, max and mean cover scored ids only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub scored: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

impl SegmentStats {
    pub(crate) fn compute(index: usize, range: Range<usize>, values: &[Option<f64>]) -> Self {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        Self {
            index,
            start: range.start,
            end: range.end,
            scored: present.len(),
            min: present.iter().copied().reduce(f64::min),
            max: present.iter().copied().reduce(f64::max),
            mean,
        }
    }
}

/// A persisted, reproducible record of one seeded draw from one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub format: String,
    pub tool_version: String,
    pub method: MdsMethod,
    /// SHA-256 of the score table the ranking was built from.
    pub score_digest: String,
    pub bundle_digest: String,
    pub params_digest: String,
    pub log_base: LogBase,
    pub direction: Direction,
    pub missing_policy: MissingPolicy,
    pub segments: usize,
    /// Half-open rank ranges `[start, end)` of every segment.
    pub boundaries: Vec<[usize; 2]>,
    pub segment_index: usize,
    pub segment_index_source: SegmentIndexSource,
    pub per_segment: usize,
    pub seed: u64,
    pub prng: String,
    pub ranked_count: usize,
    pub segment_stats: Vec<SegmentStats>,
    /// Chosen ids in draw order.
    pub selected: Vec<String>,
    /// Ids excluded from the ranking for lack of a score.
    pub unscored: Vec<String>,
    /// Ids without a score that the missing policy ranked anyway.
    pub missing_ranked: Vec<String>,
}

impl SelectionManifest {
    /// `<method>_<S>seg_<index>_<seed>`
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}seg_{}_{}",
            self.method.name(),
            self.segments,
            self.segment_index,
            self.seed
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SelectionError> {
        let m: Self = serde_json::from_str(text).map_err(|e| SelectionError::Format(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(SelectionError::Format(format!("unsupported format {:?}", m.format)));
        }
        Ok(m)
    }

    /// Selected ids, one per line.
    pub fn id_list(&self) -> String {
        let mut s = self.selected.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }

    /// Write `<stem>.manifest` and `<stem>.ids` into `dir`; returns the
    /// manifest path.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<PathBuf, SelectionError> {
        let dir = dir.as_ref();
        let stem = self.file_stem();
        let manifest = dir.join(format!("{stem}.manifest"));
        let ids = dir.join(format!("{stem}.ids"));
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SelectionError::Io { path, source }
        };
        fs::write(&manifest, self.to_json()).map_err(io(&manifest))?;
        fs::write(&ids, self.id_list()).map_err(io(&ids))?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SelectionError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SelectionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
