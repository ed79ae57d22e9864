use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mds_core::{EvalReport, SelectionManifest};
use serde::{Deserialize, Serialize};

/// Identifies the manifest an evaluation belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRef {
    pub file_stem: String,
    pub method: String,
    pub segments: usize,
    pub segment_index: usize,
    pub seed: u64,
    pub score_digest: String,
}

impl ManifestRef {
    pub fn new(m: &SelectionManifest) -> Self {
        Self {
            file_stem: m.file_stem(),
            method: m.method.name().to_owned(),
            segments: m.segments,
            segment_index: m.segment_index,
            seed: m.seed,
            score_digest: m.score_digest.clone(),
        }
    }
}

/// Output of `mds eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestRef>,
    /// How BLEU tokens were produced; absent when BLEU was not computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu_tokenizer: Option<String>,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub std: Option<f64>,
}

impl MetricSummary {
    fn new(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self {
            runs: values.len(),
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub segments: usize,
    pub segment_index: usize,
    pub seeds: Vec<u64>,
    pub selected: usize,
    pub score_min: Option<f64>,
    pub score_max: Option<f64>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

type Key = (String, usize, usize);

pub fn build(manifest_dir: &Path, eval_dir: Option<&Path>) -> Result<Vec<ReportRow>> {
    let mut rows: BTreeMap<Key, ReportRow> = BTreeMap::new();
    let mut by_stem: BTreeMap<String, (Key, String)> = BTreeMap::new();
    for path in files_with_extension(manifest_dir, "manifest")? {
        let m = SelectionManifest::load(&path)?;
        let key = (m.method.name().to_owned(), m.segments, m.segment_index);
        let stats = m.segment_stats.get(m.segment_index);
        let row = rows.entry(key.clone()).or_insert_with(|| ReportRow {
            method: key.0.clone(),
            segments: m.segments,
            segment_index: m.segment_index,
            seeds: Vec::new(),
            selected: m.selected.len(),
            score_min: stats.and_then(|s| s.min),
            score_max: stats.and_then(|s| s.max),
            metrics: BTreeMap::new(),
        });
        row.seeds.push(m.seed);
        by_stem.insert(m.file_stem(), (key, m.score_digest));
    }

    let mut scores: BTreeMap<Key, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    if let Some(dir) = eval_dir {
        for path in files_with_extension(dir, "json")? {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let record: EvalRecord =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let Some(r) = record.manifest else {
                eprintln!("warning: {} names no manifest; skipped", path.display());
                continue;
            };
            match by_stem.get(&r.file_stem) {
                Some((key, digest)) if *digest == r.score_digest => {
                    let per_metric = scores.entry(key.clone()).or_default();
                    for report in record.reports {
                        per_metric.entry(report.metric).or_default().push(report.score);
                    }
                }
                _ => eprintln!("warning: {} refers to unknown manifest {}", path.display(), r.file_stem),
            }
        }
    }
    for (key, metrics) in scores {
        let row = rows.get_mut(&key).expect("key came from a manifest");
        row.metrics = metrics.iter().map(|(k, v)| (k.clone(), MetricSummary::new(v))).collect();
    }
    let mut rows: Vec<ReportRow> = rows.into_values().collect();
    rows.iter_mut().for_each(|r| r.seeds.sort_unstable());
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

pub fn render(rows: &[ReportRow]) -> String {
    let mut metric_names: Vec<&str> = rows.iter().flat_map(|r| r.metrics.keys().map(String::as_str)).collect();
    metric_names.sort_unstable();
    metric_names.dedup();

    let mut out = format!("{:<12} {:>3} {:>7} {:<10} {:>8} {:>21}", "method", "S", "segment", "seeds", "selected", "score range");
    for m in &metric_names {
        let _ = write!(out, " {m:>20}");
    }
    out.push('\n');
    for r in rows {
        let seeds = r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let range = format!("{}..{}", fmt_opt(r.score_min), fmt_opt(r.score_max));
        let _ = write!(
            out,
            "{:<12} {:>3} {:>7} {:<10} {:>8} {:>21}",
            r.method, r.segments, r.segment_index, seeds, r.selected, range
        );
        for m in &metric_names {
            let cell = match r.metrics.get(*m) {
                Some(s) => match s.std {
                    Some(sd) => format!("{:.2} ± {:.2} (n={})", s.mean, sd, s.runs),
                    None => format!("{:.2} (n={})", s.mean, s.runs),
                },
                None => "-".to_owned(),
            };
            let _ = write!(out, " {cell:>20}");
        }
        out.push('\n');
    }
    out
}
