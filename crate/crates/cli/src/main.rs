//! `mds`: score, segment and sample MT fine-tuning corpora.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mds_core::corpus::{load_corpus, load_distributions, load_embeddings, load_ner_spans, load_qe};
use mds_core::eval::{corpus_bleu_with, BleuOptions};
use mds_core::metrics::{score_corpus_with, EntropyKernel};
use mds_core::selection::{select, select_all_segments, SelectionConfig};
use mds_core::{
    chrf_pp, validate_bundle, Aggregation, Bundle, BundleParts, Direction, LogBase,
    MdsMethod, MissingPolicy, ScoreTable, SelectionManifest, StorageMode, SynthConfig,
};
use mds_core::{synth_bundle, write_bundle};

use crate::report::{EvalRecord, ManifestRef};

#[derive(Parser)]
#[command(name = "mds", version, about = "Measurement-driven data selection for MT fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that the bundle artifacts agree with the corpus.
    Validate(ValidateArgs),
    /// Compute one measurement for every corpus sentence.
    Score(ScoreArgs),
    /// Rank a score table, segment it and draw seeded subsets.
    Select(SelectArgs),
    /// Corpus BLEU and ChrF++ of a hypothesis file against references.
    Eval(EvalArgs),
    /// Join selection manifests with evaluation results per segment.
    Report(ReportArgs),
    /// Write a seeded synthetic bundle for trying the pipeline.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BundleArgs {
    /// Corpus JSONL with `id`, `src`, `tgt`, `mt` and optional `mt_tokens`.
    #[arg(long)]
    corpus: PathBuf,
    /// MDSD1 token distributions.
    #[arg(long)]
    dists: Option<PathBuf>,
    /// Named-entity spans JSONL.
    #[arg(long)]
    ner: Option<PathBuf>,
    /// MDSE source embeddings.
    #[arg(long)]
    emb: Option<PathBuf>,
    /// QE values JSONL.
    #[arg(long)]
    qe: Option<PathBuf>,
}

impl BundleArgs {
    fn load(&self) -> Result<BundleParts> {
        let ctx = |p: &Path| format!("loading {}", p.display());
        Ok(BundleParts {
            corpus: load_corpus(&self.corpus).with_context(|| ctx(&self.corpus))?,
            distributions: self
                .dists
                .as_deref()
                .map(|p| load_distributions(p).with_context(|| ctx(p)))
                .transpose()?,
            ner: self
                .ner
                .as_deref()
                .map(|p| load_ner_spans(p).with_context(|| ctx(p)))
                .transpose()?,
            embeddings: self
                .emb
                .as_deref()
                .map(|p| load_embeddings(p).with_context(|| ctx(p)))
                .transpose()?,
            qe: self
                .qe
                .as_deref()
                .map(|p| load_qe(p).with_context(|| ctx(p)))
                .transpose()?,
        })
    }

    fn validated(&self) -> Result<Bundle> {
        let bundle = validate_bundle(self.load()?)?;
        for c in bundle.report().checks.iter().filter(|c| !c.passed()) {
            eprintln!("warning: {} failed for {}/{} entries", c.name, c.failed, c.checked);
        }
        Ok(bundle)
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    El2n,
    AvgEntropy,
    Perents,
    Selfsup,
    Qe,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Max,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogBaseArg {
    #[value(name = "e")]
    Natural,
    #[value(name = "2")]
    Two,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// PerEnts aggregation over entity tokens.
    #[arg(long, value_enum, default_value = "max")]
    aggregation: AggregationArg,
    /// Cluster count for selfsup; defaults to round(sqrt(N/2)).
    #[arg(long)]
    k: Option<usize>,
    /// Seed for selfsup k-means++ initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// L2-normalize embeddings before clustering.
    #[arg(long)]
    normalize: bool,
    /// Logarithm base of entropy measurements.
    #[arg(long, value_enum, default_value = "e")]
    log_base: LogBaseArg,
    /// Output score table (JSONL).
    #[arg(long)]
    out: PathBuf,
}

impl ScoreArgs {
    fn method(&self) -> MdsMethod {
        match self.method {
            MethodArg::El2n => MdsMethod::El2n,
            MethodArg::AvgEntropy => MdsMethod::AvgEntropy,
            MethodArg::Perents => MdsMethod::Perents {
                aggregation: match self.aggregation {
                    AggregationArg::Max => Aggregation::Max,
                    AggregationArg::Mean => Aggregation::Mean,
                },
            },
            MethodArg::Selfsup => MdsMethod::Selfsup {
                k: self.k,
                seed: self.seed,
                normalize: self.normalize,
            },
            MethodArg::Qe => MdsMethod::Qe,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Asc,
    Desc,
}

#[derive(Clone, Copy, ValueEnum)]
enum MissingArg {
    Exclude,
    RankLowest,
    RankHighest,
}

#[derive(Args)]
struct SelectArgs {
    /// Score table produced by `mds score`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 4)]
    segments: usize,
    #[arg(long, default_value_t = 2000)]
    per_segment: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Segment to draw from; defaults to the method's preferred segment.
    #[arg(long, conflicts_with = "all_segments")]
    segment_index: Option<usize>,
    /// Draw from every segment.
    #[arg(long)]
    all_segments: bool,
    #[arg(long, value_enum, default_value = "asc")]
    direction: DirectionArg,
    #[arg(long, value_enum, default_value = "exclude")]
    missing: MissingArg,
    /// Directory receiving `.manifest` and `.ids` files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MetricArg {
    Bleu,
    Chrf,
    All,
}

#[derive(Args)]
struct EvalArgs {
    /// Hypotheses, one sentence per line.
    #[arg(long)]
    hyps: PathBuf,
    /// References, one sentence per line.
    #[arg(long)]
    refs: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    metric: MetricArg,
    /// Floor for zero BLEU n-gram matches (e.g. 0.1).
    #[arg(long)]
    bleu_floor: Option<f64>,
    /// Selection manifest of the system being evaluated.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the result as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of selection manifests.
    #[arg(long)]
    manifests: PathBuf,
    /// Directory of `mds eval` JSON results.
    #[arg(long)]
    evals: Option<PathBuf>,
    /// Print JSON rows instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    sentences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Store top-k sparse rows instead of dense ones.
    #[arg(long)]
    sparse: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn run_validate(args: &ValidateArgs) -> Result<()> {
    let parts = args.bundle.load()?;
    let (report, ok) = match validate_bundle(parts) {
        Ok(b) => (b.report().clone(), true),
        Err(e) => (e.report, false),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{report}");
    }
    if !ok {
        bail!("bundle has hard validation failures");
    }
    Ok(())
}

fn run_score(args: &ScoreArgs) -> Result<()> {
    let bundle = args.bundle.validated()?;
    let base = match args.log_base {
        LogBaseArg::Natural => LogBase::Natural,
        LogBaseArg::Two => LogBase::Two,
    };
    let table = score_corpus_with(&bundle, args.method(), EntropyKernel::new(base))?;
    table.save(&args.out)?;
    eprintln!(
        "{}: scored {}/{} sentences -> {}",
        table.method.name(),
        table.scored_count(),
        table.len(),
        args.out.display()
    );
    Ok(())
}

fn run_select(args: &SelectArgs) -> Result<()> {
    let scores = ScoreTable::load(&args.scores)?;
    let base = SelectionConfig {
        segments: args.segments,
        segment_index: args.segment_index,
        per_segment: args.per_segment,
        seeds: args.seeds.clone(),
        direction: match args.direction {
            DirectionArg::Asc => Direction::Ascending,
            DirectionArg::Desc => Direction::Descending,
        },
        missing: match args.missing {
            MissingArg::Exclude => MissingPolicy::Exclude,
            MissingArg::RankLowest => MissingPolicy::RankLowest,
            MissingArg::RankHighest => MissingPolicy::RankHighest,
        },
    };
    let manifests = if args.all_segments {
        select_all_segments(&scores, &base)?
    } else {
        select(&scores, &base)?
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for m in manifests {
        let path = m.write_to_dir(&args.out)?;
        eprintln!(
            "segment {}/{} seed {}: {} ids -> {}",
            m.segment_index,
            m.segments,
            m.seed,
            m.selected.len(),
            path.display()
        );
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let hyps = read_lines(&args.hyps)?;
    let refs = read_lines(&args.refs)?;
    let mut reports = Vec::new();
    if args.metric != MetricArg::Chrf {
        let tok = |v: &[String]| -> Vec<Vec<String>> {
            v.iter()
                .map(|s| s.split_whitespace().map(str::to_owned).collect())
                .collect()
        };
        let options = BleuOptions { floor: args.bleu_floor };
        reports.push(corpus_bleu_with(&tok(&hyps), &tok(&refs), options)?);
    }
    if args.metric != MetricArg::Bleu {
        reports.push(chrf_pp(&hyps, &refs)?);
    }
    let manifest = args
        .manifest
        .as_deref()
        .map(|p| SelectionManifest::load(p).map(|m| ManifestRef::new(&m)))
        .transpose()?;
    let bleu_tokenizer = (args.metric != MetricArg::Chrf).then(|| "unicode-whitespace".to_owned());
    let record = EvalRecord {
        manifest,
        bleu_tokenizer,
        reports,
    };
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    match &args.out {
        Some(path) => fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn run_report(args: &ReportArgs) -> Result<()> {
    let rows = report::build(&args.manifests, args.evals.as_deref())?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", report::render(&rows));
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        sentences: args.sentences,
        seed: args.seed,
        mode: if args.sparse { StorageMode::Sparse } else { StorageMode::Dense },
        ..SynthConfig::default()
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let paths = write_bundle(&synth_bundle(&config), &args.out)?;
    eprintln!("wrote {} sentences to {}", args.sentences, paths.corpus.display());
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MDS_THREADS") {
        let n: usize = v.parse().with_context(|| format!("MDS_THREADS={v:?} is not a number"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Validate(a) => run_validate(a),
        Command::Score(a) => run_score(a),
        Command::Select(a) => run_select(a),
        Command::Eval(a) => run_eval(a),
        Command::Report(a) => run_report(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
