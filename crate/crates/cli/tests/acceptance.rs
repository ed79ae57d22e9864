//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line under `cargo test`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mds_core::cluster::default_k;
use mds_core::corpus::Probability;
use mds_core::eval::{corpus_bleu, Components};
use mds_core::metrics::{score_corpus_with, EntropyKernel};
use mds_core::selection::{rank, segment, segment_bounds, select, select_all_segments, SelectionConfig};
use mds_core::{
    chrf_pp, el2n, kmeans_fit, perents, synth_bundle, token_entropy, validate_bundle, write_bundle,
    Aggregation, BundleParts, Direction, EmbeddingMatrix, KMeansConfig, LogBase, ManifestRng,
    MdsMethod, MissingPolicy, ScoreTable, SentenceDistributions, StorageMode, SynthConfig,
    TokenDistribution,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-15
}

fn dense(v: Vec<f64>) -> TokenDistribution<f64> {
    TokenDistribution::Dense(v)
}

fn one_hot(vocab: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; vocab];
    v[at] = 1.0;
    v
}

fn random_row(rng: &mut ManifestRng, vocab: usize, zero_rate: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..vocab)
        .map(|_| if rng.unit_f64() < zero_rate { 0.0 } else { rng.unit_f64().powi(3) })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.index(vocab)] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

// ---------------------------------------------------------------------------
// Independent reference scorer: densify everything and sum term by term.

fn densify<P: Probability>(d: &TokenDistribution<P>, vocab: usize) -> Vec<f64> {
    match d {
        TokenDistribution::Dense(p) => p.iter().map(|&x| x.into()).collect(),
        TokenDistribution::Sparse {
            indices,
            probs,
            tail_mass,
        } => {
            let unlisted = vocab - indices.len();
            let fill = if unlisted == 0 { 0.0 } else { (*tail_mass).into() / unlisted as f64 };
            let mut v = vec![fill; vocab];
            for (&i, &p) in indices.iter().zip(probs) {
                v[i as usize] = p.into();
            }
            v
        }
    }
}

fn naive_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    h / p.len() as f64
}

fn naive_scores(parts: &BundleParts, method: MdsMethod, clustering: Option<&mds_core::Clustering>) -> Vec<Option<f64>> {
    let dists = parts.distributions.as_ref().unwrap();
    let vocab = dists.vocab_size();
    let mut entity_tokens: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    for s in parts.ner.as_ref().unwrap().iter() {
        entity_tokens.entry(&s.id).or_default().extend(s.start_token..s.end_token);
    }
    let qe: HashMap<String, f64> = parts
        .qe
        .as_ref()
        .unwrap()
        .to_jsonl()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_owned(), v["value"].as_f64().unwrap())
        })
        .collect();
    let emb = parts.embeddings.as_ref().unwrap();

    parts
        .corpus
        .records()
        .iter()
        .map(|r| {
            let sent = dists.get(&r.id);
            let entropies = || -> Vec<f64> {
                sent.unwrap().tokens.iter().map(|d| naive_entropy(&densify(d, vocab))).collect()
            };
            match method {
                MdsMethod::AvgEntropy => {
                    let h = entropies();
                    Some(h.iter().sum::<f64>() / h.len() as f64)
                }
                MdsMethod::Perents { aggregation } => {
                    let idx = entity_tokens.get(r.id.as_str())?;
                    let h = entropies();
                    let picked: Vec<f64> = idx.iter().map(|&i| h[i]).collect();
                    match aggregation {
                        Aggregation::Max => picked.iter().copied().reduce(f64::max),
                        Aggregation::Mean => Some(picked.iter().sum::<f64>() / picked.len() as f64),
                    }
                }
                MdsMethod::El2n => {
                    let s = sent.unwrap();
                    let refs = s.reference_ids.as_ref().unwrap();
                    let l = refs.len().min(s.tokens.len());
                    let mut total = 0.0;
                    for (d, &y) in s.tokens.iter().zip(refs).take(l) {
                        let p = densify(d, vocab);
                        let sq: f64 = p
                            .iter()
                            .enumerate()
                            .map(|(j, &pj)| {
                                let e = if j == y as usize { 1.0 } else { 0.0 };
                                (e - pj) * (e - pj)
                            })
                            .sum();
                        total += sq.sqrt();
                    }
                    Some(total / l as f64)
                }
                MdsMethod::Selfsup { .. } => {
                    let c = clustering.unwrap();
                    let row = emb.row(emb.position(&r.id)?);
                    let mut best = f64::INFINITY;
                    for j in 0..c.k {
                        let d: f64 = row
                            .iter()
                            .zip(c.centroids.row(j))
                            .map(|(&x, &m)| (f64::from(x) - m).powi(2))
                            .sum();
                        best = best.min(d);
                    }
                    Some(best.sqrt())
                }
                MdsMethod::Qe => qe.get(&r.id).copied(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------

fn entropy_kernel() -> Outcome {
    let t = Instant::now();
    for vocab in [2usize, 4, 37, 32000] {
        for at in [0, vocab - 1] {
            let h = token_entropy(&dense(one_hot(vocab, at)), vocab).map_err(|e| e.to_string())?;
            ensure(h == 0.0, || format!("one-hot V={vocab} gave {h}"))?;
        }
        let h = token_entropy(&dense(vec![1.0 / vocab as f64; vocab]), vocab).map_err(|e| e.to_string())?;
        let expected = (vocab as f64).ln() / vocab as f64;
        ensure((h - expected).abs() <= 1e-12, || format!("uniform V={vocab}: {h} vs {expected}"))?;
    }
    let mut rng = ManifestRng::new(11);
    for i in 0..1000 {
        let vocab = 2 + rng.index(511);
        let row = random_row(&mut rng, vocab, 0.3);
        let h = token_entropy(&dense(row), vocab).map_err(|e| e.to_string())?;
        let bound = (vocab as f64).ln() / vocab as f64;
        ensure((0.0..=bound + 1e-15).contains(&h), || format!("random #{i}: H={h} outside [0, {bound}]"))?;
    }
    let elapsed = t.elapsed();
    within_time(elapsed, Duration::from_secs(1))?;
    Ok(format!("one-hot 0, uniform (ln V)/V within 1e-12 for V in {{2,4,37,32000}}, 1000 random bounded, {elapsed:.2?}"))
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut compared = 0usize;
    for mode in [StorageMode::Dense, StorageMode::Sparse] {
        let parts = synth_bundle(&SynthConfig {
            sentences: 500,
            vocab: 64,
            max_len: 20,
            mode,
            seed: 2024,
            ..SynthConfig::default()
        });
        let bundle = validate_bundle(parts.clone()).map_err(|e| e.to_string())?;
        let selfsup = MdsMethod::Selfsup {
            k: None,
            seed: 7,
            normalize: false,
        };
        let emb = parts.embeddings.as_ref().unwrap();
        let clustering = kmeans_fit(emb, &KMeansConfig::new(default_k(emb.rows()), 7)).map_err(|e| e.to_string())?;
        let methods = [
            MdsMethod::El2n,
            MdsMethod::AvgEntropy,
            MdsMethod::Perents { aggregation: Aggregation::Max },
            MdsMethod::Perents { aggregation: Aggregation::Mean },
            selfsup,
            MdsMethod::Qe,
        ];
        for method in methods {
            let table = mds_core::score_corpus(&bundle, method).map_err(|e| e.to_string())?;
            let expected = naive_scores(&parts, method, Some(&clustering));
            for (entry, want) in table.entries.iter().zip(&expected) {
                let ok = match (entry.value, want) {
                    (Some(a), Some(b)) => rel_close(a, *b, 1e-9),
                    (None, None) => true,
                    _ => false,
                };
                ensure(ok, || {
                    format!("{} ({mode:?}) {}: {:?} vs naive {want:?}", method.name(), entry.id, entry.value)
                })?;
                compared += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    within_time(elapsed, Duration::from_secs(30))?;
    Ok(format!("{compared} sentence scores over 6 methods (dense and sparse bundles) within 1e-9 relative, {elapsed:.2?}"))
}

fn el2n_closed_forms() -> Outcome {
    let sentence = |tokens: Vec<Vec<f64>>, refs: Vec<u32>| {
        SentenceDistributions::new("x", tokens.into_iter().map(dense).collect()).with_references(refs)
    };
    for vocab in [4usize, 37, 32000] {
        let exact = sentence(vec![one_hot(vocab, 1), one_hot(vocab, 0)], vec![1, 0]);
        let e = el2n(&exact, vocab).map_err(|e| e.to_string())?;
        ensure(e == 0.0, || format!("exact match V={vocab} gave {e}"))?;
        let uniform = sentence(vec![vec![1.0 / vocab as f64; vocab]], vec![0]);
        let e = el2n(&uniform, vocab).map_err(|e| e.to_string())?;
        let expected = (1.0 - 1.0 / vocab as f64).sqrt();
        ensure((e - expected).abs() <= 1e-9, || format!("uniform V={vocab}: {e} vs {expected}"))?;
    }
    let sparse_exact = SentenceDistributions::new(
        "x",
        vec![TokenDistribution::<f64>::Sparse {
            indices: vec![2],
            probs: vec![1.0],
            tail_mass: 0.0,
        }],
    )
    .with_references(vec![2]);
    ensure(el2n(&sparse_exact, 8).map_err(|e| e.to_string())? == 0.0, || "sparse exact match".into())?;

    // Aligned positions carry the uniform error u; any extra position is a
    // wrong one-hot with error sqrt(2), so the wrong divisor or an extra
    // position is visible.
    let vocab = 4;
    let u = (1.0 - 1.0 / vocab as f64).sqrt();
    let uni = || vec![0.25; vocab];
    let wrong = || one_hot(vocab, 3);
    let long_pred = sentence(vec![uni(), uni(), uni(), wrong(), wrong()], vec![0, 1, 2]);
    let long_ref = sentence(vec![uni(), uni(), uni()], vec![0, 1, 2, 0, 0]);
    for (name, s) in [("(3,5)", long_pred), ("(5,3)", long_ref)] {
        let e = el2n(&s, vocab).map_err(|e| e.to_string())?;
        ensure((e - u).abs() <= 1e-12, || format!("{name}: {e}, expected {u} from 3 aligned positions"))?;
    }
    Ok("exact match 0, uniform sqrt(1-1/V) within 1e-9, (3,5) and (5,3) average over 3 positions".into())
}

fn perents_properties() -> Outcome {
    let mut rng = ManifestRng::new(5);
    let vocab = 32;
    for i in 0..1000 {
        let len = 1 + rng.index(20);
        let rows: Vec<Vec<f64>> = (0..len).map(|_| random_row(&mut rng, vocab, 0.2)).collect();
        let mut ne = BTreeSet::new();
        for _ in 0..1 + rng.index(len) {
            ne.insert(rng.index(len));
        }
        let s = SentenceDistributions::new("x", rows.iter().cloned().map(dense).collect());
        let max = perents(&s, &ne, Aggregation::Max, vocab).map_err(|e| e.to_string())?.unwrap();
        let mean = perents(&s, &ne, Aggregation::Mean, vocab).map_err(|e| e.to_string())?.unwrap();
        ensure(max >= mean, || format!("set #{i}: max {max} < mean {mean}"))?;

        let mut perturbed = rows.clone();
        for (j, row) in perturbed.iter_mut().enumerate() {
            if !ne.contains(&j) {
                *row = random_row(&mut rng, vocab, 0.5);
            }
        }
        let p = SentenceDistributions::new("x", perturbed.into_iter().map(dense).collect());
        for agg in [Aggregation::Max, Aggregation::Mean] {
            let a = perents(&s, &ne, agg, vocab).unwrap().unwrap();
            let b = perents(&p, &ne, agg, vocab).unwrap().unwrap();
            ensure(a.to_bits() == b.to_bits(), || format!("set #{i}: non-entity perturbation moved {agg:?}"))?;
        }
        let empty = perents(&s, &BTreeSet::new(), Aggregation::Max, vocab).map_err(|e| e.to_string())?;
        ensure(empty.is_none(), || "empty entity set produced a value".into())?;
    }

    let bundle = validate_bundle(synth_bundle(&SynthConfig {
        sentences: 2000,
        seed: 99,
        ..SynthConfig::default()
    }))
    .map_err(|e| e.to_string())?;
    let mut ranked_count = 0;
    for aggregation in [Aggregation::Max, Aggregation::Mean] {
        let method = MdsMethod::Perents { aggregation };
        let score = |base| score_corpus_with(&bundle, method, EntropyKernel::new(base)).map_err(|e| e.to_string());
        let (ln, log2) = (score(LogBase::Natural)?, score(LogBase::Two)?);
        let rank_of = |t: &ScoreTable| rank(t, Direction::Ascending, MissingPolicy::Exclude).map_err(|e| e.to_string());
        let (a, b) = (rank_of(&ln)?, rank_of(&log2)?);
        ensure(a.ids == b.ids, || format!("{aggregation:?}: ranking differs between ln and log2"))?;
        let sa = segment(&a.ids, 4).map_err(|e| e.to_string())?;
        let sb = segment(&b.ids, 4).map_err(|e| e.to_string())?;
        ensure(sa == sb, || format!("{aggregation:?}: segment assignment differs"))?;
        ranked_count = a.ids.len();
    }
    Ok(format!(
        "1000 random entity sets: max >= mean, non-entity perturbation inert, empty set missing; ln vs log2 identical ranking of {ranked_count} ids and segments"
    ))
}

fn best_two_partition(points: &[f64]) -> (f64, [f64; 2]) {
    let n = points.len();
    let mut best = (f64::INFINITY, [0.0; 2]);
    for mask in 1..(1u32 << n) - 1 {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, &p) in points.iter().enumerate() {
            if mask >> i & 1 == 1 { a.push(p) } else { b.push(p) }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sse = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
        let (ma, mb) = (mean(&a), mean(&b));
        let cost = sse(&a, ma) + sse(&b, mb);
        if cost < best.0 {
            best = (cost, if ma < mb { [ma, mb] } else { [mb, ma] });
        }
    }
    best
}

fn random_embeddings(rng: &mut ManifestRng, n: usize, dim: usize) -> EmbeddingMatrix {
    let data = (0..n * dim).map(|_| (rng.unit_f64() * 20.0 - 10.0) as f32).collect();
    EmbeddingMatrix::new(dim, data, (0..n).map(|i| format!("e{i}")).collect()).unwrap()
}

fn kmeans() -> Outcome {
    let mut rng = ManifestRng::new(17);
    let mut iterations = 0;
    for inst in 0..100 {
        let n = 10 + rng.index(190);
        let dim = 1 + rng.index(5);
        let k = 2 + rng.index(7);
        let emb = random_embeddings(&mut rng, n, dim);
        let fit = kmeans_fit(&emb, &KMeansConfig::new(k, inst)).map_err(|e| e.to_string())?;
        for w in fit.objective_history.windows(2) {
            ensure(w[1] <= w[0], || format!("instance {inst}: objective rose {} -> {}", w[0], w[1]))?;
        }
        iterations += fit.iterations;
    }

    let points = [0.0, 1.0, 8.0, 9.0];
    let emb = EmbeddingMatrix::from_rows(points.iter().enumerate().map(|(i, &p)| (format!("p{i}"), vec![p as f32])))
        .map_err(|e| e.to_string())?;
    let (oracle_cost, oracle_centroids) = best_two_partition(&points);
    for seed in 0..10 {
        let fit = kmeans_fit(&emb, &KMeansConfig::new(2, seed)).map_err(|e| e.to_string())?;
        let mut c = [fit.centroids.row(0)[0], fit.centroids.row(1)[0]];
        c.sort_by(f64::total_cmp);
        ensure(c == oracle_centroids && c == [0.5, 8.5], || format!("seed {seed}: centroids {c:?}"))?;
        ensure(fit.objective == oracle_cost && fit.objective == 1.0, || format!("seed {seed}: objective {}", fit.objective))?;
        ensure(fit.distances.iter().all(|&d| d == 0.5), || format!("seed {seed}: distances {:?}", fit.distances))?;
    }

    let big = random_embeddings(&mut ManifestRng::new(3), 20_000, 16);
    let config = KMeansConfig::new(32, 9);
    let max_threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| kmeans_fit(&big, &config))
            .map_err(|e| e.to_string())
    };
    let (one, many) = (run(1)?, run(max_threads)?);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(
        bits(one.centroids.as_slice()) == bits(many.centroids.as_slice())
            && one.assignments == many.assignments
            && bits(&one.distances) == bits(&many.distances)
            && bits(&one.objective_history) == bits(&many.objective_history),
        || format!("1 vs {max_threads} threads differ"),
    )?;
    Ok(format!(
        "100 instances monotone ({iterations} iterations), {{0,1,8,9}} -> {{0.5,8.5}} objective 1.0, bitwise equal on 1 vs {max_threads} threads"
    ))
}

fn selection() -> Outcome {
    let t = Instant::now();
    let n = 200_000;
    let mut rng = ManifestRng::new(123);
    // Quantized values so that ties occur.
    let values: Vec<f64> = (0..n).map(|_| (rng.unit_f64() * 50_000.0).floor() / 50_000.0).collect();
    let scores = ScoreTable::from_values(
        MdsMethod::Perents { aggregation: Aggregation::Max },
        values.iter().enumerate().map(|(i, &v)| (format!("id{i:06}"), Some(v))),
    )
    .map_err(|e| e.to_string())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let position: HashMap<String, usize> = order.iter().enumerate().map(|(r, &i)| (format!("id{i:06}"), r)).collect();

    let config = SelectionConfig::default();
    ensure(
        config.segments == 4 && config.per_segment == 2000 && config.seeds == [1, 2, 3],
        || "defaults are not S=4, n=2000, seeds {1,2,3}".into(),
    )?;
    let manifests = select_all_segments(&scores, &config).map_err(|e| e.to_string())?;
    let bounds = segment_bounds(n, 4).map_err(|e| e.to_string())?;
    ensure(bounds.first().map(|r| r.start) == Some(0) && bounds.last().map(|r| r.end) == Some(n), || "bounds do not cover".into())?;
    ensure(bounds.windows(2).all(|w| w[0].end == w[1].start), || "bounds not contiguous".into())?;
    ensure(bounds.iter().all(|r| r.len() == n / 4), || "unequal segments".into())?;
    ensure(manifests.len() == 12, || format!("{} manifests", manifests.len()))?;
    for m in &manifests {
        let range = &bounds[m.segment_index];
        ensure(m.selected.len() == 2000, || format!("{}: {} ids", m.file_stem(), m.selected.len()))?;
        let unique: HashSet<&String> = m.selected.iter().collect();
        ensure(unique.len() == 2000, || format!("{}: duplicate ids", m.file_stem()))?;
        ensure(
            m.selected.iter().all(|id| range.contains(&position[id])),
            || format!("{}: id outside its segment", m.file_stem()),
        )?;
    }

    let again: Vec<String> = select_all_segments(&scores, &config)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|m| m.to_json())
        .collect();
    ensure(
        manifests.iter().map(|m| m.to_json()).collect::<Vec<_>>() == again,
        || "rerun produced different manifests".into(),
    )?;
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for m in &manifests {
        m.write_to_dir(d1.path()).map_err(|e| e.to_string())?;
        m.write_to_dir(d2.path()).map_err(|e| e.to_string())?;
        for ext in ["manifest", "ids"] {
            let f = format!("{}.{ext}", m.file_stem());
            ensure(
                std::fs::read(d1.path().join(&f)).unwrap() == std::fs::read(d2.path().join(&f)).unwrap(),
                || format!("{f} differs between writes"),
            )?;
        }
    }
    let elapsed = t.elapsed();

    let defaults = select(&scores, &config).map_err(|e| e.to_string())?;
    ensure(defaults.iter().all(|m| m.segment_index == 3), || "perents default segment is not 3".into())?;
    let expected = [
        (MdsMethod::Perents { aggregation: Aggregation::Max }, 3),
        (MdsMethod::Perents { aggregation: Aggregation::Mean }, 3),
        (MdsMethod::AvgEntropy, 3),
        (MdsMethod::El2n, 3),
        (MdsMethod::Selfsup { k: None, seed: 0, normalize: false }, 0),
        (MdsMethod::Qe, 0),
    ];
    for (method, want) in expected {
        ensure(method.default_segment(4) == want, || format!("{} default segment", method.name()))?;
    }
    within_time(elapsed, Duration::from_secs(10))?;
    Ok(format!(
        "200000 ids, 4 segments x 3 seeds x 2000 unique in-segment ids, byte-identical reruns, defaults 3/0, {elapsed:.2?}"
    ))
}

fn eval_metrics() -> Outcome {
    let toks = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
    let corpus = ["the patient was discharged today", "no sign of infection was found"];
    let tok: Vec<Vec<String>> = corpus.iter().map(|s| toks(s)).collect();
    let bleu = corpus_bleu(&tok, &tok).map_err(|e| e.to_string())?.score;
    let chrf = chrf_pp(&corpus, &corpus).map_err(|e| e.to_string())?.score;
    ensure(format!("{bleu:.2}") == "100.00" && format!("{chrf:.2}") == "100.00", || format!("identical: {bleu} {chrf}"))?;

    let other = ["xxx qqq", "zzz kkk"];
    let other_tok: Vec<Vec<String>> = other.iter().map(|s| toks(s)).collect();
    let bleu0 = corpus_bleu(&other_tok, &tok[..2]).map_err(|e| e.to_string())?.score;
    let chrf0 = chrf_pp(&other, &corpus).map_err(|e| e.to_string())?.score;
    ensure(bleu0 == 0.0 && chrf0 == 0.0, || format!("zero overlap: {bleu0} {chrf0}"))?;

    // Clipped count by hand: each hypothesis "the" is credited at most as
    // often as "the" occurs in the reference.
    let (hyp, reference) = (toks("the the the the"), toks("the cat"));
    let hand_matches: usize = {
        let mut seen = HashMap::new();
        hyp.iter()
            .filter(|w| {
                let c = seen.entry(w.as_str()).or_insert(0);
                *c += 1;
                *c <= reference.iter().filter(|r| r == w).count()
            })
            .count()
    };
    let r = corpus_bleu(std::slice::from_ref(&hyp), &[reference]).map_err(|e| e.to_string())?;
    let Components::Bleu(c) = &r.components else { unreachable!() };
    ensure(c.matches[0] as usize == hand_matches && c.totals[0] == 4, || format!("clipped {}/{}", c.matches[0], c.totals[0]))?;
    ensure((c.precisions[0] - hand_matches as f64 / 4.0).abs() <= 1e-9, || "unigram precision".into())?;

    // "abcd" vs "abce" by hand: char orders 1..4 match 3/4, 2/3, 1/2, 0/1 on
    // both sides (P = R, so F = P); orders 5 and 6 have no n-grams; word
    // unigrams "abcd" vs "abce" match 0/1; word bigrams are absent.
    let hand_f = [3.0 / 4.0, 2.0 / 3.0, 1.0 / 2.0, 0.0, 0.0];
    let hand = 100.0 * hand_f.iter().sum::<f64>() / hand_f.len() as f64;
    let r = chrf_pp(&["abcd"], &["abce"]).map_err(|e| e.to_string())?;
    ensure((r.score - hand).abs() <= 1e-9, || format!("chrf++ {} vs hand {hand}", r.score))?;
    let Components::Chrf(cc) = &r.components else { unreachable!() };
    let active: Vec<f64> = cc.orders.iter().filter(|o| !o.skipped).map(|o| o.f_score).collect();
    ensure(active.len() == hand_f.len(), || format!("{} active orders", active.len()))?;
    for (a, h) in active.iter().zip(hand_f) {
        ensure((a - h).abs() <= 1e-9, || format!("order F {a} vs hand {h}"))?;
    }
    Ok(format!(
        "identical 100.00/100.00, disjoint 0/0, clipped unigram {hand_matches}/4, chrf++ abcd|abce {:.6}",
        r.score
    ))
}

fn mds(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mds"))
        .args(args)
        .env_remove("MDS_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("mds {} exited {}: {}", args[0], out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let parts = synth_bundle(&SynthConfig {
        sentences: 500,
        seed: 42,
        ..SynthConfig::default()
    });
    let paths = write_bundle(&parts, root).map_err(|e| e.to_string())?;
    let p = |x: &Path| x.to_str().unwrap().to_owned();
    let (corpus, dists, ner) = (p(&paths.corpus), p(&paths.distributions), p(&paths.ner));
    let scores = p(&root.join("perents.jsonl"));
    let sel = p(&root.join("sel"));
    let evals = root.join("evals");
    std::fs::create_dir_all(&evals).map_err(|e| e.to_string())?;

    mds(&["validate", "--corpus", &corpus, "--dists", &dists, "--ner", &ner])?;
    mds(&["score", "--corpus", &corpus, "--dists", &dists, "--ner", &ner, "--method", "perents", "--out", &scores])?;
    mds(&["select", "--scores", &scores, "--per-segment", "40", "--all-segments", "--out", &sel])?;

    let mut manifests: Vec<_> = std::fs::read_dir(&sel)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|f| f.extension().is_some_and(|x| x == "manifest"))
        .collect();
    manifests.sort();
    for m in &manifests {
        let ids = std::fs::read_to_string(m.with_extension("ids")).map_err(|e| e.to_string())?;
        let (mut hyps, mut refs) = (String::new(), String::new());
        for id in ids.lines() {
            let r = parts.corpus.get(id).unwrap();
            hyps.push_str(&r.mt);
            hyps.push('\n');
            refs.push_str(r.tgt.as_deref().unwrap());
            refs.push('\n');
        }
        let stem = m.file_stem().unwrap().to_str().unwrap();
        let (h, r) = (root.join(format!("{stem}.hyp")), root.join(format!("{stem}.ref")));
        std::fs::write(&h, hyps).map_err(|e| e.to_string())?;
        std::fs::write(&r, refs).map_err(|e| e.to_string())?;
        let out = p(&evals.join(format!("{stem}.json")));
        mds(&["eval", "--hyps", &p(&h), "--refs", &p(&r), "--manifest", &p(m), "--out", &out])?;
    }

    let report = mds(&["report", "--manifests", &sel, "--evals", &p(&evals)])?;
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    let segments: Vec<&str> = rows.iter().map(|r| r[2]).collect();
    ensure(segments == ["0", "1", "2", "3"], || format!("report segments {segments:?}:\n{report}"))?;
    ensure(rows.iter().all(|r| r[0] == "perents" && r[3] == "1,2,3"), || format!("unexpected rows:\n{report}"))?;
    Ok(format!("validate, score(perents), select, eval x{}, report: 4 rows for segments 0..3", manifests.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("entropy kernel", entropy_kernel),
        ("oracle equivalence", oracle_equivalence),
        ("el2n closed forms", el2n_closed_forms),
        ("perents properties", perents_properties),
        ("k-means", kmeans),
        ("selection", selection),
        ("eval metrics", eval_metrics),
        ("end-to-end", end_to_end),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("PASS  {name:<20} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<20} {why}");
            }
        }
    }
    println!("{}/{} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
