//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails. The corpus reproduction check (8) runs
//! only when `SEMTRAJ_REFERENCE_CORPUS` points at the published corpus.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semtraj::corpus::{load_corpus, slice_corpus, CohortSelector, Corpus, Document, LoadOptions, SliceId};
use semtraj::divergence::{
    asynchronous_matrix, compare, pointwise_kld, prepare_models, synchronous_series, DocFrequencyStats, KldConfig, KldMatrix, Side,
    SyncSeries,
};
use semtraj::embedding::{ede_trajectories, median_series, BandwidthRule, EdeConfig, EmbeddingStore, KdeModel, KernelMode};
use semtraj::pipeline::{run, RunConfig, Stage};
use semtraj::stats::{regularized_incomplete_beta, student_t_two_sided, welch_t};
use semtraj::textprep::{normalize_all, NormalizationConfig};
use semtraj::unigram::{build_from_docs, smooth, DocCounts, UnigramModel};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    check(elapsed < Duration::from_secs(limit_secs), || format!("took {elapsed:.2?}, limit {limit_secs}s"))
}

// ---------------------------------------------------------------- 1, 2

fn random_docs(rng: &mut ChaCha8Rng, prefix: &str, vocab: &[String], n_docs: usize) -> Vec<DocCounts> {
    (0..n_docs)
        .map(|i| {
            let mut counts = BTreeMap::new();
            // a random subset of the vocabulary so models differ in support
            for t in vocab {
                if rng.random::<f64>() < 0.6 {
                    counts.insert(t.clone(), rng.random_range(1..20u64));
                }
            }
            if counts.is_empty() {
                counts.insert(vocab[0].clone(), 1);
            }
            let total = counts.values().sum();
            DocCounts {
                doc_id: format!("{prefix}{i}"),
                counts,
                total,
            }
        })
        .collect()
}

fn random_pair(rng: &mut ChaCha8Rng) -> (UnigramModel, UnigramModel) {
    let v = rng.random_range(2..=50usize);
    let vocab: Vec<String> = (0..v).map(|k| format!("w{k:02}")).collect();
    let n_d = rng.random_range(2..6);
    let d = build_from_docs(random_docs(rng, "d", &vocab, n_d)).unwrap();
    let n_q = rng.random_range(2..6);
    let q = build_from_docs(random_docs(rng, "q", &vocab, n_q)).unwrap();
    (d, q)
}

/// Smoothed probability written out from raw counts.
fn oracle_prob(model: &UnigramModel, bg: &UnigramModel, lambda: f64, t: &str) -> f64 {
    let c = model.counts().get(t).copied().unwrap_or(0) as f64 / model.total() as f64;
    let b = bg.counts()[t] as f64 / bg.total() as f64;
    (1.0 - lambda) * c + lambda * b
}

fn kld_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut min_sum = f64::INFINITY;
    for _ in 0..1000 {
        let (d, q) = random_pair(&mut rng);
        let lambda = rng.random_range(0.01..0.99);
        let bg = d.merge(&q);
        let config = KldConfig::new(lambda, 0.05, Default::default());
        let report = compare(
            Side {
                slice: SliceId { start: 1957, end: 1958 },
                model: &d,
                stats: &DocFrequencyStats::from_model(&d),
            },
            Side {
                slice: SliceId { start: 1957, end: 1958 },
                model: &q,
                stats: &DocFrequencyStats::from_model(&q),
            },
            None,
            &config,
        )
        .map_err(|e| e.to_string())?;
        let mut oracle_sum = 0.0;
        for c in &report.contributions {
            let pd = oracle_prob(&d, &bg, lambda, &c.term);
            let pq = oracle_prob(&q, &bg, lambda, &c.term);
            let term = pd * (pd.ln() - pq.ln()) / std::f64::consts::LN_2;
            worst = worst.max((term - c.kld_bits).abs());
            oracle_sum += term;
        }
        check(report.contributions.len() == bg.counts().len(), || "contribution count differs from vocabulary".into())?;
        worst = worst.max((oracle_sum - report.summed_all_bits).abs());
        min_sum = min_sum.min(report.summed_all_bits);
    }
    check(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    check(min_sum >= -1e-12, || format!("negative summed KLD {min_sum:e}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!("1000 pairs, max |diff| {worst:.1e}, min sum {min_sum:.3e}, {:.2?}", start.elapsed()))
}

fn smoothing_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_sum, mut worst_floor, mut worst_kld) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (d, q) = random_pair(&mut rng);
        let bg = d.merge(&q);
        let lambda = rng.random_range(0.001..0.999);
        let s = smooth(&d, &bg, lambda).map_err(|e| e.to_string())?;
        let total: f64 = s.probs().values().sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
        for (t, &p) in s.probs() {
            worst_floor = worst_floor.max(lambda * bg.prob(t) - p);
        }
        let near_one = 1.0 - 1e-9;
        let sd = smooth(&d, &bg, near_one).map_err(|e| e.to_string())?;
        let sq = smooth(&q, &bg, near_one).map_err(|e| e.to_string())?;
        let kld: f64 = pointwise_kld(&sd, &sq).map_err(|e| e.to_string())?.iter().map(|c| c.kld_bits).sum();
        worst_kld = worst_kld.max(kld.abs());
    }
    check(worst_sum <= 1e-9, || format!("probabilities sum off by {worst_sum:e}"))?;
    check(worst_floor <= 0.0, || format!("probability below lambda * background by {worst_floor:e}"))?;
    check(worst_kld < 1e-6, || format!("KLD at lambda -> 1 is {worst_kld:e}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!(
        "1000 triples, |sum-1| {worst_sum:.1e}, KLD at lambda->1 {worst_kld:.1e}, {:.2?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------- 3

/// Stirling series after shifting the argument above 15.
fn ln_gamma_oracle(mut z: f64) -> f64 {
    let mut shift = 0.0;
    while z < 15.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2)
        + 1.0 / (1260.0 * z2 * z2 * z)
}

/// `P(|T| > |t|)` as one minus twice the Simpson integral of the density on `[0, |t|]`.
fn t_two_sided_oracle(t: f64, df: f64) -> f64 {
    let ln_c = ln_gamma_oracle(0.5 * (df + 1.0)) - ln_gamma_oracle(0.5 * df) - 0.5 * (df * std::f64::consts::PI).ln();
    let f = |x: f64| (ln_c - 0.5 * (df + 1.0) * (1.0 + x * x / df).ln()).exp();
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = f(0.0) + f(t.abs());
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    1.0 - 2.0 * s * h / 3.0
}

fn welch_oracle() -> Outcome {
    let r = welch_t(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).map_err(|e| e.to_string())?;
    check((r.t_stat - -1.7321).abs() <= 1e-4, || format!("t = {}", r.t_stat))?;
    check((r.df - 4.4118).abs() <= 1e-4, || format!("df = {}", r.df))?;

    let mut worst = 0.0f64;
    for &t in &[0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 7.0] {
        for &df in &[1.0, 2.5, 4.4118, 10.0, 30.0] {
            let p = student_t_two_sided(t, df).map_err(|e| e.to_string())?;
            worst = worst.max((p - t_two_sided_oracle(t, df)).abs());
        }
    }
    check(worst <= 1e-6, || format!("p deviates from integration by {worst:e}"))?;

    let mut worst_sym = 0.0f64;
    for a in [0.5, 1.0, 2.5, 7.0, 40.0, 300.0] {
        worst_sym = worst_sym.max((regularized_incomplete_beta(0.5, a, a).map_err(|e| e.to_string())? - 0.5).abs());
    }
    check(worst_sym <= 1e-12, || format!("I_0.5(a, a) off by {worst_sym:e}"))?;
    Ok(format!(
        "t {:.4}, df {:.4}, 50-point p grid max |diff| {worst:.1e}, symmetry {worst_sym:.1e}",
        r.t_stat, r.df
    ))
}

// ---------------------------------------------------------------- 4

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
            scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

fn brute_force_density(sample: &[Vec<f64>], x: &[f64], h: f64) -> f64 {
    let n = sample.len() as f64;
    let mut total = 0.0;
    for xi in sample {
        let dist = xi.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let u = dist / h;
        total += (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    }
    total / (n * h)
}

/// Orthonormal rows from Gram-Schmidt on a Gaussian matrix.
fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < d {
        let mut v = gaussian_vec(rng, d, 1.0);
        for r in &rows {
            let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    rows
}

fn rotate(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn kde_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for &d in &[2usize, 8, 64] {
        for n in [1usize, 2, 17, 100] {
            let sample: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, d, 1.0)).collect();
            let h = rng.random_range(0.5..3.0) * (d as f64).sqrt();
            let kde = KdeModel::new(sample.iter().map(Vec::as_slice).collect(), h, KernelMode::AsWritten).map_err(|e| e.to_string())?;
            for _ in 0..5 {
                let x = gaussian_vec(&mut rng, d, 1.0);
                worst = worst.max((kde.density(&x).map_err(|e| e.to_string())? - brute_force_density(&sample, &x, h)).abs());
            }
        }
    }
    check(worst <= 1e-12, || format!("brute-force deviation {worst:e}"))?;

    let mut worst_single = 0.0f64;
    for h in [0.1, 1.0, 2.5] {
        let x = vec![0.3, -1.2, 4.0];
        let kde = KdeModel::new(vec![x.as_slice()], h, KernelMode::AsWritten).map_err(|e| e.to_string())?;
        let expected = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        worst_single = worst_single.max((kde.density(&x).map_err(|e| e.to_string())? - expected).abs());
    }
    check(worst_single <= 1e-12, || format!("single-point density off by {worst_single:e}"))?;

    let mut worst_rot = 0.0f64;
    for mode in [KernelMode::AsWritten, KernelMode::MultivariateNormalized] {
        let d = 8;
        let rot = random_rotation(&mut rng, d);
        let sample: Vec<Vec<f64>> = (0..40).map(|_| gaussian_vec(&mut rng, d, 1.0)).collect();
        let turned: Vec<Vec<f64>> = sample.iter().map(|v| rotate(&rot, v)).collect();
        let a = KdeModel::new(sample.iter().map(Vec::as_slice).collect(), 1.5, mode).map_err(|e| e.to_string())?;
        let b = KdeModel::new(turned.iter().map(Vec::as_slice).collect(), 1.5, mode).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let x = gaussian_vec(&mut rng, d, 1.0);
            let (da, db) = (a.density(&x).unwrap(), b.density(&rotate(&rot, &x)).unwrap());
            worst_rot = worst_rot.max((da - db).abs() / da.abs().max(1e-300));
        }
    }
    check(worst_rot <= 1e-9, || format!("rotation changes density by {worst_rot:e} (relative)"))?;

    // Importance sampling from a wide Gaussian proposal.
    let mut worst_mass = 0.0f64;
    for d in 1..=3usize {
        let sample: Vec<Vec<f64>> = (0..25).map(|_| gaussian_vec(&mut rng, d, 1.0)).collect();
        let kde = KdeModel::new(sample.iter().map(Vec::as_slice).collect(), 0.4, KernelMode::MultivariateNormalized)
            .map_err(|e| e.to_string())?;
        let sigma = 2.0f64;
        let draws = 200_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let x = gaussian_vec(&mut rng, d, sigma);
            let r2: f64 = x.iter().map(|a| a * a).sum();
            let proposal = (-0.5 * r2 / (sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma).powf(d as f64 / 2.0);
            acc += kde.density(&x).unwrap() / proposal;
        }
        worst_mass = worst_mass.max((acc / draws as f64 - 1.0).abs());
    }
    check(worst_mass <= 0.05, || format!("normalized mode integrates to 1 +- {worst_mass:.3}"))?;
    Ok(format!(
        "brute force {worst:.1e}, n=1 {worst_single:.1e}, rotation {worst_rot:.1e}, mass |1-I| {worst_mass:.3}"
    ))
}

// ---------------------------------------------------------------- 5, 7

const LAG: i32 = 3;

fn drift_spec(lag: i32, seed: u64) -> common::DriftSpec {
    common::DriftSpec {
        lag,
        seed,
        ..Default::default()
    }
}

fn analyse(path: &Path) -> Result<(SyncSeries, KldMatrix), String> {
    let (corpus, _) = load_corpus(path, &LoadOptions::default()).map_err(|e| e.to_string())?;
    let slices = slice_corpus(&corpus, 2, 1957).map_err(|e| e.to_string())?;
    let texts: Vec<(&str, &str)> = corpus.documents().iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
    let tokens = normalize_all(texts, &NormalizationConfig::default());
    let cohort = CohortSelector::authors(["Cohort, A."]).map_err(|e| e.to_string())?;
    let models = prepare_models(&slices, &cohort, &tokens).map_err(|e| e.to_string())?;
    let config = KldConfig::default();
    let series = synchronous_series(&models, &config).map_err(|e| e.to_string())?;
    let matrix = asynchronous_matrix(&models, &config).map_err(|e| e.to_string())?;
    Ok((series, matrix))
}

fn planted_drift() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (drifted, null) = (dir.path().join("drift.jsonl"), dir.path().join("null.jsonl"));
    common::write_drift_corpus(&drifted, &drift_spec(LAG, 2024));
    common::write_drift_corpus(&null, &drift_spec(0, 2025));
    let (drift_series, matrix) = analyse(&drifted)?;
    let (null_series, _) = analyse(&null)?;

    // A row is eligible when at least five field slices lie at or before it.
    let offsets = matrix.argmin_offsets();
    let (mut eligible, mut hits) = (0, 0);
    for (r, row) in matrix.rows.iter().enumerate() {
        if matrix.cols.iter().filter(|c| c.start <= row.start).count() >= 5 {
            eligible += 1;
            hits += usize::from(offsets[r] == -2 * LAG);
        }
    }
    check(eligible > 0, || "no eligible rows".into())?;
    let hit_rate = hits as f64 / eligible as f64;
    check(hit_rate >= 0.9, || format!("argmin at planted lag in {hits}/{eligible} rows; offsets {offsets:?}"))?;

    let (mut compared, mut below) = (0, 0);
    for p in &drift_series.points {
        let (Some(d), Some(n)) = (&p.report, null_series.get(p.slice).and_then(|q| q.report.as_ref())) else {
            continue;
        };
        compared += 1;
        below += usize::from(n.summed_significant_bits < d.summed_significant_bits);
    }
    let below_rate = below as f64 / compared.max(1) as f64;
    check(compared > 0 && below_rate >= 0.95, || format!("null below drifted in {below}/{compared} slices"))?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "argmin at -{} years in {hits}/{eligible} rows, null below drifted in {below}/{compared} slices, {:.2?}",
        2 * LAG,
        start.elapsed()
    ))
}

fn csv_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("drift.jsonl");
    common::write_drift_corpus(&corpus, &drift_spec(LAG, 2024));
    let mut outputs = Vec::new();
    for threads in [1usize, 8] {
        let config = RunConfig {
            corpus: corpus.clone(),
            cohort_authors: vec!["Cohort, A.".into()],
            out_dir: dir.path().join(format!("out{threads}")),
            cache_dir: Some(dir.path().join(format!("cache{threads}"))),
            parallelism: Some(threads),
            ..Default::default()
        };
        run(&config, &[Stage::KldSync, Stage::KldAsync, Stage::TokenTrends]).map_err(|e| e.to_string())?;
        outputs.push(csv_outputs(&config.out_dir));
    }
    check(outputs[0].len() > 3, || "too few CSV outputs".into())?;
    let names: Vec<&String> = outputs[0].keys().collect();
    check(outputs[0].keys().eq(outputs[1].keys()), || "different output files".into())?;
    for name in &names {
        check(outputs[0][*name] == outputs[1][*name], || format!("{name} differs"))?;
    }
    Ok(format!("{} CSV files identical at 1 and 8 threads, {:.2?}", names.len(), start.elapsed()))
}

// ---------------------------------------------------------------- 6

fn ede_trend() -> Outcome {
    let start = Instant::now();
    let d = 16;
    let slices = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = EmbeddingStore::new(d, "synthetic").map_err(|e| e.to_string())?;
    let mut docs = Vec::new();
    let a = vec![0.0; d];
    let mut b = vec![0.0; d];
    b[0] = 100.0;
    for (id, v) in [("A", &a), ("B", &b)] {
        docs.push(Document::new(id, 1957, vec![id.into()], "reference", None));
        store.insert(id, v.clone()).map_err(|e| e.to_string())?;
    }
    let around = |rng: &mut ChaCha8Rng, centre: &[f64], r: f64| -> Vec<f64> {
        let u = gaussian_vec(rng, d, 1.0);
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        centre.iter().zip(&u).map(|(c, x)| c + r * x / norm).collect()
    };
    for j in 0..slices {
        let r_a = 4.0 / (1.0 + j as f64);
        let r_b = 0.25 * (1.0 + j as f64);
        for i in 0..10 {
            for (tag, centre, r) in [("a", &a, r_a), ("b", &b, r_b)] {
                let id = format!("{tag}{j}_{i}");
                docs.push(Document::new(id.clone(), 1957 + 2 * j, vec!["X".into()], "point", None));
                store.insert(id, around(&mut rng, centre, r)).map_err(|e| e.to_string())?;
            }
        }
    }
    let corpus = Corpus::new(docs).map_err(|e| e.to_string())?;
    let config = EdeConfig {
        bandwidth: BandwidthRule::Fixed(1.0),
        ..Default::default()
    };
    let traj = ede_trajectories(&corpus, &store, &["A", "B"], &config).map_err(|e| e.to_string())?;
    let median = median_series(&traj).map_err(|e| e.to_string())?;
    let da: Vec<f64> = traj[0].points.iter().map(|p| p.density).collect();
    let db: Vec<f64> = traj[1].points.iter().map(|p| p.density).collect();
    check(da.len() == slices as usize && db.len() == slices as usize, || "trajectory length".into())?;
    check(da.windows(2).all(|w| w[1] > w[0]), || format!("A not strictly increasing: {da:?}"))?;
    check(db.windows(2).all(|w| w[1] < w[0]), || format!("B not strictly decreasing: {db:?}"))?;
    for (k, m) in median.points.iter().enumerate() {
        let (lo, hi) = (da[k].min(db[k]), da[k].max(db[k]));
        check(lo <= m.median && m.median <= hi, || format!("median {} outside [{lo}, {hi}] at {}", m.median, m.slice))?;
    }
    within(start.elapsed(), 10)?;
    Ok(format!("{slices} slices, A up, B down, median between, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- 8

/// Author strings whose surname (text before the first comma) is `surname`.
fn authors_named(corpus: &Corpus, surname: &str) -> Vec<String> {
    let mut v: Vec<String> = corpus
        .documents()
        .iter()
        .flat_map(|d| d.authors.iter())
        .filter(|a| a.split(',').next().map(str::trim) == Some(surname))
        .cloned()
        .collect();
    v.sort();
    v.dedup();
    v
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn reference_corpus(path: &Path) -> Outcome {
    let (corpus, _) = load_corpus(path, &LoadOptions::default()).map_err(|e| e.to_string())?;
    let slices = slice_corpus(&corpus, 2, 1957).map_err(|e| e.to_string())?;
    let texts: Vec<(&str, &str)> = corpus.documents().iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
    let tokens = normalize_all(texts, &NormalizationConfig::default());
    let mut series: HashMap<&str, Vec<(i32, f64)>> = HashMap::new();
    for name in ["Treder", "Silk"] {
        let ids = authors_named(&corpus, name);
        let cohort = CohortSelector::authors(ids).map_err(|e| format!("{name}: {e}"))?;
        let models = prepare_models(&slices, &cohort, &tokens).map_err(|e| e.to_string())?;
        let s = synchronous_series(&models, &KldConfig::default()).map_err(|e| e.to_string())?;
        series.insert(
            name,
            s.points
                .iter()
                .filter_map(|p| p.report.as_ref().map(|r| (p.slice.start, r.summed_significant_bits)))
                .collect(),
        );
    }
    let treder = &series["Treder"];
    let late = treder.iter().filter(|(y, _)| (1997..=2000).contains(y)).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mid_min = treder.iter().filter(|(y, _)| (1973..=1978).contains(y)).map(|p| p.1).fold(f64::INFINITY, f64::min);
    check(late > mid_min, || format!("Treder 1997-2000 max {late} not above mid-1970s minimum {mid_min}"))?;
    let post = |s: &[(i32, f64)]| median(s.iter().filter(|(y, _)| *y >= 1975).map(|p| p.1).collect());
    let (silk, tred) = (post(&series["Silk"]), post(treder));
    check(silk < tred, || format!("Silk post-1975 median {silk} not below Treder's {tred}"))?;
    Ok(format!("Treder late {late:.3} > mid-1970s min {mid_min:.3}; post-1975 medians Silk {silk:.3} < Treder {tred:.3}"))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 kld oracle", kld_oracle),
        ("2 smoothing properties", smoothing_properties),
        ("3 welch and t oracle", welch_oracle),
        ("4 kde oracle", kde_oracle),
        ("5 planted drift", planted_drift),
        ("6 ede trend recovery", ede_trend),
        ("7 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    match std::env::var_os("SEMTRAJ_REFERENCE_CORPUS") {
        Some(path) => match reference_corpus(Path::new(&path)) {
            Ok(detail) => println!("PASS 8 reference corpus: {detail}"),
            // informational only; never fails the suite
            Err(detail) => println!("FAIL 8 reference corpus (optional, not counted): {detail}"),
        },
        None => println!("SKIP 8 reference corpus: set SEMTRAJ_REFERENCE_CORPUS to the published JSONL corpus"),
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
