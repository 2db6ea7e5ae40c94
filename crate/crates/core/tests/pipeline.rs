mod common;

use std::path::Path;

use semtraj::pipeline::{run, RunConfig, Stage};
use semtraj::report::read_kld_report_csv;
use semtraj::Error;

fn config(dir: &Path) -> RunConfig {
    let corpus = dir.join("corpus.jsonl");
    if !corpus.exists() {
        common::write_small_corpus(&corpus);
    }
    RunConfig {
        corpus,
        cohort_authors: vec!["Cohort, A.".into()],
        out_dir: dir.join("out"),
        min_tokens: 10,
        ..Default::default()
    }
}

const KLD: [Stage; 3] = [Stage::KldSync, Stage::KldAsync, Stage::TokenTrends];

#[test]
fn second_run_is_fully_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let first = run(&cfg, &KLD).unwrap();
    assert!(first.recomputed.contains(&"counts".to_string()));
    assert!(dir.path().join("out/kld_sync.svg").is_file());
    assert!(dir.path().join("out/manifest.json").is_file());

    let second = run(&cfg, &KLD).unwrap();
    assert!(second.recomputed.is_empty(), "{:?}", second.recomputed);
    assert!(second.cache.iter().all(|e| e.hit));
    assert_eq!(first.output_hashes(), second.output_hashes());
}

#[test]
fn lambda_change_reuses_upstream_caches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run(&cfg, &[Stage::KldSync]).unwrap();
    let changed = RunConfig { lambda: 0.2, ..cfg };
    let m = run(&changed, &[Stage::KldSync]).unwrap();
    assert_eq!(m.recomputed, ["kld-sync"]);
    assert!(m.cache.iter().any(|e| e.namespace == "counts" && e.hit));
}

#[test]
fn window_change_keeps_corpus_and_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run(&cfg, &[Stage::KldSync]).unwrap();
    let changed = RunConfig { window: 4, ..cfg };
    let m = run(&changed, &[Stage::KldSync]).unwrap();
    for ns in ["corpus", "tokens"] {
        assert!(m.cache.iter().any(|e| e.namespace == ns && e.hit), "{ns} should hit");
    }
    assert!(m.recomputed.contains(&"slices".to_string()));
}

#[test]
fn cached_results_match_fresh_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let warm = run(&cfg, &KLD).unwrap();
    let again = run(&cfg, &KLD).unwrap();
    let fresh_cfg = RunConfig {
        out_dir: dir.path().join("fresh"),
        ..cfg
    };
    let fresh = run(&fresh_cfg, &KLD).unwrap();
    assert!(again.recomputed.is_empty());
    assert!(!fresh.recomputed.is_empty());
    assert_eq!(warm.output_hashes(), fresh.output_hashes());
}

#[test]
fn ede_without_embeddings_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let err = run(&cfg, &[Stage::KldSync, Stage::Ede]).unwrap_err();
    assert!(matches!(err, Error::MissingPrerequisite(_)), "{err}");
    assert!(!cfg.out_dir.exists());
    assert!(!cfg.cache_dir().exists());
}

#[test]
fn missing_corpus_is_a_prerequisite_error() {
    let cfg = RunConfig {
        corpus: "/nonexistent/corpus.jsonl".into(),
        cohort_authors: vec!["x".into()],
        ..Default::default()
    };
    assert!(matches!(run(&cfg, &[Stage::KldSync]), Err(Error::MissingPrerequisite(_))));
}

#[test]
fn ede_stage_from_embedding_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    // Embed each document as (slice index, position in slice) so densities are finite and distinct.
    let corpus = std::fs::read_to_string(&cfg.corpus).unwrap();
    let mut tsv = String::from("# dim=2 model=toy\n");
    for line in corpus.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let id = v["id"].as_str().unwrap();
        let (s, d) = (id[1..3].parse::<f64>().unwrap(), id[4..7].parse::<f64>().unwrap());
        tsv.push_str(&format!("{id}\t{},{}\n", s * 0.1, d * 0.01));
    }
    let emb = dir.path().join("emb.tsv");
    std::fs::write(&emb, tsv).unwrap();
    cfg.embeddings = Some(emb);
    cfg.bandwidth = "fixed:0.5".parse().unwrap();
    let m = run(&cfg, &[Stage::Ede]).unwrap();
    let paths: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    assert_eq!(paths, ["ede.csv", "ede_median.csv", "ede.json", "ede.svg"]);
    let median = std::fs::read_to_string(dir.path().join("out/ede_median.csv")).unwrap();
    // 8 cohort references per slice; slice k is covered by the references of slices 0..=k
    assert!(median.lines().any(|l| l.starts_with("1957-1958,") && l.ends_with(",8")));
    assert!(median.lines().any(|l| l.starts_with("1967-1968,") && l.ends_with(",48")));
}

#[test]
fn terms_csv_reproduces_summed_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run(&cfg, &[Stage::KldSync]).unwrap();
    let series = std::fs::read_to_string(dir.path().join("out/kld_sync.csv")).unwrap();
    let mut checked = 0;
    for line in series.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[4].is_empty() {
            continue;
        }
        let text = std::fs::read_to_string(dir.path().join(format!("out/terms/{}.csv", f[0]))).unwrap();
        let parsed = read_kld_report_csv(&text).unwrap();
        assert!((parsed.summed_significant_bits() - f[4].parse::<f64>().unwrap()).abs() < 1e-9);
        assert!((parsed.summed_all_bits() - f[5].parse::<f64>().unwrap()).abs() < 1e-9);
        checked += 1;
    }
    assert_eq!(checked, 6);
}
