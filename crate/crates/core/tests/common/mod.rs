#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BACKGROUND_TERMS: usize = 100;
pub const TOPIC_TERMS: usize = 320;
pub const TOKENS_PER_DOC: usize = 60;

/// Pronounceable, stopword-free words that the stemmer leaves unchanged.
pub fn word(prefix: char, mut k: usize) -> String {
    const LETTERS: &[u8] = b"bcdfghjklm";
    let mut w = String::from(prefix);
    for _ in 0..3 {
        w.push(LETTERS[k % 10] as char);
        k /= 10;
    }
    w
}

/// Topic centre of slice `s`; the topic drifts steadily through the vocabulary.
pub fn centre(s: i32) -> f64 {
    60.0 + 8.0 * s as f64
}

fn sample_doc(rng: &mut ChaCha8Rng, centre: f64) -> String {
    let zipf_total: f64 = (1..=BACKGROUND_TERMS).map(|r| 1.0 / r as f64).sum();
    let mut words = Vec::with_capacity(TOKENS_PER_DOC);
    for _ in 0..TOKENS_PER_DOC {
        if rng.random::<bool>() {
            let mut u = rng.random::<f64>() * zipf_total;
            let mut k = 0;
            while k + 1 < BACKGROUND_TERMS && u >= 1.0 / (k + 1) as f64 {
                u -= 1.0 / (k + 1) as f64;
                k += 1;
            }
            words.push(word('z', k));
        } else {
            // Box-Muller normal around the topic centre, sigma 8 terms
            let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            let k = (centre + 8.0 * z).round().clamp(0.0, (TOPIC_TERMS - 1) as f64) as usize;
            words.push(word('t', k));
        }
    }
    words.join(" ")
}

pub struct DriftSpec {
    pub slices: i32,
    pub docs_per_slice: usize,
    pub cohort_per_slice: usize,
    /// Cohort documents of slice `s` follow the field of slice `s - lag`.
    pub lag: i32,
    pub start_year: i32,
    pub seed: u64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec {
            slices: 20,
            docs_per_slice: 300,
            cohort_per_slice: 30,
            lag: 3,
            start_year: 1957,
            seed: 2024,
        }
    }
}

/// Writes a two-year-slice JSONL corpus. Cohort documents carry the single
/// author `"Cohort, A."`; field documents have per-document authors.
pub fn write_drift_corpus(path: &Path, spec: &DriftSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for s in 0..spec.slices {
        for i in 0..spec.docs_per_slice {
            let cohort = i < spec.cohort_per_slice;
            let c = if cohort { centre(s - spec.lag) } else { centre(s) };
            let text = sample_doc(&mut rng, c);
            let year = spec.start_year + 2 * s + (i % 2) as i32;
            let author = if cohort { "Cohort, A.".to_string() } else { format!("Field, {s}.{i}") };
            let rec = serde_json::json!({
                "id": format!("s{s:02}d{i:03}"),
                "year": year,
                "authors": [author],
                "title": text,
            });
            writeln!(out, "{rec}").unwrap();
        }
    }
    out.flush().unwrap();
}

/// Six slices of 40 documents, 8 of them from the cohort.
pub fn write_small_corpus(path: &Path) {
    write_drift_corpus(
        path,
        &DriftSpec {
            slices: 6,
            docs_per_slice: 40,
            cohort_per_slice: 8,
            lag: 2,
            start_year: 1957,
            seed: 7,
        },
    );
}
