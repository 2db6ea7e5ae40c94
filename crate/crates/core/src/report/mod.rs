//! Tables, exports and plots.
//!
//! Every CSV starts with `# key=value` comment lines carrying at least the
//! config hash and stopword-list hash; JSON documents carry the same keys
//! at top level next to `data`; SVG files carry them in an XML comment.

mod svg;
mod tables;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{slice_corpus, CohortSelector, Corpus, SliceId};
use crate::error::{Error, Result};
use crate::textprep::TokenStream;

pub use svg::{ede_svg, matrix_heatmap_svg, pointwise_terms_svg, sync_series_svg, trends_svg};
pub use tables::{
    ede_csv, kld_report_csv, matrix_csv, median_csv, read_kld_report_csv, sync_series_csv, to_json, trends_csv, ParsedKldReport,
};

/// Provenance metadata written into every output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub stopwords_hash: String,
    /// Additional `key=value` metadata, e.g. a plot's smoothing bandwidth.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, stopwords_hash: impl Into<String>) -> Self {
        Provenance {
            config_hash: config_hash.into(),
            stopwords_hash: stopwords_hash.into(),
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.extra.insert(key.into(), value.to_string());
        self
    }

    fn entries(&self) -> Vec<(&str, &str)> {
        let mut v = vec![("config_hash", self.config_hash.as_str()), ("stopwords_hash", self.stopwords_hash.as_str())];
        v.extend(self.extra.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        v
    }

    fn comment_lines(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }

    fn from_comment_lines(text: &str) -> Self {
        let mut p = Provenance::default();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
                match k {
                    "config_hash" => p.config_hash = v.to_string(),
                    "stopwords_hash" => p.stopwords_hash = v.to_string(),
                    _ => {
                        p.extra.insert(k.to_string(), v.to_string());
                    }
                }
            }
        }
        p
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, creating parent directories as needed.
pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendOptions {
    pub top_k: usize,
    pub min_tokens: u64,
    pub window: u32,
    pub start_year: i32,
    /// Bandwidth in bins of the display smoothing; `None` disables it.
    pub smoothing_bandwidth: Option<f64>,
}

impl Default for TrendOptions {
    fn default() -> Self {
        TrendOptions {
            top_k: 20,
            min_tokens: 50,
            window: 2,
            start_year: 1957,
            smoothing_bandwidth: Some(1.0),
        }
    }
}

/// Relative frequency of a cohort's most used terms per slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrendTable {
    /// Ranked by total cohort count, ties alphabetical.
    pub terms: Vec<String>,
    pub bins: Vec<SliceId>,
    /// Cohort tokens per bin.
    pub bin_totals: Vec<u64>,
    /// `values[term][bin]`; `None` in excluded bins.
    pub values: BTreeMap<String, Vec<Option<f64>>>,
    pub excluded_bins: Vec<SliceId>,
    /// Display-only smoothed copy of `values`.
    pub smoothed: Option<BTreeMap<String, Vec<Option<f64>>>>,
    pub smoothing_bandwidth: Option<f64>,
}

/// Builds the trend table for the cohort's documents in `tokens`.
pub fn token_frequency_trends(
    corpus: &Corpus,
    cohort: &CohortSelector,
    tokens: &HashMap<String, TokenStream>,
    options: &TrendOptions,
) -> Result<FrequencyTrendTable> {
    if options.top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    let slices = slice_corpus(corpus, options.window, options.start_year)?;
    let mut per_bin: Vec<BTreeMap<&str, u64>> = vec![BTreeMap::new(); slices.len()];
    let mut bin_totals = vec![0u64; slices.len()];
    let mut overall: BTreeMap<&str, u64> = BTreeMap::new();
    for (k, slice) in slices.iter().enumerate() {
        for doc in slice.documents.iter().filter(|d| cohort.matches(d)) {
            let Some(stream) = tokens.get(&doc.id) else { continue };
            for t in &stream.tokens {
                *per_bin[k].entry(t).or_default() += 1;
                *overall.entry(t).or_default() += 1;
                bin_totals[k] += 1;
            }
        }
    }
    if overall.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut ranked: Vec<(&str, u64)> = overall.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let terms: Vec<String> = ranked.iter().take(options.top_k).map(|(t, _)| t.to_string()).collect();

    let included: Vec<bool> = bin_totals.iter().map(|&n| n > 0 && n >= options.min_tokens).collect();
    let values: BTreeMap<String, Vec<Option<f64>>> = terms
        .iter()
        .map(|t| {
            let row = (0..slices.len())
                .map(|k| included[k].then(|| per_bin[k].get(t.as_str()).copied().unwrap_or(0) as f64 / bin_totals[k] as f64))
                .collect();
            (t.clone(), row)
        })
        .collect();
    let smoothed = options
        .smoothing_bandwidth
        .map(|bw| values.iter().map(|(t, row)| (t.clone(), gaussian_smooth(row, bw))).collect());
    Ok(FrequencyTrendTable {
        terms,
        bins: slices.iter().map(|s| s.id).collect(),
        bin_totals,
        excluded_bins: slices.iter().zip(&included).filter(|(_, &inc)| !inc).map(|(s, _)| s.id).collect(),
        values,
        smoothed,
        smoothing_bandwidth: options.smoothing_bandwidth,
    })
}

/// Nadaraya-Watson smoothing over bin index; missing bins neither receive
/// nor contribute values.
pub fn gaussian_smooth(values: &[Option<f64>], bandwidth: f64) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| {
            values[i]?;
            let (mut num, mut den) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    let z = (i as f64 - j as f64) / bandwidth;
                    let w = (-0.5 * z * z).exp();
                    num += w * v;
                    den += w;
                }
            }
            Some(num / den)
        })
        .collect()
}
