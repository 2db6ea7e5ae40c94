//! Kullback-Leibler divergence between cohort and field language models.
//!
//! Direction is fixed: `D(cohort || field)`, the expected number of extra
//! bits needed to encode cohort text with a code optimised for the field.
//! Nothing here symmetrizes.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{partition_slice, CohortSelector, SliceId, TimeSlice};
use crate::error::{Error, Result};
use crate::stats::{welch_from_moments, Moments};
use crate::textprep::TokenStream;
use crate::unigram::{build_from_docs, smooth, DocCounts, SmoothedUnigramModel, UnigramModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub term: String,
    pub kld_bits: f64,
    pub p_d: f64,
    pub p_q: f64,
    /// Welch p-value; terms that were never tested carry 1.
    pub p_value: f64,
    pub significant: bool,
}

/// Per-term summands of `D(d || q)` in bits, sorted by descending
/// contribution (ties by term).
pub fn pointwise_kld(d_model: &SmoothedUnigramModel, q_model: &SmoothedUnigramModel) -> Result<Vec<TermContribution>> {
    let (d, q) = (d_model.probs(), q_model.probs());
    if d.len() != q.len() || d.keys().zip(q.keys()).any(|(a, b)| a != b) {
        return Err(Error::VocabularyMismatch);
    }
    let mut out: Vec<TermContribution> = d
        .iter()
        .zip(q.values())
        .map(|((term, &p_d), &p_q)| TermContribution {
            term: term.clone(),
            kld_bits: p_d * (p_d / p_q).log2(),
            p_d,
            p_q,
            p_value: 1.0,
            significant: false,
        })
        .collect();
    sort_contributions(&mut out);
    Ok(out)
}

fn sort_contributions(c: &mut [TermContribution]) {
    c.sort_by(|a, b| b.kld_bits.total_cmp(&a.kld_bits).then_with(|| a.term.cmp(&b.term)));
}

/// Sums in sorted-term order so results do not depend on list order.
fn ordered_sum<'a>(items: impl Iterator<Item = &'a TermContribution>) -> f64 {
    let mut by_term: Vec<(&str, f64)> = items.map(|c| (c.term.as_str(), c.kld_bits)).collect();
    by_term.sort_by(|a, b| a.0.cmp(b.0));
    by_term.into_iter().map(|(_, v)| v).sum()
}

/// Moments of per-document relative frequencies for every term, with
/// documents lacking a term counted as zero.
#[derive(Debug, Clone)]
pub struct DocFrequencyStats {
    n_docs: usize,
    per_term: HashMap<String, Moments>,
}

impl DocFrequencyStats {
    pub fn from_model(model: &UnigramModel) -> Self {
        Self::from_docs(model.docs())
    }

    pub fn from_docs(docs: &[DocCounts]) -> Self {
        let n = docs.len();
        let mut nonzero: HashMap<&str, Vec<f64>> = HashMap::new();
        for d in docs {
            for (t, &c) in &d.counts {
                nonzero.entry(t.as_str()).or_default().push(c as f64 / d.total as f64);
            }
        }
        let per_term = nonzero
            .into_iter()
            .map(|(t, freqs)| {
                let mean = freqs.iter().sum::<f64>() / n as f64;
                let zeros = (n - freqs.len()) as f64;
                let ss: f64 = freqs.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() + zeros * mean * mean;
                let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
                (t.to_string(), Moments { n, mean, var })
            })
            .collect();
        DocFrequencyStats { n_docs: n, per_term }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn moments(&self, term: &str) -> Moments {
        self.per_term.get(term).copied().unwrap_or(Moments {
            n: self.n_docs,
            mean: 0.0,
            var: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub p_value: f64,
    pub significant: bool,
}

/// Welch test per term on zero-filled per-document relative frequencies.
/// Significance is strict: `p < alpha`. With fewer than two documents on
/// either side nothing can be tested and every term is reported with p = 1.
pub fn significance_filter<'a, I>(
    cohort: &DocFrequencyStats,
    field: &DocFrequencyStats,
    terms: I,
    alpha: f64,
) -> BTreeMap<String, Significance>
where
    I: IntoIterator<Item = &'a str>,
{
    let testable = cohort.n_docs >= 2 && field.n_docs >= 2;
    if !testable {
        log::warn!(
            "significance test skipped: {} cohort and {} field documents (need 2 each)",
            cohort.n_docs,
            field.n_docs
        );
    }
    terms
        .into_iter()
        .map(|t| {
            let p_value = if testable {
                welch_from_moments(cohort.moments(t), field.moments(t)).map_or(1.0, |r| r.p_two_sided)
            } else {
                1.0
            };
            (
                t.to_string(),
                Significance {
                    p_value,
                    significant: p_value < alpha,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundMode {
    /// Union of the two document sets being compared.
    #[default]
    PairUnion,
    /// All documents in the sliced range.
    WholeCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub background: BackgroundMode,
    /// Provenance hash stamped on every report.
    pub config_hash: String,
}

impl KldConfig {
    pub fn new(lambda: f64, alpha: f64, background: BackgroundMode) -> Self {
        let mut h = Sha256::new();
        h.update(format!("lambda={lambda:?};alpha={alpha:?};background={background:?}"));
        KldConfig {
            lambda,
            alpha,
            background,
            config_hash: hex::encode(&h.finalize()[..8]),
        }
    }
}

impl Default for KldConfig {
    fn default() -> Self {
        KldConfig::new(0.05, 0.05, BackgroundMode::PairUnion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldReport {
    pub d_slice: SliceId,
    pub q_slice: SliceId,
    pub contributions: Vec<TermContribution>,
    pub summed_significant_bits: f64,
    pub summed_all_bits: f64,
    pub alpha: f64,
    pub config_hash: String,
}

impl KldReport {
    pub fn significant(&self) -> impl Iterator<Item = &TermContribution> {
        self.contributions.iter().filter(|c| c.significant)
    }
}

/// Unsmoothed cohort and field models for one slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceModels {
    pub id: SliceId,
    pub partial: bool,
    pub n_cohort_docs: usize,
    pub n_field_docs: usize,
    pub cohort: Option<UnigramModel>,
    pub field: Option<UnigramModel>,
}

/// Per-slice cohort/field models ready for divergence computations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlicedModels {
    pub slices: Vec<SliceModels>,
}

fn optional_model(docs: Vec<DocCounts>) -> Result<Option<UnigramModel>> {
    match build_from_docs(docs) {
        Ok(m) => Ok(Some(m)),
        Err(Error::EmptyModel) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Partitions every slice and builds cohort and field models. Documents
/// without a token stream in `tokens` are treated as empty.
pub fn prepare_models(
    slices: &[TimeSlice],
    cohort: &CohortSelector,
    tokens: &HashMap<String, TokenStream>,
) -> Result<SlicedModels> {
    let counts = |docs: &[std::sync::Arc<crate::corpus::Document>]| -> Vec<DocCounts> {
        docs.iter()
            .filter_map(|d| tokens.get(&d.id))
            .map(DocCounts::from_stream)
            .collect()
    };
    let slices = slices
        .par_iter()
        .map(|slice| {
            let (c, f) = partition_slice(slice, cohort);
            Ok(SliceModels {
                id: slice.id,
                partial: slice.partial,
                n_cohort_docs: c.len(),
                n_field_docs: f.len(),
                cohort: optional_model(counts(&c))?,
                field: optional_model(counts(&f))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SlicedModels { slices })
}

impl SlicedModels {
    fn whole_background(&self) -> Option<UnigramModel> {
        self.slices
            .iter()
            .flat_map(|s| s.cohort.iter().chain(s.field.iter()))
            .fold(None, |acc: Option<UnigramModel>, m| Some(acc.map_or_else(|| m.clone(), |a| a.merge(m))))
    }
}

/// One side of a comparison.
#[derive(Debug, Clone, Copy)]
pub struct Side<'a> {
    pub slice: SliceId,
    pub model: &'a UnigramModel,
    pub stats: &'a DocFrequencyStats,
}

/// Builds the full report for one (cohort, field) pair. `whole` replaces
/// the pair-union background when given.
pub fn compare(cohort: Side<'_>, field: Side<'_>, whole: Option<&UnigramModel>, config: &KldConfig) -> Result<KldReport> {
    let (d_slice, q_slice) = (cohort.slice, field.slice);
    let (cohort_stats, field_stats) = (cohort.stats, field.stats);
    let (cohort, field) = (cohort.model, field.model);
    let union;
    let background = match whole {
        Some(w) => w,
        None => {
            union = cohort.merge(field);
            &union
        }
    };
    let d = smooth(cohort, background, config.lambda)?;
    let q = smooth(field, background, config.lambda)?;
    let mut contributions = pointwise_kld(&d, &q)?;
    let sig = significance_filter(cohort_stats, field_stats, background.vocab(), config.alpha);
    for c in &mut contributions {
        let s = sig[&c.term];
        c.p_value = s.p_value;
        c.significant = s.significant;
    }
    Ok(KldReport {
        d_slice,
        q_slice,
        summed_all_bits: ordered_sum(contributions.iter()),
        summed_significant_bits: ordered_sum(contributions.iter().filter(|c| c.significant)),
        contributions,
        alpha: config.alpha,
        config_hash: config.config_hash.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncPoint {
    pub slice: SliceId,
    pub partial: bool,
    pub n_cohort_docs: usize,
    pub n_field_docs: usize,
    /// `None` marks a gap: the cohort (or field) has no text in this slice.
    pub report: Option<KldReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncSeries {
    pub points: Vec<SyncPoint>,
}

impl SyncSeries {
    pub fn get(&self, slice: SliceId) -> Option<&SyncPoint> {
        self.points.iter().find(|p| p.slice == slice)
    }
}

/// Cohort vs field divergence within each slice.
pub fn synchronous_series(models: &SlicedModels, config: &KldConfig) -> Result<SyncSeries> {
    if models.slices.iter().all(|s| s.cohort.is_none()) {
        return Err(Error::EmptyCohort);
    }
    let whole = match config.background {
        BackgroundMode::WholeCorpus => models.whole_background(),
        BackgroundMode::PairUnion => None,
    };
    let points = models
        .slices
        .par_iter()
        .map(|s| {
            let report = match (&s.cohort, &s.field) {
                (Some(c), Some(f)) => {
                    let (cs, fs) = (DocFrequencyStats::from_model(c), DocFrequencyStats::from_model(f));
                    Some(compare(
                        Side { slice: s.id, model: c, stats: &cs },
                        Side { slice: s.id, model: f, stats: &fs },
                        whole.as_ref(),
                        config,
                    )?)
                }
                _ => None,
            };
            Ok(SyncPoint {
                slice: s.id,
                partial: s.partial,
                n_cohort_docs: s.n_cohort_docs,
                n_field_docs: s.n_field_docs,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyncSeries { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldMatrix {
    /// Slices with cohort text.
    pub rows: Vec<SliceId>,
    /// Slices with field text.
    pub cols: Vec<SliceId>,
    /// Summed significant bits, `values[row][col]`.
    pub values: Vec<Vec<f64>>,
    pub argmin_per_row: Vec<usize>,
    pub alpha: f64,
    pub config_hash: String,
}

impl KldMatrix {
    /// Year offset of each row's minimum (`col.start - row.start`).
    pub fn argmin_offsets(&self) -> Vec<i32> {
        self.rows
            .iter()
            .zip(&self.argmin_per_row)
            .map(|(r, &j)| self.cols[j].start - r.start)
            .collect()
    }
}

/// Cohort model of every slice against the field model of every slice.
/// Field models never contain cohort documents, in any slice.
pub fn asynchronous_matrix(models: &SlicedModels, config: &KldConfig) -> Result<KldMatrix> {
    let rows: Vec<(SliceId, &UnigramModel)> = models
        .slices
        .iter()
        .filter_map(|s| s.cohort.as_ref().map(|m| (s.id, m)))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let cols: Vec<(SliceId, &UnigramModel)> = models
        .slices
        .iter()
        .filter_map(|s| s.field.as_ref().map(|m| (s.id, m)))
        .collect();
    if cols.is_empty() {
        return Err(Error::InvalidArgument("field has no text in any slice".into()));
    }
    let whole = match config.background {
        BackgroundMode::WholeCorpus => models.whole_background(),
        BackgroundMode::PairUnion => None,
    };
    let row_stats: Vec<DocFrequencyStats> = rows.par_iter().map(|(_, m)| DocFrequencyStats::from_model(m)).collect();
    let col_stats: Vec<DocFrequencyStats> = cols.par_iter().map(|(_, m)| DocFrequencyStats::from_model(m)).collect();

    let ncols = cols.len();
    let flat = (0..rows.len() * ncols)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / ncols, k % ncols);
            let r = compare(
                Side { slice: rows[i].0, model: rows[i].1, stats: &row_stats[i] },
                Side { slice: cols[j].0, model: cols[j].1, stats: &col_stats[j] },
                whole.as_ref(),
                config,
            )?;
            Ok(r.summed_significant_bits)
        })
        .collect::<Result<Vec<f64>>>()?;
    let values: Vec<Vec<f64>> = flat.chunks(ncols).map(<[f64]>::to_vec).collect();
    let argmin_per_row = values
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .map(|(j, _)| j)
                .expect("non-empty row")
        })
        .collect();
    Ok(KldMatrix {
        rows: rows.iter().map(|r| r.0).collect(),
        cols: cols.iter().map(|c| c.0).collect(),
        values,
        argmin_per_row,
        alpha: config.alpha,
        config_hash: config.config_hash.clone(),
    })
}
