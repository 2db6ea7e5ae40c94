//! Unigram language models and Jelinek-Mercer interpolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::textprep::TokenStream;

/// Term counts of one contributing document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocCounts {
    pub doc_id: String,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl DocCounts {
    pub fn from_stream(stream: &TokenStream) -> Self {
        let mut counts = BTreeMap::new();
        for t in &stream.tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        DocCounts {
            doc_id: stream.doc_id.clone(),
            total: stream.tokens.len() as u64,
            counts,
        }
    }

    pub fn rel_freq(&self, term: &str) -> f64 {
        self.counts.get(term).map_or(0.0, |&c| c as f64 / self.total as f64)
    }
}

/// Maximum-likelihood unigram model aggregated over documents.
///
/// Documents whose token stream is empty carry no relative frequencies and
/// are not recorded as contributing documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnigramModel {
    counts: BTreeMap<String, u64>,
    total: u64,
    docs: Vec<DocCounts>,
}

impl UnigramModel {
    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn docs(&self) -> &[DocCounts] {
        &self.docs
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.counts.contains_key(term)
    }

    pub fn prob(&self, term: &str) -> f64 {
        self.counts.get(term).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    /// Relative frequency of `term` in each contributing document. With
    /// `zero_fill` every document yields an entry; otherwise only documents
    /// containing the term do.
    pub fn per_doc_freqs(&self, term: &str, zero_fill: bool) -> Vec<f64> {
        self.docs
            .iter()
            .filter(|d| zero_fill || d.counts.contains_key(term))
            .map(|d| d.rel_freq(term))
            .collect()
    }

    /// Model over the union of both document sets.
    pub fn merge(&self, other: &UnigramModel) -> UnigramModel {
        let mut counts = self.counts.clone();
        for (t, &c) in &other.counts {
            *counts.entry(t.clone()).or_insert(0) += c;
        }
        let mut docs = self.docs.clone();
        docs.extend(other.docs.iter().cloned());
        UnigramModel {
            counts,
            total: self.total + other.total,
            docs,
        }
    }

    /// Short content hash identifying this model as a background.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (t, c) in &self.counts {
            h.update(t.as_bytes());
            h.update([0]);
            h.update(c.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

pub fn build_model<'a, I>(streams: I) -> Result<UnigramModel>
where
    I: IntoIterator<Item = &'a TokenStream>,
{
    build_from_docs(streams.into_iter().map(DocCounts::from_stream))
}

pub fn build_from_docs<I>(docs: I) -> Result<UnigramModel>
where
    I: IntoIterator<Item = DocCounts>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0;
    let mut kept = Vec::new();
    for d in docs {
        if d.total == 0 {
            continue;
        }
        for (t, &c) in &d.counts {
            *counts.entry(t.clone()).or_insert(0) += c;
        }
        total += d.total;
        kept.push(d);
    }
    if total == 0 {
        return Err(Error::EmptyModel);
    }
    Ok(UnigramModel {
        counts,
        total,
        docs: kept,
    })
}

/// A model interpolated with a background model, defined over the
/// background vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedUnigramModel {
    probs: BTreeMap<String, f64>,
    lambda: f64,
    background_id: String,
}

impl SmoothedUnigramModel {
    /// Wraps an explicit distribution. Probabilities must be positive and
    /// sum to one within 1e-9.
    pub fn from_probs(probs: BTreeMap<String, f64>, lambda: f64, background_id: impl Into<String>) -> Result<Self> {
        if probs.values().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidArgument("probabilities must lie in (0, 1]".into()));
        }
        let sum: f64 = probs.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(SmoothedUnigramModel {
            probs,
            lambda,
            background_id: background_id.into(),
        })
    }

    pub fn probs(&self) -> &BTreeMap<String, f64> {
        &self.probs
    }

    pub fn prob(&self, term: &str) -> Option<f64> {
        self.probs.get(term).copied()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn background_id(&self) -> &str {
        &self.background_id
    }
}

/// Jelinek-Mercer interpolation: `(1 - lambda) * P_model + lambda * P_background`
/// over every background term. `lambda` is the background weight.
pub fn smooth(model: &UnigramModel, background: &UnigramModel, lambda: f64) -> Result<SmoothedUnigramModel> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside (0, 1)")));
    }
    if let Some(t) = model.vocab().find(|t| !background.contains(t)) {
        return Err(Error::BackgroundMissingTerm(t.to_string()));
    }
    let probs = background
        .counts
        .keys()
        .map(|t| (t.clone(), (1.0 - lambda) * model.prob(t) + lambda * background.prob(t)))
        .collect();
    Ok(SmoothedUnigramModel {
        probs,
        lambda,
        background_id: background.fingerprint(),
    })
}
