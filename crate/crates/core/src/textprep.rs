//! Text normalization: raw title/abstract text to unigram tokens.
//!
//! Pipeline order is fixed: tokenize, lowercase, strip numbers and symbols,
//! remove stopwords, apply the normalizer, then re-check every filter on the
//! normalized token so that output tokens always survive their own filters.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "table")]
pub enum Normalizer {
    None,
    SuffixStemmer,
    /// term -> lemma lookup; terms missing from the table pass through.
    LemmaTable(std::collections::BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    pub strip_numbers: bool,
    pub strip_symbols: bool,
    pub stopwords: BTreeSet<String>,
    pub normalizer: Normalizer,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            strip_numbers: true,
            strip_symbols: true,
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            normalizer: Normalizer::SuffixStemmer,
        }
    }
}

impl NormalizationConfig {
    pub fn with_stopword_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.stopwords = parse_stopwords(&text);
        Ok(self)
    }

    pub fn with_lemma_table(mut self, path: impl AsRef<Path>) -> Result<Self> {
        self.normalizer = Normalizer::LemmaTable(load_lemma_table(path)?);
        Ok(self)
    }

    /// SHA-256 over the sorted stopword list, one word per line.
    pub fn stopwords_hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.stopwords {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Reads a tab-separated `term<TAB>lemma` table.
pub fn load_lemma_table(path: impl AsRef<Path>) -> Result<std::collections::BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (term, lemma) = line.split_once('\t').ok_or_else(|| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected term<TAB>lemma".into(),
        })?;
        table.insert(term.trim().to_lowercase(), lemma.trim().to_lowercase());
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

/// Splits into maximal runs of alphanumeric characters and runs of other
/// non-whitespace characters.
fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<(usize, bool)> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some((s, _)) = start.take() {
                out.push(&text[s..i]);
            }
            continue;
        }
        let alnum = c.is_alphanumeric();
        match start {
            Some((s, kind)) if kind != alnum => {
                out.push(&text[s..i]);
                start = Some((i, alnum));
            }
            None => start = Some((i, alnum)),
            _ => {}
        }
    }
    if let Some((s, _)) = start {
        out.push(&text[s..]);
    }
    out
}

/// English plural stripper. Idempotent: `stem(stem(w)) == stem(w)`.
pub fn stem(word: &str) -> String {
    let n = word.chars().count();
    if !word.is_ascii() || n <= 3 {
        return word.to_string();
    }
    if word.ends_with("ies") && n > 4 {
        return format!("{}y", &word[..word.len() - 3]);
    }
    if word.ends_with("sses") {
        return word[..word.len() - 2].to_string();
    }
    for suffix in ["ches", "shes", "xes", "zes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

fn keep(token: &str, config: &NormalizationConfig) -> bool {
    if token.chars().count() < 2 {
        return false;
    }
    if config.strip_numbers && token.chars().all(|c| c.is_ascii_digit()) {
        return false;
    }
    if config.strip_symbols && !token.chars().any(char::is_alphanumeric) {
        return false;
    }
    !config.stopwords.contains(token)
}

pub fn normalize(doc_id: &str, text: &str, config: &NormalizationConfig) -> TokenStream {
    let tokens = tokenize(text)
        .into_iter()
        .map(|t| if config.lowercase { t.to_lowercase() } else { t.to_string() })
        .filter(|t| keep(t, config))
        .map(|t| match &config.normalizer {
            Normalizer::None => t,
            Normalizer::SuffixStemmer => stem(&t),
            Normalizer::LemmaTable(table) => table.get(&t).cloned().unwrap_or(t),
        })
        .filter(|t| keep(t, config))
        .collect();
    TokenStream {
        doc_id: doc_id.to_string(),
        tokens,
    }
}

/// Token streams for a whole corpus, keyed by document id.
pub fn normalize_all<'a, I>(docs: I, config: &NormalizationConfig) -> HashMap<String, TokenStream>
where
    I: rayon::iter::IntoParallelIterator<Item = (&'a str, &'a str)>,
{
    use rayon::prelude::*;
    docs.into_par_iter()
        .map(|(id, text)| (id.to_string(), normalize(id, text, config)))
        .collect()
}
