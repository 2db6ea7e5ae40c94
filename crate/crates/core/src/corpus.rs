//! Document corpora: loading, validation, time slicing and cohort partitioning.
//!
//! A corpus file is UTF-8 JSON Lines, one publication per line:
//!
//! ```text
//! {"id": "1957AnP...454..123T", "year": 1957, "authors": ["Treder, H."],
//!  "title": "...", "abstract": "...", "language": "de"}
//! ```
//!
//! `title` and `abstract` are concatenated into the document text. Records
//! with empty text, missing year or a year outside the configured bounds are
//! skipped and counted as rejections; malformed JSON and duplicate ids are
//! fatal.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub year: i32,
    pub authors: Vec<String>,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub text: String,
    pub language: Option<String>,
}

impl Document {
    /// Builds a document, deriving `text` from title and abstract.
    pub fn new(
        id: impl Into<String>,
        year: i32,
        authors: Vec<String>,
        title: impl Into<String>,
        abstract_text: Option<String>,
    ) -> Self {
        let title = title.into();
        let text = join_text(&title, abstract_text.as_deref());
        Document {
            id: id.into(),
            year,
            authors,
            title,
            abstract_text,
            text,
            language: None,
        }
    }
}

fn join_text(title: &str, abstract_text: Option<&str>) -> String {
    let title = title.trim();
    match abstract_text.map(str::trim) {
        Some(a) if !a.is_empty() && !title.is_empty() => format!("{title} {a}"),
        Some(a) if !a.is_empty() => a.to_string(),
        _ => title.to_string(),
    }
}

/// Year bounds applied while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub year_min: i32,
    pub year_max: i32,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            year_min: 1900,
            year_max: 2100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    EmptyText,
    MissingYear,
    YearOutOfBounds(i32),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::EmptyText => f.write_str("empty text"),
            RejectReason::MissingYear => f.write_str("missing year"),
            RejectReason::YearOutOfBounds(y) => write!(f, "year {y} out of bounds"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct LoadStats {
    pub accepted: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Arc<Document>>,
    by_id: HashMap<String, usize>,
    pub year_min: i32,
    pub year_max: i32,
}

impl Corpus {
    /// Validates and wraps a document list. Fails on duplicate ids, empty
    /// text or an empty list.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(Error::InvalidArgument(format!("document #{i} has an empty id")));
            }
            if doc.text.trim().is_empty() {
                return Err(Error::InvalidArgument(format!("document {:?} has empty text", doc.id)));
            }
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: doc.id.clone(),
                    line: i + 1,
                });
            }
        }
        let year_min = documents.iter().map(|d| d.year).min().ok_or(Error::EmptyCorpus)?;
        let year_max = documents.iter().map(|d| d.year).max().ok_or(Error::EmptyCorpus)?;
        Ok(Corpus {
            documents: documents.into_iter().map(Arc::new).collect(),
            by_id,
            year_min,
            year_max,
        })
    }

    pub fn documents(&self) -> &[Arc<Document>] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Document>> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    year: Option<i32>,
    #[serde(default)]
    authors: Vec<String>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<String>,
    #[serde(default)]
    language: Option<String>,
}

/// Streams a JSON Lines corpus file.
pub fn load_corpus(path: impl AsRef<Path>, options: &LoadOptions) -> Result<(Corpus, LoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut documents = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut stats = LoadStats::default();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if raw.id.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: lineno,
                message: "empty id".into(),
            });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId {
                id: raw.id,
                line: lineno,
            });
        }

        let reject = |reason| Rejection {
            line: lineno,
            id: raw.id.clone(),
            reason,
        };
        let Some(year) = raw.year else {
            log::warn!("{}:{lineno}: skipping {:?}: missing year", path.display(), raw.id);
            stats.rejections.push(reject(RejectReason::MissingYear));
            continue;
        };
        if year < options.year_min || year > options.year_max {
            log::warn!("{}:{lineno}: skipping {:?}: year {year} out of bounds", path.display(), raw.id);
            stats.rejections.push(reject(RejectReason::YearOutOfBounds(year)));
            continue;
        }
        let title = raw.title.clone().unwrap_or_default();
        let text = join_text(&title, raw.abstract_text.as_deref());
        if text.is_empty() {
            log::warn!("{}:{lineno}: skipping {:?}: empty text", path.display(), raw.id);
            stats.rejections.push(reject(RejectReason::EmptyText));
            continue;
        }
        documents.push(Document {
            id: raw.id,
            year,
            authors: raw.authors,
            title,
            abstract_text: raw.abstract_text,
            text,
            language: raw.language,
        });
    }

    stats.accepted = documents.len();
    Ok((Corpus::new(documents)?, stats))
}

/// Inclusive year window identifying a slice, rendered as `1957-1958`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceId {
    pub start: i32,
    pub end: i32,
}

impl SliceId {
    pub fn contains(&self, year: i32) -> bool {
        self.start <= year && year <= self.end
    }
}

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for SliceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("slice id {s:?} is not of the form START-END"));
        // Years are non-negative in practice; split on the last '-' keeps this simple.
        let (a, b) = s.trim().rsplit_once('-').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        if end < start {
            return Err(bad());
        }
        Ok(SliceId { start, end })
    }
}

#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub id: SliceId,
    pub documents: Vec<Arc<Document>>,
    /// The window extends past the newest year in the corpus.
    pub partial: bool,
}

/// Cuts the corpus into consecutive `window`-year slices starting at
/// `start_year` and running through the newest document year. Documents
/// older than `start_year` are dropped.
pub fn slice_corpus(corpus: &Corpus, window: u32, start_year: i32) -> Result<Vec<TimeSlice>> {
    if window < 1 {
        return Err(Error::InvalidArgument("window must be at least 1 year".into()));
    }
    if start_year > corpus.year_max {
        return Err(Error::InvalidArgument(format!(
            "start year {start_year} is after the newest document ({})",
            corpus.year_max
        )));
    }
    let w = window as i32;
    let count = ((corpus.year_max - start_year) / w + 1) as usize;
    let mut slices: Vec<TimeSlice> = (0..count)
        .map(|k| {
            let start = start_year + k as i32 * w;
            let end = start + w - 1;
            TimeSlice {
                id: SliceId { start, end },
                documents: Vec::new(),
                partial: end > corpus.year_max,
            }
        })
        .collect();
    for doc in corpus.documents() {
        if doc.year < start_year {
            continue;
        }
        let k = ((doc.year - start_year) / w) as usize;
        slices[k].documents.push(Arc::clone(doc));
    }
    Ok(slices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohortMode {
    AuthorIds,
    MetadataPredicate,
}

/// Selects the cohort (individual or group) whose documents are compared
/// against the rest of the field.
///
/// In `MetadataPredicate` mode each value is `key=value` with key one of
/// `author`, `id`, `language` or `year`; a document matches if any
/// predicate matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSelector {
    pub mode: CohortMode,
    pub values: Vec<String>,
}

impl CohortSelector {
    pub fn new(mode: CohortMode, values: Vec<String>) -> Result<Self> {
        let values: Vec<String> = values
            .into_iter()
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::InvalidArgument("cohort selector needs at least one value".into()));
        }
        if mode == CohortMode::MetadataPredicate {
            for v in &values {
                let (key, _) = v.split_once('=').ok_or_else(|| {
                    Error::InvalidArgument(format!("predicate {v:?} is not key=value"))
                })?;
                if !matches!(key.trim(), "author" | "id" | "language" | "year") {
                    return Err(Error::InvalidArgument(format!("unknown predicate key {key:?}")));
                }
            }
        }
        Ok(CohortSelector { mode, values })
    }

    pub fn authors<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(CohortMode::AuthorIds, ids.into_iter().map(Into::into).collect())
    }

    pub fn matches(&self, doc: &Document) -> bool {
        match self.mode {
            CohortMode::AuthorIds => doc.authors.iter().any(|a| self.values.iter().any(|v| v == a)),
            CohortMode::MetadataPredicate => self.values.iter().any(|p| {
                let (key, value) = p.split_once('=').expect("validated in constructor");
                let value = value.trim();
                match key.trim() {
                    "author" => doc.authors.iter().any(|a| a == value),
                    "id" => doc.id == value,
                    "language" => doc.language.as_deref() == Some(value),
                    "year" => value.parse::<i32>().is_ok_and(|y| y == doc.year),
                    _ => false,
                }
            }),
        }
    }
}

/// Splits a slice into (cohort, field). Co-authored documents go to the
/// cohort if any author matches.
pub fn partition_slice(
    slice: &TimeSlice,
    cohort: &CohortSelector,
) -> (Vec<Arc<Document>>, Vec<Arc<Document>>) {
    slice
        .documents
        .iter()
        .cloned()
        .partition(|doc| cohort.matches(doc))
}
