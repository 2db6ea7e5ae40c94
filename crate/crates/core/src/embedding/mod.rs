//! Document embeddings and embedding-density trajectories.
//!
//! Embedding files are plain text. The first line is a header, then one
//! record per document:
//!
//! ```text
//! # dim=4 model=text-embedding-3-large fetched=1735689600
//! 1957AnP...454..123T<TAB>0.12,-0.03,0.44,0.91
//! ```
//!
//! `fetched` (unix seconds) is optional.

mod fetch;
mod kde;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fetch::{fetch_embeddings, FetchConfig, FetchOutcome};
pub use kde::{kde_density, scott_bandwidth, KdeModel, KernelMode};

use crate::corpus::{slice_corpus, Corpus, SliceId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub model: String,
    pub fetched_at: Option<u64>,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, model: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dim,
            model: model.into(),
            fetched_at: None,
            vectors: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEmbedding(id));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Ids of corpus documents lacking a vector.
    pub fn missing<'a>(&self, corpus: &'a Corpus) -> Vec<&'a str> {
        corpus
            .documents()
            .iter()
            .filter(|d| !self.vectors.contains_key(&d.id))
            .map(|d| d.id.as_str())
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(w, "# dim={} model={}", self.dim, self.model).map_err(io)?;
        if let Some(t) = self.fetched_at {
            write!(w, " fetched={t}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for (id, v) in &self.vectors {
            let values: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{id}\t{}", values.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn parse_header(line: &str) -> Option<(usize, String, Option<u64>)> {
    let body = line.strip_prefix('#')?;
    let mut dim = None;
    let mut model = None;
    let mut fetched = None;
    for field in body.split_whitespace() {
        match field.split_once('=')? {
            ("dim", v) => dim = v.parse().ok(),
            ("model", v) => model = Some(v.to_string()),
            ("fetched", v) => fetched = v.parse().ok(),
            _ => {}
        }
    }
    Some((dim?, model.unwrap_or_default(), fetched))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let malformed = |line, message: &str| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    };
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| malformed(1, "missing header"))?;
    let (dim, model, fetched_at) =
        parse_header(&header).ok_or_else(|| malformed(1, "header must be '# dim=<n> model=<name>'"))?;
    let mut store = EmbeddingStore::new(dim, model)?;
    store.fetched_at = fetched_at;

    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, values) = line.split_once('\t').ok_or_else(|| malformed(lineno, "expected id<TAB>values"))?;
        let vector = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| malformed(lineno, &format!("bad number for {id:?}: {e}")))?;
        store.insert(id, vector)?;
    }
    Ok(store)
}

/// Written as `scott`, `global` or `fixed:<h>` in config files and on the
/// command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(into = "String", try_from = "String")]
pub enum BandwidthRule {
    /// Scott's rule per slice sample.
    #[default]
    Scott,
    /// Scott's rule computed once over every embedded document in range.
    Global,
    Fixed(f64),
}

impl std::fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BandwidthRule::Scott => f.write_str("scott"),
            BandwidthRule::Global => f.write_str("global"),
            BandwidthRule::Fixed(h) => write!(f, "fixed:{h}"),
        }
    }
}

impl From<BandwidthRule> for String {
    fn from(rule: BandwidthRule) -> String {
        rule.to_string()
    }
}

impl TryFrom<String> for BandwidthRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scott" => Ok(BandwidthRule::Scott),
            "global" => Ok(BandwidthRule::Global),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|h| *h > 0.0 && h.is_finite())
                .map(BandwidthRule::Fixed)
                .ok_or_else(|| Error::InvalidArgument(format!("bandwidth rule {s:?}: expected scott, global or fixed:<h>"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdeConfig {
    pub window: u32,
    pub start_year: i32,
    pub bandwidth: BandwidthRule,
    pub kernel_mode: KernelMode,
}

impl Default for EdeConfig {
    fn default() -> Self {
        EdeConfig {
            window: 2,
            start_year: 1957,
            bandwidth: BandwidthRule::Scott,
            kernel_mode: KernelMode::AsWritten,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdePoint {
    pub slice: SliceId,
    pub density: f64,
    /// Sample size including the reference.
    pub n: usize,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdeTrajectory {
    pub reference_doc: String,
    pub start_slice: SliceId,
    pub points: Vec<EdePoint>,
}

/// A slice with the ids and vectors of its embedded documents.
type SliceMembers<'a> = (SliceId, Vec<(&'a str, &'a [f64])>);

/// Computes trajectories for several references in parallel, in input order.
pub fn ede_trajectories(
    corpus: &Corpus,
    store: &EmbeddingStore,
    references: &[&str],
    config: &EdeConfig,
) -> Result<Vec<EdeTrajectory>> {
    let slices = slice_corpus(corpus, config.window, config.start_year)?;
    let members: Vec<SliceMembers<'_>> = slices
        .iter()
        .map(|s| {
            let v: Vec<(&str, &[f64])> = s
                .documents
                .iter()
                .filter_map(|d| store.get(&d.id).map(|v| (d.id.as_str(), v)))
                .collect();
            if v.len() < s.documents.len() {
                log::warn!("slice {}: {} documents lack embeddings", s.id, s.documents.len() - v.len());
            }
            (s.id, v)
        })
        .collect();

    let global_h = {
        let all: Vec<&[f64]> = members.iter().flat_map(|(_, m)| m.iter().map(|(_, v)| *v)).collect();
        scott_bandwidth(&all)
    };

    references
        .par_iter()
        .map(|&reference| {
            let doc = corpus.get(reference).ok_or_else(|| Error::UnknownDocument(reference.to_string()))?;
            let x = store.get(reference).ok_or_else(|| Error::MissingEmbedding(reference.to_string()))?;
            let first = members
                .iter()
                .position(|(id, _)| id.contains(doc.year))
                .ok_or_else(|| Error::OutsideSlices {
                    id: reference.to_string(),
                    year: doc.year,
                })?;
            let points = members[first..]
                .iter()
                .map(|(slice, m)| {
                    let mut sample: Vec<&[f64]> = m.iter().filter(|(id, _)| *id != reference).map(|(_, v)| *v).collect();
                    sample.push(x);
                    let h = match config.bandwidth {
                        BandwidthRule::Fixed(h) => Some(h),
                        BandwidthRule::Global => global_h,
                        BandwidthRule::Scott => scott_bandwidth(&sample).or(global_h),
                    }
                    .ok_or_else(|| Error::InvalidArgument("cannot derive a bandwidth: embeddings have no spread".into()))?;
                    let n = sample.len();
                    let kde = KdeModel::new(sample, h, config.kernel_mode)?;
                    Ok(EdePoint {
                        slice: *slice,
                        density: kde.density(x)?,
                        n,
                        bandwidth: h,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EdeTrajectory {
                reference_doc: reference.to_string(),
                start_slice: members[first].0,
                points,
            })
        })
        .collect()
}

pub fn ede_trajectory(corpus: &Corpus, store: &EmbeddingStore, reference: &str, config: &EdeConfig) -> Result<EdeTrajectory> {
    Ok(ede_trajectories(corpus, store, &[reference], config)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianPoint {
    pub slice: SliceId,
    pub median: f64,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSeries {
    pub points: Vec<MedianPoint>,
}

/// Per-slice median (and mean) over the trajectories defined at that slice.
pub fn median_series(trajectories: &[EdeTrajectory]) -> Result<MedianSeries> {
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument("median of zero trajectories".into()));
    }
    let mut by_slice: BTreeMap<SliceId, Vec<f64>> = BTreeMap::new();
    for t in trajectories {
        for p in &t.points {
            by_slice.entry(p.slice).or_default().push(p.density);
        }
    }
    let points = by_slice
        .into_iter()
        .map(|(slice, mut values)| {
            values.sort_by(f64::total_cmp);
            let k = values.len();
            let median = if k % 2 == 1 {
                values[k / 2]
            } else {
                0.5 * (values[k / 2 - 1] + values[k / 2])
            };
            MedianPoint {
                slice,
                median,
                mean: values.iter().sum::<f64>() / k as f64,
                count: k,
            }
        })
        .collect();
    Ok(MedianSeries { points })
}
