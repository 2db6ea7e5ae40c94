//! End-to-end runs: configuration, content-addressed caching, parallel
//! execution and run manifests.
//!
//! Every intermediate result lives in `<cache_dir>/<namespace>/<key>.bin`
//! (bincode, wrapped with the cache format version). Keys chain so that a
//! parameter change only invalidates what depends on it:
//!
//! | namespace | keyed on |
//! |-----------|----------|
//! | `corpus` | corpus file hash, year bounds |
//! | `slices` | corpus key, window, start year |
//! | `tokens` | corpus key, normalization settings |
//! | `counts` | slices key, tokens key, cohort |
//! | `kld-sync`, `kld-async` | counts key, lambda, alpha, background |
//! | `trends` | slices key, tokens key, cohort, top-k, token floor, smoothing |
//! | `ede` | corpus key, embedding file hash, EDE settings, references, cohort |
//!
//! Outputs land in `out_dir` next to `manifest.json`:
//!
//! ```text
//! kld_sync.{csv,json,svg}  kld_terms.svg  terms/<slice>.csv
//! kld_async.{csv,json,svg}
//! ede.csv  ede_median.csv  ede.{json,svg}
//! trends.{csv,json,svg}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, slice_corpus, CohortSelector, Corpus, Document, LoadOptions, SliceId, TimeSlice};
use crate::divergence::{
    asynchronous_matrix, prepare_models, synchronous_series, BackgroundMode, KldConfig, KldMatrix, SlicedModels, SyncSeries,
};
use crate::embedding::{
    ede_trajectories, fetch_embeddings, load_embeddings, median_series, BandwidthRule, EdeConfig, EdeTrajectory,
    EmbeddingStore, FetchConfig, KernelMode, MedianSeries,
};
use crate::error::{Error, Result};
use crate::report::{self, FrequencyTrendTable, Provenance, TrendOptions};
use crate::textprep::{normalize_all, NormalizationConfig, Normalizer, TokenStream};

const CACHE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    KldSync,
    KldAsync,
    Ede,
    TokenTrends,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::KldSync, Stage::KldAsync, Stage::Ede, Stage::TokenTrends];

    pub fn name(self) -> &'static str {
        match self {
            Stage::KldSync => "kld-sync",
            Stage::KldAsync => "kld-async",
            Stage::Ede => "ede",
            Stage::TokenTrends => "token-trends",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationSettings {
    /// Replaces the shipped English stopword list.
    pub stopwords: Option<PathBuf>,
    /// Tab-separated term/lemma table; takes precedence over stemming.
    pub lemma_table: Option<PathBuf>,
    pub stem: bool,
}

impl Default for NormalizationSettings {
    fn default() -> Self {
        NormalizationSettings {
            stopwords: None,
            lemma_table: None,
            stem: true,
        }
    }
}

impl NormalizationSettings {
    pub fn build(&self) -> Result<NormalizationConfig> {
        let mut config = NormalizationConfig::default();
        if let Some(p) = &self.stopwords {
            config = config.with_stopword_file(p)?;
        }
        if let Some(p) = &self.lemma_table {
            config = config.with_lemma_table(p)?;
        } else if !self.stem {
            config.normalizer = Normalizer::None;
        }
        Ok(config)
    }
}

/// Everything a run needs. Loadable from TOML; field names are the keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub cohort_authors: Vec<String>,
    /// File listing cohort author ids, one per line.
    pub cohort_file: Option<PathBuf>,
    pub window: u32,
    pub start_year: i32,
    pub year_min: i32,
    pub year_max: i32,
    pub lambda: f64,
    pub alpha: f64,
    pub background: BackgroundMode,
    pub bandwidth: BandwidthRule,
    pub kernel_mode: KernelMode,
    pub top_k: usize,
    pub min_tokens: u64,
    /// Display smoothing of trend plots, in bins.
    pub smoothing_bandwidth: f64,
    pub normalization: NormalizationSettings,
    /// Precomputed embedding file.
    pub embeddings: Option<PathBuf>,
    /// Embedding service used when `embeddings` is unset.
    pub embed_endpoint: Option<String>,
    pub embed_model: String,
    #[serde(skip)]
    pub embed_api_key: Option<String>,
    /// EDE reference documents; empty means every cohort document.
    pub references: Vec<String>,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/.cache`.
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; unset uses all cores.
    pub parallelism: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let load = LoadOptions::default();
        RunConfig {
            corpus: PathBuf::new(),
            cohort_authors: Vec::new(),
            cohort_file: None,
            window: 2,
            start_year: 1957,
            year_min: load.year_min,
            year_max: load.year_max,
            lambda: 0.05,
            alpha: 0.05,
            background: BackgroundMode::PairUnion,
            bandwidth: BandwidthRule::Scott,
            kernel_mode: KernelMode::AsWritten,
            top_k: 20,
            min_tokens: 50,
            smoothing_bandwidth: 1.0,
            normalization: NormalizationSettings::default(),
            embeddings: None,
            embed_endpoint: None,
            embed_model: "text-embedding-3-large".into(),
            embed_api_key: None,
            references: Vec::new(),
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            parallelism: None,
        }
    }
}

/// The parameters that determine results; paths and worker counts are
/// deliberately absent.
#[derive(Serialize)]
struct Canonical<'a> {
    cohort: &'a CohortSelector,
    window: u32,
    start_year: i32,
    year_min: i32,
    year_max: i32,
    lambda: f64,
    alpha: f64,
    background: BackgroundMode,
    bandwidth: BandwidthRule,
    kernel_mode: KernelMode,
    top_k: usize,
    min_tokens: u64,
    smoothing_bandwidth: f64,
    normalization: &'a NormalizationConfig,
    embed_model: &'a str,
    references: &'a [String],
}

impl RunConfig {
    /// Reads a TOML config. Relative paths resolve against the file's directory.
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut config.corpus);
        fix(&mut config.out_dir);
        for p in [
            &mut config.cohort_file,
            &mut config.embeddings,
            &mut config.cache_dir,
            &mut config.normalization.stopwords,
            &mut config.normalization.lemma_table,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.window < 1 {
            return bad("window must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.top_k < 1 {
            return bad("top_k must be at least 1".into());
        }
        if !(self.smoothing_bandwidth > 0.0 && self.smoothing_bandwidth.is_finite()) {
            return bad("smoothing bandwidth must be positive".into());
        }
        if self.parallelism == Some(0) {
            return bad("parallelism must be at least 1".into());
        }
        if self.year_min > self.year_max {
            return bad("year_min exceeds year_max".into());
        }
        Ok(())
    }

    pub fn cohort(&self) -> Result<CohortSelector> {
        let mut ids = self.cohort_authors.clone();
        if let Some(p) = &self.cohort_file {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            ids.extend(
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(String::from),
            );
        }
        CohortSelector::authors(ids)
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            year_min: self.year_min,
            year_max: self.year_max,
        }
    }

    pub fn kld_config(&self) -> KldConfig {
        KldConfig::new(self.lambda, self.alpha, self.background)
    }

    pub fn ede_config(&self) -> EdeConfig {
        EdeConfig {
            window: self.window,
            start_year: self.start_year,
            bandwidth: self.bandwidth,
            kernel_mode: self.kernel_mode,
        }
    }

    pub fn trend_options(&self) -> TrendOptions {
        TrendOptions {
            top_k: self.top_k,
            min_tokens: self.min_tokens,
            window: self.window,
            start_year: self.start_year,
            smoothing_bandwidth: Some(self.smoothing_bandwidth),
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join(".cache"))
    }

    /// Hash of the canonical form: every result-determining parameter, with
    /// file-based settings (cohort file, stopwords, lemmas) by content.
    pub fn canonical_hash(&self) -> Result<String> {
        let cohort = self.cohort()?;
        let normalization = self.normalization.build()?;
        let canonical = Canonical {
            cohort: &cohort,
            window: self.window,
            start_year: self.start_year,
            year_min: self.year_min,
            year_max: self.year_max,
            lambda: self.lambda,
            alpha: self.alpha,
            background: self.background,
            bandwidth: self.bandwidth,
            kernel_mode: self.kernel_mode,
            top_k: self.top_k,
            min_tokens: self.min_tokens,
            smoothing_bandwidth: self.smoothing_bandwidth,
            normalization: &normalization,
            embed_model: &self.embed_model,
            references: &self.references,
        };
        Ok(hex::encode(&Sha256::digest(serde_json::to_vec(&canonical)?)[..16]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEvent {
    pub stage: String,
    pub namespace: String,
    pub key: String,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub stopwords_hash: String,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub cache: Vec<CacheEvent>,
    /// Namespaces computed afresh; empty when everything came from cache.
    pub recomputed: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn output_hashes(&self) -> BTreeMap<&str, &str> {
        self.outputs.iter().map(|o| (o.path.as_str(), o.sha256.as_str())).collect()
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    hex::encode(&h.finalize()[..16])
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: u32,
    version: &'a str,
    key: &'a str,
    payload: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: u32,
    version: String,
    key: String,
    payload: T,
}

struct Cache {
    root: PathBuf,
}

impl Cache {
    fn path(&self, namespace: &str, key: &str) -> PathBuf {
        self.root.join(namespace).join(format!("{key}.bin"))
    }

    fn load<T: DeserializeOwned>(&self, namespace: &str, key: &str) -> Option<T> {
        let path = self.path(namespace, key);
        let bytes = fs::read(&path).ok()?;
        match bincode::deserialize::<Envelope<T>>(&bytes) {
            Ok(e) if e.format == CACHE_FORMAT && e.version == env!("CARGO_PKG_VERSION") && e.key == key => Some(e.payload),
            Ok(_) => None,
            Err(err) => {
                log::warn!("ignoring unreadable cache entry {}: {err}", path.display());
                None
            }
        }
    }

    fn store<T: Serialize>(&self, namespace: &str, key: &str, payload: &T) -> Result<()> {
        let bytes = bincode::serialize(&EnvelopeRef {
            format: CACHE_FORMAT,
            version: env!("CARGO_PKG_VERSION"),
            key,
            payload,
        })?;
        report::write_file(self.path(namespace, key), &bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct SliceEntry {
    id: SliceId,
    partial: bool,
    doc_ids: Vec<String>,
}

struct Keys {
    corpus: String,
    slices: String,
    tokens: String,
    counts: String,
}

/// Lazily materialized intermediate results of one run.
struct Ctx<'a> {
    config: &'a RunConfig,
    cache: Cache,
    normalization: NormalizationConfig,
    cohort: CohortSelector,
    provenance: Provenance,
    keys: Keys,
    stage: Stage,
    events: Vec<CacheEvent>,
    outputs: Vec<OutputRecord>,
    inputs: BTreeMap<String, String>,
    corpus: Option<Arc<Corpus>>,
    slices: Option<Arc<Vec<TimeSlice>>>,
    tokens: Option<Arc<HashMap<String, TokenStream>>>,
    models: Option<Arc<SlicedModels>>,
}

impl Ctx<'_> {
    fn cached<T, F>(&mut self, namespace: &str, key: &str, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce(&mut Self) -> Result<T>,
    {
        let hit = self.cache.load::<T>(namespace, key);
        self.events.push(CacheEvent {
            stage: self.stage.name().into(),
            namespace: namespace.into(),
            key: key.into(),
            hit: hit.is_some(),
        });
        if let Some(v) = hit {
            log::debug!("cache hit {namespace}/{key}");
            return Ok(v);
        }
        let value = compute(self)?;
        self.cache.store(namespace, key, &value)?;
        Ok(value)
    }

    fn corpus(&mut self) -> Result<Arc<Corpus>> {
        if let Some(c) = &self.corpus {
            return Ok(Arc::clone(c));
        }
        let key = self.keys.corpus.clone();
        let docs: Vec<Document> = self.cached("corpus", &key, |ctx| {
            let (corpus, stats) = load_corpus(&ctx.config.corpus, &ctx.config.load_options())?;
            for r in &stats.rejections {
                log::warn!("line {}: skipped {:?} ({})", r.line, r.id, r.reason);
            }
            Ok(corpus.documents().iter().map(|d| Document::clone(d)).collect())
        })?;
        let corpus = Arc::new(Corpus::new(docs)?);
        self.corpus = Some(Arc::clone(&corpus));
        Ok(corpus)
    }

    fn slices(&mut self) -> Result<Arc<Vec<TimeSlice>>> {
        if let Some(s) = &self.slices {
            return Ok(Arc::clone(s));
        }
        let corpus = self.corpus()?;
        let key = self.keys.slices.clone();
        let entries: Vec<SliceEntry> = self.cached("slices", &key, |ctx| {
            let slices = slice_corpus(&corpus, ctx.config.window, ctx.config.start_year)?;
            Ok(slices
                .into_iter()
                .map(|s| SliceEntry {
                    id: s.id,
                    partial: s.partial,
                    doc_ids: s.documents.iter().map(|d| d.id.clone()).collect(),
                })
                .collect())
        })?;
        let slices = entries
            .into_iter()
            .map(|e| {
                let documents = e
                    .doc_ids
                    .iter()
                    .map(|id| corpus.get(id).cloned().ok_or_else(|| Error::UnknownDocument(id.clone())))
                    .collect::<Result<Vec<_>>>()?;
                Ok(TimeSlice {
                    id: e.id,
                    documents,
                    partial: e.partial,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let slices = Arc::new(slices);
        self.slices = Some(Arc::clone(&slices));
        Ok(slices)
    }

    fn tokens(&mut self) -> Result<Arc<HashMap<String, TokenStream>>> {
        if let Some(t) = &self.tokens {
            return Ok(Arc::clone(t));
        }
        let corpus = self.corpus()?;
        let key = self.keys.tokens.clone();
        let streams: Vec<TokenStream> = self.cached("tokens", &key, |ctx| {
            let map = normalize_all(
                corpus.documents().par_iter().map(|d| (d.id.as_str(), d.text.as_str())),
                &ctx.normalization,
            );
            let mut v: Vec<TokenStream> = map.into_values().collect();
            v.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            Ok(v)
        })?;
        let tokens = Arc::new(streams.into_iter().map(|s| (s.doc_id.clone(), s)).collect());
        self.tokens = Some(Arc::clone(&tokens));
        Ok(tokens)
    }

    fn models(&mut self) -> Result<Arc<SlicedModels>> {
        if let Some(m) = &self.models {
            return Ok(Arc::clone(m));
        }
        let key = self.keys.counts.clone();
        let models: SlicedModels = self.cached("counts", &key, |ctx| {
            let slices = ctx.slices()?;
            let tokens = ctx.tokens()?;
            prepare_models(&slices, &ctx.cohort, &tokens)
        })?;
        let models = Arc::new(models);
        self.models = Some(Arc::clone(&models));
        Ok(models)
    }

    fn emit(&mut self, rel: &str, content: &str) -> Result<()> {
        report::write_file(self.config.out_dir.join(rel), content.as_bytes())?;
        self.outputs.push(OutputRecord {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
        });
        Ok(())
    }

    fn kld_sync(&mut self) -> Result<()> {
        let kld = self.config.kld_config();
        let key = key(&[&self.keys.counts, &kld.config_hash]);
        let series: SyncSeries = self.cached("kld-sync", &key, |ctx| synchronous_series(&*ctx.models()?, &kld))?;
        let p = self.provenance.clone();
        self.emit("kld_sync.csv", &report::sync_series_csv(&series, &p)?)?;
        self.emit("kld_sync.json", &report::to_json(&series, &p)?)?;
        self.emit("kld_sync.svg", &report::sync_series_svg(&series, &p))?;
        self.emit("kld_terms.svg", &report::pointwise_terms_svg(&series, 5, &p))?;
        for point in &series.points {
            if let Some(r) = &point.report {
                self.emit(&format!("terms/{}.csv", point.slice), &report::kld_report_csv(r, &p)?)?;
            }
        }
        Ok(())
    }

    fn kld_async(&mut self) -> Result<()> {
        let kld = self.config.kld_config();
        let key = key(&[&self.keys.counts, &kld.config_hash]);
        let matrix: KldMatrix = self.cached("kld-async", &key, |ctx| asynchronous_matrix(&*ctx.models()?, &kld))?;
        let p = self.provenance.clone();
        self.emit("kld_async.csv", &report::matrix_csv(&matrix, &p)?)?;
        self.emit("kld_async.json", &report::to_json(&matrix, &p)?)?;
        self.emit("kld_async.svg", &report::matrix_heatmap_svg(&matrix, &p))?;
        Ok(())
    }

    fn trends(&mut self) -> Result<()> {
        let options = self.config.trend_options();
        let key = key(&[
            &self.keys.slices,
            &self.keys.tokens,
            &serde_json::to_string(&self.cohort)?,
            &serde_json::to_string(&options)?,
        ]);
        let table: FrequencyTrendTable = self.cached("trends", &key, |ctx| {
            let corpus = ctx.corpus()?;
            let tokens = ctx.tokens()?;
            report::token_frequency_trends(&corpus, &ctx.cohort, &tokens, &options)
        })?;
        let p = self.provenance.clone().with("smoothing_bandwidth_bins", self.config.smoothing_bandwidth);
        self.emit("trends.csv", &report::trends_csv(&table, &p)?)?;
        self.emit("trends.json", &report::to_json(&table, &p)?)?;
        self.emit("trends.svg", &report::trends_svg(&table, &p))?;
        Ok(())
    }

    fn embedding_file(&mut self) -> Result<PathBuf> {
        if let Some(p) = &self.config.embeddings {
            return Ok(p.clone());
        }
        let endpoint = self.config.embed_endpoint.clone().ok_or_else(|| Error::MissingPrerequisite("no embeddings".into()))?;
        let corpus = self.corpus()?;
        let mut fetch = FetchConfig::new(endpoint, self.config.embed_api_key.clone().unwrap_or_default(), self.cache.root.join("embeddings"));
        fetch.model = self.config.embed_model.clone();
        let outcome = fetch_embeddings(corpus.documents(), &fetch)?;
        log::info!("embeddings: {} cached, {} fetched", outcome.cache_hits, outcome.fetched);
        let path = self.config.out_dir.join("embeddings.tsv");
        fs::create_dir_all(&self.config.out_dir).map_err(|e| Error::io(&self.config.out_dir, e))?;
        let mut store = outcome.store;
        // keep the written file stable across runs
        store.fetched_at = None;
        store.write(&path)?;
        Ok(path)
    }

    fn ede(&mut self) -> Result<()> {
        let path = self.embedding_file()?;
        let embed_hash = sha256_file(&path)?;
        self.inputs.insert(path.display().to_string(), embed_hash.clone());
        let ede_config = self.config.ede_config();
        let key = key(&[
            &self.keys.corpus,
            &embed_hash,
            &serde_json::to_string(&ede_config)?,
            &serde_json::to_string(&self.config.references)?,
            &serde_json::to_string(&self.cohort)?,
        ]);
        let (trajectories, median): (Vec<EdeTrajectory>, MedianSeries) = self.cached("ede", &key, |ctx| {
            let corpus = ctx.corpus()?;
            let store: EmbeddingStore = load_embeddings(&path)?;
            let references: Vec<String> = if ctx.config.references.is_empty() {
                let mut ids: Vec<String> = corpus
                    .documents()
                    .iter()
                    .filter(|d| ctx.cohort.matches(d) && d.year >= ctx.config.start_year && store.get(&d.id).is_some())
                    .map(|d| d.id.clone())
                    .collect();
                ids.sort();
                ids
            } else {
                ctx.config.references.clone()
            };
            if references.is_empty() {
                return Err(Error::EmptyCohort);
            }
            let refs: Vec<&str> = references.iter().map(String::as_str).collect();
            let trajectories = ede_trajectories(&corpus, &store, &refs, &ede_config)?;
            let median = median_series(&trajectories)?;
            Ok((trajectories, median))
        })?;
        let p = self.provenance.clone();
        self.emit("ede.csv", &report::ede_csv(&trajectories, &p)?)?;
        self.emit("ede_median.csv", &report::median_csv(&median, &p)?)?;
        self.emit("ede.json", &report::to_json(&(&trajectories, &median), &p)?)?;
        self.emit("ede.svg", &report::ede_svg(&trajectories, &median, &p))?;
        Ok(())
    }
}

/// Verifies inputs for `stages` without touching the corpus contents.
pub fn check_prerequisites(config: &RunConfig, stages: &[Stage]) -> Result<()> {
    config.validate()?;
    if !config.corpus.is_file() {
        return Err(Error::MissingPrerequisite(format!("corpus file {} not found", config.corpus.display())));
    }
    if let Some(p) = &config.cohort_file {
        if !p.is_file() {
            return Err(Error::MissingPrerequisite(format!("cohort file {} not found", p.display())));
        }
    }
    config.cohort()?;
    if stages.contains(&Stage::Ede) {
        match (&config.embeddings, &config.embed_endpoint) {
            (Some(p), _) if !p.is_file() => {
                return Err(Error::MissingPrerequisite(format!("embedding file {} not found", p.display())))
            }
            (Some(_), _) => {}
            (None, Some(_)) if config.embed_api_key.as_deref().is_none_or(str::is_empty) => {
                return Err(Error::MissingPrerequisite("embedding endpoint given without an API key".into()))
            }
            (None, Some(_)) => {}
            (None, None) => {
                return Err(Error::MissingPrerequisite(
                    "the ede stage needs an embedding file or an embedding endpoint".into(),
                ))
            }
        }
    }
    Ok(())
}

/// Executes `stages` (in canonical order, duplicates ignored) and writes
/// outputs plus `manifest.json` to the output directory.
pub fn run(config: &RunConfig, stages: &[Stage]) -> Result<RunManifest> {
    check_prerequisites(config, stages)?;
    match config.parallelism {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| run_inner(config, stages)),
        None => run_inner(config, stages),
    }
}

fn run_inner(config: &RunConfig, stages: &[Stage]) -> Result<RunManifest> {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();

    let normalization = config.normalization.build()?;
    let cohort = config.cohort()?;
    let config_hash = config.canonical_hash()?;
    let stopwords_hash = normalization.stopwords_hash();

    let mut inputs = BTreeMap::new();
    let corpus_hash = sha256_file(&config.corpus)?;
    inputs.insert(config.corpus.display().to_string(), corpus_hash.clone());
    for p in [&config.cohort_file, &config.normalization.stopwords, &config.normalization.lemma_table]
        .into_iter()
        .flatten()
    {
        inputs.insert(p.display().to_string(), sha256_file(p)?);
    }

    let corpus_key = key(&[&corpus_hash, &config.year_min.to_string(), &config.year_max.to_string()]);
    let slices_key = key(&[&corpus_key, &config.window.to_string(), &config.start_year.to_string()]);
    let tokens_key = key(&[&corpus_key, &serde_json::to_string(&normalization)?]);
    let counts_key = key(&[&slices_key, &tokens_key, &serde_json::to_string(&cohort)?]);

    let mut ctx = Ctx {
        config,
        cache: Cache { root: config.cache_dir() },
        normalization,
        provenance: Provenance::new(config_hash.clone(), stopwords_hash.clone()),
        cohort,
        keys: Keys {
            corpus: corpus_key,
            slices: slices_key,
            tokens: tokens_key,
            counts: counts_key,
        },
        stage: stages.first().copied().unwrap_or(Stage::KldSync),
        events: Vec::new(),
        outputs: Vec::new(),
        inputs,
        corpus: None,
        slices: None,
        tokens: None,
        models: None,
    };

    let mut records = Vec::new();
    for &stage in &stages {
        let started = Instant::now();
        let before = ctx.events.len();
        ctx.stage = stage;
        log::info!("stage {stage}");
        match stage {
            Stage::KldSync => ctx.kld_sync()?,
            Stage::KldAsync => ctx.kld_async()?,
            Stage::Ede => ctx.ede()?,
            Stage::TokenTrends => ctx.trends()?,
        }
        let events = &ctx.events[before..];
        records.push(StageRecord {
            stage,
            seconds: started.elapsed().as_secs_f64(),
            cache_hits: events.iter().filter(|e| e.hit).count(),
            cache_misses: events.iter().filter(|e| !e.hit).count(),
        });
    }

    let mut recomputed: Vec<String> = ctx.events.iter().filter(|e| !e.hit).map(|e| e.namespace.clone()).collect();
    recomputed.sort();
    recomputed.dedup();
    let manifest = RunManifest {
        config_hash,
        stopwords_hash,
        config: config.clone(),
        stages: records,
        inputs: ctx.inputs,
        versions: BTreeMap::from([
            ("semtraj".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("cache_format".to_string(), CACHE_FORMAT.to_string()),
        ]),
        cache: ctx.events,
        recomputed,
        outputs: ctx.outputs,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    report::write_file(config.out_dir.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SliceStat {
    pub slice: SliceId,
    pub partial: bool,
    pub cohort_docs: usize,
    pub field_docs: usize,
    pub cohort_tokens: u64,
    pub field_tokens: u64,
}

/// Per-slice document and token counts for the cohort and the field.
pub fn slice_stats(config: &RunConfig) -> Result<Vec<SliceStat>> {
    check_prerequisites(config, &[])?;
    let (corpus, _) = load_corpus(&config.corpus, &config.load_options())?;
    let cohort = config.cohort()?;
    let tokens = normalize_all(
        corpus.documents().par_iter().map(|d| (d.id.as_str(), d.text.as_str())),
        &config.normalization.build()?,
    );
    let count = |docs: &[Arc<Document>]| docs.iter().filter_map(|d| tokens.get(&d.id)).map(|t| t.tokens.len() as u64).sum();
    Ok(slice_corpus(&corpus, config.window, config.start_year)?
        .iter()
        .map(|s| {
            let (c, f) = crate::corpus::partition_slice(s, &cohort);
            SliceStat {
                slice: s.id,
                partial: s.partial,
                cohort_docs: c.len(),
                field_docs: f.len(),
                cohort_tokens: count(&c),
                field_tokens: count(&f),
            }
        })
        .collect())
}
