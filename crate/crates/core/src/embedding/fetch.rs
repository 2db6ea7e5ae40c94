//! Batched embedding retrieval from an HTTP service with an on-disk cache.
//!
//! Request (`POST <endpoint>`, `Authorization: Bearer <key>`):
//!
//! ```json
//! {"model": "text-embedding-3-large", "input": ["text one", "text two"]}
//! ```
//!
//! Response:
//!
//! ```json
//! {"data": [{"index": 0, "embedding": [0.1, ...]}, {"index": 1, "embedding": [...]}]}
//! ```
//!
//! HTTP 401/403 abort immediately; 429 and 5xx are retried with
//! exponential backoff. Each vector is cached under a key derived from
//! (document id, model, text hash), so edited text is refetched.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EmbeddingStore;
use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub batch_size: usize,
    pub cache_dir: PathBuf,
    pub max_retries: u32,
    pub base_delay: Duration,
    /// Maximum number of requests in flight.
    pub concurrency: usize,
    pub timeout: Duration,
}

impl FetchConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        FetchConfig {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            model: "text-embedding-3-large".into(),
            batch_size: 100,
            cache_dir: cache_dir.into(),
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            concurrency: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub store: EmbeddingStore,
    pub cache_hits: usize,
    pub fetched: usize,
    /// HTTP requests issued, retries included.
    pub requests: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    doc_id: String,
    model: String,
    text_hash: String,
    embedding: Vec<f64>,
}

fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn cache_path(dir: &Path, doc_id: &str, model: &str, text_hash: &str) -> PathBuf {
    let mut h = Sha256::new();
    for part in [doc_id, model, text_hash] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    dir.join(format!("{}.json", hex::encode(h.finalize())))
}

fn read_cache(path: &Path) -> Option<Vec<f64>> {
    let bytes = fs::read(path).ok()?;
    serde_json::from_slice::<CacheEntry>(&bytes).ok().map(|e| e.embedding)
}

/// Writes via a temporary file and rename so readers never see partial entries.
fn write_cache(dir: &Path, path: &Path, entry: &CacheEntry) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&serde_json::to_vec(entry)?).map_err(|e| Error::io(dir, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

enum Attempt {
    Done(Vec<Vec<f64>>),
    Retry(String),
}

fn post_batch(agent: &ureq::Agent, config: &FetchConfig, texts: &[&str]) -> Result<Attempt> {
    let body = EmbedRequest {
        model: &config.model,
        input: texts.to_vec(),
    };
    let response = agent
        .post(&config.endpoint)
        .header("Authorization", &format!("Bearer {}", config.api_key))
        .send_json(&body);
    let mut response = match response {
        Ok(r) => r,
        Err(e @ (ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed)) => {
            return Ok(Attempt::Retry(e.to_string()))
        }
        Err(e) => return Err(Error::Http(e.to_string())),
    };
    let status = response.status().as_u16();
    match status {
        200..=299 => {}
        401 | 403 => return Err(Error::AuthFailure(status)),
        429 | 500..=599 => return Ok(Attempt::Retry(format!("HTTP {status}"))),
        _ => return Err(Error::Http(format!("unexpected HTTP {status}"))),
    }
    let parsed: EmbedResponse = response
        .body_mut()
        .read_json()
        .map_err(|e| Error::Http(format!("bad response body: {e}")))?;
    if parsed.data.len() != texts.len() {
        return Err(Error::BatchLengthMismatch {
            expected: texts.len(),
            got: parsed.data.len(),
        });
    }
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
    for d in parsed.data {
        let slot = slots.get_mut(d.index).ok_or(Error::BatchLengthMismatch {
            expected: texts.len(),
            got: d.index + 1,
        })?;
        *slot = Some(d.embedding);
    }
    let vectors = slots
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or(Error::BatchLengthMismatch {
            expected: texts.len(),
            got: 0,
        })?;
    Ok(Attempt::Done(vectors))
}

fn fetch_with_retry(agent: &ureq::Agent, config: &FetchConfig, texts: &[&str], requests: &AtomicUsize) -> Result<Vec<Vec<f64>>> {
    let mut delay = config.base_delay;
    let attempts = config.max_retries as usize + 1;
    let mut last = String::new();
    for attempt in 0..attempts {
        requests.fetch_add(1, Ordering::Relaxed);
        match post_batch(agent, config, texts)? {
            Attempt::Done(v) => return Ok(v),
            Attempt::Retry(msg) => {
                log::warn!("embedding batch attempt {} failed: {msg}", attempt + 1);
                last = msg;
                if attempt + 1 < attempts {
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
    Err(Error::RetriesExhausted { attempts, message: last })
}

/// Returns vectors for every document, fetching only cache misses.
pub fn fetch_embeddings(docs: &[Arc<Document>], config: &FetchConfig) -> Result<FetchOutcome> {
    if config.batch_size == 0 || config.concurrency == 0 {
        return Err(Error::InvalidArgument("batch size and concurrency must be positive".into()));
    }
    fs::create_dir_all(&config.cache_dir).map_err(|e| Error::io(&config.cache_dir, e))?;

    let mut cached: Vec<(String, Vec<f64>)> = Vec::new();
    let mut pending: Vec<(&Document, PathBuf, String)> = Vec::new();
    for doc in docs {
        let th = text_hash(&doc.text);
        let path = cache_path(&config.cache_dir, &doc.id, &config.model, &th);
        match read_cache(&path) {
            Some(v) => cached.push((doc.id.clone(), v)),
            None => pending.push((doc, path, th)),
        }
    }
    let cache_hits = cached.len();

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(config.timeout))
        .build()
        .into();
    let requests = AtomicUsize::new(0);
    let batches: Vec<&[(&Document, PathBuf, String)]> = pending.chunks(config.batch_size).collect();
    let next = AtomicUsize::new(0);

    let fetched: Vec<(String, Vec<f64>)> = thread::scope(|scope| {
        let workers: Vec<_> = (0..config.concurrency.min(batches.len()))
            .map(|_| {
                scope.spawn(|| -> Result<Vec<(String, Vec<f64>)>> {
                    let mut out = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(batch) = batches.get(k) else { break };
                        let texts: Vec<&str> = batch.iter().map(|(d, _, _)| d.text.as_str()).collect();
                        let vectors = fetch_with_retry(&agent, config, &texts, &requests)?;
                        for ((doc, path, th), v) in batch.iter().zip(vectors) {
                            write_cache(
                                &config.cache_dir,
                                path,
                                &CacheEntry {
                                    doc_id: doc.id.clone(),
                                    model: config.model.clone(),
                                    text_hash: th.clone(),
                                    embedding: v.clone(),
                                },
                            )?;
                            out.push((doc.id.clone(), v));
                        }
                    }
                    Ok(out)
                })
            })
            .collect();
        let mut all = Vec::new();
        let mut first_err = None;
        for w in workers {
            match w.join().expect("fetch worker panicked") {
                Ok(v) => all.extend(v),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(all),
        }
    })?;

    let dim = cached
        .iter()
        .chain(fetched.iter())
        .map(|(_, v)| v.len())
        .next()
        .ok_or_else(|| Error::InvalidArgument("no documents to embed".into()))?;
    let mut store = EmbeddingStore::new(dim, config.model.clone())?;
    store.fetched_at = Some(SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    let n_fetched = fetched.len();
    for (id, v) in cached.into_iter().chain(fetched) {
        store.insert(id, v)?;
    }
    Ok(FetchOutcome {
        store,
        cache_hits,
        fetched: n_fetched,
        requests: requests.into_inner(),
    })
}
