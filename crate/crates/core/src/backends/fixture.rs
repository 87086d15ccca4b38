//! Record/replay layer: every backend call can be captured as a
//! line-delimited fixture record and replayed deterministically offline.
//!
//! The store keys each record by a digest of the canonical request text.
//! Canonical requests exclude client-side parameters (detection threshold,
//! search top-k), so one recording serves any such setting on replay.

use super::{
    BackendError, BackendKind, ChatBackend, ChatRequest, DetectBackend, Detection, FactSnippet,
    ImageRef, SearchBackend, Services, SimilarityBackend, TextSimilarityBackend,
    canonical_detect_request, canonical_search_request, canonical_similarity_request,
    canonical_text_pair_request, digest_hex,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureMode {
    /// Call the live backend and append one record per call.
    Record,
    /// Serve responses from the store only; a miss is an error.
    ReplayStrict,
    /// Serve from the store when possible; on a miss, call live and record.
    ReplayPassthrough,
}

/// One captured request/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub backend_kind: BackendKind,
    pub request_digest: String,
    pub request: String,
    pub response: String,
}

impl FixtureRecord {
    pub fn new(backend_kind: BackendKind, request: String, response: String) -> Self {
        let request_digest = digest_hex(request.as_bytes());
        Self {
            backend_kind,
            request_digest,
            request,
            response,
        }
    }
}

struct StoreInner {
    index: HashMap<(BackendKind, String), String>,
    records: Vec<FixtureRecord>,
}

/// Thread-safe fixture store. Reads are concurrent; appends are serialized
/// internally, both in memory and to the backing file.
pub struct FixtureStore {
    mode: FixtureMode,
    inner: RwLock<StoreInner>,
    writer: Mutex<Option<File>>,
}

impl FixtureStore {
    /// Record mode writing each record to `path` as it happens.
    pub fn record_to(path: &Path) -> Result<Self, BackendError> {
        let file = File::create(path)
            .map_err(|e| BackendError::StoreCorrupt(format!("create {}: {e}", path.display())))?;
        Ok(Self {
            mode: FixtureMode::Record,
            inner: RwLock::new(StoreInner { index: HashMap::new(), records: Vec::new() }),
            writer: Mutex::new(Some(file)),
        })
    }

    /// Record mode without a backing file; records stay in memory.
    pub fn record_in_memory() -> Self {
        Self {
            mode: FixtureMode::Record,
            inner: RwLock::new(StoreInner { index: HashMap::new(), records: Vec::new() }),
            writer: Mutex::new(None),
        }
    }

    /// Replay mode over an existing fixture file. Strict replay treats a
    /// missing digest as an error; passthrough falls back to a live call
    /// and appends the new record to the same file.
    pub fn replay_from(path: &Path, mode: FixtureMode) -> Result<Self, BackendError> {
        assert!(mode != FixtureMode::Record, "use record_to for record mode");
        let file = File::open(path)
            .map_err(|e| BackendError::StoreCorrupt(format!("open {}: {e}", path.display())))?;
        let mut index = HashMap::new();
        let mut records = Vec::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line
                .map_err(|e| BackendError::StoreCorrupt(format!("read line {}: {e}", line_no + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(&line).map_err(|e| {
                BackendError::StoreCorrupt(format!("line {}: {e}", line_no + 1))
            })?;
            if record.request_digest != digest_hex(record.request.as_bytes()) {
                return Err(BackendError::StoreCorrupt(format!(
                    "line {}: digest does not match request",
                    line_no + 1
                )));
            }
            index
                .entry((record.backend_kind, record.request_digest.clone()))
                .or_insert_with(|| record.response.clone());
            records.push(record);
        }
        let writer = if mode == FixtureMode::ReplayPassthrough {
            Some(OpenOptions::new().append(true).open(path).map_err(|e| {
                BackendError::StoreCorrupt(format!("open {} for append: {e}", path.display()))
            })?)
        } else {
            None
        };
        Ok(Self {
            mode,
            inner: RwLock::new(StoreInner { index, records }),
            writer: Mutex::new(writer),
        })
    }

    pub fn mode(&self) -> FixtureMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<FixtureRecord> {
        self.inner.read().unwrap().records.clone()
    }

    pub fn lookup(&self, kind: BackendKind, digest: &str) -> Option<String> {
        self.inner
            .read()
            .unwrap()
            .index
            .get(&(kind, digest.to_string()))
            .cloned()
    }

    /// Appends one record, serializing it to the backing file when present.
    pub fn append(&self, record: FixtureRecord) -> Result<(), BackendError> {
        {
            let mut writer = self.writer.lock().unwrap();
            if let Some(file) = writer.as_mut() {
                let line = serde_json::to_string(&record)
                    .map_err(|e| BackendError::StoreCorrupt(e.to_string()))?;
                writeln!(file, "{line}")
                    .and_then(|_| file.flush())
                    .map_err(|e| BackendError::StoreCorrupt(format!("append: {e}")))?;
            }
        }
        let mut inner = self.inner.write().unwrap();
        inner
            .index
            .entry((record.backend_kind, record.request_digest.clone()))
            .or_insert_with(|| record.response.clone());
        inner.records.push(record);
        Ok(())
    }

    /// The core record/replay exchange: record mode appends and echoes the
    /// response; replay modes return the stored response for the digest.
    pub fn roundtrip(&self, record: FixtureRecord) -> Result<String, BackendError> {
        match self.mode {
            FixtureMode::Record => {
                let response = record.response.clone();
                self.append(record)?;
                Ok(response)
            }
            FixtureMode::ReplayStrict | FixtureMode::ReplayPassthrough => self
                .lookup(record.backend_kind, &record.request_digest)
                .ok_or(BackendError::ReplayMiss {
                    kind: record.backend_kind,
                    digest: record.request_digest,
                }),
        }
    }
}

fn call_via_store<F>(
    store: &FixtureStore,
    kind: BackendKind,
    request_text: String,
    live: Option<F>,
) -> Result<String, BackendError>
where
    F: FnOnce() -> Result<String, BackendError>,
{
    let digest = digest_hex(request_text.as_bytes());
    let run_live = |live: Option<F>| -> Result<String, BackendError> {
        let call = live.ok_or_else(|| {
            BackendError::Transport(format!("no live {kind:?} backend behind the fixture store"))
        })?;
        call()
    };
    match store.mode() {
        FixtureMode::Record => {
            let response = run_live(live)?;
            store.append(FixtureRecord {
                backend_kind: kind,
                request_digest: digest,
                request: request_text,
                response: response.clone(),
            })?;
            Ok(response)
        }
        FixtureMode::ReplayStrict => store
            .lookup(kind, &digest)
            .ok_or(BackendError::ReplayMiss { kind, digest }),
        FixtureMode::ReplayPassthrough => match store.lookup(kind, &digest) {
            Some(response) => Ok(response),
            None => {
                let response = run_live(live)?;
                store.append(FixtureRecord {
                    backend_kind: kind,
                    request_digest: digest,
                    request: request_text,
                    response: response.clone(),
                })?;
                Ok(response)
            }
        },
    }
}

struct ChatViaStore {
    store: Arc<FixtureStore>,
    inner: Option<Arc<dyn ChatBackend>>,
}

impl ChatBackend for ChatViaStore {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        let inner = self.inner.clone();
        call_via_store(
            &self.store,
            BackendKind::Chat,
            req.canonical_text(),
            inner.map(|b| move || b.chat_complete(req)),
        )
    }
}

struct DetectViaStore {
    store: Arc<FixtureStore>,
    inner: Option<Arc<dyn DetectBackend>>,
}

impl DetectBackend for DetectViaStore {
    fn detect_all(&self, image: &ImageRef, phrase: &str) -> Result<Vec<Detection>, BackendError> {
        let inner = self.inner.clone();
        let response = call_via_store(
            &self.store,
            BackendKind::Detect,
            canonical_detect_request(image, phrase),
            inner.map(|b| {
                move || {
                    let detections = b.detect_all(image, phrase)?;
                    serde_json::to_string(&detections)
                        .map_err(|e| BackendError::StoreCorrupt(e.to_string()))
                }
            }),
        )?;
        serde_json::from_str(&response).map_err(|e| BackendError::StoreCorrupt(e.to_string()))
    }
}

struct SimilarityViaStore {
    store: Arc<FixtureStore>,
    inner: Option<Arc<dyn SimilarityBackend>>,
    inner_text: Option<Arc<dyn TextSimilarityBackend>>,
}

impl SimilarityBackend for SimilarityViaStore {
    fn score_raw(
        &self,
        image: &ImageRef,
        region: &[f64; 4],
        text: &str,
    ) -> Result<f64, BackendError> {
        let inner = self.inner.clone();
        let response = call_via_store(
            &self.store,
            BackendKind::Similarity,
            canonical_similarity_request(image, region, text),
            inner.map(|b| {
                move || {
                    b.score_raw(image, region, text)
                        .map(|s| serde_json::json!(s).to_string())
                }
            }),
        )?;
        response
            .trim()
            .parse::<f64>()
            .map_err(|e| BackendError::StoreCorrupt(format!("bad score fixture: {e}")))
    }
}

impl TextSimilarityBackend for SimilarityViaStore {
    fn score_text_pair(&self, a: &str, b: &str) -> Result<f64, BackendError> {
        let inner = self.inner_text.clone();
        let response = call_via_store(
            &self.store,
            BackendKind::Similarity,
            canonical_text_pair_request(a, b),
            inner.map(|backend| {
                move || {
                    backend
                        .score_text_pair(a, b)
                        .map(|s| serde_json::json!(s).to_string())
                }
            }),
        )?;
        response
            .trim()
            .parse::<f64>()
            .map_err(|e| BackendError::StoreCorrupt(format!("bad score fixture: {e}")))
    }
}

struct SearchViaStore {
    store: Arc<FixtureStore>,
    inner: Option<Arc<dyn SearchBackend>>,
}

impl SearchBackend for SearchViaStore {
    fn fetch(&self, query: &str) -> Result<Vec<FactSnippet>, BackendError> {
        let inner = self.inner.clone();
        let response = call_via_store(
            &self.store,
            BackendKind::Search,
            canonical_search_request(query),
            inner.map(|b| {
                move || {
                    let snippets = b.fetch(query)?;
                    serde_json::to_string(&snippets)
                        .map_err(|e| BackendError::StoreCorrupt(e.to_string()))
                }
            }),
        )?;
        serde_json::from_str(&response).map_err(|e| BackendError::StoreCorrupt(e.to_string()))
    }
}

/// Routes every backend in `live` (when given) through the fixture store.
/// With `live` absent the returned services are replay-only.
pub fn wrap_with_store(live: Option<Services>, store: Arc<FixtureStore>) -> Services {
    let similarity = Arc::new(SimilarityViaStore {
        store: store.clone(),
        inner: live.as_ref().map(|s| s.similarity.clone()),
        inner_text: live.as_ref().map(|s| s.text_similarity.clone()),
    });
    Services {
        chat: Arc::new(ChatViaStore {
            store: store.clone(),
            inner: live.as_ref().map(|s| s.chat.clone()),
        }),
        detect: Arc::new(DetectViaStore {
            store: store.clone(),
            inner: live.as_ref().map(|s| s.detect.clone()),
        }),
        similarity: similarity.clone(),
        text_similarity: similarity,
        search: Arc::new(SearchViaStore {
            store,
            inner: live.map(|s| s.search),
        }),
    }
}
