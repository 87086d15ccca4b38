//! Deterministic in-memory backends for tests, demos, and fixture
//! generation.

use super::{
    BackendError, ChatBackend, ChatRequest, DetectBackend, Detection, FactSnippet, ImageRef,
    SearchBackend, SimilarityBackend, TextSimilarityBackend, normalize_phrase,
};
use std::collections::HashMap;
use std::sync::Mutex;

/// Chat backend that replays a fixed reply sequence, one per call.
pub struct ScriptedChat {
    replies: Mutex<std::collections::VecDeque<String>>,
    calls: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new(replies: Vec<String>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl ChatBackend for ScriptedChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        self.calls.lock().unwrap().push(req.clone());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| BackendError::Transport("chat script exhausted".into()))
    }
}

/// Chat backend that selects its reply from the request content instead of
/// call order, so it stays deterministic under concurrent batch runs.
///
/// Each rule pairs a set of substrings with a reply; the first rule whose
/// substrings all occur in the concatenated segments wins.
pub struct KeyedChat {
    rules: Vec<(Vec<String>, String)>,
    fallback: Option<String>,
    calls: Mutex<usize>,
}

impl KeyedChat {
    pub fn new() -> Self {
        Self {
            rules: Vec::new(),
            fallback: None,
            calls: Mutex::new(0),
        }
    }

    pub fn rule(mut self, needles: &[&str], reply: impl Into<String>) -> Self {
        self.rules.push((
            needles.iter().map(|s| s.to_string()).collect(),
            reply.into(),
        ));
        self
    }

    pub fn fallback(mut self, reply: impl Into<String>) -> Self {
        self.fallback = Some(reply.into());
        self
    }

    pub fn call_count(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl Default for KeyedChat {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatBackend for KeyedChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        *self.calls.lock().unwrap() += 1;
        let haystack = req.segments.join("\n");
        for (needles, reply) in &self.rules {
            if needles.iter().all(|n| haystack.contains(n.as_str())) {
                return Ok(reply.clone());
            }
        }
        self.fallback.clone().ok_or_else(|| {
            BackendError::Transport(format!(
                "no keyed reply matches request starting {:?}",
                haystack.chars().take(80).collect::<String>()
            ))
        })
    }
}

/// Detector backed by a phrase table. Phrases are matched after lowercase
/// normalization; missing phrases detect nothing.
pub struct TableDetector {
    table: HashMap<String, Vec<Detection>>,
}

impl TableDetector {
    pub fn new() -> Self {
        Self { table: HashMap::new() }
    }

    pub fn with(mut self, phrase: &str, detections: Vec<Detection>) -> Self {
        self.table.insert(normalize_phrase(phrase), detections);
        self
    }

    /// Convenience: a single box at the given confidence.
    pub fn with_box(self, phrase: &str, box_: [f64; 4], confidence: f64) -> Self {
        let detection = Detection {
            box_,
            confidence,
            phrase: normalize_phrase(phrase),
        };
        self.with(phrase, vec![detection])
    }
}

impl Default for TableDetector {
    fn default() -> Self {
        Self::new()
    }
}

impl DetectBackend for TableDetector {
    fn detect_all(&self, _image: &ImageRef, phrase: &str) -> Result<Vec<Detection>, BackendError> {
        Ok(self
            .table
            .get(&normalize_phrase(phrase))
            .cloned()
            .unwrap_or_default())
    }
}

/// Similarity backend returning the same score for every query.
pub struct ConstScorer(pub f64);

impl SimilarityBackend for ConstScorer {
    fn score_raw(&self, _: &ImageRef, _: &[f64; 4], _: &str) -> Result<f64, BackendError> {
        Ok(self.0)
    }
}

/// Similarity backend keyed by the query text (region ignored), with a
/// default for unknown texts.
pub struct TableScorer {
    table: HashMap<String, f64>,
    default: f64,
}

impl TableScorer {
    pub fn new(default: f64) -> Self {
        Self { table: HashMap::new(), default }
    }

    pub fn with(mut self, text: &str, score: f64) -> Self {
        self.table.insert(text.to_lowercase(), score);
        self
    }
}

impl SimilarityBackend for TableScorer {
    fn score_raw(&self, _: &ImageRef, _: &[f64; 4], text: &str) -> Result<f64, BackendError> {
        Ok(*self.table.get(&text.to_lowercase()).unwrap_or(&self.default))
    }
}

/// Token-overlap (Jaccard) sentence similarity. Deterministic and cheap,
/// adequate for edit-quality statistics in offline runs.
pub struct JaccardTextSimilarity;

impl TextSimilarityBackend for JaccardTextSimilarity {
    fn score_text_pair(&self, a: &str, b: &str) -> Result<f64, BackendError> {
        let tokens = |s: &str| {
            s.split_whitespace()
                .map(|t| {
                    t.chars()
                        .filter(|c| !c.is_ascii_punctuation())
                        .collect::<String>()
                        .to_lowercase()
                })
                .filter(|t| !t.is_empty())
                .collect::<std::collections::BTreeSet<String>>()
        };
        let (sa, sb) = (tokens(a), tokens(b));
        if sa.is_empty() && sb.is_empty() {
            return Ok(1.0);
        }
        let inter = sa.intersection(&sb).count() as f64;
        let union = sa.union(&sb).count() as f64;
        Ok(inter / union)
    }
}

/// Search backend over a fixed query table.
pub struct TableSearch {
    table: HashMap<String, Vec<FactSnippet>>,
    calls: Mutex<Vec<String>>,
}

impl TableSearch {
    pub fn new() -> Self {
        Self {
            table: HashMap::new(),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with(mut self, query: &str, snippets: Vec<FactSnippet>) -> Self {
        self.table.insert(query.to_string(), snippets);
        self
    }

    pub fn queries(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl Default for TableSearch {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchBackend for TableSearch {
    fn fetch(&self, query: &str) -> Result<Vec<FactSnippet>, BackendError> {
        self.calls.lock().unwrap().push(query.to_string());
        Ok(self.table.get(query).cloned().unwrap_or_default())
    }
}

/// Search backend that always reports an outage.
pub struct FailingSearch;

impl SearchBackend for FailingSearch {
    fn fetch(&self, _query: &str) -> Result<Vec<FactSnippet>, BackendError> {
        Err(BackendError::SearchUnavailable("provider outage".into()))
    }
}

/// Search backend that fails for selected queries and delegates the rest.
pub struct PartialFailSearch {
    pub inner: TableSearch,
    pub fail_queries: Vec<String>,
}

impl SearchBackend for PartialFailSearch {
    fn fetch(&self, query: &str) -> Result<Vec<FactSnippet>, BackendError> {
        if self.fail_queries.iter().any(|q| q == query) {
            return Err(BackendError::SearchUnavailable("injected outage".into()));
        }
        self.inner.fetch(query)
    }
}

pub fn snippet(rank: u32, title: &str, text: &str) -> FactSnippet {
    FactSnippet {
        title: title.to_string(),
        snippet: text.to_string(),
        source_url: format!("https://example.org/{}", rank),
        rank,
    }
}
