//! Service contracts for the four external capabilities the pipeline
//! consumes: multimodal chat, open-vocabulary phrase detection, image-text
//! similarity, and web search.
//!
//! Each capability is a trait so deterministic mocks, replay stores, and
//! real HTTP endpoints are interchangeable behind the same contract.
//! Detection-threshold filtering and search truncation happen client-side,
//! against raw backend results, so recorded fixtures stay valid when those
//! parameters change.

mod fixture;
pub mod http;
pub mod mock;

pub use fixture::{FixtureMode, FixtureRecord, FixtureStore, wrap_with_store};
pub use http::{HttpChatBackend, HttpDetectBackend, HttpSearchBackend, HttpSimilarityBackend};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {body}")]
    Service { status: u16, body: String },
    #[error("backend returned an empty reply")]
    ReplyEmpty,
    #[error("similarity score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("search provider unavailable: {0}")]
    SearchUnavailable(String),
    #[error("no fixture recorded for {kind:?} request digest {digest}")]
    ReplayMiss { kind: BackendKind, digest: String },
    #[error("fixture store corrupt: {0}")]
    StoreCorrupt(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Chat,
    Detect,
    Similarity,
    Search,
}

/// Reference to the image under discussion: a path on disk or inline bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    Path(PathBuf),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub source: ImageSource,
    /// Format tag ("jpeg", "png", ...) used for wire encoding.
    pub media_kind: String,
}

impl ImageRef {
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let media_kind = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| match e.to_ascii_lowercase().as_str() {
                "jpg" => "jpeg".to_string(),
                other => other.to_string(),
            })
            .unwrap_or_else(|| "jpeg".to_string());
        Self {
            source: ImageSource::Path(path),
            media_kind,
        }
    }

    pub fn from_bytes(bytes: Vec<u8>, media_kind: impl Into<String>) -> Self {
        Self {
            source: ImageSource::Bytes(bytes),
            media_kind: media_kind.into(),
        }
    }

    /// Stable identity token. Inline payloads are replaced by their digest
    /// so canonical requests stay small; paths are used verbatim.
    pub fn identity(&self) -> String {
        match &self.source {
            ImageSource::Path(p) => format!("path:{}", p.display()),
            ImageSource::Bytes(b) => format!("bytes:{}", digest_hex(b)),
        }
    }
}

/// One chat call: optional image plus ordered text segments that the wire
/// layer concatenates in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub image: Option<ImageRef>,
    pub segments: Vec<String>,
    pub max_reply_tokens: Option<u32>,
    /// Advisory determinism seed; backends may ignore it.
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(image: Option<ImageRef>, segments: Vec<String>) -> Self {
        Self {
            image,
            segments,
            max_reply_tokens: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.segments.iter().all(|s| s.trim().is_empty()) {
            return Err(BackendError::InvalidRequest(
                "chat request needs at least one non-empty segment".into(),
            ));
        }
        Ok(())
    }

    /// Canonical request text: a pure function of the request, used as the
    /// fixture key.
    pub fn canonical_text(&self) -> String {
        let image = self.image.as_ref().map(|i| i.identity());
        serde_json::json!({
            "kind": "chat",
            "image": image,
            "segments": self.segments,
            "max_reply_tokens": self.max_reply_tokens,
            "seed": self.seed,
        })
        .to_string()
    }
}

/// One grounded box for a query phrase, in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub box_: [f64; 4],
    pub confidence: f64,
    pub phrase: String,
}

impl Detection {
    pub fn area(&self) -> f64 {
        (self.box_[2] - self.box_[0]) * (self.box_[3] - self.box_[1])
    }
}

/// One ranked search result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSnippet {
    pub title: String,
    pub snippet: String,
    pub source_url: String,
    pub rank: u32,
}

pub fn digest_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn normalize_phrase(phrase: &str) -> String {
    phrase.trim().to_lowercase()
}

pub fn canonical_detect_request(image: &ImageRef, phrase: &str) -> String {
    serde_json::json!({
        "kind": "detect",
        "image": image.identity(),
        "phrase": normalize_phrase(phrase),
    })
    .to_string()
}

pub fn canonical_similarity_request(image: &ImageRef, region: &[f64; 4], text: &str) -> String {
    serde_json::json!({
        "kind": "similarity",
        "image": image.identity(),
        "region": region,
        "text": text,
    })
    .to_string()
}

pub fn canonical_text_pair_request(a: &str, b: &str) -> String {
    serde_json::json!({ "kind": "similarity_text", "a": a, "b": b }).to_string()
}

pub fn canonical_search_request(query: &str) -> String {
    serde_json::json!({ "kind": "search", "query": query }).to_string()
}

/// Multimodal chat completion.
pub trait ChatBackend: Send + Sync {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError>;
}

/// Open-vocabulary phrase grounding.
pub trait DetectBackend: Send + Sync {
    /// Raw detections for a (lowercased) phrase, unfiltered.
    fn detect_all(&self, image: &ImageRef, phrase: &str) -> Result<Vec<Detection>, BackendError>;

    /// Detections with confidence at or above `threshold`, sorted by
    /// descending confidence (ties: smaller area, then coordinates). An
    /// empty list means the phrase fails to be detected.
    fn detect_phrase(
        &self,
        image: &ImageRef,
        phrase: &str,
        threshold: f64,
    ) -> Result<Vec<Detection>, BackendError> {
        if phrase.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty detection phrase".into()));
        }
        let mut hits: Vec<Detection> = self
            .detect_all(image, &normalize_phrase(phrase))?
            .into_iter()
            .filter(|d| d.confidence >= threshold)
            .collect();
        hits.sort_by(|a, b| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(
                    a.area()
                        .partial_cmp(&b.area())
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
                .then(
                    a.box_
                        .partial_cmp(&b.box_)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
        });
        Ok(hits)
    }
}

/// Image-region / text affinity scoring.
pub trait SimilarityBackend: Send + Sync {
    fn score_raw(
        &self,
        image: &ImageRef,
        region: &[f64; 4],
        text: &str,
    ) -> Result<f64, BackendError>;

    /// Crop-text affinity in [0, 1]. Out-of-range backend values are
    /// errors, never silently clamped.
    fn score_similarity(
        &self,
        image: &ImageRef,
        region: &[f64; 4],
        text: &str,
    ) -> Result<f64, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty similarity text".into()));
        }
        if region[0] >= region[2] || region[1] >= region[3] {
            return Err(BackendError::InvalidRequest(format!(
                "degenerate region {region:?}"
            )));
        }
        let score = self.score_raw(image, region, text)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(BackendError::OutOfRange(score));
        }
        Ok(score)
    }
}

/// Sentence-pair similarity, used for edit-quality statistics.
pub trait TextSimilarityBackend: Send + Sync {
    fn score_text_pair(&self, a: &str, b: &str) -> Result<f64, BackendError>;
}

/// Web search over an external provider.
pub trait SearchBackend: Send + Sync {
    /// Raw ranked results for a query, provider page size.
    fn fetch(&self, query: &str) -> Result<Vec<FactSnippet>, BackendError>;

    /// At most `top_k` snippets, rank-ordered.
    fn web_search(&self, query: &str, top_k: usize) -> Result<Vec<FactSnippet>, BackendError> {
        let mut results = self.fetch(query)?;
        results.sort_by_key(|s| s.rank);
        results.truncate(top_k);
        Ok(results)
    }
}

/// The bundle of service handles a pipeline run consumes. Handles are
/// shared across batch workers, so implementations must tolerate
/// concurrent calls.
#[derive(Clone)]
pub struct Services {
    pub chat: Arc<dyn ChatBackend>,
    pub detect: Arc<dyn DetectBackend>,
    pub similarity: Arc<dyn SimilarityBackend>,
    pub text_similarity: Arc<dyn TextSimilarityBackend>,
    pub search: Arc<dyn SearchBackend>,
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;

    #[test]
    fn scripted_chat_returns_replies_in_order() {
        let chat = ScriptedChat::new(vec!["r1".into(), "r2".into()]);
        let req = ChatRequest::new(None, vec!["hello".into()]);
        assert_eq!(chat.chat_complete(&req).unwrap(), "r1");
        assert_eq!(chat.chat_complete(&req).unwrap(), "r2");
        assert!(chat.chat_complete(&req).is_err());
    }

    #[test]
    fn identical_requests_share_a_digest() {
        // Oracle: recompute the digest from the canonical text by hand.
        let req = ChatRequest::new(
            Some(ImageRef::from_path("a.jpg")),
            vec!["p".into(), "q".into()],
        );
        let again = req.clone();
        let d1 = digest_hex(req.canonical_text().as_bytes());
        let d2 = digest_hex(again.canonical_text().as_bytes());
        assert_eq!(d1, d2);
        assert_eq!(d1, digest_hex(req.canonical_text().as_bytes()));
    }

    #[test]
    fn inline_bytes_digest_replaces_payload() {
        let img = ImageRef::from_bytes(vec![1, 2, 3], "png");
        let id = img.identity();
        assert!(id.starts_with("bytes:"));
        assert!(!id.contains('\u{1}'));
        assert_eq!(id, ImageRef::from_bytes(vec![1, 2, 3], "png").identity());
        assert_ne!(id, ImageRef::from_bytes(vec![1, 2, 4], "png").identity());
    }

    #[test]
    fn detect_threshold_filters_client_side() {
        // Oracle: filter the table by hand.
        let img = ImageRef::from_path("x.jpg");
        let detector = TableDetector::new().with(
            "hat",
            vec![Detection {
                box_: [10.0, 10.0, 50.0, 50.0],
                confidence: 0.9,
                phrase: "hat".into(),
            }],
        );
        assert_eq!(detector.detect_phrase(&img, "hat", 0.5).unwrap().len(), 1);
        assert!(detector.detect_phrase(&img, "hat", 0.95).unwrap().is_empty());
        // Case-insensitive phrase normalization.
        assert_eq!(detector.detect_phrase(&img, "Hat", 0.5).unwrap().len(), 1);
        // Empty table detects nothing.
        let empty = TableDetector::new();
        assert!(empty.detect_phrase(&img, "hat", 0.1).unwrap().is_empty());
    }

    #[test]
    fn detections_sorted_by_descending_confidence() {
        let img = ImageRef::from_path("x.jpg");
        let detector = TableDetector::new().with(
            "cat",
            vec![
                Detection { box_: [0.0, 0.0, 2.0, 2.0], confidence: 0.4, phrase: "cat".into() },
                Detection { box_: [1.0, 1.0, 9.0, 9.0], confidence: 0.8, phrase: "cat".into() },
                Detection { box_: [0.0, 0.0, 1.0, 1.0], confidence: 0.8, phrase: "cat".into() },
            ],
        );
        let hits = detector.detect_phrase(&img, "cat", 0.3).unwrap();
        let confs: Vec<f64> = hits.iter().map(|d| d.confidence).collect();
        assert_eq!(confs, vec![0.8, 0.8, 0.4]);
        // Equal confidence: smaller area first.
        assert!(hits[0].area() < hits[1].area());
    }

    #[test]
    fn constant_scorer_and_out_of_range() {
        let img = ImageRef::from_path("x.jpg");
        let region = [0.0, 0.0, 10.0, 10.0];
        let ok = ConstScorer(0.5);
        assert_eq!(ok.score_similarity(&img, &region, "anything").unwrap(), 0.5);
        let bad = ConstScorer(1.2);
        assert!(matches!(
            bad.score_similarity(&img, &region, "anything"),
            Err(BackendError::OutOfRange(s)) if s == 1.2
        ));
    }

    #[test]
    fn search_truncates_by_rank() {
        // Oracle: truncate the 5-snippet table by hand.
        let snippets: Vec<FactSnippet> = (1..=5)
            .map(|rank| FactSnippet {
                title: format!("t{rank}"),
                snippet: format!("s{rank}"),
                source_url: format!("https://example.org/{rank}"),
                rank,
            })
            .collect();
        let search = TableSearch::new().with("q", snippets.clone());
        let got = search.web_search("q", 3).unwrap();
        assert_eq!(got, snippets[..3].to_vec());
        assert!(search.web_search("q", 0).unwrap().is_empty());
    }

    #[test]
    fn search_outage_surfaces_to_caller() {
        let search = FailingSearch;
        assert!(matches!(
            search.web_search("q", 3),
            Err(BackendError::SearchUnavailable(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Detections always come back sorted by descending confidence
            /// with every hit at or above the threshold, for any table.
            #[test]
            fn detect_phrase_sorted_and_filtered(
                confidences in proptest::collection::vec(0.0f64..1.0, 0..12),
                threshold in 0.0f64..1.0,
            ) {
                let detections: Vec<Detection> = confidences
                    .iter()
                    .enumerate()
                    .map(|(i, &confidence)| Detection {
                        box_: [i as f64, 0.0, i as f64 + 1.0, 1.0],
                        confidence,
                        phrase: "thing".into(),
                    })
                    .collect();
                let detector = TableDetector::new().with("thing", detections);
                let image = ImageRef::from_path("x.jpg");
                let hits = detector.detect_phrase(&image, "Thing", threshold).unwrap();
                prop_assert!(hits.iter().all(|d| d.confidence >= threshold));
                prop_assert!(hits.windows(2).all(|w| w[0].confidence >= w[1].confidence));
                let expected = confidences.iter().filter(|&&c| c >= threshold).count();
                prop_assert_eq!(hits.len(), expected);
            }
        }
    }
}
