//! HTTP implementations of the backend contracts.
//!
//! Wire formats (frozen by the fixture tests and documented in the README):
//! - chat: OpenAI-style `messages` array, one user message whose `content`
//!   parts hold the text segments in order followed by the image, delivered
//!   as a base64 data URL or a plain URL per config.
//! - detect: `{"image", "phrase"}` → `{"detections": [{"box", "confidence",
//!   "phrase"}]}`.
//! - similarity: `{"image", "region", "text"}` → `{"score"}`; sentence
//!   pairs post `{"a", "b"}` → `{"score"}`.
//! - search: `{"q", "num"}` with an `X-API-KEY` header → `{"organic":
//!   [{"title", "snippet", "link", "position"}]}`.

use super::{
    BackendError, ChatBackend, ChatRequest, DetectBackend, Detection, FactSnippet, ImageRef,
    ImageSource, SearchBackend, SimilarityBackend, TextSimilarityBackend, normalize_phrase,
};
use base64::Engine;
use serde_json::{Value, json};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageDelivery {
    Base64,
    Url,
}

fn client(timeout_secs: u64) -> Result<reqwest::blocking::Client, BackendError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| BackendError::Transport(e.to_string()))
}

fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    key_header: &str,
    body: &Value,
) -> Result<Value, BackendError> {
    let mut request = client.post(url).json(body);
    if let Some(key) = api_key {
        request = if key_header == "Authorization" {
            request.header("Authorization", format!("Bearer {key}"))
        } else {
            request.header(key_header, key)
        };
    }
    let response = request
        .send()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response
        .text()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(BackendError::Service { status, body: text });
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Transport(format!("bad JSON body: {e}")))
}

/// Encodes the image for the wire. Paths must exist at call time when the
/// payload is inlined.
fn encode_image(image: &ImageRef, delivery: ImageDelivery) -> Result<String, BackendError> {
    let engine = base64::engine::general_purpose::STANDARD;
    match (&image.source, delivery) {
        (ImageSource::Bytes(bytes), _) => Ok(format!(
            "data:image/{};base64,{}",
            image.media_kind,
            engine.encode(bytes)
        )),
        (ImageSource::Path(path), ImageDelivery::Base64) => {
            let bytes = std::fs::read(path).map_err(|e| {
                BackendError::InvalidRequest(format!("image {}: {e}", path.display()))
            })?;
            Ok(format!(
                "data:image/{};base64,{}",
                image.media_kind,
                engine.encode(bytes)
            ))
        }
        (ImageSource::Path(path), ImageDelivery::Url) => Ok(path.display().to_string()),
    }
}

/// Builds the chat wire body: segments become text parts in order, the
/// image (when present) is attached after them.
pub(crate) fn build_chat_body(
    req: &ChatRequest,
    model: &str,
    delivery: ImageDelivery,
) -> Result<Value, BackendError> {
    let mut content: Vec<Value> = req
        .segments
        .iter()
        .map(|s| json!({"type": "text", "text": s}))
        .collect();
    if let Some(image) = &req.image {
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": encode_image(image, delivery)?}
        }));
    }
    let mut body = json!({
        "model": model,
        "messages": [{"role": "user", "content": content}],
    });
    if let Some(max) = req.max_reply_tokens {
        body["max_tokens"] = json!(max);
    }
    if let Some(seed) = req.seed {
        body["seed"] = json!(seed);
    }
    Ok(body)
}

pub struct HttpChatBackend {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub image_delivery: ImageDelivery,
    pub timeout_secs: u64,
}

impl ChatBackend for HttpChatBackend {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        let body = build_chat_body(req, &self.model, self.image_delivery)?;
        let client = client(self.timeout_secs)?;
        let value = post_json(&client, &self.url, self.api_key.as_deref(), "Authorization", &body)?;
        let reply = value["choices"][0]["message"]["content"]
            .as_str()
            .unwrap_or("")
            .to_string();
        if reply.trim().is_empty() {
            return Err(BackendError::ReplyEmpty);
        }
        Ok(reply)
    }
}

pub struct HttpDetectBackend {
    pub url: String,
    pub api_key: Option<String>,
    pub image_delivery: ImageDelivery,
    pub timeout_secs: u64,
}

impl DetectBackend for HttpDetectBackend {
    fn detect_all(&self, image: &ImageRef, phrase: &str) -> Result<Vec<Detection>, BackendError> {
        let body = json!({
            "image": encode_image(image, self.image_delivery)?,
            "phrase": normalize_phrase(phrase),
        });
        let client = client(self.timeout_secs)?;
        let value = post_json(&client, &self.url, self.api_key.as_deref(), "X-API-KEY", &body)?;
        let detections = value["detections"]
            .as_array()
            .ok_or_else(|| BackendError::Transport("missing detections array".into()))?;
        detections
            .iter()
            .map(|d| {
                serde_json::from_value::<Detection>(d.clone())
                    .map_err(|e| BackendError::Transport(format!("bad detection: {e}")))
            })
            .collect()
    }
}

pub struct HttpSimilarityBackend {
    pub url: String,
    pub api_key: Option<String>,
    pub image_delivery: ImageDelivery,
    pub timeout_secs: u64,
}

impl HttpSimilarityBackend {
    fn score_request(&self, body: &Value) -> Result<f64, BackendError> {
        let client = client(self.timeout_secs)?;
        let value = post_json(&client, &self.url, self.api_key.as_deref(), "X-API-KEY", body)?;
        value["score"]
            .as_f64()
            .ok_or_else(|| BackendError::Transport("missing score field".into()))
    }
}

impl SimilarityBackend for HttpSimilarityBackend {
    fn score_raw(
        &self,
        image: &ImageRef,
        region: &[f64; 4],
        text: &str,
    ) -> Result<f64, BackendError> {
        let body = json!({
            "image": encode_image(image, self.image_delivery)?,
            "region": region,
            "text": text,
        });
        self.score_request(&body)
    }
}

impl TextSimilarityBackend for HttpSimilarityBackend {
    fn score_text_pair(&self, a: &str, b: &str) -> Result<f64, BackendError> {
        self.score_request(&json!({"a": a, "b": b}))
    }
}

pub struct HttpSearchBackend {
    pub url: String,
    pub api_key: Option<String>,
    /// Provider page size for raw fetches; callers truncate to top-k.
    pub page_size: usize,
    pub timeout_secs: u64,
}

impl SearchBackend for HttpSearchBackend {
    fn fetch(&self, query: &str) -> Result<Vec<FactSnippet>, BackendError> {
        let body = json!({"q": query, "num": self.page_size});
        let client = client(self.timeout_secs)?;
        let value = post_json(&client, &self.url, self.api_key.as_deref(), "X-API-KEY", &body)
            .map_err(|e| match e {
                BackendError::Service { status, body } if status >= 500 => {
                    BackendError::SearchUnavailable(format!("status {status}: {body}"))
                }
                other => other,
            })?;
        let organic = value["organic"]
            .as_array()
            .ok_or_else(|| BackendError::SearchUnavailable("missing organic results".into()))?;
        Ok(organic
            .iter()
            .enumerate()
            .map(|(i, item)| FactSnippet {
                title: item["title"].as_str().unwrap_or("").to_string(),
                snippet: item["snippet"].as_str().unwrap_or("").to_string(),
                source_url: item["link"].as_str().unwrap_or("").to_string(),
                rank: item["position"].as_u64().unwrap_or(i as u64 + 1) as u32,
            })
            .collect())
    }
}
