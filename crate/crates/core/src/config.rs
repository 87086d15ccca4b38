//! Run configuration: a TOML file with sections for backend endpoints,
//! thresholds, run parameters, and ablation flags.
//!
//! Credentials never live in the file; they come from environment
//! variables (`VERIQA_*_API_KEY`). Endpoint URLs may also be overridden
//! from the environment. Precedence is flags > environment > file >
//! defaults; flag overrides are applied by the CLI on top of the loaded
//! config.

use crate::answerer::{AnswerKind, default_insufficiency_markers};
use crate::backends::{
    BackendError, ChatBackend, ChatRequest, DetectBackend, Detection, FactSnippet, HttpChatBackend,
    HttpDetectBackend, HttpSearchBackend, HttpSimilarityBackend, ImageRef, SearchBackend, Services,
    SimilarityBackend, TextSimilarityBackend,
};
use crate::backends::http::ImageDelivery;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const ENV_CHAT_URL: &str = "VERIQA_CHAT_URL";
pub const ENV_DETECT_URL: &str = "VERIQA_DETECT_URL";
pub const ENV_SIMILARITY_URL: &str = "VERIQA_SIMILARITY_URL";
pub const ENV_SEARCH_URL: &str = "VERIQA_SEARCH_URL";
pub const ENV_CHAT_API_KEY: &str = "VERIQA_CHAT_API_KEY";
pub const ENV_DETECT_API_KEY: &str = "VERIQA_DETECT_API_KEY";
pub const ENV_SIMILARITY_API_KEY: &str = "VERIQA_SIMILARITY_API_KEY";
pub const ENV_SEARCH_API_KEY: &str = "VERIQA_SEARCH_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Stage switches mirroring the five optional pipeline modules; answering
/// is always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    /// Stage 1: target identification and visual perception.
    pub tivp: bool,
    /// Stage 2: visual perception verification.
    pub vpv: bool,
    /// Stage 3: question validation and adjustment.
    pub qav: bool,
    /// Stage 4: commonsense induction.
    pub ci: bool,
    /// Stage 5: commonsense verification.
    pub cv: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self { tivp: true, vpv: true, qav: true, ci: true, cv: true }
    }
}

impl AblationFlags {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.vpv && !self.tivp {
            return Err(ConfigError::Invalid(
                "vpv requires tivp: verification needs a perceived graph".into(),
            ));
        }
        if self.cv && !self.ci {
            return Err(ConfigError::Invalid(
                "cv requires ci: claim verification needs induced claims".into(),
            ));
        }
        Ok(())
    }

    pub fn all_off(&self) -> bool {
        !self.tivp && !self.vpv && !self.qav && !self.ci && !self.cv
    }

    /// Disables one stage by name, cascading dependents (tivp pulls down
    /// vpv, ci pulls down cv).
    pub fn disable(&mut self, name: &str) -> Result<(), ConfigError> {
        match name {
            "tivp" => {
                self.tivp = false;
                self.vpv = false;
            }
            "vpv" => self.vpv = false,
            "qav" => self.qav = false,
            "ci" => {
                self.ci = false;
                self.cv = false;
            }
            "cv" => self.cv = false,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown ablation stage {other:?} (expected tivp, vpv, qav, ci, or cv)"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    pub chat_url: Option<String>,
    pub chat_model: String,
    /// "base64" inlines image bytes; "url" passes the reference through.
    pub image_delivery: String,
    pub detect_url: Option<String>,
    pub similarity_url: Option<String>,
    pub search_url: Option<String>,
    pub search_page_size: usize,
    pub timeout_secs: u64,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            chat_url: None,
            chat_model: "default".into(),
            image_delivery: "base64".into(),
            detect_url: None,
            similarity_url: None,
            search_url: None,
            search_page_size: 10,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdsConfig {
    pub object: f64,
    pub attribute: f64,
    pub relation: f64,
    pub iou_floor: f64,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        Self { object: 0.35, attribute: 0.30, relation: 0.30, iou_floor: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Corrective re-asks after a malformed scene-graph reply.
    pub retries: u32,
    /// In-context examples rendered into the question-validation prompt.
    pub k_examples: usize,
    /// Search results inspected per claim.
    pub top_k: usize,
    pub parallelism: usize,
    /// Continue with an empty scene graph when extraction keeps failing.
    pub degrade_on_perception_failure: bool,
    /// Ask for a whole-image graph instead of a question-relevant one.
    pub full_scene_graph: bool,
    pub rewrite_claims_as_queries: bool,
    pub insufficiency_markers: Vec<String>,
    pub answer_kind: AnswerKind,
    pub continue_on_error: bool,
    pub concurrent_element_checks: bool,
    /// Directory of per-stage prompt override files.
    pub prompt_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            k_examples: 2,
            top_k: 5,
            parallelism: 1,
            degrade_on_perception_failure: true,
            full_scene_graph: false,
            rewrite_claims_as_queries: false,
            insufficiency_markers: default_insufficiency_markers(),
            answer_kind: AnswerKind::FreeForm,
            continue_on_error: true,
            concurrent_element_checks: false,
            prompt_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backends: BackendsConfig,
    pub thresholds: ThresholdsConfig,
    pub run: RunConfig,
    pub ablation: AblationFlags,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: PipelineConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ablation.validate()?;
        if self.run.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        match self.backends.image_delivery.as_str() {
            "base64" | "url" => {}
            other => {
                return Err(ConfigError::Invalid(format!(
                    "image_delivery must be \"base64\" or \"url\", got {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Applies environment overrides for endpoint URLs. `get` is injected
    /// so tests never touch the process environment.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        for (var, slot) in [
            (ENV_CHAT_URL, &mut self.backends.chat_url),
            (ENV_DETECT_URL, &mut self.backends.detect_url),
            (ENV_SIMILARITY_URL, &mut self.backends.similarity_url),
            (ENV_SEARCH_URL, &mut self.backends.search_url),
        ] {
            if let Some(value) = get(var) {
                *slot = Some(value);
            }
        }
    }

    pub fn verify_config(&self) -> crate::verification::VerifyConfig {
        crate::verification::VerifyConfig {
            object_threshold: self.thresholds.object,
            attribute_threshold: self.thresholds.attribute,
            relation_threshold: self.thresholds.relation,
            iou_floor: self.thresholds.iou_floor,
            relation_phrase_with_attributes: false,
            concurrent_elements: self.run.concurrent_element_checks,
        }
    }
}

/// Placeholder backend for capabilities without a configured endpoint;
/// every call reports what is missing.
struct UnconfiguredBackend(&'static str);

impl ChatBackend for UnconfiguredBackend {
    fn chat_complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
        Err(BackendError::Transport(format!("{} backend not configured", self.0)))
    }
}

impl DetectBackend for UnconfiguredBackend {
    fn detect_all(&self, _: &ImageRef, _: &str) -> Result<Vec<Detection>, BackendError> {
        Err(BackendError::Transport(format!("{} backend not configured", self.0)))
    }
}

impl SimilarityBackend for UnconfiguredBackend {
    fn score_raw(&self, _: &ImageRef, _: &[f64; 4], _: &str) -> Result<f64, BackendError> {
        Err(BackendError::Transport(format!("{} backend not configured", self.0)))
    }
}

impl TextSimilarityBackend for UnconfiguredBackend {
    fn score_text_pair(&self, _: &str, _: &str) -> Result<f64, BackendError> {
        Err(BackendError::Transport(format!("{} backend not configured", self.0)))
    }
}

impl SearchBackend for UnconfiguredBackend {
    fn fetch(&self, _: &str) -> Result<Vec<FactSnippet>, BackendError> {
        Err(BackendError::SearchUnavailable(format!("{} backend not configured", self.0)))
    }
}

/// Builds live HTTP services from the config. Capabilities without a URL
/// get a placeholder that errors on first use, so replay-only and
/// partially configured setups stay usable.
pub fn build_live_services(
    cfg: &PipelineConfig,
    get_env: impl Fn(&str) -> Option<String>,
) -> Services {
    let delivery = if cfg.backends.image_delivery == "url" {
        ImageDelivery::Url
    } else {
        ImageDelivery::Base64
    };
    let chat: Arc<dyn ChatBackend> = match &cfg.backends.chat_url {
        Some(url) => Arc::new(HttpChatBackend {
            url: url.clone(),
            model: cfg.backends.chat_model.clone(),
            api_key: get_env(ENV_CHAT_API_KEY),
            image_delivery: delivery,
            timeout_secs: cfg.backends.timeout_secs,
        }),
        None => Arc::new(UnconfiguredBackend("chat")),
    };
    let detect: Arc<dyn DetectBackend> = match &cfg.backends.detect_url {
        Some(url) => Arc::new(HttpDetectBackend {
            url: url.clone(),
            api_key: get_env(ENV_DETECT_API_KEY),
            image_delivery: delivery,
            timeout_secs: cfg.backends.timeout_secs,
        }),
        None => Arc::new(UnconfiguredBackend("detect")),
    };
    let (similarity, text_similarity): (Arc<dyn SimilarityBackend>, Arc<dyn TextSimilarityBackend>) =
        match &cfg.backends.similarity_url {
            Some(url) => {
                let backend = Arc::new(HttpSimilarityBackend {
                    url: url.clone(),
                    api_key: get_env(ENV_SIMILARITY_API_KEY),
                    image_delivery: delivery,
                    timeout_secs: cfg.backends.timeout_secs,
                });
                (backend.clone(), backend)
            }
            None => (
                Arc::new(UnconfiguredBackend("similarity")),
                Arc::new(UnconfiguredBackend("similarity")),
            ),
        };
    let search: Arc<dyn SearchBackend> = match &cfg.backends.search_url {
        Some(url) => Arc::new(HttpSearchBackend {
            url: url.clone(),
            api_key: get_env(ENV_SEARCH_API_KEY),
            page_size: cfg.backends.search_page_size,
            timeout_secs: cfg.backends.timeout_secs,
        }),
        None => Arc::new(UnconfiguredBackend("search")),
    };
    Services { chat, detect, similarity, text_similarity, search }
}
