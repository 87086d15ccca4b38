//! Stage 1: render the scene-graph extraction prompt, ask the chat model,
//! and parse the reply into a validated partial scene graph, retrying with
//! corrective context on malformed output.
//!
//! Also hosts the prompt registry for all six stages. Prompt bodies ship
//! as embedded text assets with `{name}` slot markers and can be
//! overridden per stage by files in a directory.

use crate::backends::{BackendError, ChatBackend, ChatRequest, ImageRef};
use crate::sg_model::{self, SceneGraph};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

/// The six prompt roles, one per chat-consuming pipeline step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PromptKind {
    SceneGraphExtraction,
    QuestionValidation,
    ClaimInduction,
    ClaimVerification,
    PerceptionAnswer,
    KnowledgeAnswer,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        PromptKind::SceneGraphExtraction,
        PromptKind::QuestionValidation,
        PromptKind::ClaimInduction,
        PromptKind::ClaimVerification,
        PromptKind::PerceptionAnswer,
        PromptKind::KnowledgeAnswer,
    ];

    /// Asset file stem, both for the embedded defaults and for overrides.
    pub fn asset_name(&self) -> &'static str {
        match self {
            PromptKind::SceneGraphExtraction => "scene_graph_extraction",
            PromptKind::QuestionValidation => "question_validation",
            PromptKind::ClaimInduction => "claim_induction",
            PromptKind::ClaimVerification => "claim_verification",
            PromptKind::PerceptionAnswer => "perception_answer",
            PromptKind::KnowledgeAnswer => "knowledge_answer",
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("missing slots: {0:?}")]
    MissingSlot(Vec<String>),
    #[error("unknown slot {0:?} not declared by the template")]
    UnknownSlot(String),
    #[error("template for {0:?} leaves residual marker {1:?} after rendering")]
    ResidualMarker(String, String),
    #[error("cannot read prompt override {path}: {source}")]
    OverrideIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A prompt body with named `{slot}` markers.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub body: String,
    pub required_slots: BTreeSet<String>,
}

fn find_markers(body: &str) -> BTreeSet<String> {
    let re = regex::Regex::new(r"\{([a-z][a-z0-9_]*)\}").unwrap();
    re.captures_iter(body)
        .map(|c| c[1].to_string())
        .collect()
}

impl PromptTemplate {
    /// Slot markers are discovered from the body; every marker is required.
    pub fn new(kind: PromptKind, body: impl Into<String>) -> Self {
        let body = body.into();
        let required_slots = find_markers(&body);
        Self {
            kind,
            body,
            required_slots,
        }
    }
}

/// Replaces every declared slot marker with its value. All required slots
/// must be provided, no undeclared slot may be passed, and no declared
/// marker may survive rendering.
pub fn render_prompt(
    template: &PromptTemplate,
    slots: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    let missing: Vec<String> = template
        .required_slots
        .iter()
        .filter(|s| !slots.contains_key(*s))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(PromptError::MissingSlot(missing));
    }
    if let Some(unknown) = slots.keys().find(|k| !template.required_slots.contains(*k)) {
        return Err(PromptError::UnknownSlot(unknown.clone()));
    }
    let mut rendered = template.body.clone();
    for (name, value) in slots {
        rendered = rendered.replace(&format!("{{{name}}}"), value);
    }
    for name in &template.required_slots {
        let marker = format!("{{{name}}}");
        if rendered.contains(&marker) {
            return Err(PromptError::ResidualMarker(
                format!("{:?}", template.kind),
                marker,
            ));
        }
    }
    Ok(rendered)
}

/// Registry of the six stage templates, embedded defaults plus optional
/// per-stage file overrides.
#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<PromptKind, PromptTemplate>,
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        for kind in PromptKind::ALL {
            let body = match kind {
                PromptKind::SceneGraphExtraction => {
                    include_str!("../assets/prompts/scene_graph_extraction.txt")
                }
                PromptKind::QuestionValidation => {
                    include_str!("../assets/prompts/question_validation.txt")
                }
                PromptKind::ClaimInduction => include_str!("../assets/prompts/claim_induction.txt"),
                PromptKind::ClaimVerification => {
                    include_str!("../assets/prompts/claim_verification.txt")
                }
                PromptKind::PerceptionAnswer => {
                    include_str!("../assets/prompts/perception_answer.txt")
                }
                PromptKind::KnowledgeAnswer => {
                    include_str!("../assets/prompts/knowledge_answer.txt")
                }
            };
            templates.insert(kind, PromptTemplate::new(kind, body));
        }
        Self { templates }
    }

    /// Replaces templates with `<asset_name>.txt` files found in `dir`.
    /// Stages without an override file keep their defaults.
    pub fn load_overrides(&mut self, dir: &Path) -> Result<(), PromptError> {
        for kind in PromptKind::ALL {
            let path = dir.join(format!("{}.txt", kind.asset_name()));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|source| {
                    PromptError::OverrideIo {
                        path: path.display().to_string(),
                        source,
                    }
                })?;
                self.templates.insert(kind, PromptTemplate::new(kind, body));
            }
        }
        Ok(())
    }

    pub fn get(&self, kind: PromptKind) -> &PromptTemplate {
        &self.templates[&kind]
    }
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("all {attempts} extraction attempts produced malformed scene graphs: {last_failure}")]
    PerceptionFailed { attempts: u32, last_failure: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Outcome of stage 1: a validated graph plus the exchange that produced it.
#[derive(Debug, Clone)]
pub struct PerceptionResult {
    pub scene_graph: SceneGraph,
    pub prompt: String,
    pub raw_reply: String,
    pub retries_used: u32,
    /// Parse/validation failures from earlier attempts, if any.
    pub attempt_failures: Vec<String>,
}

/// When set, the question slot is replaced by a whole-image instruction so
/// the model describes everything rather than the question-relevant part.
pub const FULL_GRAPH_INSTRUCTION: &str =
    "Describe everything visible in the image, covering all objects, their attributes, and their relationships.";

/// Runs stage 1: ask for a partial scene graph, parse and validate the
/// reply, and re-ask with the failure appended as corrective context up to
/// `retries` times.
pub fn extract_partial_scene_graph(
    chat: &dyn ChatBackend,
    registry: &PromptRegistry,
    image: &ImageRef,
    question: &str,
    retries: u32,
    full_graph: bool,
) -> Result<PerceptionResult, PerceptionError> {
    let template = registry.get(PromptKind::SceneGraphExtraction);
    let question_slot = if full_graph {
        FULL_GRAPH_INSTRUCTION
    } else {
        question
    };
    let prompt = render_prompt(template, &slots(&[("question", question_slot)]))?;
    let mut segments = vec![prompt.clone()];
    let mut failures: Vec<String> = Vec::new();

    for attempt in 0..=retries {
        let req = ChatRequest::new(Some(image.clone()), segments.clone());
        let reply = chat.chat_complete(&req)?;
        let failure = match sg_model::parse_scene_graph(&reply) {
            Ok(graph) => {
                let report = sg_model::validate_scene_graph(&graph);
                if report.is_clean() {
                    return Ok(PerceptionResult {
                        scene_graph: graph,
                        prompt,
                        raw_reply: reply,
                        retries_used: attempt,
                        attempt_failures: failures,
                    });
                }
                report.summary()
            }
            Err(e) => e.to_string(),
        };
        failures.push(failure.clone());
        segments.push(format!(
            "Your previous reply could not be used: {failure}. Please answer again with a single JSON scene graph in the required format."
        ));
    }

    Err(PerceptionError::PerceptionFailed {
        attempts: retries + 1,
        last_failure: failures.last().cloned().unwrap_or_default(),
    })
}
