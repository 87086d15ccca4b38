//! Stage 6: attempt a perception-level answer and detect insufficiency;
//! produce the final knowledge-grounded answer; normalize answers for
//! evaluation.

use crate::backends::{BackendError, ChatBackend, ChatRequest, ImageRef};
use crate::commonsense::VerifiedClaims;
use crate::perception::{PromptKind, PromptRegistry, render_prompt};
use crate::sg_model::{self, SceneGraph};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] crate::perception::PromptError),
    #[error(transparent)]
    Graph(#[from] sg_model::SgError),
}

/// Whether the perception-level attempt answered or declared itself
/// insufficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerOutcome {
    Answered(String),
    Insufficient(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Binary,
    FreeForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Yes,
    No,
    Abstain,
}

impl BinaryLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinaryLabel::Yes => "yes",
            BinaryLabel::No => "no",
            BinaryLabel::Abstain => "abstain",
        }
    }
}

/// The final answer plus its evaluation-ready normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub text: String,
    pub kind: AnswerKind,
    /// `yes`/`no`/`abstain` for binary answers, the normalized string for
    /// free-form ones.
    pub normalized: String,
}

impl FinalAnswer {
    pub fn from_reply(text: String, kind: AnswerKind) -> Self {
        let normalized = normalize_answer(&text, kind);
        Self { text, kind, normalized }
    }

    pub fn binary_label(&self) -> Option<BinaryLabel> {
        match (self.kind, self.normalized.as_str()) {
            (AnswerKind::Binary, "yes") => Some(BinaryLabel::Yes),
            (AnswerKind::Binary, "no") => Some(BinaryLabel::No),
            (AnswerKind::Binary, _) => Some(BinaryLabel::Abstain),
            _ => None,
        }
    }
}

/// Leading-token rule: the first alphabetic token decides yes/no;
/// everything else abstains.
pub fn normalize_binary(text: &str) -> BinaryLabel {
    let first_token: String = text
        .split(|c: char| !c.is_alphabetic())
        .find(|t| !t.is_empty())
        .unwrap_or("")
        .to_lowercase();
    match first_token.as_str() {
        "yes" => BinaryLabel::Yes,
        "no" => BinaryLabel::No,
        _ => BinaryLabel::Abstain,
    }
}

/// Evaluation-ready form of a reply: the binary label token or the
/// normalized free-form string.
pub fn normalize_answer(text: &str, kind: AnswerKind) -> String {
    match kind {
        AnswerKind::Binary => normalize_binary(text).as_str().to_string(),
        AnswerKind::FreeForm => normalize_freeform(text),
    }
}

/// Lowercase, strip ASCII punctuation, collapse whitespace.
pub fn normalize_freeform(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Default reply markers that signal the model could not answer from the
/// visual content alone.
pub fn default_insufficiency_markers() -> Vec<String> {
    vec![
        "unanswerable".to_string(),
        "cannot be answered".to_string(),
        "not possible to determine".to_string(),
    ]
}

/// One stage-6 exchange, recorded in the trace by the pipeline.
#[derive(Debug, Clone)]
pub struct AnswerRun<T> {
    pub value: T,
    pub prompt: String,
    pub raw_reply: String,
}

/// Perception-level attempt: render the visual-only answering prompt and
/// classify the reply as answered or insufficient by marker scan
/// (case-insensitive substring match). Total: every reply maps to exactly
/// one outcome.
pub fn answer_perception_level(
    chat: &dyn ChatBackend,
    registry: &PromptRegistry,
    image: &ImageRef,
    graph: &SceneGraph,
    question: &str,
    markers: &[String],
) -> Result<AnswerRun<AnswerOutcome>, AnswerError> {
    let slots = BTreeMap::from([
        ("scene_graph".to_string(), sg_model::canonicalize(graph)?),
        ("question".to_string(), question.to_string()),
    ]);
    let prompt = render_prompt(registry.get(PromptKind::PerceptionAnswer), &slots)?;
    let reply = chat.chat_complete(&ChatRequest::new(Some(image.clone()), vec![prompt.clone()]))?;
    let lower = reply.to_lowercase();
    let outcome = if markers.iter().any(|m| lower.contains(&m.to_lowercase())) {
        AnswerOutcome::Insufficient(reply.clone())
    } else {
        AnswerOutcome::Answered(reply.clone())
    };
    Ok(AnswerRun { value: outcome, prompt, raw_reply: reply })
}

fn claims_slot(claims: &VerifiedClaims) -> String {
    if claims.kept.is_empty() {
        return String::new();
    }
    let mut text = String::from("Verified commonsense claims:\n");
    for claim in &claims.kept {
        text.push_str(&format!("[Claim {}]: {}\n", claim.index, claim.text));
    }
    text.push('\n');
    text
}

/// Knowledge-grounded answering: the prompt assembles instruction text,
/// canonical scene graph, kept claims, and question in that order. An
/// empty kept set elides the claims section entirely.
pub fn answer_with_knowledge(
    chat: &dyn ChatBackend,
    registry: &PromptRegistry,
    image: &ImageRef,
    graph: &SceneGraph,
    claims: &VerifiedClaims,
    question: &str,
    kind: AnswerKind,
) -> Result<AnswerRun<FinalAnswer>, AnswerError> {
    let slots = BTreeMap::from([
        ("scene_graph".to_string(), sg_model::canonicalize(graph)?),
        ("claims".to_string(), claims_slot(claims)),
        ("question".to_string(), question.to_string()),
    ]);
    let prompt = render_prompt(registry.get(PromptKind::KnowledgeAnswer), &slots)?;
    let reply = chat.chat_complete(&ChatRequest::new(Some(image.clone()), vec![prompt.clone()]))?;
    if reply.trim().is_empty() {
        return Err(AnswerError::Backend(BackendError::ReplyEmpty));
    }
    Ok(AnswerRun {
        value: FinalAnswer::from_reply(reply.clone(), kind),
        prompt,
        raw_reply: reply,
    })
}
