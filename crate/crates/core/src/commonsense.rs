//! Stages 4 and 5: induce the commonsense claims a cognition-level
//! question needs, then verify each claim against web-search evidence and
//! filter the ones judged hallucinated.
//!
//! Verification is conservative: a claim whose search fails, or whose
//! label cannot be read from the model reply, is Unverifiable and never
//! enters the kept set.

use crate::backends::{
    BackendError, ChatBackend, ChatRequest, FactSnippet, ImageRef, SearchBackend,
};
use crate::perception::{PromptKind, PromptRegistry, render_prompt};
use crate::sg_model::{self, SceneGraph};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// One induced commonsense claim, indexed by appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub index: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimLabel {
    Hallucination,
    NonHallucination,
    /// Search failed or the label could not be read; excluded from the
    /// kept set like a hallucination, but distinguishable in traces.
    Unverifiable,
}

impl ClaimLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClaimLabel::Hallucination => "hallucination",
            ClaimLabel::NonHallucination => "non-hallucination",
            ClaimLabel::Unverifiable => "unverifiable",
        }
    }
}

/// Judgment for one claim: its label plus the evidence snippets shown to
/// the labeler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimJudgment {
    pub claim: Claim,
    pub label: ClaimLabel,
    pub evidence: Vec<FactSnippet>,
}

/// The surviving claims plus a judgment for every input claim.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifiedClaims {
    pub kept: Vec<Claim>,
    pub judgments: Vec<ClaimJudgment>,
}

#[derive(Debug, Error)]
pub enum ClaimError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] crate::perception::PromptError),
    #[error(transparent)]
    Graph(#[from] sg_model::SgError),
}

/// Extracts `[Claim n]:` lines in appearance order, renumbering from 1 and
/// collapsing case-insensitive duplicate texts.
pub fn parse_claim_list(text: &str) -> Vec<Claim> {
    let re = regex::Regex::new(r"(?im)^\s*\[claim\s*\d+\]\s*:\s*(.+)$").unwrap();
    let mut seen = std::collections::BTreeSet::new();
    let mut claims = Vec::new();
    for capture in re.captures_iter(text) {
        let claim_text = capture[1].trim().to_string();
        if claim_text.is_empty() {
            continue;
        }
        if seen.insert(claim_text.to_lowercase()) {
            claims.push(Claim {
                index: claims.len() as u32 + 1,
                text: claim_text,
            });
        }
    }
    claims
}

/// Matches `[Label]:` lines to `claims` by order. Claims without a line,
/// or with a token outside the two known labels, map to Unverifiable.
pub fn parse_label_list(text: &str, claims: &[Claim]) -> BTreeMap<u32, ClaimLabel> {
    let re = regex::Regex::new(r"(?im)^\s*\[label\]\s*:\s*(.+)$").unwrap();
    let tokens: Vec<String> = re
        .captures_iter(text)
        .map(|c| c[1].trim().to_lowercase())
        .collect();
    claims
        .iter()
        .enumerate()
        .map(|(i, claim)| {
            let label = match tokens.get(i) {
                Some(token) if token.starts_with("non-hallucination") || token.starts_with("non hallucination") => {
                    ClaimLabel::NonHallucination
                }
                Some(token) if token.starts_with("hallucination") => ClaimLabel::Hallucination,
                _ => ClaimLabel::Unverifiable,
            };
            (claim.index, label)
        })
        .collect()
}

/// The stage-4 exchange: rendered prompt, raw reply, and parsed claims.
#[derive(Debug, Clone)]
pub struct InductionRun {
    pub claims: Vec<Claim>,
    pub prompt: String,
    pub raw_reply: String,
}

/// Runs stage 4 against the verified graph and (possibly adjusted)
/// question. Invoked only after the perception-level answer attempt came
/// back insufficient. An empty claim block is an empty list, not an error.
pub fn induce_claims(
    chat: &dyn ChatBackend,
    registry: &PromptRegistry,
    image: &ImageRef,
    graph: &SceneGraph,
    question: &str,
) -> Result<InductionRun, ClaimError> {
    let slots = BTreeMap::from([
        ("scene_graph".to_string(), sg_model::canonicalize(graph)?),
        ("question".to_string(), question.to_string()),
    ]);
    let prompt = render_prompt(registry.get(PromptKind::ClaimInduction), &slots)?;
    let reply = chat.chat_complete(&ChatRequest::new(Some(image.clone()), vec![prompt.clone()]))?;
    Ok(InductionRun {
        claims: parse_claim_list(&reply),
        prompt,
        raw_reply: reply,
    })
}

fn format_claims(claims: &[Claim]) -> String {
    claims
        .iter()
        .map(|c| format!("[Claim {}]: {}", c.index, c.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_facts(claims: &[Claim], evidence: &BTreeMap<u32, Vec<FactSnippet>>) -> String {
    claims
        .iter()
        .map(|c| {
            let snippets = evidence.get(&c.index).map(Vec::as_slice).unwrap_or(&[]);
            let mut block = format!("[Facts for Claim {}]:", c.index);
            if snippets.is_empty() {
                block.push_str("\n(no results)");
            }
            for s in snippets {
                block.push_str(&format!("\n{}. {} — {} ({})", s.rank, s.title, s.snippet, s.source_url));
            }
            block
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The stage-5 exchange. The labeler prompt/reply are absent when no claim
/// had usable search evidence (no chat call is made).
#[derive(Debug, Clone)]
pub struct VerificationRun {
    pub verified: VerifiedClaims,
    pub prompt: Option<String>,
    pub raw_reply: Option<String>,
    /// One note per search failure, for the stage trace.
    pub search_notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ClaimVerifyConfig {
    /// Search results inspected per claim.
    pub top_k: usize,
    /// Rewrite each claim into a search question with an extra chat call
    /// before searching. Off by default: the claim text itself is the
    /// query.
    pub rewrite_queries: bool,
}

impl Default for ClaimVerifyConfig {
    fn default() -> Self {
        Self { top_k: 5, rewrite_queries: false }
    }
}

/// Runs stage 5: one web search per claim, then a single labeling chat
/// call over all claims that have evidence. Kept = exactly the claims
/// labeled non-hallucination.
pub fn verify_claims(
    chat: &dyn ChatBackend,
    search: &dyn SearchBackend,
    registry: &PromptRegistry,
    claims: &[Claim],
    cfg: &ClaimVerifyConfig,
) -> Result<VerificationRun, ClaimError> {
    if claims.is_empty() {
        return Ok(VerificationRun {
            verified: VerifiedClaims::default(),
            prompt: None,
            raw_reply: None,
            search_notes: Vec::new(),
        });
    }

    let mut evidence: BTreeMap<u32, Vec<FactSnippet>> = BTreeMap::new();
    let mut search_notes = Vec::new();
    let mut searchable: Vec<Claim> = Vec::new();
    for claim in claims {
        let query = if cfg.rewrite_queries {
            let rewrite_prompt = format!(
                "Rewrite the following statement as a short fact-checking search question. Reply with the question only.\nStatement: {}",
                claim.text
            );
            chat.chat_complete(&ChatRequest::new(None, vec![rewrite_prompt]))?
                .trim()
                .to_string()
        } else {
            claim.text.clone()
        };
        match search.web_search(&query, cfg.top_k) {
            Ok(snippets) => {
                evidence.insert(claim.index, snippets);
                searchable.push(claim.clone());
            }
            Err(BackendError::SearchUnavailable(reason)) | Err(BackendError::Transport(reason)) => {
                search_notes.push(format!("claim {}: search failed ({reason})", claim.index));
            }
            Err(other) => return Err(other.into()),
        }
    }

    let mut labels: BTreeMap<u32, ClaimLabel> = claims
        .iter()
        .map(|c| (c.index, ClaimLabel::Unverifiable))
        .collect();
    let mut prompt = None;
    let mut raw_reply = None;
    if !searchable.is_empty() {
        let slots = BTreeMap::from([
            ("claims".to_string(), format_claims(&searchable)),
            ("facts".to_string(), format_facts(&searchable, &evidence)),
        ]);
        let rendered = render_prompt(registry.get(PromptKind::ClaimVerification), &slots)?;
        let reply = chat.chat_complete(&ChatRequest::new(None, vec![rendered.clone()]))?;
        for (index, label) in parse_label_list(&reply, &searchable) {
            labels.insert(index, label);
        }
        prompt = Some(rendered);
        raw_reply = Some(reply);
    }

    let judgments: Vec<ClaimJudgment> = claims
        .iter()
        .map(|c| ClaimJudgment {
            claim: c.clone(),
            label: labels[&c.index],
            evidence: evidence.get(&c.index).cloned().unwrap_or_default(),
        })
        .collect();
    let kept: Vec<Claim> = judgments
        .iter()
        .filter(|j| j.label == ClaimLabel::NonHallucination)
        .map(|j| j.claim.clone())
        .collect();

    Ok(VerificationRun {
        verified: VerifiedClaims { kept, judgments },
        prompt,
        raw_reply,
        search_notes,
    })
}
