//! Orchestrates the six reasoning stages per query, with ablation
//! switches, a complete audit trace, and bounded-concurrency batch runs.
//!
//! A single query is strictly sequential: perceive, verify, reconcile the
//! question, then answer — short-circuiting at the perception level when
//! the model can already answer, and otherwise inducing and verifying
//! commonsense claims before the final knowledge-grounded call.

use crate::answerer::{self, AnswerOutcome, FinalAnswer};
use crate::backends::{ChatRequest, ImageRef, Services};
use crate::commonsense::{self, ClaimVerifyConfig, VerifiedClaims};
use crate::config::PipelineConfig;
use crate::perception::{self, PerceptionError, PromptRegistry};
use crate::question_guard::{self, AdjustedQuestion};
use crate::sg_model::{self, SceneGraph};
use crate::verification::{self, HallucinationStats};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

pub const STAGE_PERCEPTION: u8 = 1;
pub const STAGE_VERIFICATION: u8 = 2;
pub const STAGE_QUESTION_GUARD: u8 = 3;
pub const STAGE_CLAIM_INDUCTION: u8 = 4;
pub const STAGE_CLAIM_VERIFICATION: u8 = 5;
pub const STAGE_ANSWERING: u8 = 6;

pub fn stage_name(stage: u8) -> &'static str {
    match stage {
        STAGE_PERCEPTION => "perception",
        STAGE_VERIFICATION => "verification",
        STAGE_QUESTION_GUARD => "question_guard",
        STAGE_CLAIM_INDUCTION => "claim_induction",
        STAGE_CLAIM_VERIFICATION => "claim_verification",
        STAGE_ANSWERING => "answering",
        _ => "unknown",
    }
}

/// Audit record for one executed stage. Skipped stages get no trace.
/// Elapsed time is kept in memory for performance reporting but excluded
/// from the canonical serialized form, which must be byte-stable across
/// identical replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: u8,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_reply: Option<String>,
    /// The perception-level answering exchange, present on the stage-6
    /// trace when the pipeline continued into the knowledge stages.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe_prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe_reply: Option<String>,
    /// Canonical text of the artifact this stage produced.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub artifact: Option<String>,
    pub decisions: Vec<String>,
    pub retries: u32,
    pub errors: Vec<String>,
    #[serde(skip)]
    pub elapsed_micros: u64,
}

impl StageTrace {
    fn new(stage: u8) -> Self {
        Self {
            stage,
            name: stage_name(stage).to_string(),
            prompt: None,
            raw_reply: None,
            probe_prompt: None,
            probe_reply: None,
            artifact: None,
            decisions: Vec::new(),
            retries: 0,
            errors: Vec::new(),
            elapsed_micros: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// The model answered from verified perception alone.
    PerceptionAnswered,
    /// The knowledge stages ran and produced the final answer.
    KnowledgeAnswered,
    /// Perception was insufficient and the knowledge stages were disabled;
    /// the perception-level reply stands.
    Degraded,
}

/// Final answer plus the per-stage audit trail for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub route: Route,
    pub final_answer: FinalAnswer,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjustment: Option<AdjustedQuestion>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hallucination_stats: Option<HallucinationStats>,
    pub traces: Vec<StageTrace>,
}

impl PipelineResult {
    /// Byte-stable serialized form used for trace files and golden
    /// comparisons.
    pub fn canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("result serialization");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
#[error("stage {stage} ({name}) failed: {message}", name = stage_name(*.stage))]
pub struct PipelineError {
    pub stage: u8,
    pub message: String,
    /// Traces of the stages that completed before the failure.
    pub traces: Vec<StageTrace>,
}

struct QueryRun {
    traces: Vec<StageTrace>,
}

impl QueryRun {
    fn fail(&mut self, stage: u8, message: impl ToString) -> PipelineError {
        PipelineError {
            stage,
            message: message.to_string(),
            traces: std::mem::take(&mut self.traces),
        }
    }
}

/// Runs one query through the configured stages and returns the final
/// answer with one trace per executed stage. On failure the partial trace
/// is preserved inside the error.
pub fn run_query(
    services: &Services,
    registry: &PromptRegistry,
    config: &PipelineConfig,
    image: &ImageRef,
    question: &str,
) -> Result<PipelineResult, PipelineError> {
    let flags = config.ablation;
    let mut run = QueryRun { traces: Vec::new() };

    // With every optional stage off the pipeline degenerates to the plain
    // model: one chat call carrying just the image and question.
    if flags.all_off() {
        let started = Instant::now();
        let request = ChatRequest::new(Some(image.clone()), vec![question.to_string()]);
        let reply = services
            .chat
            .chat_complete(&request)
            .map_err(|e| run.fail(STAGE_ANSWERING, e))?;
        let final_answer = FinalAnswer::from_reply(reply.clone(), config.run.answer_kind);
        let mut trace = StageTrace::new(STAGE_ANSWERING);
        trace.prompt = Some(question.to_string());
        trace.raw_reply = Some(reply);
        trace.artifact = Some(final_answer.normalized.clone());
        trace.decisions.push("baseline: direct question, all stages disabled".into());
        trace.elapsed_micros = started.elapsed().as_micros() as u64;
        run.traces.push(trace);
        return Ok(PipelineResult {
            route: Route::PerceptionAnswered,
            final_answer,
            adjustment: None,
            hallucination_stats: None,
            traces: run.traces,
        });
    }

    // Stage 1: partial scene-graph extraction.
    let mut graph = SceneGraph::default();
    if flags.tivp {
        let started = Instant::now();
        let mut trace = StageTrace::new(STAGE_PERCEPTION);
        match perception::extract_partial_scene_graph(
            services.chat.as_ref(),
            registry,
            image,
            question,
            config.run.retries,
            config.run.full_scene_graph,
        ) {
            Ok(result) => {
                trace.prompt = Some(result.prompt);
                trace.raw_reply = Some(result.raw_reply);
                trace.artifact = Some(
                    sg_model::canonicalize(&result.scene_graph)
                        .map_err(|e| run.fail(STAGE_PERCEPTION, e))?,
                );
                trace.retries = result.retries_used;
                trace.errors = result.attempt_failures;
                trace.decisions.push(format!(
                    "extracted {} objects, {} relations",
                    result.scene_graph.objects.len(),
                    result.scene_graph.relations.len()
                ));
                graph = result.scene_graph;
            }
            Err(PerceptionError::PerceptionFailed { attempts, last_failure })
                if config.run.degrade_on_perception_failure =>
            {
                trace.retries = attempts.saturating_sub(1);
                trace.errors.push(last_failure);
                trace
                    .decisions
                    .push(format!("degraded to empty scene graph after {attempts} malformed replies"));
            }
            Err(e) => return Err(run.fail(STAGE_PERCEPTION, e)),
        }
        trace.elapsed_micros = started.elapsed().as_micros() as u64;
        run.traces.push(trace);
    }

    // Stage 2: tool verification of the perceived graph.
    let mut hallucination_stats = None;
    if flags.vpv {
        let started = Instant::now();
        let (vsg, stats) = verification::verify_scene_graph(
            services.detect.as_ref(),
            services.similarity.as_ref(),
            image,
            &graph,
            &config.verify_config(),
        )
        .map_err(|e| run.fail(STAGE_VERIFICATION, e))?;
        let mut trace = StageTrace::new(STAGE_VERIFICATION);
        trace.artifact = Some(
            sg_model::canonicalize(&vsg.graph).map_err(|e| run.fail(STAGE_VERIFICATION, e))?,
        );
        trace.decisions = vsg.provenance.iter().map(|d| d.render()).collect();
        trace.elapsed_micros = started.elapsed().as_micros() as u64;
        run.traces.push(trace);
        graph = vsg.graph;
        hallucination_stats = Some(stats);
    }

    // Stage 3: question validation against the (verified) graph.
    let mut active_question = question.to_string();
    let mut adjustment = None;
    if flags.qav {
        let started = Instant::now();
        let guard = question_guard::validate_and_adjust(
            services.chat.as_ref(),
            registry,
            image,
            &graph,
            question,
            config.run.k_examples,
        )
        .map_err(|e| run.fail(STAGE_QUESTION_GUARD, e))?;
        let mut trace = StageTrace::new(STAGE_QUESTION_GUARD);
        trace.prompt = Some(guard.prompt);
        trace.raw_reply = Some(guard.raw_reply);
        trace.artifact = Some(guard.outcome.adjusted.clone());
        for conflict in &guard.outcome.conflicts {
            trace.decisions.push(format!(
                "conflict {:?}: {}",
                conflict.kind, conflict.description
            ));
        }
        trace
            .decisions
            .push(format!("question changed: {}", guard.outcome.changed));
        if guard.outcome.guard_degraded {
            trace
                .decisions
                .push("guard reply unparseable; original question kept".into());
        }
        trace.elapsed_micros = started.elapsed().as_micros() as u64;
        run.traces.push(trace);
        active_question = guard.outcome.adjusted.clone();
        adjustment = Some(guard.outcome);
    }

    // Stage 6, perception level: can the model already answer?
    let probe_started = Instant::now();
    let probe = answerer::answer_perception_level(
        services.chat.as_ref(),
        registry,
        image,
        &graph,
        &active_question,
        &config.run.insufficiency_markers,
    )
    .map_err(|e| run.fail(STAGE_ANSWERING, e))?;
    let probe_elapsed = probe_started.elapsed().as_micros() as u64;

    match probe.value {
        AnswerOutcome::Answered(reply) => {
            let final_answer = FinalAnswer::from_reply(reply, config.run.answer_kind);
            let mut trace = StageTrace::new(STAGE_ANSWERING);
            trace.prompt = Some(probe.prompt);
            trace.raw_reply = Some(probe.raw_reply);
            trace.artifact = Some(final_answer.normalized.clone());
            trace.decisions.push("answered at perception level".into());
            trace.elapsed_micros = probe_elapsed;
            run.traces.push(trace);
            Ok(PipelineResult {
                route: Route::PerceptionAnswered,
                final_answer,
                adjustment,
                hallucination_stats,
                traces: run.traces,
            })
        }
        AnswerOutcome::Insufficient(rationale) => {
            if !flags.ci {
                let final_answer =
                    FinalAnswer::from_reply(rationale, config.run.answer_kind);
                let mut trace = StageTrace::new(STAGE_ANSWERING);
                trace.prompt = Some(probe.prompt);
                trace.raw_reply = Some(probe.raw_reply);
                trace.artifact = Some(final_answer.normalized.clone());
                trace.decisions.push("insufficient at perception level".into());
                trace
                    .decisions
                    .push("knowledge stages disabled; perception reply stands".into());
                trace.elapsed_micros = probe_elapsed;
                run.traces.push(trace);
                return Ok(PipelineResult {
                    route: Route::Degraded,
                    final_answer,
                    adjustment,
                    hallucination_stats,
                    traces: run.traces,
                });
            }

            // Stage 4: commonsense induction.
            let started = Instant::now();
            let induction = commonsense::induce_claims(
                services.chat.as_ref(),
                registry,
                image,
                &graph,
                &active_question,
            )
            .map_err(|e| run.fail(STAGE_CLAIM_INDUCTION, e))?;
            let mut trace = StageTrace::new(STAGE_CLAIM_INDUCTION);
            trace.prompt = Some(induction.prompt);
            trace.raw_reply = Some(induction.raw_reply);
            trace.artifact = Some(
                induction
                    .claims
                    .iter()
                    .map(|c| format!("[Claim {}]: {}", c.index, c.text))
                    .collect::<Vec<_>>()
                    .join("\n"),
            );
            trace
                .decisions
                .push(format!("induced {} claims", induction.claims.len()));
            trace.elapsed_micros = started.elapsed().as_micros() as u64;
            run.traces.push(trace);

            // Stage 5: claim verification, or pass-through without it.
            let verified: VerifiedClaims;
            if flags.cv {
                let started = Instant::now();
                let result = commonsense::verify_claims(
                    services.chat.as_ref(),
                    services.search.as_ref(),
                    registry,
                    &induction.claims,
                    &ClaimVerifyConfig {
                        top_k: config.run.top_k,
                        rewrite_queries: config.run.rewrite_claims_as_queries,
                    },
                )
                .map_err(|e| run.fail(STAGE_CLAIM_VERIFICATION, e))?;
                let mut trace = StageTrace::new(STAGE_CLAIM_VERIFICATION);
                trace.prompt = result.prompt;
                trace.raw_reply = result.raw_reply;
                trace.artifact = Some(
                    result
                        .verified
                        .kept
                        .iter()
                        .map(|c| format!("[Claim {}]: {}", c.index, c.text))
                        .collect::<Vec<_>>()
                        .join("\n"),
                );
                for judgment in &result.verified.judgments {
                    trace.decisions.push(format!(
                        "claim {} {}: {}",
                        judgment.claim.index,
                        judgment.label.as_str(),
                        judgment.claim.text
                    ));
                }
                trace.errors = result.search_notes;
                trace.elapsed_micros = started.elapsed().as_micros() as u64;
                run.traces.push(trace);
                verified = result.verified;
            } else {
                verified = VerifiedClaims {
                    kept: induction.claims.clone(),
                    judgments: Vec::new(),
                };
            }

            // Stage 6, knowledge level: the final grounded answer.
            let started = Instant::now();
            let answer = answerer::answer_with_knowledge(
                services.chat.as_ref(),
                registry,
                image,
                &graph,
                &verified,
                &active_question,
                config.run.answer_kind,
            )
            .map_err(|e| run.fail(STAGE_ANSWERING, e))?;
            let mut trace = StageTrace::new(STAGE_ANSWERING);
            trace.probe_prompt = Some(probe.prompt);
            trace.probe_reply = Some(probe.raw_reply);
            trace.prompt = Some(answer.prompt);
            trace.raw_reply = Some(answer.raw_reply);
            trace.artifact = Some(answer.value.normalized.clone());
            trace.decisions.push("insufficient at perception level".into());
            if !flags.cv {
                trace
                    .decisions
                    .push("claim verification disabled; claims pass unfiltered".into());
            }
            trace.decisions.push(format!(
                "answered with knowledge ({} kept claims)",
                verified.kept.len()
            ));
            trace.elapsed_micros = probe_elapsed + started.elapsed().as_micros() as u64;
            run.traces.push(trace);
            Ok(PipelineResult {
                route: Route::KnowledgeAnswered,
                final_answer: answer.value,
                adjustment,
                hallucination_stats,
                traces: run.traces,
            })
        }
    }
}

/// One query of a batch run.
#[derive(Debug, Clone)]
pub struct BatchCase {
    pub id: String,
    pub image: ImageRef,
    pub question: String,
}

/// Outcome for one batch case; failures carry the stage error text.
#[derive(Debug)]
pub struct CaseRun {
    pub case_id: String,
    pub result: Result<PipelineResult, PipelineError>,
}

#[derive(Debug, Error)]
#[error("{} of {} cases failed: {}", failures.len(), total, failures.iter().map(|(id, m)| format!("{id}: {m}")).collect::<Vec<_>>().join("; "))]
pub struct BatchError {
    pub total: usize,
    pub failures: Vec<(String, String)>,
}

/// Runs every case with at most `parallelism` queries in flight, returning
/// results in input order. Under continue-on-error failed cases are marked
/// and the rest proceed; otherwise any failure aborts with an aggregated
/// report.
pub fn run_batch(
    services: &Services,
    registry: &PromptRegistry,
    config: &PipelineConfig,
    cases: &[BatchCase],
    parallelism: usize,
) -> Result<Vec<CaseRun>, BatchError> {
    assert!(parallelism >= 1, "parallelism must be at least 1");
    let slots: Vec<std::sync::Mutex<Option<CaseRun>>> =
        cases.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(cases.len().max(1)) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if index >= cases.len() {
                    break;
                }
                let case = &cases[index];
                let result = run_query(services, registry, config, &case.image, &case.question);
                *slots[index].lock().unwrap() = Some(CaseRun {
                    case_id: case.id.clone(),
                    result,
                });
            });
        }
    });

    let results: Vec<CaseRun> = slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect();

    if !config.run.continue_on_error {
        let failures: Vec<(String, String)> = results
            .iter()
            .filter_map(|r| {
                r.result
                    .as_ref()
                    .err()
                    .map(|e| (r.case_id.clone(), e.to_string()))
            })
            .collect();
        if !failures.is_empty() {
            return Err(BatchError {
                total: results.len(),
                failures,
            });
        }
    }
    Ok(results)
}
