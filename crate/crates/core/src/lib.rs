//! Bottom-up verified reasoning pipeline for multimodal question
//! answering.
//!
//! The pipeline decomposes one-shot visual question answering into six
//! stages that run over pluggable external services: extract a
//! question-relevant partial scene graph, verify it against grounding and
//! similarity tools, reconcile the question with the verified evidence,
//! induce and verify the commonsense claims a cognition-level question
//! needs, and answer with everything that survived. Every backend call can
//! be recorded and replayed, so the whole pipeline runs deterministically
//! offline.

pub mod answerer;
pub mod backends;
pub mod commonsense;
pub mod config;
pub mod demo;
pub mod evalkit;
pub mod perception;
pub mod pipeline;
pub mod question_guard;
pub mod sg_model;
pub mod verification;
