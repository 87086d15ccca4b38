//! Stage 3: detect conflicts between the input question and the verified
//! scene graph, and obtain a minimally edited question.
//!
//! The guard prompts the model with in-context worked examples, the
//! canonical verified graph, and the question, then parses the reply's
//! conclusion for the three conflict labels and its final
//! `Output Question:` line. Parse failures never drop the original
//! question; they degrade to it.

use crate::backends::{BackendError, ChatBackend, ChatRequest, ImageRef};
use crate::perception::{PromptKind, PromptRegistry, render_prompt};
use crate::sg_model::{self, SceneGraph};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// The three conflict categories a question can have with the visual
/// evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    Object,
    Attribute,
    Relationship,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictFinding {
    pub kind: ConflictKind,
    /// The model's own sentence describing the conflict.
    pub description: String,
}

/// Outcome of the guard: the original question, the (possibly rewritten)
/// question the rest of the pipeline uses, and what the model found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustedQuestion {
    pub original: String,
    pub adjusted: String,
    pub conflicts: Vec<ConflictFinding>,
    pub changed: bool,
    /// True when the model reply could not be parsed and the original
    /// question was carried forward unchanged.
    pub guard_degraded: bool,
}

#[derive(Debug, Error)]
pub enum GuardError {
    #[error("guard reply has no Output Question line")]
    GuardParseError,
    #[error("asked for {requested} in-context examples but only {available} are shipped")]
    InvalidExampleCount { requested: usize, available: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] crate::perception::PromptError),
    #[error(transparent)]
    Graph(#[from] sg_model::SgError),
}

/// The worked examples shipped with the guard prompt, in presentation
/// order: a no-conflict analysis and an object-conflict rewrite.
pub const SHIPPED_EXAMPLES: [&str; 2] = [
    include_str!("../assets/guard_examples/example1.txt"),
    include_str!("../assets/guard_examples/example2.txt"),
];

fn whitespace_normalized(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_line_decoration(line: &str) -> &str {
    line.trim_start_matches(|c: char| {
        c.is_whitespace() || matches!(c, '*' | '#' | '-' | '>' | '[' | ']')
    })
}

fn strip_quotes(text: &str) -> &str {
    let text = text.trim();
    let pairs = [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}')];
    for (open, close) in pairs {
        if let Some(inner) = text.strip_prefix(open).and_then(|t| t.strip_suffix(close)) {
            return inner;
        }
    }
    text
}

/// Parses a guard reply: the output question comes from the final
/// `Output Question:` line (quotes stripped); conflicts come from a
/// case-insensitive keyword scan of the conclusion (the text from the last
/// "Conclusion" marker onwards; the whole reply when no marker exists).
pub fn parse_guard_output(text: &str) -> Result<(Vec<ConflictFinding>, String), GuardError> {
    let mut question: Option<String> = None;
    let mut question_line_start: Option<usize> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let stripped = strip_line_decoration(line);
        let lower = stripped.to_lowercase();
        if lower.starts_with("output question") {
            if let Some((_, rest)) = stripped.split_once(':') {
                question = Some(strip_quotes(rest).to_string());
                question_line_start = Some(offset);
            }
        }
        offset += line.len();
    }
    let question = question.ok_or(GuardError::GuardParseError)?;

    let before_question = &text[..question_line_start.unwrap_or(text.len())];
    let conclusion_re = regex::Regex::new("(?i)conclusion").unwrap();
    let conclusion_start = conclusion_re
        .find_iter(before_question)
        .last()
        .map(|m| m.start())
        .unwrap_or(0);
    let conclusion = &before_question[conclusion_start..];

    let keyword_table = [
        (ConflictKind::Object, r"(?i)object\s+conflict"),
        (ConflictKind::Attribute, r"(?i)attribute\s+conflict"),
        (ConflictKind::Relationship, r"(?i)relation(ship)?\s+conflict"),
    ];
    let mut conflicts = Vec::new();
    for (kind, pattern) in keyword_table {
        if let Some(found) = regex::Regex::new(pattern).unwrap().find(conclusion) {
            let line_start = conclusion[..found.start()]
                .rfind('\n')
                .map(|i| i + 1)
                .unwrap_or(0);
            let line = conclusion[line_start..].lines().next().unwrap_or("").trim();
            conflicts.push(ConflictFinding {
                kind,
                description: line.to_string(),
            });
        }
    }
    conflicts.sort_by_key(|c| c.kind);
    Ok((conflicts, question))
}

/// Builds the examples slot text from the first `k` shipped examples.
fn examples_slot(k: usize) -> Result<String, GuardError> {
    if k > SHIPPED_EXAMPLES.len() {
        return Err(GuardError::InvalidExampleCount {
            requested: k,
            available: SHIPPED_EXAMPLES.len(),
        });
    }
    if k == 0 {
        return Ok(String::new());
    }
    let mut text =
        String::from("Next, I will provide several examples to help you understand this task more clearly:\n");
    for (i, example) in SHIPPED_EXAMPLES[..k].iter().enumerate() {
        text.push_str(&format!("\n[Example-{}]\n{}", i + 1, example.trim_end()));
        text.push('\n');
    }
    Ok(text)
}

/// The guard exchange plus its parsed outcome; the pipeline records the
/// prompt and reply in the stage trace.
#[derive(Debug, Clone)]
pub struct GuardRun {
    pub outcome: AdjustedQuestion,
    pub prompt: String,
    pub raw_reply: String,
}

/// Runs stage 3 over the verified graph. A reply the parser cannot use
/// degrades to the original question (`guard_degraded`), never to an
/// error; when the model reports no conflicts the original question is
/// forced through unchanged so a no-conflict pass can never rewrite.
pub fn validate_and_adjust(
    chat: &dyn ChatBackend,
    registry: &PromptRegistry,
    image: &ImageRef,
    graph: &SceneGraph,
    question: &str,
    k_examples: usize,
) -> Result<GuardRun, GuardError> {
    let mut graph_text = sg_model::canonicalize(graph)?;
    if graph.objects.is_empty() {
        // The guard still runs when perception produced nothing; say so
        // instead of presenting an empty graph as verified evidence.
        graph_text.push_str(
            "\n(Note: no scene-graph elements are available for this image; judge the question on the image alone.)",
        );
    }
    let slots = BTreeMap::from([
        ("examples".to_string(), examples_slot(k_examples)?),
        ("scene_graph".to_string(), graph_text),
        ("question".to_string(), question.to_string()),
    ]);
    let prompt = render_prompt(registry.get(PromptKind::QuestionValidation), &slots)?;
    let reply = chat.chat_complete(&ChatRequest::new(Some(image.clone()), vec![prompt.clone()]))?;

    let outcome = match parse_guard_output(&reply) {
        Ok((conflicts, output_question)) => {
            let adjusted = if conflicts.is_empty() {
                question.to_string()
            } else {
                output_question
            };
            let changed =
                whitespace_normalized(question) != whitespace_normalized(&adjusted);
            AdjustedQuestion {
                original: question.to_string(),
                adjusted,
                conflicts,
                changed,
                guard_degraded: false,
            }
        }
        Err(GuardError::GuardParseError) => AdjustedQuestion {
            original: question.to_string(),
            adjusted: question.to_string(),
            conflicts: Vec::new(),
            changed: false,
            guard_degraded: true,
        },
        Err(other) => return Err(other),
    };

    Ok(GuardRun {
        outcome,
        prompt,
        raw_reply: reply,
    })
}

fn edit_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.chars()
                .filter(|c| !c.is_ascii_punctuation())
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token-level Levenshtein distance over whitespace-split,
/// punctuation-stripped, lowercased tokens.
pub fn word_edit_count(a: &str, b: &str) -> usize {
    let (ta, tb) = (edit_tokens(a), edit_tokens(b));
    let (n, m) = (ta.len(), tb.len());
    let mut previous: Vec<usize> = (0..=m).collect();
    let mut current = vec![0usize; m + 1];
    for i in 1..=n {
        current[0] = i;
        for j in 1..=m {
            let substitution = previous[j - 1] + usize::from(ta[i - 1] != tb[j - 1]);
            current[j] = substitution.min(previous[j] + 1).min(current[j - 1] + 1);
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[m]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::ScriptedChat;
    use crate::sg_model::SgObject;
    use proptest::prelude::*;

    const BEACH_REPLY: &str = r#"Analyzing the potential conflicts between the scene graph derived from the image and the associated question "Are there four persons on the beach?" involves examining the three specified aspects:
1. Object Conflict: The question references "four persons on the beach." The scene graph lists four Person objects.
2. Object Attribute Conflict: The attributes given for each person are consistent.
3. Object Relation Conflict: The relationships noted in the scene graph do not contradict the question.
Conclusion: There is no conflict between the visual content in the image and the question in terms of the object count, their attributes, or their relationships as analyzed from the scene graph.
Output Question: "Are there four persons on the beach?""#;

    const CAT_CONFLICT_REPLY: &str = r#"Analyzing the potential conflicts:
1. Object Conflict: The question mentions a cat, but the verified scene graph contains no cat.
2. Object Attribute Conflict: none beyond the missing object.
3. Object Relation Conflict: the stated relation involves the missing cat.
Conclusion: There is an Object Conflict: the cat mentioned in the question is not present in the image.
Output Question: "What color is the bus?""#;

    fn bus_graph() -> SceneGraph {
        SceneGraph {
            objects: vec![
                SgObject::new(1, "Bus").with_attr("color", "red"),
                SgObject::new(2, "Street"),
            ],
            relations: vec![crate::sg_model::SgRelation::new(1, 2, "on")],
        }
    }

    fn image() -> ImageRef {
        ImageRef::from_path("scene.jpg")
    }

    #[test]
    fn full_analysis_block_parses_without_conflicts() {
        let (conflicts, question) = parse_guard_output(BEACH_REPLY).unwrap();
        assert!(conflicts.is_empty());
        assert_eq!(question, "Are there four persons on the beach?");
    }

    #[test]
    fn bare_output_question_line_parses() {
        let (conflicts, question) =
            parse_guard_output("Output Question: \"Is there a dog?\"").unwrap();
        assert!(conflicts.is_empty());
        assert_eq!(question, "Is there a dog?");
    }

    #[test]
    fn conclusion_keywords_map_to_kinds() {
        // Oracle: keyword table applied by hand.
        let cases = [
            ("Conclusion: an Object Conflict exists.", vec![ConflictKind::Object]),
            ("Conclusion: an Attribute Conflict exists.", vec![ConflictKind::Attribute]),
            ("Conclusion: a Relationship Conflict exists.", vec![ConflictKind::Relationship]),
            ("Conclusion: a Relation Conflict exists.", vec![ConflictKind::Relationship]),
            (
                "Conclusion: both an object conflict and an attribute conflict.",
                vec![ConflictKind::Object, ConflictKind::Attribute],
            ),
        ];
        for (conclusion, expected) in cases {
            let reply = format!("{conclusion}\nOutput Question: \"q?\"");
            let (conflicts, _) = parse_guard_output(&reply).unwrap();
            let kinds: Vec<ConflictKind> = conflicts.iter().map(|c| c.kind).collect();
            assert_eq!(kinds, expected, "for {conclusion:?}");
        }
    }

    #[test]
    fn aspect_enumeration_before_conclusion_not_flagged() {
        // The numbered analysis sections mention the conflict names; only
        // the conclusion region counts.
        let (conflicts, _) = parse_guard_output(BEACH_REPLY).unwrap();
        assert!(conflicts.is_empty());
    }

    #[test]
    fn missing_output_question_is_a_parse_error() {
        assert!(matches!(
            parse_guard_output("Conclusion: object conflict, but no final line."),
            Err(GuardError::GuardParseError)
        ));
    }

    #[test]
    fn object_conflict_rewrites_question() {
        let chat = ScriptedChat::new(vec![CAT_CONFLICT_REPLY.to_string()]);
        let run = validate_and_adjust(
            &chat,
            &PromptRegistry::builtin(),
            &image(),
            &bus_graph(),
            "What color is the cat sitting near the front of the bus?",
            2,
        )
        .unwrap();
        let out = run.outcome;
        assert_eq!(out.conflicts.len(), 1);
        assert_eq!(out.conflicts[0].kind, ConflictKind::Object);
        assert_eq!(out.adjusted, "What color is the bus?");
        assert!(out.changed);
        assert!(!out.guard_degraded);
        // The prompt embeds both shipped examples and the canonical graph.
        assert!(run.prompt.contains("[Example-1]"));
        assert!(run.prompt.contains("[Example-2]"));
        assert!(run.prompt.contains("\"Scene Graphs\""));
    }

    #[test]
    fn no_conflict_keeps_question_verbatim() {
        let chat = ScriptedChat::new(vec![BEACH_REPLY.to_string()]);
        let run = validate_and_adjust(
            &chat,
            &PromptRegistry::builtin(),
            &image(),
            &bus_graph(),
            "Are there four persons on the beach?",
            0,
        )
        .unwrap();
        assert!(run.outcome.conflicts.is_empty());
        assert_eq!(run.outcome.adjusted, run.outcome.original);
        assert!(!run.outcome.changed);
    }

    #[test]
    fn no_conflict_forces_original_even_if_reply_drifts() {
        // Model reports no conflict but echoes a slightly different
        // question; the original wins.
        let reply = "Conclusion: no issues.\nOutput Question: \"Is there a dog here?\"";
        let chat = ScriptedChat::new(vec![reply.to_string()]);
        let run = validate_and_adjust(
            &chat,
            &PromptRegistry::builtin(),
            &image(),
            &bus_graph(),
            "Is there a dog?",
            0,
        )
        .unwrap();
        assert_eq!(run.outcome.adjusted, "Is there a dog?");
        assert!(!run.outcome.changed);
    }

    #[test]
    fn malformed_reply_degrades_to_original() {
        let chat = ScriptedChat::new(vec!["I could not analyze this.".to_string()]);
        let run = validate_and_adjust(
            &chat,
            &PromptRegistry::builtin(),
            &image(),
            &bus_graph(),
            "Is there a dog?",
            1,
        )
        .unwrap();
        assert!(run.outcome.guard_degraded);
        assert_eq!(run.outcome.adjusted, "Is there a dog?");
        assert!(run.outcome.conflicts.is_empty());
    }

    #[test]
    fn example_count_validated() {
        let chat = ScriptedChat::new(vec![]);
        let err = validate_and_adjust(
            &chat,
            &PromptRegistry::builtin(),
            &image(),
            &bus_graph(),
            "q?",
            3,
        )
        .unwrap_err();
        assert!(matches!(err, GuardError::InvalidExampleCount { requested: 3, available: 2 }));
    }

    #[test]
    fn edit_count_basics() {
        assert_eq!(word_edit_count("Is there a dog?", "Is there a dog?"), 0);
        assert_eq!(word_edit_count("Is there a dog?", "Is there a cat?"), 1);
        // Punctuation and case do not count as edits.
        assert_eq!(word_edit_count("is there a DOG", "Is there a dog?"), 0);
        assert_eq!(
            word_edit_count(
                "What color is the cat sitting near the front of the bus?",
                "What color is the bus?"
            ),
            7
        );
    }

    /// Independent DP oracle over full (n+1)x(m+1) tables.
    fn levenshtein_oracle(a: &[String], b: &[String]) -> usize {
        let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in table.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in table[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                table[i][j] = (table[i - 1][j - 1] + cost)
                    .min(table[i - 1][j] + 1)
                    .min(table[i][j - 1] + 1);
            }
        }
        table[a.len()][b.len()]
    }

    fn sentence_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            proptest::sample::select(vec![
                "is", "there", "a", "the", "dog", "cat", "red", "bus", "beach", "person",
            ]),
            0..12,
        )
        .prop_map(|words| words.join(" "))
    }

    proptest! {
        #[test]
        fn edit_count_matches_dp_oracle(a in sentence_strategy(), b in sentence_strategy()) {
            let expected = levenshtein_oracle(&edit_tokens(&a), &edit_tokens(&b));
            prop_assert_eq!(word_edit_count(&a, &b), expected);
        }

        #[test]
        fn edit_count_is_a_metric(
            a in sentence_strategy(),
            b in sentence_strategy(),
            c in sentence_strategy(),
        ) {
            let ab = word_edit_count(&a, &b);
            let ba = word_edit_count(&b, &a);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(word_edit_count(&a, &a), 0);
            let ac = word_edit_count(&a, &c);
            let cb = word_edit_count(&c, &b);
            prop_assert!(ab <= ac + cb);
            // Zero iff token-equal.
            prop_assert_eq!(ab == 0, edit_tokens(&a) == edit_tokens(&b));
        }
    }
}
