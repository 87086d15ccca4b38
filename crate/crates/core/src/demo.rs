//! Deterministic demo scenarios built on the mock backends.
//!
//! These drive the end-to-end tests, the frozen golden trace, and the
//! shipped replay fixtures. Chat replies are keyed on request content, not
//! call order, so the same scenario stays consistent under ablation
//! variants and concurrent batch runs.

use crate::backends::mock::*;
use crate::backends::{ImageRef, Services};
use crate::pipeline::BatchCase;
use std::sync::Arc;

// One distinctive instruction substring per prompt template.
const EXTRACTION_MARKER: &str = "extract a partial scene graph in JSON format";
const GUARD_MARKER: &str = "please analyze if there is any potential conflict";
const PERCEPTION_ANSWER_MARKER: &str =
    "determine whether the content available through visual perception";
const INDUCTION_MARKER: &str = "deduce the commonsense claims required";
const LABELING_MARKER: &str = "verify the faithfulness of each claim";
const KNOWLEDGE_MARKER: &str = "verified commonsense claims below";

/// A single-query scenario: services plus the input pair.
pub struct Scenario {
    pub services: Services,
    pub image: ImageRef,
    pub question: String,
}

pub const CONFLICT_QUESTION: &str = "What color is the cat sitting near the front of the bus?";

const CONFLICT_EXTRACTION_REPLY: &str = r#"Looking at the image, the question involves a cat and a bus. Here is the partial scene graph:
{
  "Scene Graphs": {
    "objects": [
      {"id": 1, "type": "Bus", "attributes": {"color": "red"}},
      {"id": 2, "type": "Cat", "attributes": {"color": "black"}},
      {"id": 3, "type": "Street", "attributes": {}}
    ],
    "relationships": [
      {"source": 2, "target": 1, "relation": "near the front of"},
      {"source": 1, "target": 3, "relation": "on"}
    ]
  }
}"#;

const CONFLICT_GUARD_REPLY: &str = r#"Analyzing the potential conflicts between the scene graph and the question "What color is the cat sitting near the front of the bus?":
1. Object Conflict: The question mentions a cat, but the verified scene graph contains no cat object.
2. Object Attribute Conflict: No attribute in the question contradicts the remaining objects.
3. Object Relation Conflict: The relation "sitting near the front of" involves the missing cat.
Conclusion: There is an Object Conflict: the cat mentioned in the question is not present in the image. The question is revised minimally to ask about the bus that is present.
Output Question: "What color is the bus?""#;

const CONFLICT_PROBE_REPLY: &str = "The verified scene graph lists a red bus on a street, but judging color reliably needs knowledge about how buses are usually painted; the question is unanswerable from the visual content alone.";

const CONFLICT_CLAIM_1: &str = "City buses are commonly painted red in many cities.";
const CONFLICT_CLAIM_2: &str = "Cats are the same size as buses.";

const CONFLICT_LABEL_REPLY: &str = "[Claim 1]: City buses are commonly painted red in many cities.\n[Label]: Non-hallucination\n[Claim 2]: Cats are the same size as buses.\n[Label]: Hallucination";

const CONFLICT_FINAL_REPLY: &str = "The bus in the image is red.";

fn conflict_chat_replies() -> Vec<(Vec<&'static str>, String)> {
    vec![
        (vec![EXTRACTION_MARKER], CONFLICT_EXTRACTION_REPLY.to_string()),
        (vec![GUARD_MARKER], CONFLICT_GUARD_REPLY.to_string()),
        (vec![PERCEPTION_ANSWER_MARKER], CONFLICT_PROBE_REPLY.to_string()),
        (
            vec![INDUCTION_MARKER],
            format!("[Commonsense Claims]\n[Claim 1]: {CONFLICT_CLAIM_1}\n[Claim 2]: {CONFLICT_CLAIM_2}"),
        ),
        (vec![LABELING_MARKER], CONFLICT_LABEL_REPLY.to_string()),
        (vec![KNOWLEDGE_MARKER], CONFLICT_FINAL_REPLY.to_string()),
    ]
}

fn conflict_tools() -> (TableDetector, TableScorer, TableSearch) {
    let detector = TableDetector::new()
        .with_box("bus", [10.0, 20.0, 300.0, 220.0], 0.92)
        .with_box("street", [0.0, 180.0, 400.0, 300.0], 0.81)
        .with_box("red bus", [12.0, 22.0, 298.0, 218.0], 0.88);
    let scorer = TableScorer::new(0.0).with("bus on street", 0.41);
    let search = TableSearch::new()
        .with(
            CONFLICT_CLAIM_1,
            vec![
                snippet(1, "City bus liveries", "Many municipal bus fleets use red liveries."),
                snippet(2, "Bus color history", "Red has been a common bus color for decades."),
            ],
        )
        .with(
            CONFLICT_CLAIM_2,
            vec![snippet(1, "Cat sizes", "Domestic cats are far smaller than buses.")],
        );
    (detector, scorer, search)
}

/// The object-conflict scenario: the model hallucinates a cat, stage 2
/// removes it, stage 3 rewrites the question around the bus, and the
/// knowledge stages answer the rewritten question.
pub fn conflict_scenario() -> Scenario {
    let mut chat = KeyedChat::new();
    for (needles, reply) in conflict_chat_replies() {
        chat = chat.rule(&needles, reply);
    }
    // Bare-question baseline (every stage disabled) gets a direct answer.
    chat = chat.fallback("There is a red bus parked on the street.");
    let (detector, scorer, search) = conflict_tools();
    Scenario {
        services: Services {
            chat: Arc::new(chat),
            detect: Arc::new(detector),
            similarity: Arc::new(scorer),
            text_similarity: Arc::new(JaccardTextSimilarity),
            search: Arc::new(search),
        },
        image: ImageRef::from_path("demo/street.jpg"),
        question: CONFLICT_QUESTION.to_string(),
    }
}

/// The conflict scenario with a chat script that runs dry after `n`
/// replies, for exercising mid-pipeline failures.
pub fn conflict_scenario_with_chat_prefix(n: usize) -> Scenario {
    let replies: Vec<String> = conflict_chat_replies()
        .into_iter()
        .take(n)
        .map(|(_, reply)| reply)
        .collect();
    let (detector, scorer, search) = conflict_tools();
    Scenario {
        services: Services {
            chat: Arc::new(ScriptedChat::new(replies)),
            detect: Arc::new(detector),
            similarity: Arc::new(scorer),
            text_similarity: Arc::new(JaccardTextSimilarity),
            search: Arc::new(search),
        },
        image: ImageRef::from_path("demo/street.jpg"),
        question: CONFLICT_QUESTION.to_string(),
    }
}

/// A deterministic mock batch with per-case gold labels.
pub struct BatchScenario {
    pub services: Services,
    pub cases: Vec<BatchCase>,
    /// Gold answers ("yes"/"no") aligned with `cases`.
    pub golds: Vec<String>,
}

const OBJECTS: [&str; 20] = [
    "dog", "bench", "tree", "car", "bird", "boat", "horse", "lamp", "sign", "chair", "bicycle",
    "umbrella", "laptop", "kite", "clock", "vase", "sofa", "train", "sheep", "pizza",
];
const COLORS: [&str; 7] = ["red", "blue", "green", "brown", "white", "yellow", "gray"];

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Case archetypes, cycling by index:
/// 0: object present, everything verifies, answered at perception level;
/// 1: hallucinated object, removed in stage 2, object conflict in stage 3;
/// 2: object present but its attribute and relation fail verification
///    (indices 6, 14, ... answer wrongly, to keep the metrics non-trivial);
/// 3: cognition-level question routed through the knowledge stages.
pub fn batch_scenario(n: usize) -> BatchScenario {
    assert!(n <= OBJECTS.len(), "batch scenario supports up to {} cases", OBJECTS.len());

    let mut chat = KeyedChat::new();
    let mut detector = TableDetector::new().with_box("person", [50.0, 50.0, 120.0, 200.0], 0.90);
    let mut scorer = TableScorer::new(0.45);
    let mut search = TableSearch::new();
    let mut cases = Vec::new();
    let mut golds = Vec::new();

    // Hallucinated-object cases share one perception-level answer rule:
    // after the rewrite their prompts only differ by image.
    chat = chat.rule(
        &[PERCEPTION_ANSWER_MARKER, "a person in the image"],
        "No, there is no sign of it; only a person is visible.",
    );

    for i in 0..n {
        let object = OBJECTS[i];
        let color = COLORS[i % COLORS.len()];
        let type_name = capitalize(object);
        let case_kind = i % 4;

        let (question, gold) = match case_kind {
            3 => (format!("Is the {object} commonly used by people?"), "yes"),
            1 => (format!("Is there a {object} in the image?"), "no"),
            _ => (format!("Is there a {object} in the image?"), "yes"),
        };

        let graph_reply = if case_kind == 3 {
            format!(
                r#"{{"Scene Graphs": {{"objects": [{{"id": 1, "type": "{type_name}", "attributes": {{"color": "{color}"}}}}], "relationships": []}}}}"#
            )
        } else {
            format!(
                r#"{{"Scene Graphs": {{"objects": [{{"id": 1, "type": "{type_name}", "attributes": {{"color": "{color}"}}}}, {{"id": 2, "type": "Person", "attributes": {{}}}}], "relationships": [{{"source": 1, "target": 2, "relation": "next to"}}]}}}}"#
            )
        };
        chat = chat.rule(&[EXTRACTION_MARKER, &question], graph_reply);

        let guard_reply = if case_kind == 1 {
            format!(
                "Conclusion: There is an Object Conflict: the {object} mentioned in the question is not present in the image.\nOutput Question: \"Is there a person in the image?\""
            )
        } else {
            format!(
                "Conclusion: There is no conflict between the question and the visual content.\nOutput Question: \"{question}\""
            )
        };
        chat = chat.rule(&[GUARD_MARKER, &question], guard_reply);

        match case_kind {
            0 | 2 => {
                detector = detector.with_box(object, [10.0, 10.0, 40.0, 40.0], 0.80);
                let answer = if i % 8 == 6 {
                    format!("No, I cannot find a {object} in the image.")
                } else {
                    format!("Yes, there is a {object} in the image.")
                };
                chat = chat.rule(
                    &[PERCEPTION_ANSWER_MARKER, &format!("a {object} in the image")],
                    answer,
                );
                if case_kind == 0 {
                    detector =
                        detector.with_box(&format!("{color} {object}"), [10.0, 10.0, 40.0, 40.0], 0.70);
                } else {
                    scorer = scorer.with(&format!("{object} next to person"), 0.10);
                }
            }
            1 => {
                // Object absent from the detector: stage 2 removes it.
            }
            _ => {
                detector = detector
                    .with_box(object, [10.0, 10.0, 40.0, 40.0], 0.80)
                    .with_box(&format!("{color} {object}"), [10.0, 10.0, 40.0, 40.0], 0.70);
                chat = chat.rule(
                    &[PERCEPTION_ANSWER_MARKER, &format!("{object} commonly used")],
                    format!(
                        "Whether people commonly use the {object} is not visible; the question is unanswerable from the visual content alone."
                    ),
                );
                let claim = format!("The {object} is commonly used by people in daily life.");
                chat = chat.rule(
                    &[INDUCTION_MARKER, &question],
                    format!("[Commonsense Claims]\n[Claim 1]: {claim}"),
                );
                search = search.with(
                    &claim,
                    vec![
                        snippet(1, &format!("About the {object}"), &format!("People use the {object} every day.")),
                        snippet(2, &format!("{type_name} facts"), &format!("The {object} is a familiar everyday item.")),
                    ],
                );
                chat = chat.rule(
                    &[LABELING_MARKER, &claim],
                    format!("[Claim 1]: {claim}\n[Label]: Non-hallucination"),
                );
                chat = chat.rule(
                    &[KNOWLEDGE_MARKER, &question],
                    format!("Yes, the {object} is commonly used by people."),
                );
            }
        }

        cases.push(BatchCase {
            id: format!("case{i:02}"),
            image: ImageRef::from_path(format!("demo/img{i:02}.jpg")),
            question,
        });
        golds.push(gold.to_string());
    }

    BatchScenario {
        services: Services {
            chat: Arc::new(chat),
            detect: Arc::new(detector),
            similarity: Arc::new(scorer),
            text_similarity: Arc::new(JaccardTextSimilarity),
            search: Arc::new(search),
        },
        cases,
        golds,
    }
}

/// Writes the batch scenario as a binary-label JSONL dataset.
pub fn write_batch_dataset(
    scenario: &BatchScenario,
    path: &std::path::Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for (case, gold) in scenario.cases.iter().zip(&scenario.golds) {
        let image = match &case.image.source {
            crate::backends::ImageSource::Path(p) => p.display().to_string(),
            crate::backends::ImageSource::Bytes(_) => String::new(),
        };
        writeln!(
            file,
            "{}",
            serde_json::json!({
                "id": case.id,
                "image": image,
                "question": case.question,
                "label": gold,
            })
        )?;
    }
    Ok(())
}
