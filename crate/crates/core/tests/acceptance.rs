//! Acceptance suite: one test per criterion, each printing a pass line and
//! enforcing its stated tolerance and runtime budget. Everything runs
//! offline against mocks and the shipped fixtures.
//!
//! Oracles here are deliberately independent re-implementations: a
//! brute-force confusion counter, a full-table edit-distance DP, and
//! element-wise subset checks, none of which share code with the library
//! paths they verify.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};
use veriqa_core::answerer::{AnswerKind, BinaryLabel};
use veriqa_core::backends::mock::*;
use veriqa_core::backends::{FixtureMode, FixtureStore, ImageRef, Services, wrap_with_store};
use veriqa_core::commonsense::{self, Claim, ClaimLabel, ClaimVerifyConfig};
use veriqa_core::config::{AblationFlags, PipelineConfig};
use veriqa_core::demo;
use veriqa_core::evalkit::{self, harmonic_f1, score_binary};
use veriqa_core::perception::PromptRegistry;
use veriqa_core::pipeline::{Route, run_batch, run_query};
use veriqa_core::question_guard::word_edit_count;
use veriqa_core::sg_model::{
    SceneGraph, SgObject, SgRelation, canonicalize, parse_scene_graph, validate_scene_graph,
};
use veriqa_core::verification::{VerifyConfig, verify_scene_graph};

fn pass(name: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < budget,
        "{name} took {elapsed:?}, budget {budget:?}"
    );
    println!("[PASS] {name} ({elapsed:?})");
}

#[test]
fn criterion_metric_consistency_with_published_f1_triples() {
    let started = Instant::now();
    let rows = [(96.1, 87.4, 91.5), (98.6, 86.5, 92.2), (98.8, 89.5, 93.9)];
    for (precision, recall, expected) in rows {
        let f1 = harmonic_f1(precision, recall).expect("defined for positive inputs");
        assert!(
            (f1 - expected).abs() <= 0.1,
            "({precision}, {recall}) -> {f1:.3}, expected {expected} +/- 0.1"
        );
    }
    pass(
        "metric consistency: published (precision, recall) pairs reproduce F1 within 0.1",
        started,
        Duration::from_secs(1),
    );
}

/// Independent brute-force confusion counter and metric formulas.
fn metric_oracle(preds: &[BinaryLabel], golds: &[bool]) -> (f64, Option<f64>, Option<f64>, Option<f64>, f64) {
    let mut tp = 0u32;
    let mut fp = 0u32;
    let mut fn_ = 0u32;
    let mut tn = 0u32;
    for (p, g) in preds.iter().zip(golds) {
        match (p, g) {
            (BinaryLabel::Yes, true) => tp += 1,
            (BinaryLabel::Yes, false) => fp += 1,
            (BinaryLabel::No, false) => tn += 1,
            (BinaryLabel::No, true) | (BinaryLabel::Abstain, true) => fn_ += 1,
            (BinaryLabel::Abstain, false) => {}
        }
    }
    let n = preds.len() as f64;
    let accuracy = 100.0 * (tp + tn) as f64 / n;
    let precision = (tp + fp > 0).then(|| 100.0 * tp as f64 / (tp + fp) as f64);
    let recall = (tp + fn_ > 0).then(|| 100.0 * tp as f64 / (tp + fn_) as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let yes_rate = 100.0 * (tp + fp) as f64 / n;
    (accuracy, precision, recall, f1, yes_rate)
}

#[test]
fn criterion_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for round in 0..1000 {
        let n = rng.random_range(1..60);
        let preds: Vec<BinaryLabel> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => BinaryLabel::Yes,
                1 => BinaryLabel::No,
                _ => BinaryLabel::Abstain,
            })
            .collect();
        let golds: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let metrics = score_binary(&preds, &golds).unwrap();
        let (accuracy, precision, recall, f1, yes_rate) = metric_oracle(&preds, &golds);
        assert_eq!(metrics.accuracy, accuracy, "round {round}");
        assert_eq!(metrics.precision, precision, "round {round}");
        assert_eq!(metrics.recall, recall, "round {round}");
        assert_eq!(metrics.f1, f1, "round {round}");
        assert_eq!(metrics.yes_rate, yes_rate, "round {round}");
    }
    pass(
        "metric oracle equivalence: 1000 random vectors match the brute-force counter exactly",
        started,
        Duration::from_secs(5),
    );
}

const TYPE_POOL: [&str; 8] = ["Hat", "Person", "Bus", "Cat", "Tree", "Car", "Sign", "Dog"];
const ATTR_NAMES: [&str; 4] = ["color", "size", "state", "material"];
const ATTR_VALUES: [&str; 5] = ["red", "blue", "large", "small", "wooden"];
const PREDICATES: [&str; 4] = ["next to", "above", "on", "behind"];

fn random_valid_graph(rng: &mut ChaCha8Rng) -> SceneGraph {
    let object_count = rng.random_range(0..6);
    let mut ids: Vec<u64> = Vec::new();
    let mut objects = Vec::new();
    for _ in 0..object_count {
        let mut id = rng.random_range(1..30u64);
        while ids.contains(&id) {
            id = rng.random_range(1..30u64);
        }
        ids.push(id);
        let mut object = SgObject::new(id, TYPE_POOL[rng.random_range(0..TYPE_POOL.len())]);
        for _ in 0..rng.random_range(0..3) {
            object.attributes.insert(
                ATTR_NAMES[rng.random_range(0..ATTR_NAMES.len())].to_string(),
                ATTR_VALUES[rng.random_range(0..ATTR_VALUES.len())].to_string(),
            );
        }
        objects.push(object);
    }
    let relation_count = if ids.is_empty() { 0 } else { rng.random_range(0..4) };
    let relations = (0..relation_count)
        .map(|_| {
            SgRelation::new(
                ids[rng.random_range(0..ids.len())],
                ids[rng.random_range(0..ids.len())],
                PREDICATES[rng.random_range(0..PREDICATES.len())],
            )
        })
        .collect();
    SceneGraph { objects, relations }
}

#[test]
fn criterion_scene_graph_round_trip() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut graphs: Vec<SceneGraph> = (0..500).map(|_| random_valid_graph(&mut rng)).collect();

    // The worked fixtures: the extraction-prompt sample (with its elided
    // endpoint repaired) and the four-person beach graph.
    graphs.push(SceneGraph {
        objects: vec![
            SgObject::new(1, "Hat")
                .with_attr("color", "blue")
                .with_attr("text", "LOVE"),
            SgObject::new(2, "Person"),
        ],
        relations: vec![SgRelation::new(1, 2, "above")],
    });
    graphs.push(SceneGraph {
        objects: vec![
            SgObject::new(1, "Person")
                .with_attr("activity", "holding surfboard")
                .with_attr("attire", "wetsuit"),
            SgObject::new(2, "Person")
                .with_attr("activity", "standing")
                .with_attr("attire", "blue t-shirt")
                .with_attr("accessory", "backpack"),
            SgObject::new(3, "Person")
                .with_attr("activity", "standing")
                .with_attr("attire", "green t-shirt")
                .with_attr("accessory", "backpack"),
            SgObject::new(4, "Person")
                .with_attr("activity", "holding paddle")
                .with_attr("attire", "shorts"),
        ],
        relations: vec![SgRelation::new(1, 4, "next to"), SgRelation::new(2, 3, "next to")],
    });

    for (i, graph) in graphs.iter().enumerate() {
        assert!(validate_scene_graph(graph).is_clean(), "graph {i} should be valid");
        let text = canonicalize(graph).unwrap();
        let parsed = parse_scene_graph(&text).unwrap();
        assert!(validate_scene_graph(&parsed).is_clean(), "graph {i} re-validates");
        assert_eq!(
            parsed.canonical_form(),
            graph.canonical_form(),
            "graph {i} round-trips"
        );
        // Canonicalization is a fixed point.
        assert_eq!(canonicalize(&parsed).unwrap(), text, "graph {i} fixed point");
    }
    pass(
        "scene-graph round trip: parse/validate/canonicalize identity on 502 graphs",
        started,
        Duration::from_secs(5),
    );
}

/// Element-wise subset: objects by id (same type, attrs a sub-map),
/// relations a sub-multiset.
fn is_subgraph(sub: &SceneGraph, sup: &SceneGraph) -> bool {
    for object in &sub.objects {
        match sup.object(object.id) {
            Some(original) => {
                if original.type_name != object.type_name {
                    return false;
                }
                for (k, v) in &object.attributes {
                    if original.attributes.get(k) != Some(v) {
                        return false;
                    }
                }
            }
            None => return false,
        }
    }
    let count = |graph: &SceneGraph, rel: &SgRelation| {
        graph.relations.iter().filter(|r| *r == rel).count()
    };
    sub.relations.iter().all(|r| count(sub, r) <= count(sup, r))
}

#[test]
fn criterion_verification_invariants() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let image = ImageRef::from_path("random.jpg");
    for round in 0..200 {
        let graph = random_valid_graph(&mut rng);

        // Random detector: each type name detected with probability 0.7,
        // each attribute phrase grounded (on or off the object box) with
        // probability 0.5.
        let mut detector = TableDetector::new();
        for object in &graph.objects {
            if rng.random_bool(0.7) {
                let base = rng.random_range(0..100) as f64;
                detector = detector.with_box(
                    &object.type_name,
                    [base, base, base + 40.0, base + 40.0],
                    0.5 + rng.random_range(0..50) as f64 / 100.0,
                );
                for value in object.attributes.values() {
                    if rng.random_bool(0.5) {
                        let offset = if rng.random_bool(0.5) { 0.0 } else { 500.0 };
                        detector = detector.with_box(
                            &format!("{value} {}", object.type_name),
                            [base + offset, base + offset, base + offset + 40.0, base + offset + 40.0],
                            0.6,
                        );
                    }
                }
            }
        }
        let mut scorer = TableScorer::new(0.0);
        for relation in &graph.relations {
            if let (Some(s), Some(t)) = (graph.object(relation.source), graph.object(relation.target)) {
                let phrase = format!(
                    "{} {} {}",
                    s.type_name.to_lowercase(),
                    relation.relation,
                    t.type_name.to_lowercase()
                );
                scorer = scorer.with(&phrase, rng.random_range(0..100) as f64 / 100.0);
            }
        }

        let (vsg, stats) =
            verify_scene_graph(&detector, &scorer, &image, &graph, &VerifyConfig::default())
                .unwrap();

        assert!(is_subgraph(&vsg.graph, &graph), "round {round}: output must be a subset");
        assert!(
            validate_scene_graph(&vsg.graph).is_clean(),
            "round {round}: no dangling endpoints"
        );
        let kept_objects = vsg.graph.objects.len() as u32;
        let kept_attributes: u32 =
            vsg.graph.objects.iter().map(|o| o.attributes.len() as u32).sum();
        let kept_relations = vsg.graph.relations.len() as u32;
        assert_eq!(kept_objects + stats.objects_removed, stats.objects_total, "round {round}");
        assert_eq!(
            kept_attributes + stats.attributes_removed,
            stats.attributes_total,
            "round {round}"
        );
        assert_eq!(kept_relations + stats.relations_removed, stats.relations_total, "round {round}");
        assert_eq!(stats.objects_total as usize, graph.objects.len(), "round {round}");
        assert!(
            vsg.graph.objects.iter().all(|o| vsg.object_boxes.contains_key(&o.id)),
            "round {round}: every kept object is boxed"
        );
    }
    pass(
        "verification invariants: subset, no dangling endpoints, kept+removed=total on 200 random triples",
        started,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_end_to_end_golden_trace() {
    let started = Instant::now();
    let scenario = demo::conflict_scenario();
    let registry = PromptRegistry::builtin();
    let config = PipelineConfig::default();
    let result = run_query(
        &scenario.services,
        &registry,
        &config,
        &scenario.image,
        &scenario.question,
    )
    .unwrap();

    assert_eq!(result.route, Route::KnowledgeAnswered);
    let guard_trace = result.traces.iter().find(|t| t.stage == 3).unwrap();
    assert!(
        guard_trace.decisions.iter().any(|d| d.starts_with("conflict Object")),
        "stage 3 must record an object conflict"
    );

    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_trace.json");
    let golden = std::fs::read_to_string(&golden_path).expect("golden trace file is shipped");
    assert_eq!(
        result.canonical_json(),
        golden,
        "serialized result must be byte-identical to the frozen golden trace"
    );
    pass(
        "end-to-end golden trace: conflict scenario byte-identical, knowledge route, object conflict recorded",
        started,
        Duration::from_secs(5),
    );
}

#[test]
fn criterion_ablation_semantics() {
    let started = Instant::now();
    let registry = PromptRegistry::builtin();

    let flag_rows: [(&str, AblationFlags, &[u8]); 5] = [
        (
            "w/o perception+verification",
            AblationFlags { tivp: false, vpv: false, qav: true, ci: true, cv: true },
            &[3, 4, 5, 6],
        ),
        (
            "w/o verification",
            AblationFlags { tivp: true, vpv: false, qav: true, ci: true, cv: true },
            &[1, 3, 4, 5, 6],
        ),
        (
            "w/o question guard",
            AblationFlags { tivp: true, vpv: true, qav: false, ci: true, cv: true },
            &[1, 2, 4, 5, 6],
        ),
        (
            "w/o claim verification",
            AblationFlags { tivp: true, vpv: true, qav: true, ci: true, cv: false },
            &[1, 2, 3, 4, 6],
        ),
        (
            "w/o claim induction+verification",
            AblationFlags { tivp: true, vpv: true, qav: true, ci: false, cv: false },
            &[1, 2, 3, 6],
        ),
    ];

    for (label, flags, expected_stages) in flag_rows {
        flags.validate().unwrap();
        let scenario = demo::conflict_scenario();
        let config = PipelineConfig { ablation: flags, ..PipelineConfig::default() };
        let result = run_query(
            &scenario.services,
            &registry,
            &config,
            &scenario.image,
            &scenario.question,
        )
        .unwrap();
        let stages: Vec<u8> = result.traces.iter().map(|t| t.stage).collect();
        assert_eq!(stages, expected_stages, "{label}: unexpected stage set");

        if !flags.qav {
            // The original question reaches stage 6 verbatim.
            let answer_trace = result.traces.iter().find(|t| t.stage == 6).unwrap();
            let probe = answer_trace.probe_prompt.as_ref().unwrap();
            assert!(probe.contains(&scenario.question), "{label}: original question forwarded");
            assert!(result.adjustment.is_none());
        }
        if !flags.ci {
            assert_eq!(result.route, Route::Degraded, "{label}");
        }
    }

    // All flags off degenerates to exactly one direct chat call.
    let chat = Arc::new(ScriptedChat::new(vec!["A direct answer.".to_string()]));
    let services = Services {
        chat: chat.clone(),
        detect: Arc::new(TableDetector::new()),
        similarity: Arc::new(ConstScorer(0.5)),
        text_similarity: Arc::new(JaccardTextSimilarity),
        search: Arc::new(TableSearch::new()),
    };
    let config = PipelineConfig {
        ablation: AblationFlags { tivp: false, vpv: false, qav: false, ci: false, cv: false },
        ..PipelineConfig::default()
    };
    let image = ImageRef::from_path("x.jpg");
    let result = run_query(&services, &registry, &config, &image, "Is there a dog?").unwrap();
    assert_eq!(result.traces.len(), 1);
    assert_eq!(result.traces[0].stage, 6);
    assert_eq!(chat.call_count(), 1);
    assert_eq!(chat.calls()[0].segments, vec!["Is there a dog?".to_string()]);

    pass(
        "ablation semantics: five flag rows skip exactly their stages; all-off is one direct call",
        started,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_replay_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch_fixtures.jsonl");
    let registry = PromptRegistry::builtin();
    let mut config = PipelineConfig::default();
    config.run.answer_kind = AnswerKind::Binary;

    let batch = demo::batch_scenario(20);
    {
        let store = Arc::new(FixtureStore::record_to(&path).unwrap());
        let recording = wrap_with_store(Some(batch.services.clone()), store);
        let runs = run_batch(&recording, &registry, &config, &batch.cases, 1).unwrap();
        assert!(runs.iter().all(|r| r.result.is_ok()));
    }

    let mut serialized: Vec<Vec<String>> = Vec::new();
    for parallelism in [1usize, 4] {
        let store = Arc::new(FixtureStore::replay_from(&path, FixtureMode::ReplayStrict).unwrap());
        let replay = wrap_with_store(None, store);
        let runs = run_batch(&replay, &registry, &config, &batch.cases, parallelism).unwrap();
        serialized.push(
            runs.iter()
                .map(|r| r.result.as_ref().unwrap().canonical_json())
                .collect(),
        );
    }
    assert_eq!(
        serialized[0], serialized[1],
        "per-case serialized results must be identical at parallelism 1 and 4"
    );
    pass(
        "replay determinism: 20-case batch identical at parallelism 1 and 4",
        started,
        Duration::from_secs(15),
    );
}

/// Full-table token Levenshtein over the metric's own normalization.
fn edit_oracle(a: &str, b: &str) -> usize {
    let tokens = |s: &str| -> Vec<String> {
        s.split_whitespace()
            .map(|t| {
                t.chars()
                    .filter(|c| !c.is_ascii_punctuation())
                    .collect::<String>()
                    .to_lowercase()
            })
            .filter(|t| !t.is_empty())
            .collect()
    };
    let (ta, tb) = (tokens(a), tokens(b));
    let mut table = vec![vec![0usize; tb.len() + 1]; ta.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in table[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=ta.len() {
        for j in 1..=tb.len() {
            let cost = usize::from(ta[i - 1] != tb[j - 1]);
            table[i][j] = (table[i - 1][j - 1] + cost)
                .min(table[i - 1][j] + 1)
                .min(table[i][j - 1] + 1);
        }
    }
    table[ta.len()][tb.len()]
}

#[test]
fn criterion_edit_metric_properties() {
    let started = Instant::now();
    let words = ["is", "there", "a", "the", "red", "bus", "cat", "dog", "on", "beach", "near", "person"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sentence = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.random_range(0..10);
        (0..len)
            .map(|_| words[rng.random_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };

    let pairs: Vec<(String, String)> = (0..1000)
        .map(|_| (sentence(&mut rng), sentence(&mut rng)))
        .collect();
    for (a, b) in &pairs {
        assert_eq!(word_edit_count(a, b), edit_oracle(a, b), "oracle mismatch for {a:?} vs {b:?}");
    }
    // Metric axioms over random triples.
    for window in pairs.chunks(3).take(200) {
        if let [(a, _), (b, _), (c, _)] = window {
            assert_eq!(word_edit_count(a, b), word_edit_count(b, a));
            assert_eq!(word_edit_count(a, a), 0);
            assert!(
                word_edit_count(a, b) <= word_edit_count(a, c) + word_edit_count(c, b),
                "triangle inequality for {a:?}, {b:?}, {c:?}"
            );
        }
    }

    // The shipped adjustment fixture: a frozen regression value, one
    // decimal, not a claim about any external system.
    let batch = demo::batch_scenario(20);
    let registry = PromptRegistry::builtin();
    let mut config = PipelineConfig::default();
    config.run.answer_kind = AnswerKind::Binary;
    let runs = run_batch(&batch.services, &registry, &config, &batch.cases, 1).unwrap();
    let pairs: Vec<evalkit::EditPair> = runs
        .iter()
        .filter_map(|r| r.result.as_ref().ok())
        .filter_map(|result| result.adjustment.as_ref())
        .map(|adj| evalkit::EditPair {
            original: adj.original.clone(),
            adjusted: adj.adjusted.clone(),
            k_examples: Some(2),
        })
        .collect();
    assert_eq!(pairs.len(), 20);
    let stats = evalkit::edit_stats(&pairs, Some(&JaccardTextSimilarity)).unwrap();
    assert_eq!(format!("{:.1}", stats.overall.mean_edits), "0.2");
    assert!(stats.overall.mean_similarity.unwrap() > 0.9);

    pass(
        "edit metric: 1000 pairs match the DP oracle, axioms hold, fixture mean edits frozen at 0.2",
        started,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_claim_filtering() {
    let started = Instant::now();
    let registry = PromptRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(23);

    for round in 0..100 {
        let claim_count = rng.random_range(1..7usize);
        let claims: Vec<Claim> = (0..claim_count)
            .map(|i| Claim {
                index: i as u32 + 1,
                text: format!("fact number {i} of round {round}"),
            })
            .collect();

        // Random searchability and labels.
        let searchable: Vec<bool> = (0..claim_count).map(|_| rng.random_bool(0.8)).collect();
        let label_tokens: Vec<&str> = (0..claim_count)
            .map(|_| match rng.random_range(0..3) {
                0 => "Non-hallucination",
                1 => "Hallucination",
                _ => "Maybe",
            })
            .collect();

        let mut search_table = TableSearch::new();
        let mut fail_queries = Vec::new();
        for (claim, &ok) in claims.iter().zip(&searchable) {
            if ok {
                search_table = search_table.with(&claim.text, vec![snippet(1, "t", "s")]);
            } else {
                fail_queries.push(claim.text.clone());
            }
        }
        let search = PartialFailSearch { inner: search_table, fail_queries };

        let reply: String = claims
            .iter()
            .zip(&searchable)
            .filter(|(_, &ok)| ok)
            .zip(label_tokens.iter())
            .map(|((claim, _), token)| format!("[Claim {}]: {}\n[Label]: {}", claim.index, claim.text, token))
            .collect::<Vec<_>>()
            .join("\n");
        let chat = ScriptedChat::new(vec![reply]);

        let run = commonsense::verify_claims(
            &chat,
            &search,
            &registry,
            &claims,
            &ClaimVerifyConfig::default(),
        )
        .unwrap();

        // Expected kept set, derived independently: searchable claims whose
        // assigned token (by searchable order) is Non-hallucination.
        let mut expected_kept = Vec::new();
        let mut expected_labels = BTreeMap::new();
        let mut label_iter = label_tokens.iter();
        for (claim, &ok) in claims.iter().zip(&searchable) {
            if !ok {
                expected_labels.insert(claim.index, ClaimLabel::Unverifiable);
                continue;
            }
            let label = match *label_iter.next().unwrap() {
                "Non-hallucination" => ClaimLabel::NonHallucination,
                "Hallucination" => ClaimLabel::Hallucination,
                _ => ClaimLabel::Unverifiable,
            };
            if label == ClaimLabel::NonHallucination {
                expected_kept.push(claim.clone());
            }
            expected_labels.insert(claim.index, label);
        }

        assert_eq!(run.verified.kept, expected_kept, "round {round}");
        assert_eq!(run.verified.judgments.len(), claims.len(), "round {round}");
        for judgment in &run.verified.judgments {
            assert_eq!(
                judgment.label, expected_labels[&judgment.claim.index],
                "round {round}, claim {}",
                judgment.claim.index
            );
        }
        // Unverifiable never enters the kept set.
        assert!(run
            .verified
            .judgments
            .iter()
            .filter(|j| j.label != ClaimLabel::NonHallucination)
            .all(|j| !run.verified.kept.contains(&j.claim)));
    }
    pass(
        "claim filtering: kept = exactly the non-hallucination subset under random labels and search outages",
        started,
        Duration::from_secs(5),
    );
}
