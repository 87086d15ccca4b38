//! Dataset ingestion, metric computation, edit statistics, and
//! hallucination-rate aggregation.
//!
//! Binary metrics follow the discriminative-benchmark convention:
//! abstentions are never correct and never count as "yes". Concretely, an
//! abstention on a gold-yes case lands in `fn` (a missed positive) and an
//! abstention on a gold-no case counts toward neither `tn` nor `fp`; the
//! `abstain` tally records all of them.

use crate::answerer::{self, BinaryLabel};
use crate::backends::{BackendError, TextSimilarityBackend};
use crate::pipeline::{CaseRun, Route};
use crate::question_guard::word_edit_count;
use crate::verification::HallucinationStats;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    BinaryJsonl,
    FreeformJsonl,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldLabel {
    Yes,
    No,
    Text(String),
}

impl GoldLabel {
    pub fn as_text(&self) -> &str {
        match self {
            GoldLabel::Yes => "yes",
            GoldLabel::No => "no",
            GoldLabel::Text(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalCase {
    pub id: String,
    pub image: PathBuf,
    pub question: String,
    pub gold: GoldLabel,
    pub category: Option<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Loads a line-delimited dataset. Binary datasets accept only yes/no
/// labels; free-form datasets accept any non-empty label string.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<EvalCase>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cases = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                line: line_no,
                reason: format!("invalid JSON: {e}"),
            })?;
        let field = |name: &str| -> Result<String, DatasetError> {
            value[name]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| DatasetError::Malformed {
                    line: line_no,
                    reason: format!("missing string field {name:?}"),
                })
        };
        let label = field("label")?;
        let gold = match format {
            DatasetFormat::BinaryJsonl => match label.to_lowercase().as_str() {
                "yes" => GoldLabel::Yes,
                "no" => GoldLabel::No,
                other => {
                    return Err(DatasetError::Malformed {
                        line: line_no,
                        reason: format!("binary label must be yes or no, got {other:?}"),
                    })
                }
            },
            DatasetFormat::FreeformJsonl => {
                if label.trim().is_empty() {
                    return Err(DatasetError::Malformed {
                        line: line_no,
                        reason: "empty label".into(),
                    });
                }
                GoldLabel::Text(label)
            }
        };
        cases.push(EvalCase {
            id: field("id")?,
            image: PathBuf::from(field("image")?),
            question: field("question")?,
            gold,
            category: value["category"].as_str().map(str::to_string),
        });
    }
    Ok(cases)
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("prediction and gold vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty vector")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u32,
    pub fp: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    pub tn: u32,
    pub abstain: u32,
}

/// Percentages are raw (unrounded); rendering rounds to one decimal.
/// Precision, recall, and f1 are absent when their denominators are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub yes_rate: f64,
    pub confusion: Confusion,
}

/// Harmonic mean of precision and recall, both as percentages.
pub fn harmonic_f1(precision: f64, recall: f64) -> Option<f64> {
    if precision + recall <= 0.0 {
        return None;
    }
    Some(2.0 * precision * recall / (precision + recall))
}

/// Scores binary predictions against yes/no golds (gold `true` = yes).
pub fn score_binary(preds: &[BinaryLabel], golds: &[bool]) -> Result<BinaryMetrics, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut confusion = Confusion::default();
    for (&pred, &gold) in preds.iter().zip(golds) {
        if pred == BinaryLabel::Abstain {
            confusion.abstain += 1;
        }
        match (pred, gold) {
            (BinaryLabel::Yes, true) => confusion.tp += 1,
            (BinaryLabel::Yes, false) => confusion.fp += 1,
            (BinaryLabel::No, false) => confusion.tn += 1,
            // A non-yes prediction on a gold-yes case is a missed positive,
            // whether it said "no" or abstained.
            (_, true) => confusion.fn_ += 1,
            (BinaryLabel::Abstain, false) => {}
        }
    }
    let n = preds.len() as f64;
    let precision = (confusion.tp + confusion.fp > 0)
        .then(|| 100.0 * confusion.tp as f64 / (confusion.tp + confusion.fp) as f64);
    let recall = (confusion.tp + confusion.fn_ > 0)
        .then(|| 100.0 * confusion.tp as f64 / (confusion.tp + confusion.fn_) as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => harmonic_f1(p, r),
        _ => None,
    };
    Ok(BinaryMetrics {
        accuracy: 100.0 * (confusion.tp + confusion.tn) as f64 / n,
        precision,
        recall,
        f1,
        yes_rate: 100.0 * (confusion.tp + confusion.fp) as f64 / n,
        confusion,
    })
}

/// Phrases that mark an abstention-style answer, in normalized form.
pub fn abstention_lexicon() -> Vec<&'static str> {
    vec![
        "unanswerable",
        "i dont know",
        "dont know",
        "not sure",
        "cannot be determined",
        "cannot be answered",
        "no idea",
    ]
}

pub fn is_abstention(normalized: &str) -> bool {
    abstention_lexicon().iter().any(|m| normalized.contains(m))
}

/// Fraction of pairs equal after free-form normalization of both sides.
/// Abstention-class golds match by abstention-lexicon lookup instead of
/// string equality.
pub fn score_freeform_accuracy(preds: &[String], golds: &[String]) -> Result<f64, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let correct = preds
        .iter()
        .zip(golds)
        .filter(|(pred, gold)| {
            let pred = answerer::normalize_freeform(pred);
            let gold = answerer::normalize_freeform(gold);
            if is_abstention(&gold) {
                is_abstention(&pred)
            } else {
                pred == gold
            }
        })
        .count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

/// One (original, adjusted) question pair, optionally tagged with the
/// in-context example count of the run that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditPair {
    pub original: String,
    pub adjusted: String,
    pub k_examples: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EditGroup {
    pub pairs: usize,
    pub mean_edits: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_similarity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditStats {
    pub overall: EditGroup,
    /// Per-k breakdown, present when pairs carry example-count tags.
    pub per_k: BTreeMap<u32, EditGroup>,
}

fn edit_group(
    pairs: &[&EditPair],
    similarity: Option<&dyn TextSimilarityBackend>,
) -> Result<EditGroup, BackendError> {
    if pairs.is_empty() {
        return Ok(EditGroup::default());
    }
    let n = pairs.len() as f64;
    let mean_edits = pairs
        .iter()
        .map(|p| word_edit_count(&p.original, &p.adjusted) as f64)
        .sum::<f64>()
        / n;
    let mean_similarity = match similarity {
        Some(backend) => {
            let mut total = 0.0;
            for pair in pairs {
                total += backend.score_text_pair(&pair.original, &pair.adjusted)?;
            }
            Some(total / n)
        }
        None => None,
    };
    Ok(EditGroup { pairs: pairs.len(), mean_edits, mean_similarity })
}

/// Mean word-edit count and semantic similarity over adjustment pairs,
/// grouped by example-count tag when tags are present.
pub fn edit_stats(
    pairs: &[EditPair],
    similarity: Option<&dyn TextSimilarityBackend>,
) -> Result<EditStats, BackendError> {
    let all: Vec<&EditPair> = pairs.iter().collect();
    let overall = edit_group(&all, similarity)?;
    let mut per_k = BTreeMap::new();
    let mut tagged: BTreeMap<u32, Vec<&EditPair>> = BTreeMap::new();
    for pair in pairs {
        if let Some(k) = pair.k_examples {
            tagged.entry(k).or_default().push(pair);
        }
    }
    for (k, group) in tagged {
        per_k.insert(k, edit_group(&group, similarity)?);
    }
    Ok(EditStats { overall, per_k })
}

/// Pooled per-category removal rates (percent); categories with zero total
/// are absent. Pooling over counts makes the rates invariant to how
/// queries were split into batches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryRates {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub objects: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attributes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub relations: Option<f64>,
}

pub fn aggregate_hallucination_rates(stats: &[HallucinationStats]) -> CategoryRates {
    let mut totals = HallucinationStats::default();
    for s in stats {
        totals.objects_total += s.objects_total;
        totals.objects_removed += s.objects_removed;
        totals.attributes_total += s.attributes_total;
        totals.attributes_removed += s.attributes_removed;
        totals.relations_total += s.relations_total;
        totals.relations_removed += s.relations_removed;
    }
    let rate = |removed: u32, total: u32| {
        (total > 0).then(|| 100.0 * removed as f64 / total as f64)
    };
    CategoryRates {
        objects: rate(totals.objects_removed, totals.objects_total),
        attributes: rate(totals.attributes_removed, totals.attributes_total),
        relations: rate(totals.relations_removed, totals.relations_total),
    }
}

fn fmt1(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.1}"),
        None => "-".to_string(),
    }
}

/// Plain-text metric table mirroring the usual column layout.
pub fn render_binary_table(metrics: &BinaryMetrics) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8}{:<8}{:<8}{:<8}{:<8}\n",
        "Acc.", "Prec.", "Rec.", "F1", "Yes"
    ));
    out.push_str(&format!(
        "{:<8}{:<8}{:<8}{:<8}{:<8}\n",
        fmt1(Some(metrics.accuracy)),
        fmt1(metrics.precision),
        fmt1(metrics.recall),
        fmt1(metrics.f1),
        fmt1(Some(metrics.yes_rate)),
    ));
    out
}

/// Machine-readable evaluation summary for one batch run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalSummary {
    pub cases: usize,
    pub failed_cases: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub binary: Option<BinaryMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub freeform_accuracy: Option<f64>,
    pub routes: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub edit_stats: Option<EditStats>,
    pub hallucination_rates: CategoryRates,
    /// Mean per-stage latency in microseconds, from in-memory traces.
    pub mean_stage_micros: BTreeMap<String, u64>,
}

fn route_name(route: Route) -> &'static str {
    match route {
        Route::PerceptionAnswered => "perception_answered",
        Route::KnowledgeAnswered => "knowledge_answered",
        Route::Degraded => "degraded",
    }
}

/// Folds completed batch runs into metrics. Failed cases are listed and
/// excluded from metric vectors. Edit pairs are tagged with `k_examples`.
pub fn summarize_batch(
    cases: &[EvalCase],
    runs: &[CaseRun],
    format: DatasetFormat,
    k_examples: Option<u32>,
    similarity: Option<&dyn TextSimilarityBackend>,
) -> Result<EvalSummary, BackendError> {
    let mut summary = EvalSummary {
        cases: cases.len(),
        ..EvalSummary::default()
    };
    let mut binary_preds = Vec::new();
    let mut binary_golds = Vec::new();
    let mut freeform_preds = Vec::new();
    let mut freeform_golds = Vec::new();
    let mut edit_pairs = Vec::new();
    let mut stats = Vec::new();
    let mut stage_totals: BTreeMap<String, (u64, u64)> = BTreeMap::new();

    for (case, run) in cases.iter().zip(runs) {
        let result = match &run.result {
            Ok(result) => result,
            Err(_) => {
                summary.failed_cases.push(run.case_id.clone());
                continue;
            }
        };
        *summary.routes.entry(route_name(result.route).to_string()).or_insert(0) += 1;
        match format {
            DatasetFormat::BinaryJsonl => {
                binary_preds.push(answerer::normalize_binary(&result.final_answer.text));
                binary_golds.push(case.gold == GoldLabel::Yes);
            }
            DatasetFormat::FreeformJsonl => {
                freeform_preds.push(result.final_answer.text.clone());
                freeform_golds.push(case.gold.as_text().to_string());
            }
        }
        if let Some(adjustment) = &result.adjustment {
            edit_pairs.push(EditPair {
                original: adjustment.original.clone(),
                adjusted: adjustment.adjusted.clone(),
                k_examples,
            });
        }
        if let Some(s) = &result.hallucination_stats {
            stats.push(*s);
        }
        for trace in &result.traces {
            let entry = stage_totals.entry(trace.name.clone()).or_insert((0, 0));
            entry.0 += trace.elapsed_micros;
            entry.1 += 1;
        }
    }

    if !binary_preds.is_empty() {
        summary.binary = score_binary(&binary_preds, &binary_golds).ok();
    }
    if !freeform_preds.is_empty() {
        summary.freeform_accuracy = score_freeform_accuracy(&freeform_preds, &freeform_golds).ok();
    }
    if !edit_pairs.is_empty() {
        summary.edit_stats = Some(edit_stats(&edit_pairs, similarity)?);
    }
    summary.hallucination_rates = aggregate_hallucination_rates(&stats);
    summary.mean_stage_micros = stage_totals
        .into_iter()
        .map(|(name, (total, count))| (name, total / count.max(1)))
        .collect();
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hand_counted_confusion_example() {
        // tp=3 fp=1 fn=2 tn=2 over 8 cases.
        let preds = [
            BinaryLabel::Yes, BinaryLabel::Yes, BinaryLabel::Yes, // tp x3
            BinaryLabel::Yes,                                      // fp
            BinaryLabel::No, BinaryLabel::No,                      // fn x2
            BinaryLabel::No, BinaryLabel::No,                      // tn x2
        ];
        let golds = [true, true, true, false, true, true, false, false];
        let m = score_binary(&preds, &golds).unwrap();
        assert_eq!(m.accuracy, 62.5);
        assert_eq!(m.precision, Some(75.0));
        assert_eq!(m.recall, Some(60.0));
        assert_eq!(format!("{:.1}", m.f1.unwrap()), "66.7");
        assert_eq!(m.yes_rate, 50.0);
    }

    #[test]
    fn perfect_classifier() {
        let preds = [BinaryLabel::Yes, BinaryLabel::No, BinaryLabel::Yes];
        let golds = [true, false, true];
        let m = score_binary(&preds, &golds).unwrap();
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.precision, Some(100.0));
        assert_eq!(m.recall, Some(100.0));
        assert_eq!(m.f1, Some(100.0));
        assert!((m.yes_rate - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn published_precision_recall_pairs_reproduce_f1() {
        let rows = [(96.1, 87.4, 91.5), (98.6, 86.5, 92.2), (98.8, 89.5, 93.9)];
        for (p, r, expected) in rows {
            let f1 = harmonic_f1(p, r).unwrap();
            assert!((f1 - expected).abs() <= 0.1, "({p}, {r}) -> {f1} != {expected}");
        }
    }

    #[test]
    fn abstain_counts_as_incorrect_non_yes() {
        let preds = [BinaryLabel::Abstain, BinaryLabel::Abstain, BinaryLabel::Yes];
        let golds = [true, false, true];
        let m = score_binary(&preds, &golds).unwrap();
        assert_eq!(m.confusion.abstain, 2);
        assert_eq!(m.confusion.tp, 1);
        assert_eq!(m.confusion.fn_, 1); // gold-yes abstain is a missed positive
        assert_eq!(m.confusion.tn, 0); // gold-no abstain never correct
        assert!((m.accuracy - 100.0 / 3.0).abs() < 1e-9);
        assert!((m.yes_rate - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_vectors() {
        assert!(matches!(score_binary(&[], &[]), Err(MetricError::Empty)));
        assert!(matches!(
            score_binary(&[BinaryLabel::Yes], &[]),
            Err(MetricError::LengthMismatch(1, 0))
        ));
        // All-abstain: precision undefined, accuracy zero.
        let m = score_binary(&[BinaryLabel::Abstain], &[false]).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.accuracy, 0.0);
    }

    /// Independent brute-force counter: walks the vectors with explicit
    /// per-bucket loops and rederives each percentage from scratch.
    fn oracle(preds: &[BinaryLabel], golds: &[bool]) -> BinaryMetrics {
        let count = |f: &dyn Fn(BinaryLabel, bool) -> bool| {
            preds.iter().zip(golds).filter(|(p, g)| f(**p, **g)).count() as u32
        };
        let tp = count(&|p, g| p == BinaryLabel::Yes && g);
        let fp = count(&|p, g| p == BinaryLabel::Yes && !g);
        let fn_ = count(&|p, g| p != BinaryLabel::Yes && g);
        let tn = count(&|p, g| p == BinaryLabel::No && !g);
        let abstain = count(&|p, _| p == BinaryLabel::Abstain);
        let n = preds.len() as f64;
        let precision = if tp + fp > 0 { Some(100.0 * tp as f64 / (tp + fp) as f64) } else { None };
        let recall = if tp + fn_ > 0 { Some(100.0 * tp as f64 / (tp + fn_) as f64) } else { None };
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        BinaryMetrics {
            accuracy: 100.0 * (tp + tn) as f64 / n,
            precision,
            recall,
            f1,
            yes_rate: 100.0 * (tp + fp) as f64 / n,
            confusion: Confusion { tp, fp, fn_, tn, abstain },
        }
    }

    #[test]
    fn random_vectors_match_brute_force_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..50);
            let preds: Vec<BinaryLabel> = (0..n)
                .map(|_| match rng.random_range(0..3) {
                    0 => BinaryLabel::Yes,
                    1 => BinaryLabel::No,
                    _ => BinaryLabel::Abstain,
                })
                .collect();
            let golds: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let got = score_binary(&preds, &golds).unwrap();
            let expected = oracle(&preds, &golds);
            assert_eq!(got, expected);
            // f1 between min and max of precision/recall when defined.
            if let (Some(p), Some(r), Some(f1)) = (got.precision, got.recall, got.f1) {
                assert!(f1 >= p.min(r) - 1e-9 && f1 <= p.max(r) + 1e-9);
            }
        }
    }

    #[test]
    fn freeform_accuracy_normalizes_both_sides() {
        let preds = vec!["Blue.".to_string(), "The Bus!".to_string()];
        let golds = vec!["blue".to_string(), "the bus".to_string()];
        assert_eq!(score_freeform_accuracy(&preds, &golds).unwrap(), 100.0);

        let preds = vec!["blue".into(), "red".into(), "green".into(), "blue".into()];
        let golds = vec!["blue".into(), "blue".into(), "green".into(), "blue".into()];
        assert_eq!(score_freeform_accuracy(&preds, &golds).unwrap(), 75.0);
    }

    #[test]
    fn abstention_gold_matches_by_lexicon() {
        let preds = vec![
            "The question is unanswerable from this image.".to_string(),
            "It is a dog.".to_string(),
        ];
        let golds = vec!["unanswerable".to_string(), "unanswerable".to_string()];
        assert_eq!(score_freeform_accuracy(&preds, &golds).unwrap(), 50.0);
    }

    #[test]
    fn edit_stats_means_and_grouping() {
        // Pairs with edit counts {0, 2, 4} -> mean 2.0.
        let pairs = vec![
            EditPair { original: "a b c d".into(), adjusted: "a b c d".into(), k_examples: Some(0) },
            EditPair { original: "a b c d".into(), adjusted: "a b x y".into(), k_examples: Some(2) },
            EditPair { original: "a b c d".into(), adjusted: "p q r s".into(), k_examples: Some(4) },
        ];
        let stats = edit_stats(&pairs, None).unwrap();
        assert_eq!(stats.overall.pairs, 3);
        assert_eq!(stats.overall.mean_edits, 2.0);
        assert_eq!(stats.overall.mean_similarity, None);
        assert_eq!(stats.per_k.len(), 3);
        assert_eq!(stats.per_k[&2].mean_edits, 2.0);
    }

    #[test]
    fn edit_stats_empty_and_similarity_leg() {
        let stats = edit_stats(&[], None).unwrap();
        assert_eq!(stats.overall.pairs, 0);
        assert_eq!(stats.overall.mean_edits, 0.0);
        assert!(stats.overall.mean_similarity.is_none());

        let sim = crate::backends::mock::JaccardTextSimilarity;
        let pairs = vec![EditPair {
            original: "is there a dog".into(),
            adjusted: "is there a cat".into(),
            k_examples: None,
        }];
        let stats = edit_stats(&pairs, Some(&sim)).unwrap();
        assert_eq!(stats.overall.mean_similarity, Some(0.6));
        assert!(stats.per_k.is_empty());
    }

    #[test]
    fn hallucination_rates_pool_counts() {
        let stats = [
            HallucinationStats {
                objects_total: 2, objects_removed: 1,
                attributes_total: 3, attributes_removed: 1,
                relations_total: 1, relations_removed: 1,
            },
            HallucinationStats {
                objects_total: 2, objects_removed: 0,
                attributes_total: 2, attributes_removed: 1,
                relations_total: 3, relations_removed: 2,
            },
        ];
        let rates = aggregate_hallucination_rates(&stats);
        assert_eq!(rates.objects, Some(25.0));
        assert_eq!(rates.attributes, Some(40.0));
        assert_eq!(rates.relations, Some(75.0));

        // Partition invariance: pooled counts, not averaged rates.
        let whole = aggregate_hallucination_rates(&stats);
        let split_a = &stats[..1];
        let split_b = &stats[1..];
        let mut merged = Vec::new();
        merged.extend_from_slice(split_a);
        merged.extend_from_slice(split_b);
        assert_eq!(aggregate_hallucination_rates(&merged), whole);

        let empty = aggregate_hallucination_rates(&[]);
        assert_eq!(empty.objects, None);
    }

    #[test]
    fn zero_removals_rate_is_zero() {
        let stats = [HallucinationStats {
            objects_total: 4,
            ..Default::default()
        }];
        assert_eq!(aggregate_hallucination_rates(&stats).objects, Some(0.0));
        assert_eq!(aggregate_hallucination_rates(&stats).relations, None);
    }

    #[test]
    fn dataset_loading_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");

        std::fs::write(&path, "").unwrap();
        assert!(load_dataset(&path, DatasetFormat::BinaryJsonl).unwrap().is_empty());

        std::fs::write(
            &path,
            r#"{"id":"q1","image":"a.jpg","question":"Is there a dog?","label":"yes"}"#,
        )
        .unwrap();
        let cases = load_dataset(&path, DatasetFormat::BinaryJsonl).unwrap();
        assert_eq!(cases[0].gold, GoldLabel::Yes);
        assert_eq!(cases[0].image, PathBuf::from("a.jpg"));

        std::fs::write(
            &path,
            "{\"id\":\"q1\",\"image\":\"a.jpg\",\"question\":\"x\",\"label\":\"yes\"}\n{\"id\":\"q2\",\"image\":\"b.jpg\",\"question\":\"y\",\"label\":\"maybe\"}\n",
        )
        .unwrap();
        let err = load_dataset(&path, DatasetFormat::BinaryJsonl).unwrap_err();
        assert!(matches!(err, DatasetError::Malformed { line: 2, .. }));

        // The same label is fine in free-form datasets.
        let cases = load_dataset(&path, DatasetFormat::FreeformJsonl).unwrap();
        assert_eq!(cases[1].gold, GoldLabel::Text("maybe".into()));
    }

    #[test]
    fn metrics_table_layout() {
        let m = score_binary(
            &[BinaryLabel::Yes, BinaryLabel::No],
            &[true, false],
        )
        .unwrap();
        let table = render_binary_table(&m);
        let mut lines = table.lines();
        assert!(lines.next().unwrap().starts_with("Acc."));
        let row = lines.next().unwrap();
        assert!(row.starts_with("100.0"));
        assert!(row.contains("50.0")); // yes-rate column
    }
}
