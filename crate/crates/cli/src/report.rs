//! Deterministic human-readable rendering of a pipeline trace: one section
//! per executed stage, a word-level question diff for the guard stage, the
//! element decisions for verification, and the claim judgments.

use veriqa_core::pipeline::{PipelineResult, StageTrace};

/// Marks tokens removed from `a` as `[-tok]` and tokens added in `b` as
/// `[+tok]`, using a longest-common-subsequence alignment over whitespace
/// tokens.
pub fn diff_questions(a: &str, b: &str) -> String {
    let ta: Vec<&str> = a.split_whitespace().collect();
    let tb: Vec<&str> = b.split_whitespace().collect();
    let mut lcs = vec![vec![0usize; tb.len() + 1]; ta.len() + 1];
    for i in (0..ta.len()).rev() {
        for j in (0..tb.len()).rev() {
            lcs[i][j] = if ta[i] == tb[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut out: Vec<String> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < ta.len() && j < tb.len() {
        if ta[i] == tb[j] {
            out.push(ta[i].to_string());
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            out.push(format!("[-{}]", ta[i]));
            i += 1;
        } else {
            out.push(format!("[+{}]", tb[j]));
            j += 1;
        }
    }
    out.extend(ta[i..].iter().map(|t| format!("[-{t}]")));
    out.extend(tb[j..].iter().map(|t| format!("[+{t}]")));
    out.join(" ")
}

fn push_block(out: &mut String, label: &str, text: &str) {
    out.push_str(label);
    out.push('\n');
    for line in text.lines() {
        out.push_str("    ");
        out.push_str(line);
        out.push('\n');
    }
}

fn render_stage(out: &mut String, trace: &StageTrace, result: &PipelineResult) {
    out.push_str(&format!("== Stage {}: {} ==\n", trace.stage, trace.name));

    if trace.stage == 3 {
        if let Some(adjustment) = &result.adjustment {
            out.push_str(&format!("  original: {}\n", adjustment.original));
            out.push_str(&format!("  adjusted: {}\n", adjustment.adjusted));
            if adjustment.changed {
                out.push_str(&format!(
                    "  diff:     {}\n",
                    diff_questions(&adjustment.original, &adjustment.adjusted)
                ));
            }
        }
    }

    if !trace.decisions.is_empty() {
        let label = match trace.stage {
            2 => "  element decisions:",
            5 => "  claim judgments:",
            _ => "  decisions:",
        };
        out.push_str(label);
        out.push('\n');
        for decision in &trace.decisions {
            out.push_str(&format!("    - {decision}\n"));
        }
    }
    if trace.retries > 0 {
        out.push_str(&format!("  retries: {}\n", trace.retries));
    }
    if !trace.errors.is_empty() {
        out.push_str("  errors:\n");
        for error in &trace.errors {
            out.push_str(&format!("    - {error}\n"));
        }
    }
    if let Some(artifact) = &trace.artifact {
        push_block(out, "  artifact:", artifact);
    }
    out.push('\n');
}

/// Renders the full report. Pure function of the result, so identical
/// results produce byte-identical reports.
pub fn render_report(result: &PipelineResult) -> String {
    let mut out = String::new();
    out.push_str("Pipeline trace report\n");
    out.push_str("=====================\n");
    out.push_str(&format!("route: {:?}\n", result.route));
    out.push_str(&format!("final answer: {}\n", result.final_answer.text));
    out.push_str(&format!("normalized:   {}\n", result.final_answer.normalized));
    if let Some(stats) = &result.hallucination_stats {
        out.push_str(&format!(
            "removals: objects {}/{}, attributes {}/{}, relations {}/{}\n",
            stats.objects_removed,
            stats.objects_total,
            stats.attributes_removed,
            stats.attributes_total,
            stats.relations_removed,
            stats.relations_total,
        ));
    }
    out.push('\n');
    for trace in &result.traces {
        render_stage(&mut out, trace, result);
    }
    out
}
