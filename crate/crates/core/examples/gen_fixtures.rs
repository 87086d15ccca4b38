//! Regenerates the checked-in demo artifacts: the frozen golden trace, the
//! replay fixture store, and the demo dataset used by the CLI tests.
//!
//! Run from the workspace root:
//!
//! ```bash
//! cargo run -p veriqa-core --example gen_fixtures
//! ```

use std::path::Path;
use std::sync::Arc;
use veriqa_core::answerer::AnswerKind;
use veriqa_core::backends::{FixtureStore, wrap_with_store};
use veriqa_core::config::PipelineConfig;
use veriqa_core::demo;
use veriqa_core::perception::PromptRegistry;
use veriqa_core::pipeline::{run_batch, run_query};

fn main() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let core_data = manifest.join("tests/data");
    let cli_data = manifest.join("../cli/tests/data");
    std::fs::create_dir_all(&core_data).unwrap();
    std::fs::create_dir_all(&cli_data).unwrap();

    let registry = PromptRegistry::builtin();

    // Golden trace: the conflict scenario straight over the mocks.
    let scenario = demo::conflict_scenario();
    let config = PipelineConfig::default();
    let result = run_query(
        &scenario.services,
        &registry,
        &config,
        &scenario.image,
        &scenario.question,
    )
    .expect("conflict scenario runs");
    let golden = core_data.join("golden_trace.json");
    std::fs::write(&golden, result.canonical_json()).unwrap();
    println!("wrote {}", golden.display());

    // Replay fixtures: the same conflict query plus the 20-case batch,
    // recorded through one store.
    let fixtures = cli_data.join("demo_fixtures.jsonl");
    let store = Arc::new(FixtureStore::record_to(&fixtures).unwrap());

    let scenario = demo::conflict_scenario();
    let recording = wrap_with_store(Some(scenario.services), store.clone());
    run_query(
        &recording,
        &registry,
        &config,
        &scenario.image,
        &scenario.question,
    )
    .expect("conflict recording runs");

    // Ablation variants reach different prompts (original question, empty
    // graph, bare baseline); record those exchanges as well so the CLI can
    // replay any flag combination of the demo query.
    let ablation_rows = [
        (false, false, true, true, true),
        (true, false, true, true, true),
        (true, true, false, true, true),
        (true, true, true, true, false),
        (true, true, true, false, false),
        (false, false, false, false, false),
    ];
    for (tivp, vpv, qav, ci, cv) in ablation_rows {
        let scenario = demo::conflict_scenario();
        let recording = wrap_with_store(Some(scenario.services), store.clone());
        let variant = PipelineConfig {
            ablation: veriqa_core::config::AblationFlags { tivp, vpv, qav, ci, cv },
            ..PipelineConfig::default()
        };
        run_query(
            &recording,
            &registry,
            &variant,
            &scenario.image,
            &scenario.question,
        )
        .expect("ablation variant records");
    }

    let batch = demo::batch_scenario(20);
    let recording = wrap_with_store(Some(batch.services.clone()), store.clone());
    let mut batch_config = PipelineConfig::default();
    batch_config.run.answer_kind = AnswerKind::Binary;
    let runs = run_batch(&recording, &registry, &batch_config, &batch.cases, 1)
        .expect("batch recording runs");
    assert!(runs.iter().all(|r| r.result.is_ok()), "every demo case records cleanly");

    let dataset = cli_data.join("demo_dataset.jsonl");
    demo::write_batch_dataset(&batch, &dataset).unwrap();
    println!("wrote {}", dataset.display());

    // The eval summary scores edit similarity through the same store, so
    // record that leg as well.
    let cases = veriqa_core::evalkit::load_dataset(
        &dataset,
        veriqa_core::evalkit::DatasetFormat::BinaryJsonl,
    )
    .unwrap();
    veriqa_core::evalkit::summarize_batch(
        &cases,
        &runs,
        veriqa_core::evalkit::DatasetFormat::BinaryJsonl,
        Some(batch_config.run.k_examples as u32),
        Some(recording.text_similarity.as_ref()),
    )
    .expect("summary records cleanly");
    println!("wrote {} ({} records)", fixtures.display(), store.len());
}
