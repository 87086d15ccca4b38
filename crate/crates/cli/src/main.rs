//! Command-line surface: single-query runs, batch evaluation, fixture
//! recording/replay, and trace report rendering.

mod report;

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use veriqa_core::answerer::AnswerKind;
use veriqa_core::backends::{FixtureMode, FixtureStore, ImageRef, Services, wrap_with_store};
use veriqa_core::config::{PipelineConfig, build_live_services};
use veriqa_core::evalkit::{self, DatasetFormat};
use veriqa_core::perception::PromptRegistry;
use veriqa_core::pipeline::{BatchCase, PipelineResult, run_batch, run_query};

#[derive(Parser)]
#[command(
    name = "veriqa",
    version,
    about = "Verified bottom-up reasoning pipeline for multimodal question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay all backend calls strictly from this fixture file.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Record all backend calls into this fixture file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Output directory for traces and reports (default veriqa-out).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Batch workers in flight.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Disable pipeline stages: tivp, vpv, qav, ci, cv.
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<String>,
    /// In-context examples for the question guard.
    #[arg(long)]
    k_examples: Option<usize>,
    /// Search results inspected per claim.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args, Debug)]
struct AskArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    question: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset label format: binary or freeform.
    #[arg(long, default_value = "binary")]
    format: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    /// Fixture store file to record into or replay from.
    #[arg(long)]
    fixtures: PathBuf,
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    question: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "binary")]
    format: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A trace file written by ask or eval.
    #[arg(long)]
    trace: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question about one image and save the trace.
    Ask(AskArgs),
    /// Run a dataset through the pipeline and report metrics.
    Eval(EvalArgs),
    /// Run ask or eval with fixture recording forced on.
    Record(FixtureArgs),
    /// Run ask or eval strictly from recorded fixtures.
    Replay(FixtureArgs),
    /// Render a saved trace as a human-readable report.
    Report(ReportArgs),
}

enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn failure(msg: impl ToString) -> Self {
        CliError::Failure(msg.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            eprintln!("run `veriqa --help` for the full synopsis");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ask(args) => {
            let setup = Setup::prepare(&args.common, None)?;
            setup.ask(&args.image, &args.question)
        }
        Command::Eval(args) => {
            let setup = Setup::prepare(&args.common, Some(parse_format(&args.format)?))?;
            setup.eval(&args.dataset)
        }
        Command::Record(args) => run_fixture_verb(args, true),
        Command::Replay(args) => run_fixture_verb(args, false),
        Command::Report(args) => {
            let text = std::fs::read_to_string(&args.trace)
                .map_err(|e| CliError::failure(format!("read {}: {e}", args.trace.display())))?;
            let result = PipelineResult::from_json(&text)
                .map_err(|e| CliError::failure(format!("parse trace: {e}")))?;
            let rendered = report::render_report(&result);
            match args.out {
                Some(path) => {
                    std::fs::write(&path, rendered)
                        .map_err(|e| CliError::failure(format!("write {}: {e}", path.display())))?;
                    println!("report: {}", path.display());
                }
                None => print!("{rendered}"),
            }
            Ok(())
        }
    }
}

/// The record/replay verbs wrap ask or eval with the fixture mode forced,
/// choosing by which inputs were given.
fn run_fixture_verb(args: FixtureArgs, recording: bool) -> Result<(), CliError> {
    let mut common = args.common.clone();
    if common.replay.is_some() || common.record.is_some() {
        return Err(CliError::usage(
            "record/replay verbs manage fixtures themselves; drop --replay/--record",
        ));
    }
    if recording {
        common.record = Some(args.fixtures.clone());
    } else {
        common.replay = Some(args.fixtures.clone());
    }
    match (&args.dataset, &args.question) {
        (Some(dataset), None) => {
            let setup = Setup::prepare(&common, Some(parse_format(&args.format)?))?;
            setup.eval(dataset)
        }
        (None, Some(question)) => {
            let image = args.image.as_ref().ok_or_else(|| {
                CliError::usage("--question also needs --image")
            })?;
            let setup = Setup::prepare(&common, None)?;
            setup.ask(image, question)
        }
        (Some(_), Some(_)) => Err(CliError::usage("give either --dataset or --question, not both")),
        (None, None) => Err(CliError::usage("give either --dataset or --question/--image")),
    }
}

fn parse_format(text: &str) -> Result<DatasetFormat, CliError> {
    match text {
        "binary" => Ok(DatasetFormat::BinaryJsonl),
        "freeform" => Ok(DatasetFormat::FreeformJsonl),
        other => Err(CliError::usage(format!(
            "unknown dataset format {other:?} (expected binary or freeform)"
        ))),
    }
}

/// Everything a run needs after argument validation: merged config,
/// prompt registry, services (live, recording, or replaying), output dir.
struct Setup {
    config: PipelineConfig,
    registry: PromptRegistry,
    services: Services,
    out_dir: PathBuf,
    format: Option<DatasetFormat>,
}

impl Setup {
    /// Precedence: flags > environment > config file > defaults. No
    /// backend is contacted here; services are built lazily per call.
    fn prepare(common: &CommonArgs, format: Option<DatasetFormat>) -> Result<Self, CliError> {
        if common.replay.is_some() && common.record.is_some() {
            return Err(CliError::usage("--replay and --record are mutually exclusive"));
        }

        let mut config = match &common.config {
            Some(path) => PipelineConfig::load(path).map_err(CliError::failure)?,
            None => PipelineConfig::default(),
        };
        config.apply_env(|var| std::env::var(var).ok());

        if let Some(parallelism) = common.parallelism {
            config.run.parallelism = parallelism;
        }
        if let Some(k) = common.k_examples {
            config.run.k_examples = k;
        }
        if let Some(top_k) = common.top_k {
            config.run.top_k = top_k;
        }
        for stage in &common.ablate {
            config.ablation.disable(stage).map_err(CliError::failure)?;
        }
        if let Some(format) = format {
            config.run.answer_kind = match format {
                DatasetFormat::BinaryJsonl => AnswerKind::Binary,
                DatasetFormat::FreeformJsonl => AnswerKind::FreeForm,
            };
        }
        config.validate().map_err(CliError::failure)?;

        let mut registry = PromptRegistry::builtin();
        if let Some(dir) = &config.run.prompt_dir {
            registry.load_overrides(dir).map_err(CliError::failure)?;
        }

        let services = if let Some(path) = &common.replay {
            let store = Arc::new(
                FixtureStore::replay_from(path, FixtureMode::ReplayStrict)
                    .map_err(CliError::failure)?,
            );
            wrap_with_store(None, store)
        } else {
            let live = build_live_services(&config, |var| std::env::var(var).ok());
            match &common.record {
                Some(path) => {
                    let store =
                        Arc::new(FixtureStore::record_to(path).map_err(CliError::failure)?);
                    wrap_with_store(Some(live), store)
                }
                None => live,
            }
        };

        Ok(Self {
            config,
            registry,
            services,
            out_dir: common.out_dir.clone().unwrap_or_else(|| PathBuf::from("veriqa-out")),
            format,
        })
    }

    fn ask(&self, image: &Path, question: &str) -> Result<(), CliError> {
        let image = ImageRef::from_path(image);
        let result = run_query(&self.services, &self.registry, &self.config, &image, question)
            .map_err(CliError::failure)?;

        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::failure(format!("create {}: {e}", self.out_dir.display())))?;
        let trace_path = self.out_dir.join("ask_trace.json");
        std::fs::write(&trace_path, result.canonical_json())
            .map_err(|e| CliError::failure(format!("write trace: {e}")))?;

        println!("answer: {}", result.final_answer.text);
        println!("normalized: {}", result.final_answer.normalized);
        println!("route: {:?}", result.route);
        println!("trace: {}", trace_path.display());
        Ok(())
    }

    fn eval(&self, dataset: &Path) -> Result<(), CliError> {
        let format = self.format.expect("eval paths always carry a format");
        let cases = evalkit::load_dataset(dataset, format).map_err(CliError::failure)?;
        let batch: Vec<BatchCase> = cases
            .iter()
            .map(|case| BatchCase {
                id: case.id.clone(),
                image: ImageRef::from_path(&case.image),
                question: case.question.clone(),
            })
            .collect();

        let runs = run_batch(
            &self.services,
            &self.registry,
            &self.config,
            &batch,
            self.config.run.parallelism,
        )
        .map_err(CliError::failure)?;

        let traces_dir = self.out_dir.join("traces");
        std::fs::create_dir_all(&traces_dir)
            .map_err(|e| CliError::failure(format!("create {}: {e}", traces_dir.display())))?;
        for run in &runs {
            if let Ok(result) = &run.result {
                let path = traces_dir.join(format!("{}.json", run.case_id));
                std::fs::write(&path, result.canonical_json())
                    .map_err(|e| CliError::failure(format!("write trace: {e}")))?;
            }
        }

        let summary = evalkit::summarize_batch(
            &cases,
            &runs,
            format,
            Some(self.config.run.k_examples as u32),
            Some(self.services.text_similarity.as_ref()),
        )
        .map_err(CliError::failure)?;

        let mut table = String::new();
        if let Some(binary) = &summary.binary {
            table.push_str(&evalkit::render_binary_table(binary));
        }
        if let Some(accuracy) = summary.freeform_accuracy {
            table.push_str(&format!("Accuracy: {accuracy:.1}\n"));
        }
        if let Some(edits) = &summary.edit_stats {
            table.push_str(&format!(
                "Question edits: mean {:.1} words over {} pairs",
                edits.overall.mean_edits, edits.overall.pairs
            ));
            if let Some(similarity) = edits.overall.mean_similarity {
                table.push_str(&format!(", mean similarity {similarity:.2}"));
            }
            table.push('\n');
        }
        let rates = &summary.hallucination_rates;
        if rates.objects.is_some() || rates.attributes.is_some() || rates.relations.is_some() {
            let fmt = |r: Option<f64>| r.map_or("-".to_string(), |v| format!("{v:.1}"));
            table.push_str(&format!(
                "Removal rates (%): objects {}, attributes {}, relations {}\n",
                fmt(rates.objects),
                fmt(rates.attributes),
                fmt(rates.relations)
            ));
        }
        if !summary.failed_cases.is_empty() {
            table.push_str(&format!(
                "Failed cases ({}): {}\n",
                summary.failed_cases.len(),
                summary.failed_cases.join(", ")
            ));
        }

        std::fs::write(self.out_dir.join("metrics.txt"), &table)
            .map_err(|e| CliError::failure(format!("write metrics.txt: {e}")))?;
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::failure(format!("serialize summary: {e}")))?;
        std::fs::write(self.out_dir.join("metrics.json"), json + "\n")
            .map_err(|e| CliError::failure(format!("write metrics.json: {e}")))?;

        print!("{table}");
        println!("traces: {}", traces_dir.display());

        let all_failed = !runs.is_empty() && summary.failed_cases.len() == runs.len();
        if all_failed {
            return Err(CliError::failure("every case failed"));
        }
        Ok(())
    }
}
