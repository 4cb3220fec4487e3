//! `coref`: export training data, run sentence-at-a-time inference, score
//! predictions, and sanity-check the oracle, over CoNLL corpora.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 predictor or
//! transport error. Logs and the end-of-run summary line go to stderr; data
//! goes to files or stdout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use coref_core::codec::{
    encode_actions, encode_input, parse_actions, EncodeOptions, WhitespaceCounter,
    INFERENCE_INPUT_BUDGET, OUTPUT_BUDGET, TRAINING_INPUT_BUDGET,
};
use coref_core::conll::{read_conll_file, write_corpus, ConllError, CorpusEntry};
use coref_core::metrics::{SingletonMode, SingletonPolicy};
use coref_core::oracle::{expected_final, oracle_run};
use coref_core::predictor::{
    options_fingerprint, PredictError, PredictorConfig, PredictorKind, RecordingPredictor,
};
use coref_core::runner::{export_training, infer, score_corpus, RunError};
use coref_core::transition::{run_episode, Action, SystemKind};

/// Environment overrides for the predictor transport.
const ENV_ENDPOINT: &str = "COREF_ENDPOINT";
const ENV_TIMEOUT: &str = "COREF_TIMEOUT_SECS";

#[derive(Parser)]
#[command(
    name = "coref",
    version,
    about = "Transition-based coreference: training-data export, inference, and scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert gold corpora into seq2seq (input, target) JSONL records.
    Export(ExportArgs),
    /// Run sentence-at-a-time inference with a pluggable predictor.
    Infer(InferArgs),
    /// Score predictions against gold with MUC, B3, and CEAF_p4.
    Score(ScoreArgs),
    /// Replay the oracle over a corpus and verify gold reconstruction.
    OracleCheck(CheckArgs),
}

#[derive(Args)]
struct EncodingArgs {
    /// Input token budget (default: 2048 for export, 3000 for infer).
    #[arg(long)]
    input_budget: Option<usize>,
    /// Output token budget.
    #[arg(long, default_value_t = OUTPUT_BUDGET)]
    output_budget: usize,
    /// Do not prefix sentences with their speaker.
    #[arg(long)]
    no_speaker: bool,
    /// Do not prefix the window with the document genre.
    #[arg(long)]
    no_genre: bool,
    /// Do not fill remaining budget with sentences beyond the focus.
    #[arg(long)]
    no_context_fill: bool,
}

impl EncodingArgs {
    fn build(&self, system: SystemKind, default_budget: usize) -> EncodeOptions {
        let mut opts = EncodeOptions::training().for_system(system);
        opts.input_budget = self.input_budget.unwrap_or(default_budget);
        opts.output_budget = self.output_budget;
        opts.include_speaker = !self.no_speaker;
        opts.include_genre = !self.no_genre;
        opts.fill_context = !self.no_context_fill;
        opts
    }
}

#[derive(Args)]
struct ExportArgs {
    /// Transition system.
    #[arg(long)]
    system: SystemKind,
    /// Input CoNLL files or directories (searched recursively for *.conll).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    encoding: EncodingArgs,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    system: SystemKind,
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output CoNLL file with the predicted clusterings.
    #[arg(long)]
    out: PathBuf,
    /// Write the run summary as JSON to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Predictor implementation: oracle, replay, subprocess, or http.
    #[arg(long, default_value = "oracle")]
    predictor: PredictorKind,
    /// Subprocess command line (whitespace-split, no shell).
    #[arg(long)]
    command: Option<String>,
    /// HTTP endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Replay trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record every request/response into this trace file.
    #[arg(long)]
    record_trace: Option<PathBuf>,
    /// Predictor timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Retries after transport failures.
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Upper bound on concurrent in-flight requests.
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    /// Document-level parallelism.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    encoding: EncodingArgs,
}

#[derive(Args)]
struct ScoreArgs {
    /// Gold CoNLL files or directories.
    #[arg(long, required = true, num_args = 1..)]
    gold: Vec<PathBuf>,
    /// Predicted CoNLL files or directories.
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    /// Keep or drop singleton clusters on the prediction side.
    #[arg(long, default_value = "include")]
    pred_singletons: SingletonPolicy,
    /// Keep or drop singleton clusters on the evaluation side.
    #[arg(long, default_value = "include")]
    eval_singletons: SingletonPolicy,
    /// Also print per-length-bucket scores.
    #[arg(long)]
    buckets: bool,
    /// Also print per-document scores.
    #[arg(long)]
    per_doc: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    system: SystemKind,
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Data(String),
    Predictor(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Data(m) | CliError::Predictor(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Predictor(_) => 3,
        }
    }
}

impl From<ConllError> for CliError {
    fn from(e: ConllError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        CliError::Predictor(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{e}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::Export(args) => cmd_export(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Score(args) => cmd_score(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Expands files and directories into a deterministic list of CoNLL files:
/// explicit files keep their order, directories contribute their *.conll
/// files recursively in lexicographic order.
fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = walkdir::WalkDir::new(path)
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| {
                    e.file_type().is_file()
                        && e.path().extension().is_some_and(|x| x == "conll")
                })
                .map(|e| e.into_path())
                .collect();
            found.sort();
            files.extend(found);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            return Err(CliError::Data(format!("no such input: {}", path.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::Data("no .conll files found".into()));
    }
    Ok(files)
}

fn load_corpus(paths: &[PathBuf]) -> Result<Vec<CorpusEntry>, CliError> {
    let mut corpus = Vec::new();
    for file in expand_inputs(paths)? {
        let entries = read_conll_file(&file)
            .map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
        corpus.extend(entries);
    }
    Ok(corpus)
}

fn cmd_export(args: ExportArgs) -> Result<i32, CliError> {
    let corpus = load_corpus(&args.inputs)?;
    let opts = args.encoding.build(args.system, TRAINING_INPUT_BUDGET);
    let (examples, failures) = export_training(&corpus, args.system, &opts, &WhitespaceCounter);

    let mut out = BufWriter::new(File::create(&args.out)?);
    for example in &examples {
        writeln!(out, "{}", example.to_json_line())?;
    }
    out.flush()?;

    for failure in &failures {
        eprintln!("export failed for {}: {}", failure.doc_key, failure.error);
    }
    eprintln!(
        "coref-summary command=export documents={} examples={} failed={}",
        corpus.len(),
        examples.len(),
        failures.len()
    );
    Ok(if failures.is_empty() { 0 } else { 2 })
}

fn build_predictor(
    args: &InferArgs,
    system: SystemKind,
    corpus: &[CorpusEntry],
    fingerprint: &str,
) -> Result<Box<dyn coref_core::Predictor>, CliError> {
    let endpoint = std::env::var(ENV_ENDPOINT)
        .ok()
        .or_else(|| args.endpoint.clone())
        .unwrap_or_default();
    let timeout = std::env::var(ENV_TIMEOUT)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(args.timeout);
    let config = PredictorConfig {
        kind: args.predictor,
        command: args
            .command
            .as_deref()
            .map(|c| c.split_whitespace().map(String::from).collect())
            .unwrap_or_default(),
        endpoint,
        trace: args.trace.clone(),
        timeout: Duration::from_secs(timeout),
        retries: args.retries,
        batch_size: args.batch_size,
    };
    let predictor = config.build(system, corpus, fingerprint)?;
    match &args.record_trace {
        Some(path) => Ok(Box::new(RecordingPredictor::create(
            predictor,
            path,
            fingerprint.to_string(),
        )?)),
        None => Ok(predictor),
    }
}

fn cmd_infer(args: InferArgs) -> Result<i32, CliError> {
    let corpus = load_corpus(&args.inputs)?;
    let opts = args.encoding.build(args.system, INFERENCE_INPUT_BUDGET);
    let fingerprint = options_fingerprint(args.system, &opts);
    let predictor = build_predictor(&args, args.system, &corpus, &fingerprint)?;

    let outcome = infer(
        &corpus,
        predictor.as_ref(),
        args.system,
        &opts,
        &WhitespaceCounter,
        args.jobs,
    );

    let mut out = BufWriter::new(File::create(&args.out)?);
    write_corpus(
        corpus
            .iter()
            .zip(&outcome.predictions)
            .filter_map(|(entry, pred)| {
                pred.as_ref().map(|p| (&entry.document, p, entry.part))
            }),
        &mut out,
    )?;
    out.flush()?;

    if let Some(path) = &args.summary {
        let json = serde_json::to_string_pretty(&outcome.summary)
            .map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(path, json)?;
    }
    for failed in &outcome.summary.failed_documents {
        eprintln!("inference failed for {failed}");
    }
    let s = &outcome.summary;
    eprintln!(
        "coref-summary command=infer processed={} failed={} actions={} hallucinations={} \
         ambiguous={} skipped={} implicit_shifts={} disallowed={} wall_ms={}",
        s.documents_processed,
        s.documents_failed,
        s.total_actions,
        s.hallucinations,
        s.ambiguous,
        s.skipped,
        s.implicit_shifts,
        s.disallowed,
        s.wall_time_ms
    );
    Ok(if s.documents_failed > 0 { 3 } else { 0 })
}

fn cmd_score(args: ScoreArgs) -> Result<i32, CliError> {
    let gold = load_corpus(&args.gold)?;
    let pred = load_corpus(&args.pred)?;
    let mode = SingletonMode::new(args.pred_singletons, args.eval_singletons);
    let scored = score_corpus(&gold, &pred, mode)?;

    println!("{}", scored.overall);
    print!("{}", scored.overall.machine_lines());
    if args.buckets {
        println!();
        println!("{:<10} {:>6} {:>8}", "bucket", "docs", "avg F1");
        for bucket in &scored.buckets {
            match bucket.report {
                Some(report) => println!(
                    "{:<10} {:>6} {:>8.2}",
                    bucket.label,
                    bucket.documents,
                    100.0 * report.avg_f1
                ),
                None => println!("{:<10} {:>6} {:>8}", bucket.label, bucket.documents, "-"),
            }
        }
    }
    if args.per_doc {
        println!();
        for (key, report) in &scored.per_document {
            println!("{key} avg_f1={:.6}", report.avg_f1);
        }
    }
    eprintln!(
        "coref-summary command=score documents={} avg_f1={:.6} mode={}",
        gold.len(),
        scored.overall.avg_f1,
        mode
    );
    Ok(0)
}

/// Replays the oracle for one document and verifies both the transition-level
/// reconstruction and the wire-format roundtrip of every target string.
fn check_document(system: SystemKind, entry: &CorpusEntry) -> Result<(), String> {
    let steps = oracle_run(system, &entry.document, &entry.gold).map_err(|e| e.to_string())?;
    let streams: Vec<Vec<Action>> = steps.iter().map(|s| s.actions.clone()).collect();
    let final_state =
        run_episode(system, &entry.document, &streams).map_err(|e| e.to_string())?;
    let expected = expected_final(system, &entry.gold);
    if !final_state.clustering().same_clusters(&expected) {
        return Err(format!(
            "replay produced {} clusters, expected {}",
            final_state.clustering().len(),
            expected.len()
        ));
    }

    let opts = EncodeOptions::inference().for_system(system);
    for step in &steps {
        let (_, window) = encode_input(&step.state_before, &opts, &WhitespaceCounter)
            .map_err(|e| format!("sentence {}: {e}", step.sentence))?;
        let target = encode_actions(&step.actions, &entry.document);
        let (parsed, diagnostics) = parse_actions(&target, &step.state_before, &window);
        if parsed != step.actions {
            return Err(format!(
                "sentence {}: parsed actions differ for target {target:?}",
                step.sentence
            ));
        }
        if !diagnostics.is_clean() {
            return Err(format!(
                "sentence {}: {} hallucinations, {} ambiguous, {} skipped",
                step.sentence,
                diagnostics.hallucinations,
                diagnostics.ambiguous,
                diagnostics.skipped
            ));
        }
    }
    Ok(())
}

fn cmd_oracle_check(args: CheckArgs) -> Result<i32, CliError> {
    let corpus = load_corpus(&args.inputs)?;
    let mut failures = 0usize;
    for entry in &corpus {
        match check_document(args.system, entry) {
            Ok(()) => println!("ok {}", entry.full_key()),
            Err(reason) => {
                failures += 1;
                println!("FAIL {}: {reason}", entry.full_key());
            }
        }
    }
    if failures == 0 {
        println!("all documents: exact gold reconstruction");
    }
    eprintln!(
        "coref-summary command=oracle-check documents={} failed={failures} system={}",
        corpus.len(),
        args.system
    );
    Ok(if failures == 0 { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_inputs_rejects_missing_paths() {
        let err = expand_inputs(&[PathBuf::from("/no/such/file.conll")]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn encoding_defaults_follow_the_command() {
        let args = EncodingArgs {
            input_budget: None,
            output_budget: OUTPUT_BUDGET,
            no_speaker: false,
            no_genre: false,
            no_context_fill: false,
        };
        let export = args.build(SystemKind::LinkAppend, TRAINING_INPUT_BUDGET);
        assert_eq!(export.input_budget, 2048);
        assert_eq!(export.output_budget, 384);
        assert!(export.annotate_clusters && export.fill_context);
        assert!(export.include_speaker && export.include_genre);
        let infer = args.build(SystemKind::LinkOnly, INFERENCE_INPUT_BUDGET);
        assert_eq!(infer.input_budget, 3000);
        assert!(!infer.annotate_clusters);
    }
}
