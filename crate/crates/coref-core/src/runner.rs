//! End-to-end flows: training-data export, sentence-at-a-time inference, and
//! corpus scoring with length-bucket breakdowns.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codec::{encode_input, parse_actions, EncodeOptions, ParseDiagnostics, TokenCounter};
use crate::conll::CorpusEntry;
use crate::document::Clustering;
use crate::metrics::{score_counts, ScoreCounts, ScoreReport, SingletonMode};
use crate::oracle::oracle_run;
use crate::predictor::{PredictRequest, Predictor};
use crate::transition::{is_allowed, State, SystemKind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("prediction corpus is missing document {key:?}")]
    MissingPrediction { key: String },
    #[error("prediction corpus has unmatched document {key:?}")]
    UnmatchedPrediction { key: String },
}

/// One (input, target) pair for seq2seq training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub doc_key: String,
    pub sentence: usize,
    pub input: String,
    pub target: String,
    pub system: SystemKind,
}

impl TrainingExample {
    /// The export record: one JSON object per line with the four wire fields.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "doc_key": self.doc_key,
            "sentence": self.sentence,
            "input": self.input,
            "target": self.target,
        })
        .to_string()
    }
}

/// A document that could not be processed, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct DocFailure {
    pub doc_key: String,
    pub error: String,
}

/// Document-length buckets in corpus word tokens.
pub const LENGTH_BUCKETS: [(usize, Option<usize>); 6] = [
    (1, Some(128)),
    (129, Some(256)),
    (257, Some(512)),
    (513, Some(768)),
    (769, Some(1152)),
    (1153, None),
];

pub fn bucket_of(tokens: usize) -> usize {
    LENGTH_BUCKETS
        .iter()
        .position(|(lo, hi)| tokens >= *lo && hi.is_none_or(|hi| tokens <= hi))
        .unwrap_or(0)
}

pub fn bucket_label(index: usize) -> String {
    let (lo, hi) = LENGTH_BUCKETS[index];
    match hi {
        Some(hi) => format!("{lo}-{hi}"),
        None => format!("{lo}+"),
    }
}

/// Converts every document into its per-sentence training examples via the
/// oracle. Documents that fail to encode are reported and skipped.
pub fn export_training(
    corpus: &[CorpusEntry],
    system: SystemKind,
    opts: &EncodeOptions,
    counter: &dyn TokenCounter,
) -> (Vec<TrainingExample>, Vec<DocFailure>) {
    let mut examples = Vec::new();
    let mut failures = Vec::new();
    for entry in corpus {
        match export_document(entry, system, opts, counter) {
            Ok(mut doc_examples) => examples.append(&mut doc_examples),
            Err(error) => failures.push(DocFailure {
                doc_key: entry.full_key(),
                error,
            }),
        }
    }
    (examples, failures)
}

fn export_document(
    entry: &CorpusEntry,
    system: SystemKind,
    opts: &EncodeOptions,
    counter: &dyn TokenCounter,
) -> Result<Vec<TrainingExample>, String> {
    let steps =
        oracle_run(system, &entry.document, &entry.gold).map_err(|e| e.to_string())?;
    let mut examples = Vec::with_capacity(steps.len());
    for step in steps {
        let (input, _) =
            encode_input(&step.state_before, opts, counter).map_err(|e| {
                format!("sentence {}: {e}", step.sentence)
            })?;
        examples.push(TrainingExample {
            doc_key: entry.full_key(),
            sentence: step.sentence,
            input,
            target: crate::codec::encode_actions(&step.actions, &entry.document),
            system,
        });
    }
    Ok(examples)
}

/// Aggregate diagnostics of one inference run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub documents_processed: usize,
    pub documents_failed: usize,
    pub failed_documents: Vec<String>,
    pub total_actions: usize,
    pub hallucinations: usize,
    pub ambiguous: usize,
    pub skipped: usize,
    pub implicit_shifts: usize,
    /// Parsed actions rejected by the transition system and dropped.
    pub disallowed: usize,
    pub wall_time_ms: u64,
    /// Documents per length bucket, by corpus word count.
    pub bucket_documents: [usize; LENGTH_BUCKETS.len()],
}

#[derive(Debug, Default)]
struct DocStats {
    diagnostics: ParseDiagnostics,
    disallowed: usize,
}

/// Predictions for one corpus: per-document clusterings aligned with the
/// input order, `None` for failed documents.
#[derive(Debug)]
pub struct InferOutcome {
    pub predictions: Vec<Option<Clustering>>,
    pub summary: RunSummary,
}

/// Runs sentence-at-a-time inference over the corpus.
///
/// Per document: encode the state, ask the predictor, parse its output, apply
/// every action the system allows, and carry the clustering into the next
/// sentence. Disallowed or unparseable actions are counted and dropped;
/// predictor failures fail only their document.
pub fn infer(
    corpus: &[CorpusEntry],
    predictor: &dyn Predictor,
    system: SystemKind,
    opts: &EncodeOptions,
    counter: &dyn TokenCounter,
    jobs: usize,
) -> InferOutcome {
    let started = Instant::now();
    let effective_jobs = jobs
        .max(1)
        .min(predictor.concurrency_limit().unwrap_or(usize::MAX));

    let results: Vec<Result<(Clustering, DocStats), String>> = if effective_jobs <= 1 {
        corpus
            .iter()
            .map(|entry| infer_document(entry, predictor, system, opts, counter))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(effective_jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            corpus
                .par_iter()
                .map(|entry| infer_document(entry, predictor, system, opts, counter))
                .collect()
        })
    };

    let mut summary = RunSummary::default();
    let mut predictions = Vec::with_capacity(corpus.len());
    for (entry, result) in corpus.iter().zip(results) {
        summary.bucket_documents[bucket_of(entry.document.word_count())] += 1;
        match result {
            Ok((clustering, stats)) => {
                summary.documents_processed += 1;
                summary.total_actions += stats.diagnostics.total_actions;
                summary.hallucinations += stats.diagnostics.hallucinations;
                summary.ambiguous += stats.diagnostics.ambiguous;
                summary.skipped += stats.diagnostics.skipped;
                summary.implicit_shifts += stats.diagnostics.implicit_shifts;
                summary.disallowed += stats.disallowed;
                predictions.push(Some(clustering));
            }
            Err(error) => {
                summary.documents_failed += 1;
                summary
                    .failed_documents
                    .push(format!("{}: {error}", entry.full_key()));
                predictions.push(None);
            }
        }
    }
    summary.failed_documents.sort();
    summary.wall_time_ms = started.elapsed().as_millis() as u64;
    InferOutcome {
        predictions,
        summary,
    }
}

fn infer_document(
    entry: &CorpusEntry,
    predictor: &dyn Predictor,
    system: SystemKind,
    opts: &EncodeOptions,
    counter: &dyn TokenCounter,
) -> Result<(Clustering, DocStats), String> {
    let doc = &entry.document;
    let mut state = State::initial(doc);
    let mut stats = DocStats::default();

    for sentence in 1..=doc.sentence_count() {
        let (input, window) = encode_input(&state, opts, counter)
            .map_err(|e| format!("sentence {sentence}: {e}"))?;
        let request = PredictRequest {
            input,
            max_output_tokens: opts.output_budget,
            doc_key: entry.full_key(),
            sentence,
        };
        let output = predictor
            .predict(&request)
            .map_err(|e| format!("sentence {sentence}: {e}"))?;
        let (actions, diagnostics) = parse_actions(&output, &state, &window);
        stats.diagnostics.merge(&diagnostics);
        for action in &actions {
            if is_allowed(system, &state, action) {
                state = state
                    .apply(system, action)
                    .map_err(|e| format!("sentence {sentence}: {e}"))?;
            } else {
                stats.disallowed += 1;
            }
        }
    }
    debug_assert!(state.is_final());
    Ok((state.into_clustering(), stats))
}

/// Per-bucket slice of a corpus score.
#[derive(Debug, Clone, Serialize)]
pub struct BucketReport {
    pub label: String,
    pub documents: usize,
    pub report: Option<ScoreReport>,
}

/// A scored corpus: the micro-averaged report, length-bucket breakdown, and
/// per-document reports.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredCorpus {
    pub overall: ScoreReport,
    pub buckets: Vec<BucketReport>,
    pub per_document: Vec<(String, ScoreReport)>,
}

/// Scores gold/prediction pairs that are already aligned.
pub fn score_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a CorpusEntry, &'a Clustering)>,
    mode: SingletonMode,
) -> ScoredCorpus {
    let mut total = ScoreCounts::default();
    let mut bucket_counts: Vec<ScoreCounts> =
        vec![ScoreCounts::default(); LENGTH_BUCKETS.len()];
    let mut bucket_docs = [0usize; LENGTH_BUCKETS.len()];
    let mut per_document = Vec::new();

    for (entry, pred) in pairs {
        let bucket = bucket_of(entry.document.word_count());
        bucket_docs[bucket] += 1;
        if let Some(counts) = score_counts(&entry.gold, pred, mode) {
            total.add(&counts);
            bucket_counts[bucket].add(&counts);
            per_document.push((entry.full_key(), counts.report(mode)));
        }
    }

    let buckets = bucket_counts
        .iter()
        .enumerate()
        .map(|(i, counts)| BucketReport {
            label: bucket_label(i),
            documents: bucket_docs[i],
            report: (bucket_docs[i] > 0).then(|| counts.report(mode)),
        })
        .collect();

    ScoredCorpus {
        overall: total.report(mode),
        buckets,
        per_document,
    }
}

/// Scores a prediction corpus against a gold corpus, aligning documents by
/// key. Every gold document must be predicted and vice versa.
pub fn score_corpus(
    gold: &[CorpusEntry],
    pred: &[CorpusEntry],
    mode: SingletonMode,
) -> Result<ScoredCorpus, RunError> {
    let mut by_key: std::collections::HashMap<String, &CorpusEntry> =
        pred.iter().map(|e| (e.full_key(), e)).collect();
    let mut pairs = Vec::with_capacity(gold.len());
    for entry in gold {
        let key = entry.full_key();
        let matched = by_key
            .remove(&key)
            .ok_or(RunError::MissingPrediction { key })?;
        pairs.push((entry, &matched.gold));
    }
    if let Some(key) = by_key.into_keys().next() {
        return Err(RunError::UnmatchedPrediction { key });
    }
    Ok(score_pairs(pairs, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::WhitespaceCounter;
    use crate::predictor::{OraclePredictor, PredictError, PredictorKind};
    use crate::testutil::{dialogue_doc, dialogue_gold};

    fn dialogue_corpus() -> Vec<CorpusEntry> {
        vec![CorpusEntry {
            document: dialogue_doc(),
            gold: dialogue_gold(),
            part: 0,
        }]
    }

    struct ShiftOnly;
    impl Predictor for ShiftOnly {
        fn predict(&self, _request: &PredictRequest) -> Result<String, PredictError> {
            Ok("SHIFT".to_string())
        }
    }

    #[test]
    fn export_produces_one_example_per_sentence() {
        let corpus = dialogue_corpus();
        let (examples, failures) = export_training(
            &corpus,
            SystemKind::LinkAppend,
            &EncodeOptions::training(),
            &WhitespaceCounter,
        );
        assert!(failures.is_empty());
        assert_eq!(examples.len(), 4);
        assert_eq!(examples[0].target, "SHIFT");
        assert_eq!(
            examples[1].target,
            "I ## 'm like dying -> I ## still have n't ; SHIFT"
        );
        let line: serde_json::Value =
            serde_json::from_str(&examples[2].to_json_line()).unwrap();
        assert_eq!(line["sentence"], 3);
        assert_eq!(line["doc_key"], "(dialogue); part 0");
        assert!(line.get("system").is_none());
    }

    #[test]
    fn oracle_inference_reconstructs_gold() {
        let corpus = dialogue_corpus();
        for system in SystemKind::ALL {
            let predictor = OraclePredictor::from_corpus(system, &corpus).unwrap();
            let opts = EncodeOptions::inference().for_system(system);
            let outcome = infer(&corpus, &predictor, system, &opts, &WhitespaceCounter, 1);
            assert_eq!(outcome.summary.documents_failed, 0);
            let predicted = outcome.predictions[0].as_ref().unwrap();
            let expected = crate::oracle::expected_final(system, &corpus[0].gold);
            assert!(predicted.same_clusters(&expected), "{system}");
            assert_eq!(outcome.summary.hallucinations, 0);
            assert_eq!(outcome.summary.ambiguous, 0);
            assert_eq!(outcome.summary.disallowed, 0);
        }
    }

    #[test]
    fn shift_stub_yields_empty_clusterings() {
        let corpus = dialogue_corpus();
        let outcome = infer(
            &corpus,
            &ShiftOnly,
            SystemKind::LinkAppend,
            &EncodeOptions::inference(),
            &WhitespaceCounter,
            1,
        );
        assert!(outcome.predictions[0].as_ref().unwrap().is_empty());
        let scored = score_pairs(
            corpus
                .iter()
                .zip(&outcome.predictions)
                .map(|(e, p)| (e, p.as_ref().unwrap())),
            SingletonMode::INCLUDE_BOTH,
        );
        assert_eq!(scored.overall.avg_f1, 0.0);
    }

    #[test]
    fn failed_documents_do_not_abort_the_run() {
        struct FailSecond;
        impl Predictor for FailSecond {
            fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
                if request.doc_key.contains("second") {
                    Err(PredictError::Transport("boom".into()))
                } else {
                    Ok("SHIFT".into())
                }
            }
        }
        let mut corpus = dialogue_corpus();
        let mut second = dialogue_corpus().remove(0);
        second.document = crate::document::Document::new(
            "second",
            second.document.words().to_vec(),
            vec![13, 20, 29, 32],
            vec![String::new(); 4],
            None,
        )
        .unwrap();
        corpus.push(second);

        let outcome = infer(
            &corpus,
            &FailSecond,
            SystemKind::LinkAppend,
            &EncodeOptions::inference(),
            &WhitespaceCounter,
            1,
        );
        assert_eq!(outcome.summary.documents_processed, 1);
        assert_eq!(outcome.summary.documents_failed, 1);
        assert_eq!(outcome.summary.failed_documents.len(), 1);
        assert!(outcome.predictions[0].is_some());
        assert!(outcome.predictions[1].is_none());
    }

    #[test]
    fn disallowed_predictions_are_dropped_without_corrupting_state() {
        // A self-link parses but the transition system rejects it; the
        // clustering must stay untouched.
        struct SelfLinker;
        impl Predictor for SelfLinker {
            fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
                if request.sentence == 1 {
                    Ok("I ## still have n't -> I ## still have n't ; SHIFT".into())
                } else {
                    Ok("SHIFT".into())
                }
            }
        }
        let corpus = dialogue_corpus();
        let outcome = infer(
            &corpus,
            &SelfLinker,
            SystemKind::LinkAppend,
            &EncodeOptions::inference(),
            &WhitespaceCounter,
            1,
        );
        assert_eq!(outcome.summary.documents_failed, 0);
        assert_eq!(outcome.summary.disallowed, 1);
        assert!(outcome.predictions[0].as_ref().unwrap().is_empty());
    }

    #[test]
    fn parallel_inference_is_deterministic() {
        let mut corpus = Vec::new();
        for i in 0..6 {
            let mut entry = dialogue_corpus().remove(0);
            entry.document = crate::document::Document::new(
                format!("doc{i}"),
                entry.document.words().to_vec(),
                vec![13, 20, 29, 32],
                vec![String::new(); 4],
                None,
            )
            .unwrap();
            corpus.push(entry);
        }
        let system = SystemKind::LinkAppend;
        let predictor = OraclePredictor::from_corpus(system, &corpus).unwrap();
        let opts = EncodeOptions::inference();
        let sequential = infer(&corpus, &predictor, system, &opts, &WhitespaceCounter, 1);
        let parallel = infer(&corpus, &predictor, system, &opts, &WhitespaceCounter, 4);
        assert_eq!(sequential.predictions, parallel.predictions);
        assert_eq!(
            sequential.summary.total_actions,
            parallel.summary.total_actions
        );
    }

    #[test]
    fn export_and_oracle_inference_traverse_identical_inputs() {
        let corpus = dialogue_corpus();
        let system = SystemKind::LinkAppend;
        let opts = EncodeOptions::inference();
        let (examples, _) = export_training(&corpus, system, &opts, &WhitespaceCounter);

        // Capture the inputs inference sends to the predictor.
        struct Capture {
            inner: OraclePredictor,
            seen: std::sync::Mutex<Vec<String>>,
        }
        impl Predictor for Capture {
            fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
                self.seen.lock().unwrap().push(request.input.clone());
                self.inner.predict(request)
            }
        }
        let capture = Capture {
            inner: OraclePredictor::from_corpus(system, &corpus).unwrap(),
            seen: Default::default(),
        };
        infer(&corpus, &capture, system, &opts, &WhitespaceCounter, 1);
        let seen = capture.seen.into_inner().unwrap();
        let exported: Vec<String> = examples.into_iter().map(|e| e.input).collect();
        assert_eq!(seen, exported);
    }

    #[test]
    fn bucket_boundaries() {
        assert_eq!(bucket_of(1), 0);
        assert_eq!(bucket_of(128), 0);
        assert_eq!(bucket_of(129), 1);
        assert_eq!(bucket_of(256), 1);
        assert_eq!(bucket_of(257), 2);
        assert_eq!(bucket_of(512), 2);
        assert_eq!(bucket_of(513), 3);
        assert_eq!(bucket_of(768), 3);
        assert_eq!(bucket_of(769), 4);
        assert_eq!(bucket_of(1152), 4);
        assert_eq!(bucket_of(1153), 5);
        assert_eq!(bucket_of(100_000), 5);
        let labels: Vec<String> = (0..LENGTH_BUCKETS.len()).map(bucket_label).collect();
        assert_eq!(
            labels,
            vec!["1-128", "129-256", "257-512", "513-768", "769-1152", "1153+"]
        );
    }

    #[test]
    fn score_corpus_requires_aligned_keys() {
        let corpus = dialogue_corpus();
        let err = score_corpus(&corpus, &[], SingletonMode::INCLUDE_BOTH).unwrap_err();
        assert!(matches!(err, RunError::MissingPrediction { .. }));

        let scored =
            score_corpus(&corpus, &corpus, SingletonMode::INCLUDE_BOTH).unwrap();
        assert!((scored.overall.avg_f1 - 1.0).abs() < 1e-12);
        for bucket in &scored.buckets {
            if bucket.documents > 0 {
                assert!((bucket.report.unwrap().avg_f1 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predictor_kind_parses() {
        assert_eq!(
            "subprocess".parse::<PredictorKind>().unwrap(),
            PredictorKind::Subprocess
        );
        assert!("magic".parse::<PredictorKind>().is_err());
    }
}
