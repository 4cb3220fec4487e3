//! The seq2seq boundary: input string in, output string out.
//!
//! Every implementation speaks the same newline-delimited JSON record shape,
//! `{"input": ..., "max_tokens": ...}` requests and `{"output": ...}`
//! responses, whether over a child process's stdio, an HTTP endpoint, or a
//! recorded trace file. The oracle implementation answers from a replayed
//! gold corpus and needs no model at all.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{encode_actions, EncodeOptions};
use crate::conll::CorpusEntry;
use crate::oracle::{oracle_run, OracleError};
use crate::transition::SystemKind;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("prediction timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("replay trace has no entry for this input")]
    ReplayMiss,
    #[error("replay trace recorded under different options: expected {expected}, found {found}")]
    OptionsMismatch { expected: String, found: String },
    #[error("document {doc_key:?} is not in the oracle corpus")]
    UnknownDocument { doc_key: String },
    #[error("oracle failure: {0}")]
    Oracle(#[from] OracleError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One prediction request. The document key and sentence index ride along
/// for logging and trace files; the model sees only the input text.
#[derive(Debug, Clone)]
pub struct PredictRequest {
    pub input: String,
    pub max_output_tokens: usize,
    pub doc_key: String,
    pub sentence: usize,
}

/// A text-in, text-out model. Implementations must either be safe for
/// concurrent calls or declare a `concurrency_limit` of 1.
pub trait Predictor: Send + Sync {
    fn predict(&self, request: &PredictRequest) -> Result<String, PredictError>;

    fn concurrency_limit(&self) -> Option<usize> {
        None
    }
}

/// The request record shared by the subprocess and HTTP protocols.
#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    input: &'a str,
    max_tokens: usize,
}

/// The response record. `score` is accepted but currently unused.
#[derive(Debug, Deserialize)]
struct WireResponse {
    output: String,
    #[serde(default)]
    #[allow(dead_code)]
    score: Option<f64>,
}

/// One line of a replay trace: the wire records plus the options fingerprint
/// they were produced under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub input: String,
    pub max_tokens: usize,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub opts: String,
}

/// Fingerprint of everything that shapes encoded inputs; traces recorded
/// under one fingerprint refuse to replay under another.
pub fn options_fingerprint(system: SystemKind, opts: &EncodeOptions) -> String {
    let canonical = format!(
        "{system}|in={}|out={}|annotate={}|fill={}|speaker={}|genre={}",
        opts.input_budget,
        opts.output_budget,
        opts.annotate_clusters,
        opts.fill_context,
        opts.include_speaker,
        opts.include_genre
    );
    let digest = Sha256::digest(canonical.as_bytes());
    format!("{digest:x}")
}

/// Answers every request with the oracle's target string for that document
/// and sentence, computed by replaying the gold corpus.
pub struct OraclePredictor {
    targets: HashMap<(String, usize), String>,
}

impl OraclePredictor {
    pub fn from_corpus(system: SystemKind, corpus: &[CorpusEntry]) -> Result<Self, OracleError> {
        let mut targets = HashMap::new();
        for entry in corpus {
            let steps = oracle_run(system, &entry.document, &entry.gold)?;
            for step in steps {
                targets.insert(
                    (entry.full_key(), step.sentence),
                    encode_actions(&step.actions, &entry.document),
                );
            }
        }
        Ok(OraclePredictor { targets })
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
        self.targets
            .get(&(request.doc_key.clone(), request.sentence))
            .cloned()
            .ok_or_else(|| PredictError::UnknownDocument {
                doc_key: request.doc_key.clone(),
            })
    }
}

/// Replays outputs recorded in a trace file, keyed by the exact input string.
pub struct ReplayPredictor {
    outputs: HashMap<String, String>,
}

impl ReplayPredictor {
    pub fn from_path(path: impl AsRef<Path>, expected_opts: &str) -> Result<Self, PredictError> {
        let reader = BufReader::new(File::open(path)?);
        let mut outputs = HashMap::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(&line)
                .map_err(|e| PredictError::Protocol(format!("bad trace record: {e}")))?;
            if record.opts != expected_opts {
                return Err(PredictError::OptionsMismatch {
                    expected: expected_opts.to_string(),
                    found: record.opts,
                });
            }
            outputs.insert(record.input, record.output);
        }
        Ok(ReplayPredictor { outputs })
    }
}

impl Predictor for ReplayPredictor {
    fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
        self.outputs
            .get(&request.input)
            .cloned()
            .ok_or(PredictError::ReplayMiss)
    }
}

/// Wraps another predictor and persists every exchange as trace records,
/// ready for later replay.
pub struct RecordingPredictor {
    inner: Box<dyn Predictor>,
    writer: Mutex<BufWriter<File>>,
    opts: String,
}

impl RecordingPredictor {
    pub fn create(
        inner: Box<dyn Predictor>,
        path: impl AsRef<Path>,
        opts: String,
    ) -> Result<Self, PredictError> {
        Ok(RecordingPredictor {
            inner,
            writer: Mutex::new(BufWriter::new(File::create(path)?)),
            opts,
        })
    }
}

impl Predictor for RecordingPredictor {
    fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
        let output = self.inner.predict(request)?;
        let record = TraceRecord {
            input: request.input.clone(),
            max_tokens: request.max_output_tokens,
            output: output.clone(),
            score: None,
            opts: self.opts.clone(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| PredictError::Protocol(e.to_string()))?;
        let mut writer = self.writer.lock().expect("writer poisoned");
        writeln!(writer, "{line}")?;
        writer.flush()?;
        Ok(output)
    }

    fn concurrency_limit(&self) -> Option<usize> {
        self.inner.concurrency_limit()
    }
}

struct ChildHandle {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for ChildHandle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Talks to a long-running child process over stdio: one JSON request line
/// in, one JSON response line out. The child is spawned lazily and restarted
/// after transport failures.
pub struct SubprocessPredictor {
    command: Vec<String>,
    timeout: Duration,
    retries: u32,
    child: Mutex<Option<ChildHandle>>,
}

impl SubprocessPredictor {
    pub fn new(command: Vec<String>, timeout: Duration, retries: u32) -> Self {
        assert!(!command.is_empty(), "empty subprocess command");
        SubprocessPredictor {
            command,
            timeout,
            retries,
            child: Mutex::new(None),
        }
    }

    fn spawn(&self) -> Result<ChildHandle, PredictError> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| PredictError::Transport(format!("spawn {:?}: {e}", self.command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ChildHandle {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exchange(&self, handle: &mut ChildHandle, line: &str) -> Result<String, PredictError> {
        writeln!(handle.stdin, "{line}")
            .and_then(|_| handle.stdin.flush())
            .map_err(|e| PredictError::Transport(format!("write to child: {e}")))?;
        match handle.lines.recv_timeout(self.timeout) {
            Ok(Ok(response)) => Ok(response),
            Ok(Err(e)) => Err(PredictError::Transport(format!("read from child: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(PredictError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(PredictError::Transport("child closed its stdout".into()))
            }
        }
    }
}

impl Predictor for SubprocessPredictor {
    fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
        let line = serde_json::to_string(&WireRequest {
            input: &request.input,
            max_tokens: request.max_output_tokens,
        })
        .map_err(|e| PredictError::Protocol(e.to_string()))?;

        let mut guard = self.child.lock().expect("child poisoned");
        let mut last_error = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            if guard.is_none() {
                match self.spawn() {
                    Ok(handle) => *guard = Some(handle),
                    Err(e) => {
                        last_error = Some(e);
                        continue;
                    }
                }
            }
            match self.exchange(guard.as_mut().expect("just spawned"), &line) {
                Ok(response) => {
                    let parsed: WireResponse = serde_json::from_str(&response)
                        .map_err(|e| PredictError::Protocol(format!("bad response: {e}")))?;
                    return Ok(parsed.output);
                }
                Err(e) => {
                    // A failed or timed-out exchange leaves the line protocol
                    // desynchronized; restart the child.
                    *guard = None;
                    last_error = Some(e);
                }
            }
        }
        Err(last_error.unwrap_or_else(|| PredictError::Transport("no attempts made".into())))
    }

    fn concurrency_limit(&self) -> Option<usize> {
        Some(1)
    }
}

/// Posts requests to an HTTP endpoint accepting the shared JSON record.
pub struct HttpPredictor {
    endpoint: String,
    client: reqwest::blocking::Client,
    timeout: Duration,
    retries: u32,
    concurrency: Option<usize>,
}

impl HttpPredictor {
    pub fn new(
        endpoint: String,
        timeout: Duration,
        retries: u32,
        concurrency: Option<usize>,
    ) -> Result<Self, PredictError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| PredictError::Transport(e.to_string()))?;
        Ok(HttpPredictor {
            endpoint,
            client,
            timeout,
            retries,
            concurrency,
        })
    }
}

impl Predictor for HttpPredictor {
    fn predict(&self, request: &PredictRequest) -> Result<String, PredictError> {
        let body = WireRequest {
            input: &request.input,
            max_tokens: request.max_output_tokens,
        };
        let mut last_error = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            let result = self
                .client
                .post(&self.endpoint)
                .json(&body)
                .send()
                .and_then(|r| r.error_for_status());
            match result {
                Ok(response) => {
                    let parsed: WireResponse = response
                        .json()
                        .map_err(|e| PredictError::Protocol(format!("bad response: {e}")))?;
                    return Ok(parsed.output);
                }
                Err(e) if e.is_timeout() => last_error = Some(PredictError::Timeout(self.timeout)),
                Err(e) => last_error = Some(PredictError::Transport(e.to_string())),
            }
        }
        Err(last_error.unwrap_or_else(|| PredictError::Transport("no attempts made".into())))
    }

    fn concurrency_limit(&self) -> Option<usize> {
        self.concurrency
    }
}

/// Which predictor implementation to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Oracle,
    Replay,
    Subprocess,
    Http,
}

impl std::str::FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(PredictorKind::Oracle),
            "replay" => Ok(PredictorKind::Replay),
            "subprocess" => Ok(PredictorKind::Subprocess),
            "http" => Ok(PredictorKind::Http),
            other => Err(format!(
                "unknown predictor {other:?} (expected oracle, replay, subprocess, or http)"
            )),
        }
    }
}

/// Declarative predictor construction, mirroring the CLI flags.
#[derive(Debug, Clone)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Subprocess argv; the first element is the program.
    pub command: Vec<String>,
    /// HTTP endpoint URL.
    pub endpoint: String,
    /// Replay trace path.
    pub trace: Option<PathBuf>,
    pub timeout: Duration,
    pub retries: u32,
    /// Upper bound on concurrent in-flight requests.
    pub batch_size: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            kind: PredictorKind::Oracle,
            command: Vec::new(),
            endpoint: String::new(),
            trace: None,
            timeout: Duration::from_secs(60),
            retries: 2,
            batch_size: 1,
        }
    }
}

impl PredictorConfig {
    /// Builds the configured predictor. The gold corpus feeds the oracle
    /// kind; the options fingerprint guards replay traces.
    pub fn build(
        &self,
        system: SystemKind,
        corpus: &[CorpusEntry],
        opts_fingerprint: &str,
    ) -> Result<Box<dyn Predictor>, PredictError> {
        match self.kind {
            PredictorKind::Oracle => {
                Ok(Box::new(OraclePredictor::from_corpus(system, corpus)?))
            }
            PredictorKind::Replay => {
                let path = self.trace.as_ref().ok_or_else(|| {
                    PredictError::Transport("replay predictor requires a trace path".into())
                })?;
                Ok(Box::new(ReplayPredictor::from_path(path, opts_fingerprint)?))
            }
            PredictorKind::Subprocess => {
                if self.command.is_empty() {
                    return Err(PredictError::Transport(
                        "subprocess predictor requires a command".into(),
                    ));
                }
                Ok(Box::new(SubprocessPredictor::new(
                    self.command.clone(),
                    self.timeout,
                    self.retries,
                )))
            }
            PredictorKind::Http => {
                if self.endpoint.is_empty() {
                    return Err(PredictError::Transport(
                        "http predictor requires an endpoint".into(),
                    ));
                }
                Ok(Box::new(HttpPredictor::new(
                    self.endpoint.clone(),
                    self.timeout,
                    self.retries,
                    Some(self.batch_size.max(1)),
                )?))
            }
        }
    }
}
