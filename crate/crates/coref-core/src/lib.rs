//! Transition-based coreference resolution as a text-to-text problem.
//!
//! The crate implements three transition systems over a shared state machine
//! (link-append, link-only, and mention-link-append), the oracle that turns
//! gold clusterings into canonical action sequences, byte-stable encodings of
//! states and actions at the seq2seq boundary, CoNLL-2012 corpus I/O, the
//! MUC/B³/CEAF_φ4 evaluation protocol, and the runners that tie them into
//! training-data export, sentence-at-a-time inference, and scoring.

pub mod codec;
pub mod conll;
pub mod document;
pub mod metrics;
pub mod oracle;
pub mod predictor;
pub mod runner;
pub mod transition;

#[cfg(test)]
pub(crate) mod testutil;

pub use codec::{EncodeOptions, ParseDiagnostics, TokenCounter, WhitespaceCounter, WindowMap};
pub use conll::{filter_singletons, read_conll, read_conll_file, write_conll, CorpusEntry};
pub use document::{
    mention_order, mention_order_cmp, Clustering, Document, DocumentError, LinkCase, Span,
};
pub use metrics::{ScoreReport, SingletonMode, SingletonPolicy};
pub use oracle::{oracle_actions, oracle_run, OracleStep};
pub use predictor::{PredictRequest, Predictor, PredictorConfig, PredictorKind};
pub use runner::{RunSummary, ScoredCorpus, TrainingExample};
pub use transition::{is_allowed, run_episode, Action, State, SystemKind, TransitionError};
