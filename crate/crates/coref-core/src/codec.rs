//! Text encodings at the seq2seq boundary.
//!
//! Inputs render the document window as a single space-joined token string:
//! an optional genre token, then each sentence prefixed by its speaker, with
//! `#` between sentences, `|` in front of the focus sentence and `**` behind
//! it, and `[k` / `]` cluster brackets interleaved with the words. Outputs
//! encode action sequences as `;`-separated clauses terminated by `SHIFT`,
//! where mentions are spelled as their tokens plus `##` and up to three
//! following tokens of context.
//!
//! Parsing accepts arbitrary model output: clauses that cannot be grounded in
//! the input become diagnostics, never errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{Document, Span};
use crate::transition::{Action, State, SystemKind};

pub const SENTENCE_SEPARATOR: &str = "#";
pub const FOCUS_OPEN: &str = "|";
pub const FOCUS_CLOSE: &str = "**";
pub const ARROW: &str = "->";
pub const CLAUSE_SEPARATOR: &str = ";";
pub const SHIFT_TOKEN: &str = "SHIFT";
pub const NEW_CLUSTER_TOKEN: &str = "NEW";
pub const CONTEXT_SEPARATOR: &str = "##";

/// How many following tokens disambiguate a mention.
pub const CONTEXT_LEN: usize = 3;

pub const TRAINING_INPUT_BUDGET: usize = 2048;
pub const INFERENCE_INPUT_BUDGET: usize = 3000;
pub const OUTPUT_BUDGET: usize = 384;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("cannot encode a final state")]
    FinalState,
    #[error("focus sentence requires {required} tokens but the input budget is {budget}")]
    FocusExceedsBudget { required: usize, budget: usize },
}

/// Counts tokens of an encoded string; the stand-in for a subword tokenizer.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Default counter: whitespace-separated tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Token length of `text` under `counter`.
pub fn count_tokens(text: &str, counter: &dyn TokenCounter) -> usize {
    counter.count(text)
}

/// Knobs of the input encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub input_budget: usize,
    pub output_budget: usize,
    /// Render `[k ... ]` brackets for current clusters. Off for the link-only
    /// system, whose inputs carry no cluster information.
    pub annotate_clusters: bool,
    /// Fill remaining budget with sentences beyond the focus.
    pub fill_context: bool,
    pub include_speaker: bool,
    pub include_genre: bool,
}

impl EncodeOptions {
    /// Training-time defaults: 2048 input tokens.
    pub fn training() -> Self {
        EncodeOptions {
            input_budget: TRAINING_INPUT_BUDGET,
            output_budget: OUTPUT_BUDGET,
            annotate_clusters: true,
            fill_context: true,
            include_speaker: true,
            include_genre: true,
        }
    }

    /// Inference-time defaults: 3000 input tokens to accommodate long
    /// documents.
    pub fn inference() -> Self {
        EncodeOptions {
            input_budget: INFERENCE_INPUT_BUDGET,
            ..EncodeOptions::training()
        }
    }

    pub fn for_system(mut self, system: SystemKind) -> Self {
        self.annotate_clusters = system.annotates_clusters();
        self
    }
}

/// Alignment between encoded-string token positions and document word
/// indices, plus the rendered window bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowMap {
    first_word: usize,
    last_word: usize,
    token_words: Vec<Option<usize>>,
}

impl WindowMap {
    /// First document word rendered in the string.
    pub fn first_word(&self) -> usize {
        self.first_word
    }

    /// Last document word rendered in the string.
    pub fn last_word(&self) -> usize {
        self.last_word
    }

    /// For each whitespace token of the encoded string, the 1-based document
    /// word it renders, or `None` for markers, speakers, genre, and brackets.
    pub fn token_words(&self) -> &[Option<usize>] {
        &self.token_words
    }
}

struct Renderer<'a> {
    tokens: Vec<String>,
    token_words: Vec<Option<usize>>,
    state: &'a State<'a>,
    opts: &'a EncodeOptions,
}

impl<'a> Renderer<'a> {
    fn marker(&mut self, text: impl Into<String>) {
        self.tokens.push(text.into());
        self.token_words.push(None);
    }

    fn word(&mut self, index: usize) {
        self.tokens.push(self.state.doc().word(index).to_string());
        self.token_words.push(Some(index));
    }

    fn sentence(&mut self, sentence: usize, first_rendered: bool) {
        let doc = self.state.doc();
        let focus = sentence == self.state.focus();
        if !first_rendered {
            if focus {
                self.marker(FOCUS_OPEN);
            }
            self.marker(SENTENCE_SEPARATOR);
        }
        if self.opts.include_speaker && !doc.speaker(sentence).is_empty() {
            self.marker(doc.speaker(sentence).to_string());
        }
        if focus && first_rendered {
            self.marker(FOCUS_OPEN);
        }

        let (first, last) = doc.sentence_bounds(sentence).expect("validated");
        let clustering = self.state.clustering();
        for w in first..=last {
            if self.opts.annotate_clusters {
                // Longer spans open first so nesting reads outside-in.
                let mut opens: Vec<Span> = clustering
                    .spans()
                    .filter(|s| s.start() == w)
                    .collect();
                opens.sort_by_key(|s| std::cmp::Reverse(s.len()));
                for span in opens {
                    let k = clustering.cluster_of(span).expect("span from clustering");
                    self.marker(format!("[{k}"));
                }
            }
            self.word(w);
            if self.opts.annotate_clusters {
                // Inner spans close first.
                let mut closes: Vec<Span> = clustering
                    .spans()
                    .filter(|s| s.end() == w)
                    .collect();
                closes.sort_by_key(|s| s.len());
                for _ in closes {
                    self.marker("]");
                }
            }
        }
        if focus {
            self.marker(FOCUS_CLOSE);
        }
    }
}

fn render(state: &State<'_>, opts: &EncodeOptions, window: (usize, usize)) -> (String, WindowMap) {
    let doc = state.doc();
    let mut r = Renderer {
        tokens: Vec::new(),
        token_words: Vec::new(),
        state,
        opts,
    };
    if opts.include_genre {
        if let Some(genre) = doc.genre() {
            r.marker(genre.to_string());
        }
    }
    for sentence in window.0..=window.1 {
        r.sentence(sentence, sentence == window.0);
    }
    let first_word = doc.sentence_bounds(window.0).expect("validated").0;
    let last_word = doc.sentence_bounds(window.1).expect("validated").1;
    (
        r.tokens.join(" "),
        WindowMap {
            first_word,
            last_word,
            token_words: r.token_words,
        },
    )
}

/// Encodes a non-final state as the model input string.
///
/// When the window exceeds the input budget, whole sentences are dropped from
/// the front; the focus sentence is never truncated. When it fits and
/// `fill_context` is on, sentences beyond the focus are appended while the
/// budget allows.
pub fn encode_input(
    state: &State<'_>,
    opts: &EncodeOptions,
    counter: &dyn TokenCounter,
) -> Result<(String, WindowMap), CodecError> {
    if state.is_final() {
        return Err(CodecError::FinalState);
    }
    let focus = state.focus();
    let m = state.doc().sentence_count();

    let mut start = 1;
    let (mut text, mut map) = render(state, opts, (start, focus));
    while counter.count(&text) > opts.input_budget && start < focus {
        start += 1;
        (text, map) = render(state, opts, (start, focus));
    }
    let used = counter.count(&text);
    if used > opts.input_budget {
        return Err(CodecError::FocusExceedsBudget {
            required: used,
            budget: opts.input_budget,
        });
    }

    if opts.fill_context && start == 1 {
        let mut end = focus;
        while end < m {
            let (candidate, candidate_map) = render(state, opts, (start, end + 1));
            if counter.count(&candidate) > opts.input_budget {
                break;
            }
            end += 1;
            text = candidate;
            map = candidate_map;
        }
    }
    Ok((text, map))
}

/// Spells out a mention: its tokens, then `##` and up to three following
/// document tokens. The separator is omitted only at the document's end,
/// where no following tokens exist.
pub fn serialize_mention(span: Span, doc: &Document) -> String {
    let mut parts: Vec<&str> = (span.start()..=span.end()).map(|w| doc.word(w)).collect();
    let followers_end = doc.word_count().min(span.end() + CONTEXT_LEN);
    if followers_end > span.end() {
        parts.push(CONTEXT_SEPARATOR);
        parts.extend((span.end() + 1..=followers_end).map(|w| doc.word(w)));
    }
    parts.join(" ")
}

/// Encodes an action sequence as the model target string. Clauses are joined
/// with `;` and the sequence is terminated at the first `Shift`.
pub fn encode_actions(actions: &[Action], doc: &Document) -> String {
    let mut clauses = Vec::new();
    for action in actions {
        match *action {
            Action::Shift => break,
            Action::Link { source, target } => clauses.push(format!(
                "{} {ARROW} {}",
                serialize_mention(source, doc),
                serialize_mention(target, doc)
            )),
            Action::Append { source, cluster } => clauses.push(format!(
                "{} {ARROW} [{cluster}",
                serialize_mention(source, doc)
            )),
            Action::AddMention { source } => clauses.push(format!(
                "{} {ARROW} {NEW_CLUSTER_TOKEN}",
                serialize_mention(source, doc)
            )),
        }
    }
    if clauses.is_empty() {
        SHIFT_TOKEN.to_string()
    } else {
        format!("{} {CLAUSE_SEPARATOR} {SHIFT_TOKEN}", clauses.join(&format!(" {CLAUSE_SEPARATOR} ")))
    }
}

/// What became of one predicted clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClauseOutcome {
    /// Grounded at a unique position.
    Parsed,
    /// Grounded at several positions; resolved to the one nearest the focus.
    Ambiguous,
    /// Mention text (or link target) not locatable in the window.
    Hallucination,
    /// Malformed clause or out-of-range cluster reference.
    Skipped,
    /// The output ended without a SHIFT; one was supplied.
    ImplicitShift,
}

#[derive(Debug, Clone)]
pub struct ClauseRecord {
    pub sentence: usize,
    pub raw: String,
    pub outcome: ClauseOutcome,
}

/// Anomaly counts from parsing one model output. Every anomalous clause lands
/// in exactly one counter.
#[derive(Debug, Clone, Default)]
pub struct ParseDiagnostics {
    /// Non-empty clauses before the terminating SHIFT.
    pub total_actions: usize,
    pub hallucinations: usize,
    pub ambiguous: usize,
    pub skipped: usize,
    pub implicit_shifts: usize,
    pub records: Vec<ClauseRecord>,
}

impl ParseDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.hallucinations == 0
            && self.ambiguous == 0
            && self.skipped == 0
            && self.implicit_shifts == 0
    }

    pub fn merge(&mut self, other: &ParseDiagnostics) {
        self.total_actions += other.total_actions;
        self.hallucinations += other.hallucinations;
        self.ambiguous += other.ambiguous;
        self.skipped += other.skipped;
        self.implicit_shifts += other.implicit_shifts;
        self.records.extend(other.records.iter().cloned());
    }
}

enum Grounding {
    Unique(Span),
    Resolved(Span),
    None,
}

/// All single-sentence positions in `lo..=hi` where the mention tokens match
/// and the document tokens after the match start with the context tokens.
fn find_matches(
    doc: &Document,
    lo: usize,
    hi: usize,
    mention: &[&str],
    context: &[&str],
) -> Vec<Span> {
    let mut out = Vec::new();
    if mention.is_empty() || lo > hi {
        return out;
    }
    let len = mention.len();
    for a in lo..=hi {
        let b = a + len - 1;
        if b > hi {
            break;
        }
        if (a..=b).zip(mention).any(|(w, m)| doc.word(w) != *m) {
            continue;
        }
        if b + context.len() > doc.word_count() {
            continue;
        }
        if (b + 1..=b + context.len())
            .zip(context)
            .any(|(w, c)| doc.word(w) != *c)
        {
            continue;
        }
        let span = Span::new(a, b);
        if doc.sentence_of_span(span).is_some() {
            out.push(span);
        }
    }
    out
}

/// Matches ascend by position, so the last one is nearest the focus.
fn ground(matches: Vec<Span>) -> Grounding {
    match matches.len() {
        0 => Grounding::None,
        1 => Grounding::Unique(matches[0]),
        _ => Grounding::Resolved(*matches.last().unwrap()),
    }
}

fn split_mention(text: &str) -> (Vec<&str>, Vec<&str>) {
    match text.split_once(CONTEXT_SEPARATOR) {
        Some((mention, context)) => (
            mention.split_whitespace().collect(),
            context.split_whitespace().collect(),
        ),
        None => (text.split_whitespace().collect(), Vec::new()),
    }
}

/// `[k` cluster references: a `[` followed by digits and nothing else.
fn parse_cluster_ref(text: &str) -> Option<Result<usize, ()>> {
    let digits = text.strip_prefix('[')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(digits.parse::<usize>().map_err(|_| ()))
}

/// Parses a model output string against the state it was predicted for.
///
/// Splits on `;` and stops at the first `SHIFT` clause; a missing terminator
/// is recorded and a `Shift` appended regardless, so the returned sequence
/// always ends in exactly one `Shift`. Anomalous clauses are counted and
/// dropped; this function never fails on arbitrary input.
pub fn parse_actions(
    output: &str,
    state: &State<'_>,
    window: &WindowMap,
) -> (Vec<Action>, ParseDiagnostics) {
    let doc = state.doc();
    let sentence = state.focus();
    let mut actions = Vec::new();
    let mut diag = ParseDiagnostics::default();
    let mut terminated = false;

    let (focus_first, focus_last) = doc
        .sentence_bounds(sentence)
        .expect("parse_actions requires a non-final state");

    for raw_clause in output.split(CLAUSE_SEPARATOR) {
        let clause = raw_clause.trim();
        if clause == SHIFT_TOKEN {
            terminated = true;
            break;
        }
        if clause.is_empty() {
            continue;
        }
        diag.total_actions += 1;
        let record = |outcome: ClauseOutcome| ClauseRecord {
            sentence,
            raw: clause.to_string(),
            outcome,
        };

        let Some((lhs, rhs)) = clause.split_once(ARROW) else {
            diag.skipped += 1;
            diag.records.push(record(ClauseOutcome::Skipped));
            continue;
        };
        let (source_mention, source_context) = split_mention(lhs);
        if source_mention.is_empty() {
            diag.skipped += 1;
            diag.records.push(record(ClauseOutcome::Skipped));
            continue;
        }
        let source = ground(find_matches(
            doc,
            focus_first,
            focus_last,
            &source_mention,
            &source_context,
        ));

        let rhs = rhs.trim();
        let (action, target_ambiguous) = if rhs == NEW_CLUSTER_TOKEN {
            match source {
                Grounding::None => {
                    diag.hallucinations += 1;
                    diag.records.push(record(ClauseOutcome::Hallucination));
                    continue;
                }
                Grounding::Unique(s) => (Action::AddMention { source: s }, false),
                Grounding::Resolved(s) => (Action::AddMention { source: s }, true),
            }
        } else if let Some(cluster_ref) = parse_cluster_ref(rhs) {
            let Ok(cluster) = cluster_ref else {
                diag.skipped += 1;
                diag.records.push(record(ClauseOutcome::Skipped));
                continue;
            };
            if cluster < 1 || cluster > state.clustering().len() {
                diag.skipped += 1;
                diag.records.push(record(ClauseOutcome::Skipped));
                continue;
            }
            match source {
                Grounding::None => {
                    diag.hallucinations += 1;
                    diag.records.push(record(ClauseOutcome::Hallucination));
                    continue;
                }
                Grounding::Unique(s) => (Action::Append { source: s, cluster }, false),
                Grounding::Resolved(s) => (Action::Append { source: s, cluster }, true),
            }
        } else {
            let (target_mention, target_context) = split_mention(rhs);
            if target_mention.is_empty() {
                diag.skipped += 1;
                diag.records.push(record(ClauseOutcome::Skipped));
                continue;
            }
            let target = ground(find_matches(
                doc,
                window.first_word(),
                focus_last,
                &target_mention,
                &target_context,
            ));
            match (source, target) {
                (Grounding::None, _) | (_, Grounding::None) => {
                    diag.hallucinations += 1;
                    diag.records.push(record(ClauseOutcome::Hallucination));
                    continue;
                }
                (source, target) => {
                    let ambiguous = matches!(source, Grounding::Resolved(_))
                        || matches!(target, Grounding::Resolved(_));
                    let s = match source {
                        Grounding::Unique(s) | Grounding::Resolved(s) => s,
                        Grounding::None => unreachable!(),
                    };
                    let t = match target {
                        Grounding::Unique(t) | Grounding::Resolved(t) => t,
                        Grounding::None => unreachable!(),
                    };
                    (Action::Link { source: s, target: t }, ambiguous)
                }
            }
        };

        if target_ambiguous {
            diag.ambiguous += 1;
            diag.records.push(record(ClauseOutcome::Ambiguous));
        } else {
            diag.records.push(record(ClauseOutcome::Parsed));
        }
        actions.push(action);
    }

    if !terminated {
        diag.implicit_shifts += 1;
        diag.records.push(ClauseRecord {
            sentence,
            raw: String::new(),
            outcome: ClauseOutcome::ImplicitShift,
        });
    }
    actions.push(Action::Shift);
    (actions, diag)
}
