//! The oracle: converts a gold clustering into the canonical per-sentence
//! action sequences for each transition system.
//!
//! Mentions are visited in processing order. A mention whose cluster already
//! has at least two members in earlier sentences is attached with `Append`;
//! otherwise it is linked to the most recent earlier member of its cluster,
//! which may sit in the focus sentence itself. Under the mention-capable
//! system, the first mention of every cluster is introduced with
//! `AddMention`, so singleton clusters survive to the final state.

use thiserror::Error;

use crate::document::{mention_order_cmp, Clustering, Document, Span};
use crate::transition::{Action, State, SystemKind, TransitionError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("gold span {0} is out of bounds or crosses a sentence boundary")]
    BadGoldSpan(Span),
    #[error("oracle desynchronized: {0} has no live cluster")]
    Desync(Span),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

/// One oracle step: the state a sentence was entered with and the actions
/// emitted for it, terminated by `Shift`.
#[derive(Debug, Clone)]
pub struct OracleStep<'d> {
    pub sentence: usize,
    pub actions: Vec<Action>,
    pub state_before: State<'d>,
}

/// A gold mention with its cluster id, in document processing order.
struct GoldMention {
    span: Span,
    cluster: usize,
    sentence: usize,
}

fn gold_mentions(doc: &Document, gold: &Clustering) -> Result<Vec<GoldMention>, OracleError> {
    let mut all = Vec::with_capacity(gold.mention_count());
    for (idx, cluster) in gold.clusters().iter().enumerate() {
        for &span in cluster {
            let sentence = doc
                .sentence_of_span(span)
                .ok_or(OracleError::BadGoldSpan(span))?;
            all.push(GoldMention {
                span,
                cluster: idx,
                sentence,
            });
        }
    }
    all.sort_by(|a, b| mention_order_cmp(&a.span, &b.span));
    Ok(all)
}

/// The actions the oracle emits for the focus sentence of `state`, given the
/// full gold clustering. The sequence always ends in `Shift`.
pub fn oracle_actions(
    system: SystemKind,
    state: &State<'_>,
    gold: &Clustering,
) -> Result<Vec<Action>, OracleError> {
    let doc = state.doc();
    let i = state.focus();
    let mentions = gold_mentions(doc, gold)?;
    let mut actions = Vec::new();

    for (pos, m) in mentions.iter().enumerate() {
        if m.sentence != i {
            continue;
        }
        // Members of the same gold cluster strictly earlier in processing
        // order; recency is position in that order.
        let earlier: Vec<&GoldMention> = mentions[..pos]
            .iter()
            .filter(|e| e.cluster == m.cluster)
            .collect();

        if earlier.is_empty() {
            if system == SystemKind::MentionLinkAppend {
                actions.push(Action::AddMention { source: m.span });
            }
            continue;
        }

        let prior_sentence_members = earlier.iter().filter(|e| e.sentence < i).count();
        if system != SystemKind::LinkOnly && prior_sentence_members >= 2 {
            let anchor = earlier
                .iter()
                .rev()
                .find(|e| e.sentence < i)
                .expect("counted above");
            let k = state
                .clustering()
                .cluster_of(anchor.span)
                .ok_or(OracleError::Desync(anchor.span))?;
            actions.push(Action::Append {
                source: m.span,
                cluster: k,
            });
        } else {
            let target = earlier.last().expect("non-empty").span;
            actions.push(Action::Link {
                source: m.span,
                target,
            });
        }
    }

    actions.push(Action::Shift);
    Ok(actions)
}

/// Runs the oracle over a whole document, returning one step per sentence.
/// Replaying the steps reconstructs the gold clustering: exactly under
/// `MentionLinkAppend`, modulo singleton clusters otherwise.
pub fn oracle_run<'d>(
    system: SystemKind,
    doc: &'d Document,
    gold: &Clustering,
) -> Result<Vec<OracleStep<'d>>, OracleError> {
    let mut steps = Vec::with_capacity(doc.sentence_count());
    let mut state = State::initial(doc);
    for sentence in 1..=doc.sentence_count() {
        let actions = oracle_actions(system, &state, gold)?;
        let state_before = state.clone();
        for action in &actions {
            state = state.apply(system, action)?;
        }
        steps.push(OracleStep {
            sentence,
            actions,
            state_before,
        });
    }
    Ok(steps)
}

/// The clustering an oracle replay is expected to end in.
pub fn expected_final(system: SystemKind, gold: &Clustering) -> Clustering {
    if system.keeps_singletons() {
        gold.clone()
    } else {
        gold.without_singletons()
    }
}
