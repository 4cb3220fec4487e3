//! The coreference transition system: states, actions, and the transition
//! function shared by the three system variants.
//!
//! A state is a focus sentence index paired with the clustering built so far.
//! Actions mutate the clustering (`Link`, `Append`, `AddMention`) or advance
//! the focus (`Shift`). The variants differ only in which action kinds they
//! admit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{Clustering, Document, Span};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    #[error("action {action} is not allowed by the {system} system in the current state")]
    Disallowed { system: SystemKind, action: String },
    #[error("focus index {focus} out of range 1..={max}")]
    FocusOutOfRange { focus: usize, max: usize },
    #[error("span {0} lies beyond sentence {1}")]
    SpanBeyondFocus(Span, usize),
    #[error("cannot shift past the final state")]
    PastFinal,
    #[error("sentence {sentence} action sequence does not end in SHIFT")]
    MissingShift { sentence: usize },
    #[error("expected {expected} per-sentence action sequences, got {got}")]
    StreamCount { expected: usize, got: usize },
    #[error("sentence {sentence}, action {ordinal}: {source}")]
    Episode {
        sentence: usize,
        ordinal: usize,
        source: Box<TransitionError>,
    },
}

/// Which transition system is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    LinkAppend,
    LinkOnly,
    MentionLinkAppend,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [
        SystemKind::LinkAppend,
        SystemKind::LinkOnly,
        SystemKind::MentionLinkAppend,
    ];

    /// Whether the action kind belongs to this system's action set.
    pub fn admits(&self, action: &Action) -> bool {
        match action {
            Action::Shift | Action::Link { .. } => true,
            Action::Append { .. } => !matches!(self, SystemKind::LinkOnly),
            Action::AddMention { .. } => matches!(self, SystemKind::MentionLinkAppend),
        }
    }

    /// Whether inputs encoded for this system carry cluster bracket
    /// annotations.
    pub fn annotates_clusters(&self) -> bool {
        !matches!(self, SystemKind::LinkOnly)
    }

    /// Whether final clusterings may contain singleton clusters.
    pub fn keeps_singletons(&self) -> bool {
        matches!(self, SystemKind::MentionLinkAppend)
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SystemKind::LinkAppend => "link-append",
            SystemKind::LinkOnly => "link-only",
            SystemKind::MentionLinkAppend => "mention-link-append",
        })
    }
}

impl std::str::FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "link-append" => Ok(SystemKind::LinkAppend),
            "link-only" => Ok(SystemKind::LinkOnly),
            "mention-link-append" => Ok(SystemKind::MentionLinkAppend),
            other => Err(format!(
                "unknown system {other:?} (expected link-append, link-only, or mention-link-append)"
            )),
        }
    }
}

/// One transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// Link a focus-sentence mention to an earlier mention.
    Link { source: Span, target: Span },
    /// Attach a focus-sentence mention to the 1-based cluster `cluster`.
    Append { source: Span, cluster: usize },
    /// Create a singleton cluster for a focus-sentence mention.
    AddMention { source: Span },
    /// Advance to the next sentence.
    Shift,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Link { source, target } => write!(f, "link {source} -> {target}"),
            Action::Append { source, cluster } => write!(f, "append {source} -> [{cluster}"),
            Action::AddMention { source } => write!(f, "mention {source}"),
            Action::Shift => f.write_str("shift"),
        }
    }
}

/// A pair of focus sentence index and clustering, advancing over a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State<'d> {
    doc: &'d Document,
    focus: usize,
    clustering: Clustering,
}

impl<'d> State<'d> {
    /// The initial state: focus on sentence 1 with an empty clustering.
    pub fn initial(doc: &'d Document) -> Self {
        State {
            doc,
            focus: 1,
            clustering: Clustering::new(),
        }
    }

    /// Builds a state, validating that the clustering only covers sentences
    /// up to the focus.
    pub fn new(
        doc: &'d Document,
        focus: usize,
        clustering: Clustering,
    ) -> Result<Self, TransitionError> {
        let m = doc.sentence_count();
        if focus < 1 || focus > m + 1 {
            return Err(TransitionError::FocusOutOfRange { focus, max: m + 1 });
        }
        let horizon = focus.min(m);
        for span in clustering.spans() {
            if !doc.in_sentence_prefix(span, horizon) {
                return Err(TransitionError::SpanBeyondFocus(span, horizon));
            }
        }
        Ok(State {
            doc,
            focus,
            clustering,
        })
    }

    pub fn doc(&self) -> &'d Document {
        self.doc
    }

    pub fn focus(&self) -> usize {
        self.focus
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    pub fn into_clustering(self) -> Clustering {
        self.clustering
    }

    pub fn is_final(&self) -> bool {
        self.focus == self.doc.sentence_count() + 1
    }

    /// Applies one action, returning the successor state. The action must be
    /// allowed under `system` in this state.
    pub fn apply(&self, system: SystemKind, action: &Action) -> Result<State<'d>, TransitionError> {
        if !is_allowed(system, self, action) {
            return Err(TransitionError::Disallowed {
                system,
                action: action.to_string(),
            });
        }
        let mut next = self.clone();
        match *action {
            Action::Link { source, target } => {
                next.clustering.link(source, target);
            }
            Action::Append { source, cluster } => {
                next.clustering.append(source, cluster);
            }
            Action::AddMention { source } => {
                next.clustering.add_mention(source);
            }
            Action::Shift => {
                next.focus += 1;
            }
        }
        debug_assert!(next.clustering.is_disjoint());
        Ok(next)
    }
}

/// Whether `action` is applicable: its kind is in the system's action set and
/// its span and index constraints hold in `state`.
///
/// Beyond the membership constraints, two degenerate shapes are rejected so
/// that applying any allowed action preserves the clustering invariants:
/// self-links, and appends whose source already sits in a different cluster.
pub fn is_allowed(system: SystemKind, state: &State<'_>, action: &Action) -> bool {
    if !system.admits(action) {
        return false;
    }
    if state.is_final() {
        return false;
    }
    let doc = state.doc();
    let i = state.focus();
    match *action {
        Action::Shift => true,
        Action::Link { source, target } => {
            source != target && doc.in_sentence(source, i) && doc.in_sentence_prefix(target, i)
        }
        Action::Append { source, cluster } => {
            doc.in_sentence(source, i)
                && cluster >= 1
                && cluster <= state.clustering().len()
                && state
                    .clustering()
                    .cluster_of(source)
                    .is_none_or(|k| k == cluster)
        }
        Action::AddMention { source } => doc.in_sentence(source, i),
    }
}

/// Folds per-sentence action sequences over a document from the initial
/// state. Each sentence's sequence must end in `Shift`; errors carry the
/// sentence index and 1-based action ordinal where they occurred.
pub fn run_episode<'d>(
    system: SystemKind,
    doc: &'d Document,
    streams: &[Vec<Action>],
) -> Result<State<'d>, TransitionError> {
    let m = doc.sentence_count();
    if streams.len() != m {
        return Err(TransitionError::StreamCount {
            expected: m,
            got: streams.len(),
        });
    }
    let mut state = State::initial(doc);
    for (idx, actions) in streams.iter().enumerate() {
        let sentence = idx + 1;
        if actions.last() != Some(&Action::Shift) {
            return Err(TransitionError::MissingShift { sentence });
        }
        for (ordinal, action) in actions.iter().enumerate() {
            state = state
                .apply(system, action)
                .map_err(|source| TransitionError::Episode {
                    sentence,
                    ordinal: ordinal + 1,
                    source: Box::new(source),
                })?;
        }
    }
    debug_assert!(state.is_final());
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::LinkCase;
    use std::collections::BTreeSet;

    fn spans(pairs: &[(usize, usize)]) -> BTreeSet<Span> {
        pairs.iter().map(|&(a, b)| Span::new(a, b)).collect()
    }

    /// 20 words split into sentences ending at 13 and 20, mirroring a short
    /// two-sentence dialogue turn.
    fn doc() -> Document {
        let words: Vec<String> = (1..=20).map(|i| format!("w{i}")).collect();
        Document::new("t", words, vec![13, 20], vec![String::new(); 2], None).unwrap()
    }

    fn state_at<'d>(doc: &'d Document, focus: usize, clusters: &[&[(usize, usize)]]) -> State<'d> {
        let clustering =
            Clustering::from_clusters(clusters.iter().map(|c| spans(c))).unwrap();
        State::new(doc, focus, clustering).unwrap()
    }

    #[test]
    fn link_only_rejects_append() {
        let d = doc();
        let state = state_at(&d, 1, &[&[(1, 1), (2, 2)]]);
        let append = Action::Append {
            source: Span::new(3, 3),
            cluster: 1,
        };
        assert!(!is_allowed(SystemKind::LinkOnly, &state, &append));
        assert!(is_allowed(SystemKind::LinkAppend, &state, &append));
    }

    #[test]
    fn shift_allowed_in_any_non_final_state() {
        let d = doc();
        for focus in 1..=2 {
            let state = state_at(&d, focus, &[]);
            for system in SystemKind::ALL {
                assert!(is_allowed(system, &state, &Action::Shift));
            }
        }
        let final_state = state_at(&d, 3, &[]);
        assert!(!is_allowed(SystemKind::LinkAppend, &final_state, &Action::Shift));
    }

    #[test]
    fn append_cluster_index_out_of_range() {
        let d = doc();
        let state = state_at(&d, 1, &[&[(1, 1), (2, 2)]]);
        let action = Action::Append {
            source: Span::new(3, 3),
            cluster: 2,
        };
        assert!(!is_allowed(SystemKind::LinkAppend, &state, &action));
    }

    #[test]
    fn append_source_in_other_cluster_disallowed() {
        let d = doc();
        let state = state_at(&d, 1, &[&[(1, 1), (2, 2)], &[(3, 3), (4, 4)]]);
        let action = Action::Append {
            source: Span::new(3, 3),
            cluster: 1,
        };
        assert!(!is_allowed(SystemKind::LinkAppend, &state, &action));
        // Re-appending to its own cluster stays legal (and is a no-op).
        let own = Action::Append {
            source: Span::new(3, 3),
            cluster: 2,
        };
        assert!(is_allowed(SystemKind::LinkAppend, &state, &own));
    }

    #[test]
    fn self_link_disallowed() {
        let d = doc();
        let state = state_at(&d, 1, &[]);
        let action = Action::Link {
            source: Span::new(2, 2),
            target: Span::new(2, 2),
        };
        assert!(!is_allowed(SystemKind::LinkAppend, &state, &action));
    }

    #[test]
    fn link_new_cluster() {
        let d = doc();
        let state = state_at(&d, 2, &[]);
        let next = state
            .apply(
                SystemKind::LinkAppend,
                &Action::Link {
                    source: Span::new(17, 17),
                    target: Span::new(2, 2),
                },
            )
            .unwrap();
        assert_eq!(
            next.clustering().clusters(),
            &[spans(&[(2, 2), (17, 17)])]
        );
    }

    #[test]
    fn link_same_cluster_is_noop() {
        let d = doc();
        let state = state_at(&d, 2, &[&[(2, 2), (17, 17)]]);
        let next = state
            .apply(
                SystemKind::LinkAppend,
                &Action::Link {
                    source: Span::new(17, 17),
                    target: Span::new(2, 2),
                },
            )
            .unwrap();
        assert_eq!(next.clustering(), state.clustering());
    }

    #[test]
    fn link_merges_into_lower_indexed_cluster() {
        let d = doc();
        let state = state_at(&d, 1, &[&[(1, 1), (2, 2)], &[(3, 3), (4, 4)], &[(5, 5), (6, 6)]]);
        let next = state
            .apply(
                SystemKind::LinkAppend,
                &Action::Link {
                    source: Span::new(2, 2),
                    target: Span::new(3, 3),
                },
            )
            .unwrap();
        assert_eq!(
            next.clustering().clusters(),
            &[spans(&[(1, 1), (2, 2), (3, 3), (4, 4)]), spans(&[(5, 5), (6, 6)])]
        );
        // The cluster after the removed one shifted down a position.
        assert_eq!(next.clustering().cluster_of(Span::new(5, 5)), Some(2));
    }

    #[test]
    fn all_five_link_cases() {
        let d = doc();
        let base = state_at(&d, 1, &[&[(1, 1), (2, 2)], &[(3, 3), (4, 4)]]);
        let k = base.clustering();
        let unclustered_a = Span::new(10, 10);
        let unclustered_b = Span::new(11, 11);

        assert_eq!(k.link_case(unclustered_a, unclustered_b), LinkCase::NewCluster);
        assert_eq!(k.link_case(unclustered_a, Span::new(1, 1)), LinkCase::JoinsTarget);
        assert_eq!(k.link_case(Span::new(1, 1), unclustered_a), LinkCase::JoinsSource);
        assert_eq!(k.link_case(Span::new(1, 1), Span::new(3, 3)), LinkCase::Merges);
        assert_eq!(k.link_case(Span::new(1, 1), Span::new(2, 2)), LinkCase::NoChange);

        // Applying each case yields the expected cluster multiset.
        let apply_link = |source, target| {
            let mut c = k.clone();
            c.link(source, target);
            c
        };
        assert_eq!(
            apply_link(unclustered_a, unclustered_b).clusters(),
            &[
                spans(&[(1, 1), (2, 2)]),
                spans(&[(3, 3), (4, 4)]),
                spans(&[(10, 10), (11, 11)])
            ]
        );
        assert_eq!(
            apply_link(unclustered_a, Span::new(1, 1)).clusters(),
            &[spans(&[(1, 1), (2, 2), (10, 10)]), spans(&[(3, 3), (4, 4)])]
        );
        assert_eq!(
            apply_link(Span::new(1, 1), unclustered_a).clusters(),
            &[spans(&[(1, 1), (2, 2), (10, 10)]), spans(&[(3, 3), (4, 4)])]
        );
        assert_eq!(
            apply_link(Span::new(1, 1), Span::new(3, 3)).clusters(),
            &[spans(&[(1, 1), (2, 2), (3, 3), (4, 4)])]
        );
        assert_eq!(apply_link(Span::new(1, 1), Span::new(2, 2)).clusters(), k.clusters());
    }

    #[test]
    fn shift_advances_focus_only() {
        let d = doc();
        let state = state_at(&d, 1, &[&[(1, 1), (2, 2)]]);
        let next = state.apply(SystemKind::LinkOnly, &Action::Shift).unwrap();
        assert_eq!(next.focus(), 2);
        assert_eq!(next.clustering(), state.clustering());
    }

    #[test]
    fn append_is_idempotent() {
        let d = doc();
        let state = state_at(&d, 1, &[&[(1, 1), (2, 2)]]);
        let action = Action::Append {
            source: Span::new(1, 1),
            cluster: 1,
        };
        let next = state.apply(SystemKind::LinkAppend, &action).unwrap();
        assert_eq!(next.clustering(), state.clustering());
    }

    #[test]
    fn add_mention_on_clustered_span_is_noop() {
        let d = doc();
        let state = state_at(&d, 1, &[&[(1, 1), (2, 2)]]);
        let action = Action::AddMention {
            source: Span::new(1, 1),
        };
        let next = state.apply(SystemKind::MentionLinkAppend, &action).unwrap();
        assert_eq!(next.clustering(), state.clustering());
    }

    #[test]
    fn run_episode_all_shifts() {
        let d = doc();
        let streams = vec![vec![Action::Shift], vec![Action::Shift]];
        let state = run_episode(SystemKind::LinkAppend, &d, &streams).unwrap();
        assert_eq!(state.focus(), 3);
        assert!(state.is_final());
        assert!(state.clustering().is_empty());
    }

    #[test]
    fn run_episode_rejects_forward_target() {
        let d = doc();
        let streams = vec![
            vec![
                Action::Link {
                    source: Span::new(1, 1),
                    target: Span::new(14, 14),
                },
                Action::Shift,
            ],
            vec![Action::Shift],
        ];
        let err = run_episode(SystemKind::LinkAppend, &d, &streams).unwrap_err();
        match err {
            TransitionError::Episode { sentence, ordinal, .. } => {
                assert_eq!((sentence, ordinal), (1, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn run_episode_requires_trailing_shift() {
        let d = doc();
        let streams = vec![vec![], vec![Action::Shift]];
        assert!(matches!(
            run_episode(SystemKind::LinkAppend, &d, &streams),
            Err(TransitionError::MissingShift { sentence: 1 })
        ));
    }

    #[test]
    fn state_invariant_rejects_spans_beyond_focus() {
        let d = doc();
        let clustering =
            Clustering::from_clusters([spans(&[(14, 14), (15, 15)])]).unwrap();
        assert!(State::new(&d, 1, clustering.clone()).is_err());
        assert!(State::new(&d, 2, clustering).is_ok());
    }
}
