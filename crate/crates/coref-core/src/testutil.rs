//! Shared fixtures for unit tests.

use std::collections::BTreeSet;

use crate::document::{Clustering, Document, Span};

pub(crate) fn spans(pairs: &[(usize, usize)]) -> BTreeSet<Span> {
    pairs.iter().map(|&(a, b)| Span::new(a, b)).collect()
}

/// The four-sentence restaurant dialogue: 32 words, sentence ends at
/// 13, 20, 29, 32, two speakers.
pub(crate) fn dialogue_doc() -> Document {
    let words: Vec<String> = "I still have n't gone to that fresh French restaurant by your house \
         I 'm like dying to go there \
         You mean the one right next to the apartment \
         yeah yeah yeah"
        .split_whitespace()
        .map(String::from)
        .collect();
    Document::new(
        "dialogue",
        words,
        vec![13, 20, 29, 32],
        ["Speaker-A", "Speaker-A", "Speaker-B", "Speaker-B"]
            .map(String::from)
            .to_vec(),
        None,
    )
    .unwrap()
}

/// Gold clusters of the dialogue: the speakers' "I/You" chain, the house, and
/// the restaurant.
pub(crate) fn dialogue_gold() -> Clustering {
    Clustering::from_clusters([
        spans(&[(1, 1), (14, 14), (21, 21)]),
        spans(&[(12, 13), (28, 29)]),
        spans(&[(7, 13), (23, 29)]),
    ])
    .unwrap()
}
