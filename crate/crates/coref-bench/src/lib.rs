//! Deterministic synthetic corpora for benchmarking the pipeline at sizes
//! the hand-built fixtures do not reach.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use coref_core::conll::CorpusEntry;
use coref_core::document::{Clustering, Document, Span};

const VOCAB: &[&str] = &[
    "the", "a", "house", "ship", "crew", "he", "she", "it", "they", "captain", "storm", "sea",
    "harbor", "sailed", "watched", "said", "old", "young", "quiet", "red",
];

/// A document of `sentences` sentences with 6..=14 words each, plus a gold
/// clustering of entity chains whose mentions never collide.
pub fn synthetic_entry(seed: u64, sentences: usize) -> CorpusEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Vec::new();
    let mut ends = Vec::new();
    let mut speakers = Vec::new();
    for s in 0..sentences {
        let len = rng.random_range(6..=14);
        for _ in 0..len {
            words.push(VOCAB[rng.random_range(0..VOCAB.len())].to_string());
        }
        ends.push(words.len());
        speakers.push(format!("spk{}", s % 3));
    }
    let document = Document::new(
        format!("synth/{seed}"),
        words,
        ends.clone(),
        speakers,
        Some("synth".to_string()),
    )
    .unwrap();

    // One candidate mention per sentence per chain, non-overlapping by
    // construction: chain k takes the k-th word of each sentence.
    let chains = 4.min(sentences);
    let mut clusters: Vec<BTreeSet<Span>> = Vec::new();
    for chain in 0..chains {
        let mut cluster = BTreeSet::new();
        for (s, end) in ends.iter().enumerate() {
            if s % (chain + 1) != 0 {
                continue;
            }
            let start = if s == 0 { 1 } else { ends[s - 1] + 1 };
            let word = start + chain;
            if word <= *end {
                cluster.insert(Span::new(word, word));
            }
        }
        if !cluster.is_empty() {
            clusters.push(cluster);
        }
    }
    let gold = Clustering::from_clusters(clusters).unwrap();
    CorpusEntry {
        document,
        gold,
        part: 0,
    }
}

pub fn synthetic_corpus(documents: usize, sentences: usize) -> Vec<CorpusEntry> {
    (0..documents as u64)
        .map(|seed| synthetic_entry(seed, sentences))
        .collect()
}
