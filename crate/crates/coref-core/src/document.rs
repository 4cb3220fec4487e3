//! Documents, mention spans, and clusterings.
//!
//! A document is a flat token sequence with a sentence segmentation given by
//! inclusive end offsets, plus per-sentence speakers and an optional genre.
//! All word indices are 1-based and inclusive; conversion to 0-based happens
//! only at I/O edges.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("document has no words")]
    Empty,
    #[error("sentence ends must be strictly increasing and finish at the word count (got {0:?} for {1} words)")]
    BadSentenceEnds(Vec<usize>, usize),
    #[error("expected {expected} speakers, got {got}")]
    SpeakerCount { expected: usize, got: usize },
    #[error("word {index} is empty or contains whitespace: {word:?}")]
    BadWord { index: usize, word: String },
    #[error("sentence index {index} out of range 1..={count}")]
    SentenceOutOfRange { index: usize, count: usize },
    #[error("span {0} overlaps two clusters")]
    OverlappingClusters(Span),
}

/// A potential mention: a 1-based inclusive `(start, end)` word-index pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    start: usize,
    end: usize,
}

impl Span {
    /// Panics if `start` is zero or greater than `end`; spans built from
    /// untrusted input must be validated before construction.
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start >= 1 && start <= end, "invalid span ({start},{end})");
        Span { start, end }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

/// Processing order of mentions: ascending end-point, ties broken so that the
/// span with the later start-point comes first. Identical spans compare equal.
pub fn mention_order_cmp(a: &Span, b: &Span) -> Ordering {
    (a.end, Reverse(a.start)).cmp(&(b.end, Reverse(b.start)))
}

/// Sorts spans into mention processing order. The sort is stable.
pub fn mention_order(spans: impl IntoIterator<Item = Span>) -> Vec<Span> {
    let mut out: Vec<Span> = spans.into_iter().collect();
    out.sort_by(mention_order_cmp);
    out
}

/// A tokenized document with sentence segmentation, speakers, and genre.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    doc_key: String,
    words: Vec<String>,
    sentence_ends: Vec<usize>,
    speakers: Vec<String>,
    genre: Option<String>,
}

impl Document {
    pub fn new(
        doc_key: impl Into<String>,
        words: Vec<String>,
        sentence_ends: Vec<usize>,
        speakers: Vec<String>,
        genre: Option<String>,
    ) -> Result<Self, DocumentError> {
        if words.is_empty() {
            return Err(DocumentError::Empty);
        }
        let n = words.len();
        let increasing = sentence_ends.windows(2).all(|w| w[0] < w[1]);
        if sentence_ends.is_empty()
            || !increasing
            || sentence_ends[0] < 1
            || *sentence_ends.last().unwrap() != n
        {
            return Err(DocumentError::BadSentenceEnds(sentence_ends, n));
        }
        if speakers.len() != sentence_ends.len() {
            return Err(DocumentError::SpeakerCount {
                expected: sentence_ends.len(),
                got: speakers.len(),
            });
        }
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(DocumentError::BadWord {
                    index: i + 1,
                    word: w.clone(),
                });
            }
        }
        Ok(Document {
            doc_key: doc_key.into(),
            words,
            sentence_ends,
            speakers,
            genre,
        })
    }

    pub fn doc_key(&self) -> &str {
        &self.doc_key
    }

    /// Number of words `n`.
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Number of sentences `m`.
    pub fn sentence_count(&self) -> usize {
        self.sentence_ends.len()
    }

    /// The word at a 1-based index.
    pub fn word(&self, index: usize) -> &str {
        &self.words[index - 1]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn genre(&self) -> Option<&str> {
        self.genre.as_deref()
    }

    pub fn speaker(&self, sentence: usize) -> &str {
        &self.speakers[sentence - 1]
    }

    /// Inclusive word-index bounds `(first, last)` of a sentence.
    pub fn sentence_bounds(&self, sentence: usize) -> Result<(usize, usize), DocumentError> {
        let m = self.sentence_count();
        if sentence < 1 || sentence > m {
            return Err(DocumentError::SentenceOutOfRange {
                index: sentence,
                count: m,
            });
        }
        let first = if sentence == 1 {
            1
        } else {
            self.sentence_ends[sentence - 2] + 1
        };
        Ok((first, self.sentence_ends[sentence - 1]))
    }

    /// The sentence containing a 1-based word index.
    pub fn sentence_of_word(&self, word: usize) -> Option<usize> {
        if word < 1 || word > self.word_count() {
            return None;
        }
        Some(self.sentence_ends.partition_point(|&e| e < word) + 1)
    }

    /// The sentence fully containing `span`, or `None` when the span is out of
    /// bounds or crosses a sentence boundary.
    pub fn sentence_of_span(&self, span: Span) -> Option<usize> {
        let s = self.sentence_of_word(span.start())?;
        let (_, last) = self.sentence_bounds(s).ok()?;
        (span.end() <= last).then_some(s)
    }

    /// All subspans of sentence `i`: every `(a, b)` with the sentence's bounds
    /// containing `a <= b`.
    pub fn potential_mentions(&self, sentence: usize) -> Result<Vec<Span>, DocumentError> {
        let (first, last) = self.sentence_bounds(sentence)?;
        let mut out = Vec::with_capacity((last - first + 1) * (last - first + 2) / 2);
        for a in first..=last {
            for b in a..=last {
                out.push(Span::new(a, b));
            }
        }
        Ok(out)
    }

    /// Part of `M_i`: `span` lies entirely within sentence `i`.
    pub fn in_sentence(&self, span: Span, sentence: usize) -> bool {
        self.sentence_of_span(span) == Some(sentence)
    }

    /// Part of `M_{<=i}`: `span` lies entirely within one of sentences `1..=i`.
    pub fn in_sentence_prefix(&self, span: Span, sentence: usize) -> bool {
        matches!(self.sentence_of_span(span), Some(s) if s <= sentence)
    }
}

/// Which of the five link semantics a `Link` application takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkCase {
    /// Neither endpoint clustered: a new cluster is appended.
    NewCluster,
    /// Only the target clustered: the source joins its cluster.
    JoinsTarget,
    /// Only the source clustered: the target joins its cluster.
    JoinsSource,
    /// Both clustered, in different clusters: merged into the older one.
    Merges,
    /// Both already in the same cluster: no change.
    NoChange,
}

impl LinkCase {
    /// 1-based case number, matching the order above.
    pub fn index(&self) -> usize {
        match self {
            LinkCase::NewCluster => 1,
            LinkCase::JoinsTarget => 2,
            LinkCase::JoinsSource => 3,
            LinkCase::Merges => 4,
            LinkCase::NoChange => 5,
        }
    }
}

/// An ordered sequence of pairwise-disjoint span sets. Order is creation
/// order; the 1-based position doubles as the cluster number used in bracket
/// annotations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clustering {
    clusters: Vec<BTreeSet<Span>>,
}

impl Clustering {
    pub fn new() -> Self {
        Clustering::default()
    }

    /// Builds a clustering, rejecting any span present in two clusters.
    pub fn from_clusters(
        clusters: impl IntoIterator<Item = BTreeSet<Span>>,
    ) -> Result<Self, DocumentError> {
        let clustering = Clustering {
            clusters: clusters.into_iter().filter(|c| !c.is_empty()).collect(),
        };
        match clustering.find_overlap() {
            Some(span) => Err(DocumentError::OverlappingClusters(span)),
            None => Ok(clustering),
        }
    }

    pub fn clusters(&self) -> &[BTreeSet<Span>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// 1-based index of the cluster containing `span`, if any. Disjointness
    /// makes the answer unique.
    pub fn cluster_of(&self, span: Span) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.contains(&span))
            .map(|i| i + 1)
    }

    pub fn contains(&self, span: Span) -> bool {
        self.cluster_of(span).is_some()
    }

    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        self.clusters.iter().flat_map(|c| c.iter().copied())
    }

    /// Total number of mentions across clusters.
    pub fn mention_count(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }

    /// Clusters of size >= 2, original order preserved.
    pub fn without_singletons(&self) -> Clustering {
        Clustering {
            clusters: self
                .clusters
                .iter()
                .filter(|c| c.len() >= 2)
                .cloned()
                .collect(),
        }
    }

    /// Equality as a set of clusters, ignoring creation order.
    pub fn same_clusters(&self, other: &Clustering) -> bool {
        let mut a: Vec<_> = self.clusters.iter().collect();
        let mut b: Vec<_> = other.clusters.iter().collect();
        a.sort();
        b.sort();
        a == b
    }

    pub fn is_disjoint(&self) -> bool {
        self.find_overlap().is_none()
    }

    fn find_overlap(&self) -> Option<Span> {
        let mut seen = BTreeSet::new();
        for cluster in &self.clusters {
            for span in cluster {
                if !seen.insert(*span) {
                    return Some(*span);
                }
            }
        }
        None
    }

    /// The case `link` would take for this pair, without applying it.
    pub fn link_case(&self, source: Span, target: Span) -> LinkCase {
        match (self.cluster_of(source), self.cluster_of(target)) {
            (None, None) => LinkCase::NewCluster,
            (None, Some(_)) => LinkCase::JoinsTarget,
            (Some(_), None) => LinkCase::JoinsSource,
            (Some(a), Some(b)) if a == b => LinkCase::NoChange,
            (Some(_), Some(_)) => LinkCase::Merges,
        }
    }

    /// Adds a coreference link between two mentions. On a merge the
    /// lower-indexed cluster survives and later clusters shift down one slot.
    pub(crate) fn link(&mut self, source: Span, target: Span) -> LinkCase {
        let case = self.link_case(source, target);
        match case {
            LinkCase::NewCluster => {
                let mut cluster = BTreeSet::new();
                cluster.insert(source);
                cluster.insert(target);
                self.clusters.push(cluster);
            }
            LinkCase::JoinsTarget => {
                let k = self.cluster_of(target).unwrap();
                self.clusters[k - 1].insert(source);
            }
            LinkCase::JoinsSource => {
                let k = self.cluster_of(source).unwrap();
                self.clusters[k - 1].insert(target);
            }
            LinkCase::Merges => {
                let a = self.cluster_of(source).unwrap();
                let b = self.cluster_of(target).unwrap();
                let (keep, gone) = if a < b { (a, b) } else { (b, a) };
                let moved = self.clusters.remove(gone - 1);
                self.clusters[keep - 1].extend(moved);
            }
            LinkCase::NoChange => {}
        }
        case
    }

    /// Adds `span` to the 1-based cluster `k`. Set semantics: re-adding a
    /// member is a no-op.
    pub(crate) fn append(&mut self, span: Span, k: usize) {
        self.clusters[k - 1].insert(span);
    }

    /// Creates a singleton cluster for `span` unless it is already clustered.
    /// Returns whether a cluster was created.
    pub(crate) fn add_mention(&mut self, span: Span) -> bool {
        if self.contains(span) {
            return false;
        }
        let mut cluster = BTreeSet::new();
        cluster.insert(span);
        self.clusters.push(cluster);
        true
    }
}

impl FromIterator<BTreeSet<Span>> for Clustering {
    /// Builder for trusted inputs; panics on overlap.
    fn from_iter<T: IntoIterator<Item = BTreeSet<Span>>>(iter: T) -> Self {
        Clustering::from_clusters(iter).expect("overlapping clusters")
    }
}
