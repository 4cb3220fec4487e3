//! Coreference evaluation: MUC, B³, CEAF with the φ4 similarity, and their
//! F1 average — the CoNLL score.
//!
//! Each metric is computed from numerator/denominator pairs so corpus-level
//! scores can micro-average across documents before dividing. Singleton
//! handling is controlled separately for the prediction and the evaluation
//! side.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conll::filter_singletons;
use crate::document::{Clustering, Span};

/// Precision, recall, and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Raw sufficient statistics of one metric over one or more documents.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PrfCounts {
    pub precision_num: f64,
    pub precision_den: f64,
    pub recall_num: f64,
    pub recall_den: f64,
}

impl PrfCounts {
    pub fn add(&mut self, other: &PrfCounts) {
        self.precision_num += other.precision_num;
        self.precision_den += other.precision_den;
        self.recall_num += other.recall_num;
        self.recall_den += other.recall_den;
    }

    /// Degenerate denominators yield zero.
    pub fn prf(&self) -> Prf {
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let precision = ratio(self.precision_num, self.precision_den);
        let recall = ratio(self.recall_num, self.recall_den);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }

    /// The same counts with the roles of the two sides exchanged.
    pub fn swap(self) -> PrfCounts {
        PrfCounts {
            precision_num: self.recall_num,
            precision_den: self.recall_den,
            recall_num: self.precision_num,
            recall_den: self.precision_den,
        }
    }
}

fn span_to_cluster(clustering: &Clustering) -> BTreeMap<Span, usize> {
    let mut map = BTreeMap::new();
    for (idx, cluster) in clustering.clusters().iter().enumerate() {
        for span in cluster {
            map.insert(*span, idx);
        }
    }
    map
}

/// MUC recall numerator/denominator for `gold` against `pred`; link-based.
/// A mention missing from the other side counts as its own partition cell.
fn muc_side(gold: &Clustering, pred: &Clustering) -> (f64, f64) {
    let pred_of = span_to_cluster(pred);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in gold.clusters() {
        let mut partitions: BTreeSet<Option<usize>> = BTreeSet::new();
        let mut missing = 0usize;
        for span in cluster {
            match pred_of.get(span) {
                Some(k) => {
                    partitions.insert(Some(*k));
                }
                None => missing += 1,
            }
        }
        let parts = partitions.len() + missing;
        num += (cluster.len() - parts) as f64;
        den += (cluster.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(gold: &Clustering, pred: &Clustering) -> PrfCounts {
    let (recall_num, recall_den) = muc_side(gold, pred);
    let (precision_num, precision_den) = muc_side(pred, gold);
    PrfCounts {
        precision_num,
        precision_den,
        recall_num,
        recall_den,
    }
}

pub fn muc(gold: &Clustering, pred: &Clustering) -> Prf {
    muc_counts(gold, pred).prf()
}

/// B³ recall numerator/denominator for `gold` against `pred`; per-mention.
/// Mentions absent from the other side contribute zero to the numerator.
fn b_cubed_side(gold: &Clustering, pred: &Clustering) -> (f64, f64) {
    let pred_of = span_to_cluster(pred);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in gold.clusters() {
        for span in cluster {
            den += 1.0;
            if let Some(&k) = pred_of.get(span) {
                let overlap = cluster
                    .iter()
                    .filter(|s| pred_of.get(s) == Some(&k))
                    .count();
                num += overlap as f64 / cluster.len() as f64;
            }
        }
    }
    (num, den)
}

pub fn b_cubed_counts(gold: &Clustering, pred: &Clustering) -> PrfCounts {
    let (recall_num, recall_den) = b_cubed_side(gold, pred);
    let (precision_num, precision_den) = b_cubed_side(pred, gold);
    PrfCounts {
        precision_num,
        precision_den,
        recall_num,
        recall_den,
    }
}

pub fn b_cubed(gold: &Clustering, pred: &Clustering) -> Prf {
    b_cubed_counts(gold, pred).prf()
}

/// Maximum-total-similarity one-to-one assignment between rows and columns,
/// by shortest augmenting paths over dual potentials. Exact, O(n³).
pub fn max_assignment(similarity: &[Vec<f64>]) -> f64 {
    let rows = similarity.len();
    if rows == 0 {
        return 0.0;
    }
    let cols = similarity[0].len();
    if cols == 0 {
        return 0.0;
    }
    // Square minimization problem; padding cells cost 0.
    let n = rows.max(cols);
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            -similarity[r][c]
        } else {
            0.0
        }
    };

    // col_of_row / row_of_col hold the current partial matching.
    let mut row_of_col = vec![usize::MAX; n + 1];
    let mut row_potential = vec![0.0f64; n];
    let mut col_potential = vec![0.0f64; n + 1];

    for row in 0..n {
        let mut col = n; // virtual column that `row` enters through
        row_of_col[col] = row;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut previous = vec![usize::MAX; n + 1];
        let mut visited = vec![false; n + 1];

        while row_of_col[col] != usize::MAX {
            visited[col] = true;
            let r = row_of_col[col];
            let mut delta = f64::INFINITY;
            let mut next_col = 0;
            for c in 0..n {
                if visited[c] {
                    continue;
                }
                let reduced = cost(r, c) - row_potential[r] - col_potential[c];
                if reduced < min_to[c] {
                    min_to[c] = reduced;
                    previous[c] = col;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    next_col = c;
                }
            }
            for c in 0..=n {
                if visited[c] {
                    row_potential[row_of_col[c]] += delta;
                    col_potential[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            col = next_col;
        }
        // Unwind the augmenting path.
        while col != n {
            let prev = previous[col];
            row_of_col[col] = row_of_col[prev];
            col = prev;
        }
    }

    let mut total = 0.0;
    for c in 0..n {
        let r = row_of_col[c];
        if r < rows && c < cols {
            total += similarity[r][c];
        }
    }
    total
}

fn phi4(a: &BTreeSet<Span>, b: &BTreeSet<Span>) -> f64 {
    let overlap = a.intersection(b).count();
    2.0 * overlap as f64 / (a.len() + b.len()) as f64
}

pub fn ceaf_phi4_counts(gold: &Clustering, pred: &Clustering) -> PrfCounts {
    let similarity: Vec<Vec<f64>> = gold
        .clusters()
        .iter()
        .map(|g| pred.clusters().iter().map(|p| phi4(g, p)).collect())
        .collect();
    let total = if gold.is_empty() || pred.is_empty() {
        0.0
    } else {
        max_assignment(&similarity)
    };
    PrfCounts {
        precision_num: total,
        precision_den: pred.len() as f64,
        recall_num: total,
        recall_den: gold.len() as f64,
    }
}

/// CEAF with the φ4 cluster similarity under the optimal one-to-one cluster
/// alignment.
pub fn ceaf_phi4(gold: &Clustering, pred: &Clustering) -> Prf {
    ceaf_phi4_counts(gold, pred).prf()
}

/// Whether singletons are kept on each side of the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingletonPolicy {
    Include,
    Exclude,
}

impl SingletonPolicy {
    fn apply(&self, clustering: &Clustering) -> Clustering {
        match self {
            SingletonPolicy::Include => clustering.clone(),
            SingletonPolicy::Exclude => filter_singletons(clustering),
        }
    }

    pub fn letter(&self) -> char {
        match self {
            SingletonPolicy::Include => 'Y',
            SingletonPolicy::Exclude => 'N',
        }
    }
}

impl std::str::FromStr for SingletonPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "include" | "Y" | "y" => Ok(SingletonPolicy::Include),
            "exclude" | "N" | "n" => Ok(SingletonPolicy::Exclude),
            other => Err(format!("unknown singleton policy {other:?}")),
        }
    }
}

/// Singleton handling for the prediction (P) and evaluation (E) sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingletonMode {
    pub prediction: SingletonPolicy,
    pub evaluation: SingletonPolicy,
}

impl SingletonMode {
    pub fn new(prediction: SingletonPolicy, evaluation: SingletonPolicy) -> Self {
        SingletonMode {
            prediction,
            evaluation,
        }
    }

    pub const INCLUDE_BOTH: SingletonMode = SingletonMode {
        prediction: SingletonPolicy::Include,
        evaluation: SingletonPolicy::Include,
    };

    pub const EXCLUDE_BOTH: SingletonMode = SingletonMode {
        prediction: SingletonPolicy::Exclude,
        evaluation: SingletonPolicy::Exclude,
    };
}

impl std::fmt::Display for SingletonMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "P={} E={}",
            self.prediction.letter(),
            self.evaluation.letter()
        )
    }
}

/// All three metrics plus their F1 average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub muc: Prf,
    pub b3: Prf,
    pub ceaf4: Prf,
    pub avg_f1: f64,
    pub mode: SingletonMode,
}

impl ScoreReport {
    /// Machine-readable `key=value` lines.
    pub fn machine_lines(&self) -> String {
        let mut out = String::new();
        for (name, prf) in [("muc", self.muc), ("b3", self.b3), ("ceaf4", self.ceaf4)] {
            out.push_str(&format!(
                "{name}_p={:.6} {name}_r={:.6} {name}_f1={:.6}\n",
                prf.precision, prf.recall, prf.f1
            ));
        }
        out.push_str(&format!(
            "avg_f1={:.6} singletons_prediction={} singletons_evaluation={}\n",
            self.avg_f1,
            self.mode.prediction.letter(),
            self.mode.evaluation.letter()
        ));
        out
    }
}

impl std::fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<8} {:>7} {:>7} {:>7}",
            format!("[{}]", self.mode),
            "P",
            "R",
            "F1"
        )?;
        for (name, prf) in [("MUC", self.muc), ("B3", self.b3), ("CEAF_p4", self.ceaf4)] {
            writeln!(
                f,
                "{:<8} {:>7.2} {:>7.2} {:>7.2}",
                name,
                100.0 * prf.precision,
                100.0 * prf.recall,
                100.0 * prf.f1
            )?;
        }
        write!(f, "{:<8} {:>23.2}", "Avg F1", 100.0 * self.avg_f1)
    }
}

/// Per-document sufficient statistics for all three metrics.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreCounts {
    pub muc: PrfCounts,
    pub b3: PrfCounts,
    pub ceaf4: PrfCounts,
}

impl ScoreCounts {
    pub fn add(&mut self, other: &ScoreCounts) {
        self.muc.add(&other.muc);
        self.b3.add(&other.b3);
        self.ceaf4.add(&other.ceaf4);
    }

    pub fn report(&self, mode: SingletonMode) -> ScoreReport {
        let muc = self.muc.prf();
        let b3 = self.b3.prf();
        let ceaf4 = self.ceaf4.prf();
        ScoreReport {
            muc,
            b3,
            ceaf4,
            avg_f1: (muc.f1 + b3.f1 + ceaf4.f1) / 3.0,
            mode,
        }
    }
}

/// Counts for one document after singleton filtering, or `None` when the
/// filtered gold has no clusters; such documents are excluded from
/// micro-averages.
pub fn score_counts(
    gold: &Clustering,
    pred: &Clustering,
    mode: SingletonMode,
) -> Option<ScoreCounts> {
    let gold = mode.evaluation.apply(gold);
    let pred = mode.prediction.apply(pred);
    if gold.is_empty() {
        return None;
    }
    Some(ScoreCounts {
        muc: muc_counts(&gold, &pred),
        b3: b_cubed_counts(&gold, &pred),
        ceaf4: ceaf_phi4_counts(&gold, &pred),
    })
}

/// Scores one document pair.
pub fn conll_score(gold: &Clustering, pred: &Clustering, mode: SingletonMode) -> ScoreReport {
    score_counts(gold, pred, mode)
        .unwrap_or_default()
        .report(mode)
}

/// Micro-averaged corpus score: numerators and denominators are summed over
/// documents before dividing.
pub fn conll_score_corpus<'a>(
    pairs: impl IntoIterator<Item = (&'a Clustering, &'a Clustering)>,
    mode: SingletonMode,
) -> ScoreReport {
    let mut total = ScoreCounts::default();
    for (gold, pred) in pairs {
        if let Some(counts) = score_counts(gold, pred, mode) {
            total.add(&counts);
        }
    }
    total.report(mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Clustering;
    use crate::testutil::spans;

    const EPS: f64 = 1e-9;

    fn clustering(clusters: &[&[(usize, usize)]]) -> Clustering {
        Clustering::from_clusters(clusters.iter().map(|c| spans(c))).unwrap()
    }

    fn assert_prf(got: Prf, p: f64, r: f64, f1: f64) {
        assert!((got.precision - p).abs() < EPS, "precision {got:?}");
        assert!((got.recall - r).abs() < EPS, "recall {got:?}");
        assert!((got.f1 - f1).abs() < EPS, "f1 {got:?}");
    }

    #[test]
    fn muc_identity() {
        let k = clustering(&[&[(1, 1), (2, 2)]]);
        assert_prf(muc(&k, &k), 1.0, 1.0, 1.0);
    }

    #[test]
    fn muc_partial_cluster() {
        let gold = clustering(&[&[(1, 1), (2, 2), (3, 3)]]);
        let pred = clustering(&[&[(1, 1), (2, 2)]]);
        assert_prf(muc(&gold, &pred), 1.0, 0.5, 2.0 / 3.0);
    }

    #[test]
    fn muc_disjoint() {
        let gold = clustering(&[&[(1, 1), (2, 2)]]);
        let pred = clustering(&[&[(3, 3), (4, 4)]]);
        assert_prf(muc(&gold, &pred), 0.0, 0.0, 0.0);
    }

    #[test]
    fn b_cubed_identity() {
        let k = clustering(&[&[(1, 1), (2, 2)], &[(3, 3)]]);
        assert_prf(b_cubed(&k, &k), 1.0, 1.0, 1.0);
    }

    #[test]
    fn b_cubed_split_cluster() {
        let gold = clustering(&[&[(1, 1), (2, 2), (3, 3), (4, 4)]]);
        let pred = clustering(&[&[(1, 1), (2, 2)], &[(3, 3), (4, 4)]]);
        assert_prf(b_cubed(&gold, &pred), 1.0, 0.5, 2.0 / 3.0);
    }

    #[test]
    fn b_cubed_empty_prediction() {
        let gold = clustering(&[&[(1, 1), (2, 2)]]);
        let pred = Clustering::new();
        let got = b_cubed(&gold, &pred);
        assert_eq!(got.recall, 0.0);
        assert_eq!(got.f1, 0.0);
    }

    #[test]
    fn ceaf_identity() {
        let k = clustering(&[&[(1, 1), (2, 2)], &[(3, 3), (4, 4)]]);
        assert_prf(ceaf_phi4(&k, &k), 1.0, 1.0, 1.0);
    }

    #[test]
    fn ceaf_extra_predicted_cluster() {
        let gold = clustering(&[&[(1, 1), (2, 2)]]);
        let pred = clustering(&[&[(1, 1), (2, 2)], &[(3, 3)]]);
        assert_prf(ceaf_phi4(&gold, &pred), 0.5, 1.0, 2.0 / 3.0);
    }

    #[test]
    fn assignment_prefers_best_total() {
        // Greedy row-wise would pick 0.9 + 0.0; optimum is 0.8 + 0.85.
        let sim = vec![vec![0.9, 0.8], vec![0.85, 0.0]];
        let sim_t = vec![vec![0.9, 0.85], vec![0.8, 0.0]];
        assert!((max_assignment(&sim) - 1.65).abs() < EPS);
        assert!((max_assignment(&sim_t) - 1.65).abs() < EPS);
    }

    #[test]
    fn assignment_handles_rectangles() {
        let sim = vec![vec![0.2, 0.9, 0.4]];
        assert!((max_assignment(&sim) - 0.9).abs() < EPS);
        let sim = vec![vec![0.2], vec![0.9], vec![0.4]];
        assert!((max_assignment(&sim) - 0.9).abs() < EPS);
        assert_eq!(max_assignment(&[]), 0.0);
    }

    #[test]
    fn swap_sides_swaps_precision_and_recall() {
        let a = clustering(&[&[(1, 1), (2, 2), (3, 3)], &[(5, 5)]]);
        let b = clustering(&[&[(1, 1), (2, 2)], &[(3, 3), (4, 4)]]);
        for counts in [muc_counts(&a, &b), b_cubed_counts(&a, &b), ceaf_phi4_counts(&a, &b)] {
            let swapped = counts.swap();
            let forward = counts.prf();
            let backward = swapped.prf();
            assert!((forward.precision - backward.recall).abs() < EPS);
            assert!((forward.recall - backward.precision).abs() < EPS);
        }
        // And swapping arguments does the same.
        let fwd = muc(&a, &b);
        let bwd = muc(&b, &a);
        assert!((fwd.precision - bwd.recall).abs() < EPS);
    }

    #[test]
    fn conll_score_identity() {
        let k = clustering(&[&[(1, 1), (2, 2)]]);
        let report = conll_score(&k, &k, SingletonMode::INCLUDE_BOTH);
        assert!((report.avg_f1 - 1.0).abs() < EPS);
    }

    #[test]
    fn singleton_modes_differ() {
        // gold = {a,b},{c}; pred = {a,b},{d}
        let gold = clustering(&[&[(1, 1), (2, 2)], &[(3, 3)]]);
        let pred = clustering(&[&[(1, 1), (2, 2)], &[(4, 4)]]);
        use SingletonPolicy::*;

        let yy = conll_score(&gold, &pred, SingletonMode::new(Include, Include));
        assert_prf(yy.b3, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0);

        let ny = conll_score(&gold, &pred, SingletonMode::new(Exclude, Include));
        assert_prf(ny.b3, 1.0, 2.0 / 3.0, 0.8);

        let yn = conll_score(&gold, &pred, SingletonMode::new(Include, Exclude));
        assert_prf(yn.b3, 2.0 / 3.0, 1.0, 0.8);

        let nn = conll_score(&gold, &pred, SingletonMode::new(Exclude, Exclude));
        assert_prf(nn.b3, 1.0, 1.0, 1.0);
    }

    #[test]
    fn documents_without_filtered_gold_are_excluded() {
        // Second document's gold is a lone singleton; under exclude-exclude
        // it drops out of the micro-average entirely.
        let gold_a = clustering(&[&[(1, 1), (2, 2)]]);
        let pred_a = clustering(&[&[(1, 1), (2, 2)]]);
        let gold_b = clustering(&[&[(9, 9)]]);
        let pred_b = clustering(&[&[(7, 7), (8, 8)]]);
        let report = conll_score_corpus(
            [(&gold_a, &pred_a), (&gold_b, &pred_b)],
            SingletonMode::EXCLUDE_BOTH,
        );
        assert!((report.avg_f1 - 1.0).abs() < EPS);
        // Under include-include the stray prediction hurts precision.
        let report = conll_score_corpus(
            [(&gold_a, &pred_a), (&gold_b, &pred_b)],
            SingletonMode::INCLUDE_BOTH,
        );
        assert!(report.avg_f1 < 1.0);
    }

    #[test]
    fn micro_average_pools_denominators() {
        let gold_a = clustering(&[&[(1, 1), (2, 2), (3, 3)]]);
        let pred_a = clustering(&[&[(1, 1), (2, 2)]]);
        let gold_b = clustering(&[&[(1, 1), (2, 2)]]);
        let pred_b = clustering(&[&[(1, 1), (2, 2)]]);
        let report = conll_score_corpus(
            [(&gold_a, &pred_a), (&gold_b, &pred_b)],
            SingletonMode::INCLUDE_BOTH,
        );
        // MUC recall pools to (1 + 1) / (2 + 1), not the mean of 1/2 and 1.
        assert!((report.muc.recall - 2.0 / 3.0).abs() < EPS);
    }

    #[test]
    fn avg_is_mean_of_three_f1() {
        let gold = clustering(&[&[(1, 1), (2, 2), (3, 3)]]);
        let pred = clustering(&[&[(1, 1), (2, 2)]]);
        let report = conll_score(&gold, &pred, SingletonMode::INCLUDE_BOTH);
        let mean = (report.muc.f1 + report.b3.f1 + report.ceaf4.f1) / 3.0;
        assert!((report.avg_f1 - mean).abs() < EPS);
    }
}
