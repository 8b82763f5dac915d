//! Similarity and evaluation kernels. Everything here is pure and
//! deterministic across platforms.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{BBox, Span};
use crate::hashing::{fnv1a, mix64};
use crate::tokenize::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    None,
    /// A zero match count for n >= 2 is replaced by one match out of
    /// `total + 1`. A zero unigram count still yields BLEU 0.
    AddOneOnZeroCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::AddOneOnZeroCounts,
        }
    }
}

/// Precision, recall and F1 with their raw counts. `0/0` is taken as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Prf1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf1 {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU with brevity penalty. The highest n-gram order used is
/// `min(cfg.max_n, candidate length)`.
pub fn sentence_bleu<S: AsRef<str>>(candidate: &[S], reference: &[S], cfg: &BleuConfig) -> Result<f64> {
    if cfg.max_n == 0 {
        return Err(Error::Metric("max_n must be at least 1".into()));
    }
    if reference.is_empty() {
        return Err(Error::Metric("empty reference".into()));
    }
    let c = candidate.len();
    if c == 0 {
        return Ok(0.0);
    }
    let r = reference.len();
    let max_n = cfg.max_n.min(c);

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let matched: usize = cand
            .iter()
            .map(|(gram, &count)| count.min(refs.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = c + 1 - n;
        let precision = match (matched, n, cfg.smoothing) {
            (0, 1, _) | (0, _, Smoothing::None) => return Ok(0.0),
            (0, _, Smoothing::AddOneOnZeroCounts) => 1.0 / (total + 1) as f64,
            _ => matched as f64 / total as f64,
        };
        log_sum += precision.ln();
    }
    let brevity = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok((brevity * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0))
}

/// Number of distinct token types shared by `a` and `b`.
pub fn common_token_count<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let left: HashSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let right: HashSet<&str> = b.iter().map(AsRef::as_ref).collect();
    left.intersection(&right).count()
}

/// Intersection over union. Object classes are ignored.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Exact-match span scoring on `(start, end, entity_class)`.
pub fn span_prf1(gold: &[Span], predicted: &[Span]) -> Prf1 {
    let gold: BTreeSet<&Span> = gold.iter().collect();
    let predicted: BTreeSet<&Span> = predicted.iter().collect();
    let tp = gold.intersection(&predicted).count();
    Prf1::from_counts(tp, predicted.len() - tp, gold.len() - tp)
}

pub fn accuracy<S: PartialEq>(gold: &[S], predicted: &[S]) -> Result<f64> {
    if gold.len() != predicted.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} gold vs {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Metric("accuracy of an empty list".into()));
    }
    let hits = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// ROC AUC via the rank-sum (Mann–Whitney U) statistic with midranks for
/// ties, so tied positive/negative pairs count one half.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Metric(format!("label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Metric("auc needs at least one positive and one negative".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the positive rank sum, kept integral: a tie group occupying ranks
    // start+1..=end has midrank (start+1+end)/2.
    let mut rank_sum_x2: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group_pos = order[start..end].iter().filter(|&&i| labels[i] == 1).count() as u128;
        rank_sum_x2 += group_pos * (start as u128 + 1 + end as u128);
        start = end;
    }
    let p = positives as u128;
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * negatives as u128) as f64)
}

/// Rows per MinHash band.
pub const MINHASH_ROWS: usize = 4;
/// Default number of bands.
pub const MINHASH_BANDS: usize = 16;

/// Orderable grouping key: MinHash band signatures first, then the
/// normalized text. Near-duplicate texts tend to share band prefixes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimilarityKey {
    pub bands: Vec<u64>,
    pub text: String,
}

/// MinHash over 3-token shingles (single tokens for texts shorter than three
/// tokens), `bands` bands of [`MINHASH_ROWS`] rows each.
pub fn similarity_sort_key(payload: &str, bands: usize, seed: u64) -> SimilarityKey {
    let tokens = tokenize(payload);
    let width = if tokens.len() < 3 { 1 } else { 3 };
    let shingles: Vec<u64> = tokens
        .windows(width)
        .map(|w| fnv1a(w.join("\u{1f}").as_bytes()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let band_sigs = (0..bands)
        .map(|band| {
            let mut sig = mix64(seed ^ (band as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            for row in 0..MINHASH_ROWS {
                let row_seed = mix64(seed.wrapping_add(((band * MINHASH_ROWS + row) as u64 + 1).wrapping_mul(0xd6e8_feb8_6659_fd93)));
                let min = shingles.iter().map(|&s| mix64(s ^ row_seed)).min().unwrap_or(u64::MAX);
                sig = mix64(sig ^ min);
            }
            sig
        })
        .collect();

    SimilarityKey {
        bands: band_sigs,
        text: tokens.join(" "),
    }
}
