//! Scoring functions: CER, WER, sentence BLEU, ROUGE-L and token F1, plus the
//! per-image evaluation that combines them.
//!
//! Character metrics count Unicode scalar values. Word metrics use the
//! whitespace tokens produced by [`crate::textnorm::tokenize`].

use std::collections::HashMap;
use std::hash::Hash;

use thiserror::Error;

use crate::corpus::{FieldType, GroundTruthEntry, SectionedText};
use crate::textnorm::tokenize;

/// Constant in the smoothing-method-4 substitute precision.
pub const SMOOTHING_K: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference text is empty")]
    EmptyReference,
    #[error("prediction ({pred_product}, {pred_field}) does not match ground truth ({gt_product}, {gt_field})")]
    FieldMismatch { gt_product: String, gt_field: FieldType, pred_product: String, pred_field: FieldType },
    #[error("invalid BLEU parameters: {0}")]
    InvalidBleuParams(&'static str),
}

/// Decomposition of an edit distance into operation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditOps {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditOps {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Unit-cost edit distance from `a` (reference) to `b` (hypothesis) with the
/// operation counts of one optimal alignment. Deletions remove reference
/// symbols; insertions add hypothesis symbols.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> (usize, EditOps) {
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut dp = vec![0usize; (n + 1) * width];
    for (j, cell) in dp[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        dp[i * width] = i;
        for j in 1..=m {
            let sub = dp[(i - 1) * width + j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = dp[(i - 1) * width + j] + 1;
            let ins = dp[i * width + j - 1] + 1;
            dp[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = EditOps::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * width + j - 1];
            let same = a[i - 1] == b[j - 1];
            if (same && here == diag) || (!same && here == diag + 1) {
                if !same {
                    ops.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * width + j] + 1 {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    (dp[n * width + m], ops)
}

/// Edit distance only, in two rows of memory.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    bounded_edit_distance(a, b, usize::MAX).unwrap_or(usize::MAX)
}

/// Edit distance if it is strictly below `bound`, else `None`. Stops as soon
/// as every cell of a row reaches the bound.
pub fn bounded_edit_distance<T: PartialEq>(a: &[T], b: &[T], bound: usize) -> Option<usize> {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, y) in b.iter().enumerate() {
            let v = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
            cur[j + 1] = v;
            row_min = row_min.min(v);
        }
        if row_min >= bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d < bound).then_some(d)
}

/// Character error rate: edits over reference length in scalars. Can exceed 1.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, MetricError> {
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let h: Vec<char> = hypothesis.chars().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Word error rate over whitespace tokens.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let h = tokenize(hypothesis);
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the number of hypothesis n-grams.
pub fn modified_ngram_precision<T: Eq + Hash>(reference: &[T], hypothesis: &[T], n: usize) -> (usize, usize) {
    assert!(n >= 1, "n-gram order must be at least 1");
    let hyp = ngram_counts(hypothesis, n);
    let refc = ngram_counts(reference, n);
    let matches = hyp.iter().map(|(gram, &c)| c.min(refc.get(gram).copied().unwrap_or(0))).sum();
    (matches, hypothesis.len().saturating_sub(n - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    None,
    /// Zero-match orders get `ln(c) / (K · 2^i · total)`, where `c` is the
    /// hypothesis length and `i` counts zero-match orders seen so far,
    /// starting at 1.
    #[default]
    Method4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuParams {
    pub weights: Vec<f64>,
    pub smoothing: Smoothing,
}

impl BleuParams {
    /// Uniform weights up to `max_order`.
    pub fn uniform(max_order: usize, smoothing: Smoothing) -> Result<Self, MetricError> {
        if max_order == 0 {
            return Err(MetricError::InvalidBleuParams("max order must be at least 1"));
        }
        Ok(BleuParams { weights: vec![1.0 / max_order as f64; max_order], smoothing })
    }

    pub fn with_weights(weights: Vec<f64>, smoothing: Smoothing) -> Result<Self, MetricError> {
        if weights.is_empty() {
            return Err(MetricError::InvalidBleuParams("max order must be at least 1"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MetricError::InvalidBleuParams("weights must be finite and non-negative"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MetricError::InvalidBleuParams("weights must sum to 1"));
        }
        Ok(BleuParams { weights, smoothing })
    }

    pub fn max_order(&self) -> usize {
        self.weights.len()
    }
}

impl Default for BleuParams {
    fn default() -> Self {
        BleuParams::uniform(4, Smoothing::Method4).expect("order 4 is valid")
    }
}

/// Sentence-level BLEU over whitespace tokens against a single reference.
///
/// Orders longer than the hypothesis have no n-grams and contribute a neutral
/// factor. An empty hypothesis, or one without a single unigram match,
/// scores 0. Zero-match orders are smoothed per `params.smoothing`; without
/// smoothing they drive the score to 0.
pub fn bleu(reference: &str, hypothesis: &str, params: &BleuParams) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let h = tokenize(hypothesis);
    Ok(bleu_tokens(&r, &h, params))
}

pub fn bleu_tokens<T: Eq + Hash>(reference: &[T], hypothesis: &[T], params: &BleuParams) -> f64 {
    let c = hypothesis.len();
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut zero_orders = 0i32;
    for (idx, &w) in params.weights.iter().enumerate() {
        let (matches, total) = modified_ngram_precision(reference, hypothesis, idx + 1);
        if total == 0 {
            continue;
        }
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else if idx == 0 {
            return 0.0;
        } else {
            match params.smoothing {
                Smoothing::None => return 0.0,
                Smoothing::Method4 => {
                    zero_orders += 1;
                    // total > 0 at order >= 2 implies c >= 2, so ln(c) > 0.
                    (c as f64).ln() / (SMOOTHING_K * 2f64.powi(zero_orders) * total as f64)
                }
            }
        };
        log_sum += w * p.ln();
    }
    let r = reference.len() as f64;
    let bp = if c as f64 > r { 1.0 } else { (1.0 - r / c as f64).exp() };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

/// Length of the longest common subsequence.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[short.len()]
}

/// Token-level ROUGE-L F-measure with beta = 1.
pub fn rouge_l(reference: &str, hypothesis: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let h = tokenize(hypothesis);
    if h.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_length(&r, &h);
    if lcs == 0 {
        return Ok(0.0);
    }
    let recall = lcs as f64 / r.len() as f64;
    let precision = lcs as f64 / h.len() as f64;
    const BETA2: f64 = 1.0;
    Ok((1.0 + BETA2) * recall * precision / (recall + BETA2 * precision))
}

/// Bag-of-tokens F1: overlap counts each token up to its multiplicity in both.
pub fn token_f1(reference: &str, hypothesis: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let h = tokenize(hypothesis);
    if h.is_empty() {
        return Ok(0.0);
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in &r {
        *ref_counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in &h {
        if let Some(c) = ref_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return Ok(0.0);
    }
    let precision = overlap as f64 / h.len() as f64;
    let recall = overlap as f64 / r.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Per-image scores for one (image, field) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub product_key: String,
    pub image_filename: String,
    pub field_type: FieldType,
    pub cer: f64,
    pub wer: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub f1: f64,
    /// No sectioned prediction existed for this ground-truth pair.
    pub missing: bool,
}

/// Scores one prediction against its ground truth. Both texts must already be
/// normalized. A missing prediction scores CER = WER = 1 and 0 elsewhere.
pub fn evaluate_pair(
    gt: &GroundTruthEntry,
    pred: Option<&SectionedText>,
    params: &BleuParams,
) -> Result<MetricRow, MetricError> {
    let mut row = MetricRow {
        product_key: gt.product_key.clone(),
        image_filename: gt.image_filename.clone(),
        field_type: gt.field_type,
        cer: 1.0,
        wer: 1.0,
        bleu: 0.0,
        rouge_l: 0.0,
        f1: 0.0,
        missing: true,
    };
    let Some(pred) = pred else {
        if gt.gt_text.trim().is_empty() {
            return Err(MetricError::EmptyReference);
        }
        return Ok(row);
    };
    if pred.field_type != gt.field_type || pred.product_key != gt.product_key {
        return Err(MetricError::FieldMismatch {
            gt_product: gt.product_key.clone(),
            gt_field: gt.field_type,
            pred_product: pred.product_key.clone(),
            pred_field: pred.field_type,
        });
    }
    let (r, h) = (gt.gt_text.as_str(), pred.text.as_str());
    row.cer = cer(r, h)?;
    row.wer = wer(r, h)?;
    row.bleu = bleu(r, h, params)?;
    row.rouge_l = rouge_l(r, h)?;
    row.f1 = token_f1(r, h)?;
    row.missing = false;
    Ok(row)
}
