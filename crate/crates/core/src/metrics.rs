//! Evaluation of predicted action sequences: set precision/recall,
//! positional accuracy, exact-match hits, action-level BLEU, Dist-n
//! diversity and multi-choice accuracy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::ClassId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{answers} answers but {keys} keys")]
    LengthMismatch { answers: usize, keys: usize },
}

/// Set precision and recall. Both empty scores (1, 1); an empty side
/// against a nonempty one scores 0.
pub fn precision_recall(pred: &[ClassId], gt: &[ClassId]) -> (f64, f64) {
    let p: BTreeSet<_> = pred.iter().collect();
    let g: BTreeSet<_> = gt.iter().collect();
    if p.is_empty() && g.is_empty() {
        return (1.0, 1.0);
    }
    let hit = p.intersection(&g).count() as f64;
    let ratio = |n: usize| if n == 0 { 0.0 } else { hit / n as f64 };
    (ratio(p.len()), ratio(g.len()))
}

/// Fraction of ground-truth positions predicted exactly.
pub fn seq_item_acc(pred: &[ClassId], gt: &[ClassId]) -> f64 {
    if gt.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    pred.iter().zip(gt).filter(|(p, g)| p == g).count() as f64 / gt.len() as f64
}

/// 1 if `gt` appears exactly among the first `cutoff` predictions.
pub fn seq_hits(topk: &[Vec<ClassId>], gt: &[ClassId], cutoff: usize) -> f64 {
    if topk.iter().take(cutoff).any(|s| s == gt) {
        1.0
    } else {
        0.0
    }
}

fn ngrams(seq: &[ClassId], n: usize) -> BTreeMap<&[ClassId], usize> {
    let mut counts = BTreeMap::new();
    if n > 0 && seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Sentence BLEU over actions with uniform weights on orders `1..=n`,
/// clipped counts and brevity penalty; no smoothing.
///
/// An order at which neither sequence has any n-gram is left out of the
/// geometric mean.
pub fn bleu_n(pred: &[ClassId], gt: &[ClassId], n: usize) -> f64 {
    if pred.is_empty() || gt.is_empty() {
        return if pred.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    let mut used = 0;
    for m in 1..=n {
        let p = ngrams(pred, m);
        let g = ngrams(gt, m);
        let total: usize = p.values().sum();
        if total == 0 && g.is_empty() {
            continue;
        }
        let clipped: usize = p.iter().map(|(k, &c)| c.min(g.get(k).copied().unwrap_or(0))).sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
        used += 1;
    }
    let bp = if pred.len() < gt.len() { (1.0 - gt.len() as f64 / pred.len() as f64).exp() } else { 1.0 };
    if used == 0 {
        return bp;
    }
    bp * (log_sum / used as f64).exp()
}

/// Distinct n-grams over total n-grams across a list of sequences; 0 when
/// there are no n-grams at all.
pub fn dist_n(topk: &[Vec<ClassId>], n: usize) -> f64 {
    let mut distinct = BTreeSet::new();
    let mut total = 0usize;
    for seq in topk {
        if n == 0 || seq.len() < n {
            continue;
        }
        for w in seq.windows(n) {
            distinct.insert(w);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        distinct.len() as f64 / total as f64
    }
}

pub fn mqa_accuracy(answers: &[usize], keys: &[usize]) -> Result<f64, MetricsError> {
    if answers.len() != keys.len() {
        return Err(MetricsError::LengthMismatch { answers: answers.len(), keys: keys.len() });
    }
    if keys.is_empty() {
        return Ok(0.0);
    }
    Ok(answers.iter().zip(keys).filter(|(a, k)| a == k).count() as f64 / keys.len() as f64)
}

/// Scores of one top-k prediction list against its ground truth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopkScores {
    pub precision: f64,
    pub recall: f64,
    pub seq_item_acc: f64,
    pub hits_at_5: f64,
    pub hits_at_10: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub dist1: f64,
    pub dist2: f64,
}

/// Per-sequence metrics are averaged over the top-k list.
pub fn evaluate_topk(topk: &[Vec<ClassId>], gt: &[ClassId]) -> TopkScores {
    let k = topk.len().max(1) as f64;
    let mean = |f: &dyn Fn(&[ClassId]) -> f64| topk.iter().map(|s| f(s)).sum::<f64>() / k;
    TopkScores {
        precision: mean(&|s| precision_recall(s, gt).0),
        recall: mean(&|s| precision_recall(s, gt).1),
        seq_item_acc: mean(&|s| seq_item_acc(s, gt)),
        hits_at_5: seq_hits(topk, gt, 5),
        hits_at_10: seq_hits(topk, gt, 10),
        bleu1: mean(&|s| bleu_n(s, gt, 1)),
        bleu2: mean(&|s| bleu_n(s, gt, 2)),
        dist1: dist_n(topk, 1),
        dist2: dist_n(topk, 2),
    }
}

/// Field-wise mean of several score rows, folded in order.
pub fn mean_scores(rows: &[TopkScores]) -> TopkScores {
    let n = rows.len().max(1) as f64;
    let mut acc = TopkScores::default();
    for r in rows {
        acc.precision += r.precision;
        acc.recall += r.recall;
        acc.seq_item_acc += r.seq_item_acc;
        acc.hits_at_5 += r.hits_at_5;
        acc.hits_at_10 += r.hits_at_10;
        acc.bleu1 += r.bleu1;
        acc.bleu2 += r.bleu2;
        acc.dist1 += r.dist1;
        acc.dist2 += r.dist2;
    }
    TopkScores {
        precision: acc.precision / n,
        recall: acc.recall / n,
        seq_item_acc: acc.seq_item_acc / n,
        hits_at_5: acc.hits_at_5 / n,
        hits_at_10: acc.hits_at_10 / n,
        bleu1: acc.bleu1 / n,
        bleu2: acc.bleu2 / n,
        dist1: acc.dist1 / n,
        dist2: acc.dist2 / n,
    }
}
