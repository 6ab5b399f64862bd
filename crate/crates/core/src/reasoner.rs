//! Probabilistic answer selection over retrieved sequences.
//!
//! Each retrieved sequence `r_j` gets a posterior `p(r_j)` from a softmax
//! over its re-ranking score. Its future part (what remains after the
//! observed actions) is compared with every candidate answer; a softmax over
//! those similarities gives `p(c_i | r_j)`. The answer is the argmax of
//! `p(c_i) = Σ_j p(c_i | r_j) p(r_j)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{dtw, pairwise, similarity_max, similarity_mean, twed, AlignError, Metric, TwedParams};
use crate::kb::{Catalog, ClassId, StatePredicate};

#[derive(Debug, Error, PartialEq)]
pub enum ReasonerError {
    #[error("no retrieved results to reason over")]
    NoRetrievedResults,
    #[error("need at least two candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("action class {0} has no representation")]
    UnknownClass(ClassId),
    #[error("{expected} scores expected, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Align(#[from] AlignError),
}

pub type Result<T, E = ReasonerError> = std::result::Result<T, E>;

/// Removes the observed actions from the front of a retrieved sequence.
///
/// Walks the sequence consuming observed actions (as a multiset) until the
/// first action that is not observed; everything from there on is the
/// future part.
pub fn future_part(retrieved: &[ClassId], observed: &[ClassId]) -> Vec<ClassId> {
    let mut pool: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &a in observed {
        *pool.entry(a).or_default() += 1;
    }
    let mut cut = 0;
    for &a in retrieved {
        match pool.get_mut(&a) {
            Some(n) if *n > 0 => {
                *n -= 1;
                cut += 1;
            }
            _ => break,
        }
    }
    retrieved[cut..].to_vec()
}

/// Per-class vectors used to represent action sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    vectors: BTreeMap<ClassId, Vec<f64>>,
}

impl Representation {
    pub fn new(vectors: BTreeMap<ClassId, Vec<f64>>) -> Self {
        Self { vectors }
    }

    /// Visual prototypes of the catalog; classes without one map to the zero
    /// vector.
    pub fn from_prototypes(catalog: &Catalog) -> Self {
        let dim = catalog.classes().iter().find_map(|c| c.prototype.as_ref().map(Vec::len)).unwrap_or(0);
        let vectors = catalog
            .classes()
            .iter()
            .map(|c| (c.id, c.prototype.clone().unwrap_or_else(|| vec![0.0; dim])))
            .collect();
        Self { vectors }
    }

    pub fn encode(&self, seq: &[ClassId]) -> Result<Vec<&[f64]>> {
        seq.iter()
            .map(|id| self.vectors.get(id).map(Vec::as_slice).ok_or(ReasonerError::UnknownClass(*id)))
            .collect()
    }
}

/// How two represented sequences are compared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilarityBackend {
    /// `1 − twed / max(|c|, |r|)`.
    Twed { nu: f64, lam: f64 },
    /// `1 − dtw / max(|c|, |r|)`.
    Dtw,
    /// Mean of the cosine-similarity matrix.
    Mean,
    /// Mean of row maxima of the cosine-similarity matrix.
    MaxPool,
}

impl Default for SimilarityBackend {
    fn default() -> Self {
        let p = TwedParams::default();
        SimilarityBackend::Twed { nu: p.nu, lam: p.lam }
    }
}

/// Similarity φ between a candidate answer and a retrieved future.
/// Two empty sequences have φ = 1.
pub fn candidate_similarity(
    candidate: &[ClassId],
    future: &[ClassId],
    rep: &Representation,
    backend: SimilarityBackend,
    metric: Metric,
) -> Result<f64> {
    let c = rep.encode(candidate)?;
    let r = rep.encode(future)?;
    if c.is_empty() && r.is_empty() {
        return Ok(1.0);
    }
    let longest = c.len().max(r.len()) as f64;
    Ok(match backend {
        SimilarityBackend::Twed { nu, lam } => 1.0 - twed(&c, &r, TwedParams::new(nu, lam)?, metric)? / longest,
        _ if c.is_empty() || r.is_empty() => 0.0,
        SimilarityBackend::Dtw => 1.0 - dtw(&pairwise(&c, &r, metric)?) / longest,
        SimilarityBackend::Mean => similarity_mean(&pairwise(&c, &r, Metric::Cosine)?.map(|d| 1.0 - d)),
        SimilarityBackend::MaxPool => similarity_max(&pairwise(&c, &r, Metric::Cosine)?.map(|d| 1.0 - d)),
    })
}

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub probs: Vec<f64>,
    pub chosen: usize,
}

/// Lowest index among the maxima.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Mixes per-result candidate softmaxes by the result posteriors.
/// `phi[j][i]` is the similarity of candidate `i` to result `j`.
pub fn answer_from_scores(s_rank: &[f64], phi: &[Vec<f64>]) -> Result<AnswerDistribution> {
    if s_rank.is_empty() {
        return Err(ReasonerError::NoRetrievedResults);
    }
    if phi.len() != s_rank.len() {
        return Err(ReasonerError::LengthMismatch { expected: s_rank.len(), found: phi.len() });
    }
    let n = phi[0].len();
    if n < 2 {
        return Err(ReasonerError::TooFewCandidates(n));
    }
    if let Some(row) = phi.iter().find(|row| row.len() != n) {
        return Err(ReasonerError::LengthMismatch { expected: n, found: row.len() });
    }
    let p_r = softmax(s_rank);
    let mut probs = vec![0.0; n];
    for (row, pr) in phi.iter().zip(&p_r) {
        for (p, pc) in probs.iter_mut().zip(softmax(row)) {
            *p += pc * pr;
        }
    }
    Ok(AnswerDistribution { chosen: argmax(&probs), probs })
}

/// One retrieved sequence as seen by the reasoner.
#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    pub s_rank: f64,
    pub future: Vec<ClassId>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    pub backend: SimilarityBackend,
    pub metric: Metric,
    /// Weight of the symbolic state-aligner term added to every φ; off
    /// when `None`.
    pub state_weight: Option<f64>,
}

/// Answer distribution over `candidates` given retrieved `evidence`.
/// `state_scores`, when given, holds one state-aligner score per candidate
/// and is used only if the config enables it.
pub fn answer_distribution(
    candidates: &[Vec<ClassId>],
    evidence: &[Evidence],
    rep: &Representation,
    cfg: &ReasonerConfig,
    state_scores: Option<&[f64]>,
) -> Result<AnswerDistribution> {
    if evidence.is_empty() {
        return Err(ReasonerError::NoRetrievedResults);
    }
    if candidates.len() < 2 {
        return Err(ReasonerError::TooFewCandidates(candidates.len()));
    }
    let bonus: Vec<f64> = match (cfg.state_weight, state_scores) {
        (Some(w), Some(scores)) => {
            if scores.len() != candidates.len() {
                return Err(ReasonerError::LengthMismatch { expected: candidates.len(), found: scores.len() });
            }
            scores.iter().map(|s| w * s).collect()
        }
        _ => vec![0.0; candidates.len()],
    };
    let phi = evidence
        .iter()
        .map(|e| {
            candidates
                .iter()
                .zip(&bonus)
                .map(|(c, b)| Ok(candidate_similarity(c, &e.future, rep, cfg.backend, cfg.metric)? + b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let s_rank: Vec<f64> = evidence.iter().map(|e| e.s_rank).collect();
    answer_from_scores(&s_rank, &phi)
}

/// Jaccard similarity of two state sets; 1 when both are empty.
pub fn state_aligner_score(final_states: &BTreeSet<StatePredicate>, candidate_init: &BTreeSet<StatePredicate>) -> f64 {
    let union = final_states.union(candidate_init).count();
    if union == 0 {
        return 1.0;
    }
    final_states.intersection(candidate_init).count() as f64 / union as f64
}
