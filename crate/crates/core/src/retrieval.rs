//! Two-stage knowledge-base retrieval.
//!
//! Stage 1 scores every stored sequence by a mix of BM25 over action
//! classes (the observed actions are the query terms) and intent cosine,
//! keeping the best `stage1_n`. Stage 2 re-ranks that pool with an OTAM
//! alignment score between query and candidate features plus a small rule
//! score, returning the best `top_k`.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{cost_matrix, otam, AlignError, Metric};
use crate::embeddings::{cosine, EmbeddingError};
use crate::kb::{ActionSequenceRecord, ClassId, FeatureSequence, KnowledgeBase};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("query has no observed actions")]
    EmptyQuery,
    #[error("invalid retrieval parameters: {0}")]
    InvalidParams(String),
    #[error("intent embedding: {0}")]
    Intent(#[from] EmbeddingError),
    #[error("feature alignment: {0}")]
    Align(#[from] AlignError),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalParams {
    pub k1: f64,
    pub b: f64,
    /// Weight of normalized BM25 against intent cosine in stage 1.
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub delta: f64,
    pub stage1_n: usize,
    pub top_k: usize,
    /// Local distance used to build the OTAM cost matrix.
    pub metric: Metric,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k1: 1.5,
            b: 0.75,
            epsilon: 0.2,
            alpha: 1.0,
            gamma: 1.0,
            delta: 0.2,
            stage1_n: 50,
            top_k: 10,
            metric: Metric::Cosine,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RetrievalError::InvalidParams(m));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.top_k == 0 || self.stage1_n < self.top_k {
            return bad(format!("need stage1_n ({}) ≥ top_k ({}) ≥ 1", self.stage1_n, self.top_k));
        }
        let finite = [self.k1, self.b, self.alpha, self.gamma, self.delta];
        if finite.iter().any(|v| !v.is_finite()) || self.k1 < 0.0 || !(0.0..=1.0).contains(&self.b) {
            return bad("k1, b, alpha, gamma and delta must be finite with k1 ≥ 0 and b in [0, 1]".into());
        }
        Ok(())
    }
}

/// What is known about the current video: the recognized actions, the
/// intent embedding and optionally its features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub observed_actions: Vec<ClassId>,
    pub intent_embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSequence>,
}

impl Query {
    fn action_set(&self) -> BTreeSet<ClassId> {
        self.observed_actions.iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Hit {
    pub seq_id: String,
    pub bm25: f64,
    pub s1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub seq_id: String,
    pub s1: f64,
    pub s_align: f64,
    pub s_rule: f64,
    pub s_rank: f64,
}

/// Robertson IDF with +1 smoothing; never negative.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

/// BM25 of a document for a set of query actions (duplicates ignored).
pub fn bm25_score(query_actions: &[ClassId], doc: &ActionSequenceRecord, kb: &KnowledgeBase, params: &RetrievalParams) -> f64 {
    let terms: BTreeSet<ClassId> = query_actions.iter().copied().collect();
    let len_norm = 1.0 - params.b + params.b * doc.len() as f64 / kb.avgdl();
    terms
        .into_iter()
        .map(|a| {
            let f = doc.actions.iter().filter(|r| r.class_id == a).count() as f64;
            if f == 0.0 {
                return 0.0;
            }
            idf(kb.n_docs(), kb.df(a)) * f * (params.k1 + 1.0) / (f + params.k1 * len_norm)
        })
        .sum()
}

/// Best `stage1_n` sequences by `ε·bm25/max_bm25 + (1−ε)·cos(intent)`,
/// ties broken by sequence id.
pub fn stage1(query: &Query, kb: &KnowledgeBase, params: &RetrievalParams) -> Result<Vec<Stage1Hit>> {
    params.validate()?;
    if query.observed_actions.is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    let raw: Vec<f64> = kb.sequences().iter().map(|d| bm25_score(&query.observed_actions, d, kb, params)).collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    let mut hits = kb
        .sequences()
        .iter()
        .zip(raw)
        .map(|(doc, bm25)| {
            let norm = if max > 0.0 { bm25 / max } else { 0.0 };
            let cos = cosine(&query.intent_embedding, &doc.intent_embedding)?;
            Ok(Stage1Hit {
                seq_id: doc.seq_id.clone(),
                bm25,
                s1: params.epsilon * norm + (1.0 - params.epsilon) * cos,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    hits.sort_by(|a, b| b.s1.total_cmp(&a.s1).then_with(|| a.seq_id.cmp(&b.seq_id)));
    hits.truncate(params.stage1_n);
    Ok(hits)
}

/// 1 if the candidate ends in an unobserved action, plus 1 if it is longer
/// than the observed action set.
pub fn rule_score(candidate: &ActionSequenceRecord, query: &Query) -> u8 {
    let observed = query.action_set();
    let novel_last = candidate.actions.last().is_some_and(|a| !observed.contains(&a.class_id));
    let longer = candidate.len() > observed.len();
    u8::from(novel_last) + u8::from(longer)
}

/// `1 / (1 + OTAM)` between query and candidate features; 0 when either
/// side has none.
pub fn align_score(query: Option<&FeatureSequence>, candidate: Option<&FeatureSequence>, metric: Metric) -> Result<f64> {
    match (query, candidate) {
        (Some(q), Some(c)) => Ok(1.0 / (1.0 + otam(&cost_matrix(q, c, metric)?))),
        _ => Ok(0.0),
    }
}

pub fn rank_order(a: &RankedResult, b: &RankedResult) -> Ordering {
    b.s_rank
        .total_cmp(&a.s_rank)
        .then_with(|| b.s1.total_cmp(&a.s1))
        .then_with(|| a.seq_id.cmp(&b.seq_id))
}

/// Re-ranks a stage-1 pool by `α·s1 + γ·s_align + δ·s_rule`.
pub fn stage2_rerank(hits: &[Stage1Hit], query: &Query, kb: &KnowledgeBase, params: &RetrievalParams) -> Result<Vec<RankedResult>> {
    params.validate()?;
    let mut ranked = hits
        .iter()
        .filter_map(|hit| kb.position(&hit.seq_id).map(|pos| (hit, pos)))
        .map(|(hit, pos)| {
            let s_align = if params.gamma == 0.0 {
                0.0
            } else {
                align_score(query.features.as_ref(), kb.features_of(pos), params.metric)?
            };
            let s_rule = f64::from(rule_score(&kb.sequences()[pos], query));
            Ok(RankedResult {
                seq_id: hit.seq_id.clone(),
                s1: hit.s1,
                s_align,
                s_rule,
                s_rank: params.alpha * hit.s1 + params.gamma * s_align + params.delta * s_rule,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(rank_order);
    ranked.truncate(params.top_k);
    Ok(ranked)
}

/// Stage 1 followed by stage 2.
pub fn retrieve(query: &Query, kb: &KnowledgeBase, params: &RetrievalParams) -> Result<Vec<RankedResult>> {
    let hits = stage1(query, kb, params)?;
    stage2_rerank(&hits, query, kb, params)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::kb::{build_kb, ActionClass, ActionRecord, Catalog};

    fn record(id: &str, classes: &[ClassId], intent: Vec<f64>) -> ActionSequenceRecord {
        ActionSequenceRecord {
            seq_id: id.into(),
            actions: classes.iter().enumerate().map(|(i, &c)| ActionRecord::new(c, i as f64, i as f64 + 1.0)).collect(),
            intent_future: String::new(),
            intent_present: String::new(),
            intent_embedding: intent,
            feature_ref: None,
        }
    }

    fn kb(records: Vec<ActionSequenceRecord>) -> KnowledgeBase {
        let classes = (0..6).map(|i| ActionClass::new(i, format!("a{i}"), format!("a{i}"), 0)).collect();
        build_kb(Catalog::new(1, classes).unwrap(), records, BTreeMap::new()).unwrap()
    }

    fn query(actions: &[ClassId], intent: Vec<f64>) -> Query {
        Query { observed_actions: actions.to_vec(), intent_embedding: intent, features: None }
    }

    #[test]
    fn bm25_single_doc() {
        let kb = kb(vec![record("d", &[0], vec![1.0])]);
        let p = RetrievalParams::default();
        let s = bm25_score(&[0], &kb.sequences()[0], &kb, &p);
        assert!((s - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((s - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert_eq!(bm25_score(&[1], &kb.sequences()[0], &kb, &p), 0.0);
        // duplicate query terms count once
        assert_eq!(bm25_score(&[0, 0], &kb.sequences()[0], &kb, &p), s);
    }

    #[test]
    fn full_match_beats_disjoint() {
        let kb = kb(vec![record("x", &[0, 1], vec![1.0]), record("y", &[2, 3], vec![1.0])]);
        let p = RetrievalParams::default();
        assert!(bm25_score(&[0, 1], &kb.sequences()[0], &kb, &p) > bm25_score(&[0, 1], &kb.sequences()[1], &kb, &p));
    }

    #[test]
    fn epsilon_extremes() {
        let kb = kb(vec![
            record("a", &[0, 1], vec![0.0, 1.0]),
            record("b", &[2], vec![1.0, 0.0]),
            record("c", &[0, 3], vec![1.0, 1.0]),
        ]);
        let q = query(&[0, 1], vec![1.0, 0.0]);
        let ids = |p: RetrievalParams| stage1(&q, &kb, &p).unwrap().into_iter().map(|h| h.seq_id).collect::<Vec<_>>();
        assert_eq!(ids(RetrievalParams { epsilon: 1.0, ..Default::default() }), ["a", "c", "b"]);
        assert_eq!(ids(RetrievalParams { epsilon: 0.0, ..Default::default() }), ["b", "c", "a"]);
    }

    #[test]
    fn rule_scores() {
        let q = query(&[0, 1], vec![]);
        assert_eq!(rule_score(&record("r", &[0, 1, 2], vec![]), &q), 2);
        assert_eq!(rule_score(&record("r", &[0, 1], vec![]), &q), 0);
        assert_eq!(rule_score(&record("r", &[0, 2, 1], vec![]), &q), 1);
    }

    #[test]
    fn hand_evaluated_rerank() {
        let kb = kb(vec![
            record("p", &[0, 1], vec![1.0]),
            record("q", &[0, 1, 2], vec![1.0]),
            record("r", &[0, 4, 5], vec![1.0]),
        ]);
        let q = query(&[0, 1], vec![1.0]);
        let hits = vec![
            Stage1Hit { seq_id: "p".into(), bm25: 0.0, s1: 0.9 },
            Stage1Hit { seq_id: "q".into(), bm25: 0.0, s1: 0.75 },
            Stage1Hit { seq_id: "r".into(), bm25: 0.0, s1: 0.6 },
        ];
        let p = RetrievalParams::default();
        let out = stage2_rerank(&hits, &q, &kb, &p).unwrap();
        // no features: s_rank = s1 + 0.2·s_rule → p 0.9, q 1.15, r 1.0
        let ids: Vec<&str> = out.iter().map(|r| r.seq_id.as_str()).collect();
        assert_eq!(ids, ["q", "r", "p"]);
        assert!((out[0].s_rank - 1.15).abs() < 1e-12);
        for r in &out {
            assert!((r.s_rank - (r.s1 + r.s_align + 0.2 * r.s_rule)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_features_align_perfectly() {
        let fs = FeatureSequence::from_frames(2, vec![vec![1.0, 0.0], vec![0.3, 0.7]]).unwrap();
        assert_eq!(align_score(Some(&fs), Some(&fs), Metric::Cosine).unwrap(), 1.0);
        assert_eq!(align_score(None, Some(&fs), Metric::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(RetrievalParams { epsilon: 1.5, ..Default::default() }.validate().is_err());
        assert!(RetrievalParams { top_k: 60, ..Default::default() }.validate().is_err());
        let kb = kb(vec![record("d", &[0], vec![1.0])]);
        assert_eq!(stage1(&query(&[], vec![1.0]), &kb, &RetrievalParams::default()), Err(RetrievalError::EmptyQuery));
    }
}
