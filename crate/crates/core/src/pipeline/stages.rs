//! Per-question stages: question generation, retrieval plus answering, and
//! evaluation. Every function here is deterministic given its inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::QuestionConfig;
use super::PipelineError;
use crate::embeddings::ClassEmbeddings;
use crate::kb::{ClassId, FeatureSequence, KnowledgeBase};
use crate::metrics::{evaluate_topk, mean_scores, mqa_accuracy, TopkScores};
use crate::mqa::{build_question, MqaGenConfig, MultiChoiceQuestion, QuestionSeed};
use crate::reasoner::{answer_distribution, future_part, state_aligner_score, Evidence, ReasonerConfig, Representation};
use crate::retrieval::{retrieve, Query, RankedResult, RetrievalParams};
use crate::seed::{child_rng, derive_seed};
use crate::strips::state_generator;

/// Number of leading actions shown: `ceil(len · fraction)`, kept within
/// `1..len` so that both parts are nonempty.
pub fn observed_split(len: usize, fraction: f64) -> usize {
    ((len as f64 * fraction).ceil() as usize).clamp(1, len.saturating_sub(1).max(1))
}

/// Features covering the first `n_observed` actions of the sequence at `pos`.
pub fn prefix_features(kb: &KnowledgeBase, pos: usize, n_observed: usize) -> Result<Option<FeatureSequence>, PipelineError> {
    let Some(fs) = kb.features_of(pos) else { return Ok(None) };
    let last = &kb.sequences()[pos].actions[n_observed - 1];
    let end = fs.span_of(last.t_start, last.t_end).end;
    Ok(Some(fs.slice(0..end)?))
}

/// Picks up to `n` sequences with at least two actions and splits each into
/// an observed prefix and a future.
pub fn question_seeds(kb: &KnowledgeBase, cfg: &QuestionConfig, seed: u64) -> Result<Vec<QuestionSeed>, PipelineError> {
    use rand::seq::SliceRandom;
    let mut eligible: Vec<usize> = (0..kb.n_docs()).filter(|&p| kb.sequences()[p].len() >= 2).collect();
    if eligible.is_empty() {
        return Err(PipelineError::NoEligibleSequences);
    }
    eligible.shuffle(&mut child_rng(seed, "gen-mqa/select"));
    eligible.truncate(cfg.n_questions);
    eligible
        .iter()
        .enumerate()
        .map(|(i, &pos)| {
            let seq = &kb.sequences()[pos];
            let ids = seq.class_ids();
            let n_obs = observed_split(ids.len(), cfg.observed_fraction);
            Ok(QuestionSeed {
                id: format!("q{i:04}"),
                source_seq_id: seq.seq_id.clone(),
                intent: seq.intent_future.clone(),
                intent_embedding: seq.intent_embedding.clone(),
                observed: ids[..n_obs].to_vec(),
                future: ids[n_obs..].to_vec(),
                features: prefix_features(kb, pos, n_obs)?,
            })
        })
        .collect()
}

/// Builds one multi-choice question per seed; each question draws from its
/// own generator derived from `seed` and the question id.
pub fn generate_questions(
    kb: &KnowledgeBase,
    emb: &ClassEmbeddings,
    cfg: &QuestionConfig,
    seed: u64,
) -> Result<Vec<MultiChoiceQuestion>, PipelineError> {
    let seeds = question_seeds(kb, cfg, seed)?;
    seeds
        .into_par_iter()
        .map(|s| {
            let gen = MqaGenConfig {
                lambda: cfg.lambda,
                n_distractors: cfg.n_distractors,
                rng_seed: derive_seed(seed, &format!("gen-mqa/{}", s.id)),
                ..MqaGenConfig::default()
            };
            Ok(build_question(s, kb.catalog(), emb, &gen)?)
        })
        .collect()
}

pub fn query_of(q: &MultiChoiceQuestion) -> Query {
    Query {
        observed_actions: q.observed_actions.clone(),
        intent_embedding: q.intent_embedding.clone(),
        features: q.features.clone(),
    }
}

/// What was retrieved and chosen for one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub id: String,
    pub chosen: usize,
    pub probs: Vec<f64>,
    pub retrieved: Vec<RankedResult>,
    /// Future parts of the retrieved sequences, in rank order.
    pub futures: Vec<Vec<ClassId>>,
}

fn state_scores(q: &MultiChoiceQuestion, kb: &KnowledgeBase) -> Result<Vec<f64>, PipelineError> {
    let observed = state_generator(&q.observed_actions, kb.catalog())?.final_state;
    q.choices
        .iter()
        .map(|c| {
            if c.is_empty() {
                return Ok(0.0);
            }
            Ok(state_aligner_score(&observed, &state_generator(c, kb.catalog())?.init))
        })
        .collect()
}

/// Answers `q` from the first `k` entries of an already ranked list.
pub fn answer_from_results(
    q: &MultiChoiceQuestion,
    ranked: &[RankedResult],
    k: usize,
    kb: &KnowledgeBase,
    rep: &Representation,
    cfg: &ReasonerConfig,
) -> Result<AnswerRecord, PipelineError> {
    let retrieved = &ranked[..k.min(ranked.len())];
    let futures: Vec<Vec<ClassId>> = retrieved
        .iter()
        .map(|r| {
            let seq = kb.sequence(&r.seq_id).ok_or_else(|| PipelineError::UnknownSequence(r.seq_id.clone()))?;
            Ok(future_part(&seq.class_ids(), &q.observed_actions))
        })
        .collect::<Result<_, PipelineError>>()?;
    let evidence: Vec<Evidence> =
        retrieved.iter().zip(&futures).map(|(r, f)| Evidence { s_rank: r.s_rank, future: f.clone() }).collect();
    let scores = match cfg.state_weight {
        Some(_) => Some(state_scores(q, kb)?),
        None => None,
    };
    let dist = answer_distribution(&q.choices, &evidence, rep, cfg, scores.as_deref())?;
    Ok(AnswerRecord {
        id: q.id.clone(),
        chosen: dist.chosen,
        probs: dist.probs,
        retrieved: retrieved.to_vec(),
        futures,
    })
}

pub fn answer_question(
    q: &MultiChoiceQuestion,
    kb: &KnowledgeBase,
    rep: &Representation,
    params: &RetrievalParams,
    cfg: &ReasonerConfig,
) -> Result<AnswerRecord, PipelineError> {
    let ranked = retrieve(&query_of(q), kb, params)?;
    answer_from_results(q, &ranked, params.top_k, kb, rep, cfg)
}

pub fn answer_all(
    questions: &[MultiChoiceQuestion],
    kb: &KnowledgeBase,
    rep: &Representation,
    params: &RetrievalParams,
    cfg: &ReasonerConfig,
) -> Result<Vec<AnswerRecord>, PipelineError> {
    questions.par_iter().map(|q| answer_question(q, kb, rep, params, cfg)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_questions: usize,
    pub mqa_accuracy: f64,
    /// Forecasting quality of the retrieved futures against the true future.
    pub forecast: TopkScores,
}

/// Scores answers against their questions, matched by id.
pub fn evaluate(questions: &[MultiChoiceQuestion], answers: &[AnswerRecord]) -> Result<EvalReport, PipelineError> {
    let by_id: std::collections::BTreeMap<&str, &AnswerRecord> = answers.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut chosen = Vec::with_capacity(questions.len());
    let mut keys = Vec::with_capacity(questions.len());
    let mut rows = Vec::with_capacity(questions.len());
    for q in questions {
        let a = by_id.get(q.id.as_str()).ok_or_else(|| PipelineError::MissingAnswer(q.id.clone()))?;
        chosen.push(a.chosen);
        keys.push(q.answer);
        rows.push(evaluate_topk(&a.futures, &q.choices[q.answer]));
    }
    Ok(EvalReport {
        n_questions: questions.len(),
        mqa_accuracy: mqa_accuracy(&chosen, &keys)?,
        forecast: mean_scores(&rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_keeps_both_parts() {
        assert_eq!(observed_split(2, 0.5), 1);
        assert_eq!(observed_split(5, 0.5), 3);
        assert_eq!(observed_split(4, 0.99), 3);
        assert_eq!(observed_split(4, 0.01), 1);
    }
}
