//! Multi-choice question generation by adversarial matching.
//!
//! A distractor is made from the ground-truth future either by inserting a
//! uniformly drawn action, or by replacing one future action with the class
//! that is relevant to the observed actions yet dissimilar to the replaced
//! one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{cosine, ClassEmbeddings, EmbeddingError};
use crate::kb::{Catalog, ClassId, FeatureSequence};

#[derive(Debug, Error, PartialEq)]
pub enum MqaError {
    #[error("ground-truth future is empty")]
    EmptyFuture,
    #[error("could not find {wanted} distinct distractors after {attempts} attempts")]
    CatalogTooSmall { wanted: usize, attempts: usize },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T, E = MqaError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MqaGenConfig {
    pub lambda: f64,
    pub n_distractors: usize,
    pub rng_seed: u64,
    /// Similarities are clamped to `[prob_floor, 1 − prob_floor]` before
    /// taking logs.
    pub prob_floor: f64,
    /// Generation attempts before giving up on distinct distractors.
    pub max_attempts: usize,
}

impl Default for MqaGenConfig {
    fn default() -> Self {
        Self { lambda: 0.7, n_distractors: 5, rng_seed: 0, prob_floor: 1e-6, max_attempts: 1000 }
    }
}

impl MqaGenConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MqaError::InvalidConfig(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if self.n_distractors == 0 {
            return Err(MqaError::InvalidConfig("n_distractors must be ≥ 1".into()));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 0.5) {
            return Err(MqaError::InvalidConfig(format!("prob_floor must be in (0, 0.5), got {}", self.prob_floor)));
        }
        Ok(())
    }
}

/// Maps a cosine onto `[floor, 1 − floor]` via `(c + 1) / 2`.
pub fn p_sim(cos: f64, floor: f64) -> f64 {
    ((cos + 1.0) / 2.0).clamp(floor, 1.0 - floor)
}

/// `ln P(context, a_j) + λ·ln(1 − P(target, a_j))` from raw cosines.
pub fn am_score_from_cosines(cos_context: f64, cos_target: f64, lambda: f64, floor: f64) -> f64 {
    p_sim(cos_context, floor).ln() + lambda * (1.0 - p_sim(cos_target, floor)).ln()
}

/// Score of `a_j` as a replacement for `a_target` after `observed`.
/// The observed sequence is represented by the mean of its phrase
/// embeddings.
pub fn am_score(
    a_j: ClassId,
    observed: &[ClassId],
    a_target: ClassId,
    emb: &ClassEmbeddings,
    cfg: &MqaGenConfig,
) -> Result<f64> {
    let context = emb.mean_of(observed)?;
    am_score_with_context(a_j, &context, a_target, emb, cfg)
}

fn am_score_with_context(
    a_j: ClassId,
    context: &[f64],
    a_target: ClassId,
    emb: &ClassEmbeddings,
    cfg: &MqaGenConfig,
) -> Result<f64> {
    let v = emb.get(a_j)?;
    let cos_context = cosine(context, v)?;
    let cos_target = cosine(emb.get(a_target)?, v)?;
    Ok(am_score_from_cosines(cos_context, cos_target, cfg.lambda, cfg.prob_floor))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edit {
    Insertion { position: usize, inserted: ClassId },
    Substitution { position: usize, replaced: ClassId, substitute: ClassId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distractor {
    pub actions: Vec<ClassId>,
    pub edit: Edit,
}

/// Best-scoring replacement for `replaced`, ties to the lowest class id.
fn best_substitute(
    context: &[f64],
    replaced: ClassId,
    catalog: &Catalog,
    emb: &ClassEmbeddings,
    cfg: &MqaGenConfig,
) -> Result<Option<ClassId>> {
    let mut best: Option<(ClassId, f64)> = None;
    let mut ids: Vec<ClassId> = catalog.ids().filter(|&id| id != replaced).collect();
    ids.sort_unstable();
    for id in ids {
        let s = am_score_with_context(id, context, replaced, emb, cfg)?;
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((id, s));
        }
    }
    Ok(best.map(|(id, _)| id))
}

/// Generates `cfg.n_distractors` distinct sequences, all different from
/// `future`.
pub fn generate_candidates(
    observed: &[ClassId],
    future: &[ClassId],
    catalog: &Catalog,
    emb: &ClassEmbeddings,
    cfg: &MqaGenConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Distractor>> {
    cfg.validate()?;
    if future.is_empty() {
        return Err(MqaError::EmptyFuture);
    }
    let mut ids: Vec<ClassId> = catalog.ids().collect();
    ids.sort_unstable();
    let context = emb.mean_of(observed)?;

    let mut out: Vec<Distractor> = Vec::with_capacity(cfg.n_distractors);
    let mut attempts = 0;
    while out.len() < cfg.n_distractors {
        if attempts == cfg.max_attempts {
            return Err(MqaError::CatalogTooSmall { wanted: cfg.n_distractors, attempts });
        }
        attempts += 1;
        let candidate = if rng.random_bool(0.5) {
            let position = rng.random_range(0..=future.len());
            let inserted = ids[rng.random_range(0..ids.len())];
            let mut actions = future.to_vec();
            actions.insert(position, inserted);
            Distractor { actions, edit: Edit::Insertion { position, inserted } }
        } else {
            let position = rng.random_range(0..future.len());
            let replaced = future[position];
            let Some(substitute) = best_substitute(&context, replaced, catalog, emb, cfg)? else {
                continue;
            };
            let mut actions = future.to_vec();
            actions[position] = substitute;
            Distractor { actions, edit: Edit::Substitution { position, replaced, substitute } }
        };
        if candidate.actions != future && out.iter().all(|d| d.actions != candidate.actions) {
            out.push(candidate);
        }
    }
    Ok(out)
}

/// A six-way (by default) "what happens next" question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiChoiceQuestion {
    pub id: String,
    pub source_seq_id: String,
    pub intent: String,
    pub intent_embedding: Vec<f64>,
    pub observed_actions: Vec<ClassId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSequence>,
    pub choices: Vec<Vec<ClassId>>,
    pub answer: usize,
    /// How each choice was made; `None` marks the ground truth.
    pub provenance: Vec<Option<Edit>>,
}

/// Everything a question is built from.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionSeed {
    pub id: String,
    pub source_seq_id: String,
    pub intent: String,
    pub intent_embedding: Vec<f64>,
    pub observed: Vec<ClassId>,
    pub future: Vec<ClassId>,
    pub features: Option<FeatureSequence>,
}

/// Generates distractors and shuffles them with the ground truth using a
/// generator seeded from `cfg.rng_seed`.
pub fn build_question(seed: QuestionSeed, catalog: &Catalog, emb: &ClassEmbeddings, cfg: &MqaGenConfig) -> Result<MultiChoiceQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let distractors = generate_candidates(&seed.observed, &seed.future, catalog, emb, cfg, &mut rng)?;
    let mut entries: Vec<(Vec<ClassId>, Option<Edit>)> = Vec::with_capacity(distractors.len() + 1);
    entries.push((seed.future, None));
    entries.extend(distractors.into_iter().map(|d| (d.actions, Some(d.edit))));
    entries.shuffle(&mut rng);
    let answer = entries.iter().position(|(_, e)| e.is_none()).expect("ground truth is present");
    let (choices, provenance) = entries.into_iter().unzip();
    Ok(MultiChoiceQuestion {
        id: seed.id,
        source_seq_id: seed.source_seq_id,
        intent: seed.intent,
        intent_embedding: seed.intent_embedding,
        observed_actions: seed.observed,
        features: seed.features,
        choices,
        answer,
        provenance,
    })
}
