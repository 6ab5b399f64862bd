//! Greedy grouping of a video's labeled actions into coherent activities.
//!
//! Starting from the earliest remaining action, the extractor repeatedly
//! appends the best-scoring later action while its relevance score against
//! the previously appended action reaches the threshold. The score adds a
//! semantic term (cosine of phrase embeddings), a temporal term and a
//! same-topic indicator.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{cosine, ClassEmbeddings};
use crate::kb::{ActionRecord, Catalog, ClassId};

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("action class {0} is not in the catalog")]
    UnknownClass(ClassId),
    #[error("invalid extractor config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] crate::embeddings::EmbeddingError),
}

pub type Result<T, E = ExtractError> = std::result::Result<T, E>;

pub const DEFAULT_THRESHOLD: f64 = 1.3;

/// Largest normalized gap fed to `atanh`, keeping the temporal term finite.
const MAX_GAP: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub threshold: f64,
    /// Seconds mapped onto a normalized gap of 1. `None` uses the span of
    /// the input actions (the video duration).
    pub time_scale: Option<f64>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD, time_scale: None }
    }
}

impl ExtractorConfig {
    fn validate(&self) -> Result<()> {
        if self.threshold.is_nan() {
            return Err(ExtractError::InvalidConfig("threshold is NaN".into()));
        }
        match self.time_scale {
            Some(s) if !(s.is_finite() && s > 0.0) => {
                Err(ExtractError::InvalidConfig(format!("time_scale must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

/// What the relevance score needs to know about action classes.
pub struct ScoreContext<'a> {
    pub catalog: &'a Catalog,
    pub embeddings: &'a ClassEmbeddings,
    pub time_scale: f64,
}

/// `1 − atanh(x̂)·π/2` with `x̂ = min(|Δt| / time_scale, 1 − 1e−9)`.
pub fn f_time(dt: f64, time_scale: f64) -> f64 {
    let x = (dt.abs() / time_scale).min(MAX_GAP);
    1.0 - x.atanh() * PI / 2.0
}

pub fn relevance_score(a: &ActionRecord, b: &ActionRecord, ctx: &ScoreContext<'_>) -> Result<f64> {
    let topic = |id| ctx.catalog.get(id).map(|c| c.topic_id).ok_or(ExtractError::UnknownClass(id));
    let semantic = cosine(ctx.embeddings.get(a.class_id)?, ctx.embeddings.get(b.class_id)?)?;
    let same_topic = if topic(a.class_id)? == topic(b.class_id)? { 1.0 } else { 0.0 };
    Ok(semantic + f_time(a.t_start - b.t_start, ctx.time_scale) + same_topic)
}

fn by_start(a: &ActionRecord, b: &ActionRecord) -> Ordering {
    a.t_start.total_cmp(&b.t_start).then(a.class_id.cmp(&b.class_id))
}

/// Partitions `actions` into activities, each in discovery order.
pub fn extract_activities(
    actions: &[ActionRecord],
    catalog: &Catalog,
    embeddings: &ClassEmbeddings,
    cfg: &ExtractorConfig,
) -> Result<Vec<Vec<ActionRecord>>> {
    cfg.validate()?;
    if let Some(a) = actions.iter().find(|a| !catalog.contains(a.class_id)) {
        return Err(ExtractError::UnknownClass(a.class_id));
    }
    let time_scale = cfg.time_scale.unwrap_or_else(|| {
        let lo = actions.iter().map(|a| a.t_start).fold(f64::INFINITY, f64::min);
        let hi = actions.iter().map(|a| a.t_end).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 0.0 {
            hi - lo
        } else {
            1.0
        }
    });
    let ctx = ScoreContext { catalog, embeddings, time_scale };

    let mut remaining = actions.to_vec();
    remaining.sort_by(by_start);
    let mut activities = Vec::new();
    while !remaining.is_empty() {
        let mut current = remaining.remove(0);
        let mut activity = vec![current];
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (i, cand) in remaining.iter().enumerate() {
                if cand.t_start < current.t_start {
                    continue;
                }
                let s = relevance_score(&current, cand, &ctx)?;
                let better = match best {
                    None => true,
                    // remaining is sorted, so a later index never wins a tie
                    Some((_, bs)) => s > bs,
                };
                if better {
                    best = Some((i, s));
                }
            }
            match best {
                Some((i, s)) if s >= cfg.threshold => {
                    current = remaining.remove(i);
                    activity.push(current);
                }
                _ => break,
            }
        }
        activities.push(activity);
    }
    Ok(activities)
}
