//! Seeded synthetic corpus: a topic-structured catalog with STRIPS schemas,
//! Markov action sequences, noisy clip features around class prototypes,
//! topic-anchored intents and a small word-vector table.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::WordVectorTable;
use crate::kb::{
    build_kb, ActionClass, ActionRecord, ActionSequenceRecord, Catalog, ClassId, FeatureSequence, KbError,
    KnowledgeBase, SchemaEntry, StatePredicate,
};
use crate::seed::child_rng;
use crate::strips::StateTemplateCatalog;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_topics: usize,
    pub n_sequences: usize,
    /// Expected sequence length; lengths are `2 + Poisson(mean_length - 2)`.
    pub mean_length: f64,
    pub max_length: usize,
    pub within_topic: f64,
    /// Share of the within-topic mass given to each class's fixed successor.
    pub dominant_successor: f64,
    pub feature_dim: usize,
    pub frames_per_clip: usize,
    pub sigma: f64,
    pub intent_dim: usize,
    pub intent_noise: f64,
    pub word_dim: usize,
    pub snippet_span: u32,
    pub fps: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 157,
            n_topics: 22,
            n_sequences: 300,
            mean_length: 5.0,
            max_length: 16,
            within_topic: 0.85,
            dominant_successor: 0.6,
            feature_dim: 1024,
            frames_per_clip: 4,
            sigma: 0.0,
            intent_dim: 128,
            intent_noise: 1.4,
            word_dim: 50,
            snippet_span: 8,
            fps: 24.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidSpec(msg.to_string()));
        if self.n_topics == 0 || self.n_classes < self.n_topics {
            return bad("need at least one class per topic");
        }
        if self.n_classes > self.n_topics * STATE_PAIRS.len() * 2 {
            return bad("too many classes per topic for the state vocabulary");
        }
        if self.n_topics > NOUNS.len() {
            return bad("more topics than object nouns");
        }
        if self.n_sequences == 0 {
            return bad("n_sequences must be positive");
        }
        if !(self.mean_length >= 2.0) || self.max_length < 2 {
            return bad("mean_length and max_length must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.within_topic) || !(0.0..=1.0).contains(&self.dominant_successor) {
            return bad("transition shares must lie in [0, 1]");
        }
        if self.feature_dim == 0 || self.frames_per_clip == 0 || self.intent_dim == 0 || self.word_dim == 0 {
            return bad("dimensions and frames_per_clip must be positive");
        }
        if !(self.sigma >= 0.0) || !(self.intent_noise >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if self.snippet_span == 0 || !(self.fps > 0.0) {
            return bad("snippet_span and fps must be positive");
        }
        Ok(())
    }

    pub fn topic_of(&self, class_id: ClassId) -> usize {
        class_id as usize * self.n_topics / self.n_classes
    }

    fn clip_seconds(&self) -> f64 {
        self.frames_per_clip as f64 * f64::from(self.snippet_span) / self.fps
    }
}

const NOUNS: [&str; 22] = [
    "door", "window", "laptop", "phone", "book", "towel", "dish", "shoe", "blanket", "pillow", "cup",
    "sandwich", "broom", "mirror", "cabinet", "table", "chair", "television", "box", "bag", "shelf", "lamp",
];

// (state, verb reaching it, opposite state, verb reaching the opposite)
const STATE_PAIRS: [(&str, &str, &str, &str); 5] = [
    ("IsOpen", "open", "IsClosed", "close"),
    ("IsOn", "start", "IsOff", "stop"),
    ("IsClean", "clean", "IsDirty", "soil"),
    ("IsTidy", "tidy", "IsMessy", "scatter"),
    ("IsFixed", "fix", "IsBroken", "break"),
];

/// A generated corpus with everything needed to rebuild or re-observe it.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub seed: u64,
    pub catalog: Catalog,
    pub schemas: Vec<SchemaEntry>,
    pub sequences: Vec<ActionSequenceRecord>,
    pub features: BTreeMap<String, FeatureSequence>,
    /// Noise-free class prototypes the features were drawn around.
    pub prototypes: BTreeMap<ClassId, Vec<f64>>,
    pub word_vectors: WordVectorTable,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn build_catalog(spec: &SynthSpec) -> Result<(Catalog, Vec<SchemaEntry>), SynthError> {
    let templates = StateTemplateCatalog::shipped();
    let pred = |name: &str, args: &[&str]| {
        templates.predicate(name, args).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    };
    let mut classes = Vec::with_capacity(spec.n_classes);
    let mut schemas = Vec::with_capacity(spec.n_classes);
    let mut first_in_topic = vec![None; spec.n_topics];
    for c in 0..spec.n_classes as ClassId {
        let t = spec.topic_of(c);
        let k = c as usize - *first_in_topic[t].get_or_insert(c as usize);
        let (s, verb, opposite, opposite_verb) = STATE_PAIRS[k % STATE_PAIRS.len()];
        let (state, verb, undone) = if (k / STATE_PAIRS.len()) % 2 == 0 {
            (s, verb, opposite)
        } else {
            (opposite, opposite_verb, s)
        };
        let noun = NOUNS[t];
        classes.push(ActionClass::new(c, format!("{verb} the {noun}"), format!("{verb} {noun}"), t as u32));
        let reachable = pred("Reachable", &["P", noun])?;
        schemas.push(SchemaEntry {
            class_id: c,
            pre: BTreeSet::from([reachable.clone()]),
            add: BTreeSet::from([reachable, pred(state, &[noun])?]),
            del: BTreeSet::from([pred(undone, &[noun])?]),
        });
    }
    let mut catalog = Catalog::new(spec.n_topics as u32, classes)?;
    catalog.apply_schemas(schemas.clone())?;
    Ok((catalog, schemas))
}

struct Chain {
    topics: Vec<Vec<ClassId>>,
    n_classes: usize,
}

impl Chain {
    fn new(spec: &SynthSpec) -> Self {
        let mut topics = vec![Vec::new(); spec.n_topics];
        for c in 0..spec.n_classes as ClassId {
            topics[spec.topic_of(c)].push(c);
        }
        Self { topics, n_classes: spec.n_classes }
    }

    fn next(&self, spec: &SynthSpec, current: ClassId, rng: &mut ChaCha8Rng) -> ClassId {
        let t = spec.topic_of(current);
        let block = &self.topics[t];
        let outside = self.n_classes - block.len();
        if block.len() > 1 && (outside == 0 || rng.random_bool(spec.within_topic)) {
            let k = block.iter().position(|&c| c == current).expect("class in its topic");
            if rng.random_bool(spec.dominant_successor) {
                return block[(k + 1) % block.len()];
            }
            let j = rng.random_range(0..block.len() - 1);
            return block[if j >= k { j + 1 } else { j }];
        }
        if outside == 0 {
            return current;
        }
        // uniform over classes of other topics
        let j = rng.random_range(0..outside) as ClassId;
        let first = block[0];
        if j < first {
            j
        } else {
            j + block.len() as ClassId
        }
    }
}

/// Generates a corpus; identical `(spec, seed)` pairs give identical corpora.
pub fn generate_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let (catalog, schemas) = build_catalog(spec)?;

    let mut rng = child_rng(seed, "synth/prototypes");
    let prototypes: BTreeMap<ClassId, Vec<f64>> =
        (0..spec.n_classes as ClassId).map(|c| (c, gaussian(&mut rng, spec.feature_dim, 1.0))).collect();

    let mut rng = child_rng(seed, "synth/words");
    let mut word_vectors = WordVectorTable::new(spec.word_dim);
    let words: BTreeSet<&str> = catalog
        .classes()
        .iter()
        .flat_map(|c| c.normalized_phrase.split_whitespace())
        .collect();
    let scale = 1.0 / (spec.word_dim as f64).sqrt();
    for w in words {
        word_vectors
            .insert(w, gaussian(&mut rng, spec.word_dim, scale))
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    }

    let mut rng = child_rng(seed, "synth/intents");
    let anchors: Vec<Vec<f64>> = (0..spec.n_topics).map(|_| gaussian(&mut rng, spec.intent_dim, 1.0)).collect();

    let chain = Chain::new(spec);
    let mut seq_rng = child_rng(seed, "synth/sequences");
    let poisson = Poisson::new(spec.mean_length - 2.0).ok();
    let clip = spec.clip_seconds();
    let mut sequences = Vec::with_capacity(spec.n_sequences);
    for i in 0..spec.n_sequences {
        let extra = poisson.as_ref().map_or(0.0, |p| p.sample(&mut seq_rng));
        let len = (2 + extra as usize).min(spec.max_length);
        let mut ids = vec![seq_rng.random_range(0..spec.n_classes as ClassId)];
        while ids.len() < len {
            let next = chain.next(spec, *ids.last().expect("nonempty"), &mut seq_rng);
            ids.push(next);
        }
        let topic = spec.topic_of(ids[0]);
        let intent: Vec<f64> = anchors[topic]
            .iter()
            .zip(gaussian(&mut rng, spec.intent_dim, spec.intent_noise))
            .map(|(a, n)| a + n)
            .collect();
        let seq_id = format!("syn{i:05}");
        sequences.push(ActionSequenceRecord {
            actions: ids
                .iter()
                .enumerate()
                .map(|(k, &c)| ActionRecord::new(c, k as f64 * clip, (k + 1) as f64 * clip))
                .collect(),
            intent_future: format!("take care of the {}", NOUNS[topic]),
            intent_present: format!("busy with the {}", NOUNS[topic]),
            intent_embedding: intent,
            feature_ref: Some(seq_id.clone()),
            seq_id,
        });
    }

    let mut corpus = SynthCorpus {
        spec: spec.clone(),
        seed,
        catalog,
        schemas,
        sequences,
        features: BTreeMap::new(),
        prototypes,
        word_vectors,
    };
    corpus.features = corpus.draw_features(spec.sigma, &mut child_rng(seed, "synth/features"))?;
    Ok(corpus)
}

impl SynthCorpus {
    /// A fresh recording of the sequence at `pos`: every clip is its class
    /// prototype plus `N(0, sigma²)` noise.
    pub fn observe(&self, pos: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Result<FeatureSequence, SynthError> {
        let spec = &self.spec;
        let seq = &self.sequences[pos];
        let mut data = Vec::with_capacity(seq.len() * spec.frames_per_clip * spec.feature_dim);
        for action in &seq.actions {
            let proto = &self.prototypes[&action.class_id];
            for _ in 0..spec.frames_per_clip {
                if sigma == 0.0 {
                    data.extend(proto.iter().map(|&x| x as f32));
                } else {
                    data.extend(proto.iter().map(|&x| (x + sigma * rng.sample::<f64, _>(StandardNormal)) as f32));
                }
            }
        }
        Ok(FeatureSequence::from_flat(spec.feature_dim, data)?.with_timing(spec.snippet_span, spec.fps)?)
    }

    /// Re-draws every sequence's features at noise level `sigma`.
    pub fn draw_features(
        &self,
        sigma: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<BTreeMap<String, FeatureSequence>, SynthError> {
        if !(sigma >= 0.0) {
            return Err(SynthError::InvalidSpec("sigma must be non-negative".into()));
        }
        let mut out = BTreeMap::new();
        for (pos, seq) in self.sequences.iter().enumerate() {
            if let Some(r) = &seq.feature_ref {
                out.insert(r.clone(), self.observe(pos, sigma, rng)?);
            }
        }
        Ok(out)
    }

    pub fn build_kb(&self) -> Result<KnowledgeBase, SynthError> {
        Ok(build_kb(self.catalog.clone(), self.sequences.clone(), self.features.clone())?)
    }

    /// The knowledge base with features re-drawn at `sigma` from `seed`.
    pub fn build_kb_with_sigma(&self, sigma: f64, seed: u64) -> Result<KnowledgeBase, SynthError> {
        let features = self.draw_features(sigma, &mut child_rng(seed, "synth/redraw"))?;
        Ok(build_kb(self.catalog.clone(), self.sequences.clone(), features)?)
    }

    /// Schema file text in the import format, with predicates rendered
    /// through the shipped template list.
    pub fn schema_file_json(&self) -> String {
        let templates = StateTemplateCatalog::shipped();
        let render = |set: &BTreeSet<StatePredicate>| -> Vec<String> {
            set.iter().map(|p| templates.display(p).to_string()).collect()
        };
        let records: Vec<serde_json::Value> = self
            .schemas
            .iter()
            .map(|s| {
                let name = self.catalog.get(s.class_id).map(|c| c.name.clone()).unwrap_or_default();
                serde_json::json!({
                    "class_id": s.class_id,
                    "action": name,
                    "precondition": render(&s.pre),
                    "add": render(&s.add),
                    "delete": render(&s.del),
                })
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("schema records serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::parse_schema_file;
    use crate::strips::{replay_validate, state_generator};

    fn small() -> SynthSpec {
        SynthSpec { n_sequences: 40, feature_dim: 16, intent_dim: 8, ..SynthSpec::default() }
    }

    #[test]
    fn deterministic() {
        let a = generate_corpus(&small(), 3).unwrap();
        let b = generate_corpus(&small(), 3).unwrap();
        assert_eq!(a.sequences, b.sequences);
        assert_eq!(a.features, b.features);
        let c = generate_corpus(&small(), 4).unwrap();
        assert_ne!(a.sequences, c.sequences);
    }

    #[test]
    fn topics_are_contiguous_blocks() {
        let spec = SynthSpec::default();
        let sizes: Vec<usize> =
            (0..22).map(|t| (0..157).filter(|&c| spec.topic_of(c) == t).count()).collect();
        assert!(sizes.iter().all(|&s| s == 7 || s == 8), "{sizes:?}");
        let topics: Vec<usize> = (0..157).map(|c| spec.topic_of(c)).collect();
        assert!(topics.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
    }

    #[test]
    fn noiseless_clips_equal_prototypes() {
        let corpus = generate_corpus(&small(), 3).unwrap();
        let kb = corpus.build_kb().unwrap();
        for (pos, seq) in kb.sequences().iter().enumerate() {
            let fs = kb.features_of(pos).unwrap();
            for a in &seq.actions {
                let proto: Vec<f32> = corpus.prototypes[&a.class_id].iter().map(|&x| x as f32).collect();
                for i in fs.span_of(a.t_start, a.t_end) {
                    assert_eq!(fs.frame(i), proto.as_slice());
                }
            }
        }
    }

    #[test]
    fn schemas_round_trip_and_replay() {
        let corpus = generate_corpus(&small(), 3).unwrap();
        let parsed = parse_schema_file(&corpus.schema_file_json(), &StateTemplateCatalog::shipped()).unwrap();
        assert_eq!(parsed, corpus.schemas);
        for seq in &corpus.sequences {
            let ids = seq.class_ids();
            let states = state_generator(&ids, &corpus.catalog).unwrap();
            assert!(replay_validate(&ids, &states.init, &corpus.catalog).unwrap().ok());
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_corpus(&SynthSpec { n_topics: 0, ..small() }, 3).is_err());
        assert!(generate_corpus(&SynthSpec { mean_length: 1.0, ..small() }, 3).is_err());
        assert!(generate_corpus(&SynthSpec { sigma: -1.0, ..small() }, 3).is_err());
    }
}
