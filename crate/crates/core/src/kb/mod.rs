//! Knowledge base of action classes, action sequences and their visual
//! feature sequences.
//!
//! A [`KnowledgeBase`] is assembled once by [`build_kb`] and is read-only
//! afterwards; the corpus statistics used by BM25 retrieval (`avgdl`,
//! document frequencies, document count) are computed at build time.

mod feature;
mod import;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feature::FeatureSequence;
pub use import::{
    parse_schema_file, read_catalog_file, read_sequence_records, reference_catalog,
    write_sequence_records, SchemaEntry, REFERENCE_CATALOG_JSON, REFERENCE_SCHEMAS_JSON,
};
pub use store::{
    load_kb, read_feature_dir, read_feature_file, save_kb, write_feature_dir, write_feature_file, SCHEMA_VERSION,
};

/// Identifier of an action class within a catalog.
pub type ClassId = u32;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("sequence `{seq_id}` references unknown action class {class_id}")]
    DanglingClassId { seq_id: String, class_id: ClassId },
    #[error("sequence `{seq_id}` references missing feature sequence `{feature_ref}`")]
    DanglingFeatureRef { seq_id: String, feature_ref: String },
    #[error("knowledge base has no action sequences")]
    EmptyCorpus,
    #[error("sequence `{0}` has no actions")]
    EmptySequence(String),
    #[error("duplicate sequence id `{0}`")]
    DuplicateSequenceId(String),
    #[error("sequence `{seq_id}` has an invalid action interval [{t_start}, {t_end}]")]
    InvalidInterval { seq_id: String, t_start: f64, t_end: f64 },
    #[error("intent embedding of `{seq_id}` has dimension {found}, expected {expected}")]
    IntentDimensionMismatch { seq_id: String, expected: usize, found: usize },
    #[error("feature sequence `{feature_ref}` has dimension {found}, expected {expected}")]
    FeatureDimensionMismatch { feature_ref: String, expected: usize, found: usize },
    #[error("invalid feature sequence: {0}")]
    InvalidFeatures(String),
    #[error("duplicate action class id {0}")]
    DuplicateClassId(ClassId),
    #[error("action class {0} has an empty normalized phrase")]
    EmptyPhrase(ClassId),
    #[error("action class {class_id} has topic {topic_id} but only {n_topics} topics are declared")]
    TopicOutOfRange { class_id: ClassId, topic_id: u32, n_topics: u32 },
    #[error("action class {0} adds and deletes the same predicate")]
    ConflictingEffects(ClassId),
    #[error("schema entry refers to unknown action class {0}")]
    UnknownSchemaClass(ClassId),
    #[error("bad predicate `{0}`")]
    BadPredicate(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure { path: String, source: std::io::Error },
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("corrupt feature file {path}: {reason}")]
    CorruptFeatureFile { path: String, reason: String },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
}

pub type Result<T, E = KbError> = std::result::Result<T, E>;

/// A grounded state predicate such as `IsOpen(refrigerator)`.
///
/// `template` indexes the state template list (see
/// [`crate::strips::StateTemplateCatalog`]); equality is structural.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StatePredicate {
    pub template: u16,
    pub args: Vec<String>,
}

impl StatePredicate {
    pub fn new(template: u16, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { template, args: args.into_iter().map(Into::into).collect() }
    }
}

/// A symbolic action class with STRIPS semantics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionClass {
    pub id: ClassId,
    pub name: String,
    pub normalized_phrase: String,
    pub topic_id: u32,
    #[serde(default)]
    pub pre: BTreeSet<StatePredicate>,
    #[serde(default)]
    pub add: BTreeSet<StatePredicate>,
    #[serde(default)]
    pub del: BTreeSet<StatePredicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype: Option<Vec<f64>>,
}

impl ActionClass {
    pub fn new(id: ClassId, name: impl Into<String>, phrase: impl Into<String>, topic_id: u32) -> Self {
        Self {
            id,
            name: name.into(),
            normalized_phrase: phrase.into(),
            topic_id,
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
            prototype: None,
        }
    }

    pub fn has_schema(&self) -> bool {
        !(self.pre.is_empty() && self.add.is_empty() && self.del.is_empty())
    }
}

#[derive(Deserialize)]
struct CatalogRepr {
    n_topics: u32,
    classes: Vec<ActionClass>,
}

/// The list of action classes together with the declared topic count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatalogRepr")]
pub struct Catalog {
    n_topics: u32,
    classes: Vec<ActionClass>,
    #[serde(skip)]
    index: BTreeMap<ClassId, usize>,
}

impl TryFrom<CatalogRepr> for Catalog {
    type Error = KbError;

    fn try_from(repr: CatalogRepr) -> Result<Self> {
        Catalog::new(repr.n_topics, repr.classes)
    }
}

impl Catalog {
    pub fn new(n_topics: u32, classes: Vec<ActionClass>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (pos, class) in classes.iter().enumerate() {
            if index.insert(class.id, pos).is_some() {
                return Err(KbError::DuplicateClassId(class.id));
            }
            if class.normalized_phrase.trim().is_empty() {
                return Err(KbError::EmptyPhrase(class.id));
            }
            if class.topic_id >= n_topics {
                return Err(KbError::TopicOutOfRange {
                    class_id: class.id,
                    topic_id: class.topic_id,
                    n_topics,
                });
            }
            if class.add.intersection(&class.del).next().is_some() {
                return Err(KbError::ConflictingEffects(class.id));
            }
        }
        Ok(Self { n_topics, classes, index })
    }

    pub fn n_topics(&self) -> u32 {
        self.n_topics
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ActionClass] {
        &self.classes
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().map(|c| c.id)
    }

    pub fn get(&self, id: ClassId) -> Option<&ActionClass> {
        self.index.get(&id).map(|&pos| &self.classes[pos])
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.index.contains_key(&id)
    }

    /// Replaces the STRIPS sets of the listed classes.
    pub fn apply_schemas(&mut self, schemas: impl IntoIterator<Item = SchemaEntry>) -> Result<()> {
        for entry in schemas {
            let pos = *self
                .index
                .get(&entry.class_id)
                .ok_or(KbError::UnknownSchemaClass(entry.class_id))?;
            if entry.add.intersection(&entry.del).next().is_some() {
                return Err(KbError::ConflictingEffects(entry.class_id));
            }
            let class = &mut self.classes[pos];
            class.pre = entry.pre;
            class.add = entry.add;
            class.del = entry.del;
        }
        Ok(())
    }

    /// Stores visual prototypes on the classes; classes absent from the map
    /// lose any previous prototype.
    pub fn set_prototypes(&mut self, prototypes: &BTreeMap<ClassId, Vec<f64>>) {
        for class in &mut self.classes {
            class.prototype = prototypes.get(&class.id).cloned();
        }
    }
}

/// One timestamped occurrence of an action class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub class_id: ClassId,
    pub t_start: f64,
    pub t_end: f64,
}

impl ActionRecord {
    pub fn new(class_id: ClassId, t_start: f64, t_end: f64) -> Self {
        Self { class_id, t_start, t_end }
    }
}

/// An ordered action sequence with its intents and optional video features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSequenceRecord {
    pub seq_id: String,
    pub actions: Vec<ActionRecord>,
    #[serde(default)]
    pub intent_future: String,
    #[serde(default)]
    pub intent_present: String,
    #[serde(default)]
    pub intent_embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_ref: Option<String>,
}

impl ActionSequenceRecord {
    pub fn class_ids(&self) -> Vec<ClassId> {
        self.actions.iter().map(|a| a.class_id).collect()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Immutable multimodal knowledge base.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    catalog: Catalog,
    sequences: Vec<ActionSequenceRecord>,
    features: BTreeMap<String, FeatureSequence>,
    feature_dim: Option<usize>,
    avgdl: f64,
    doc_freq: BTreeMap<ClassId, usize>,
    term_counts: Vec<BTreeMap<ClassId, u32>>,
    by_id: BTreeMap<String, usize>,
}

/// Assembles a knowledge base and computes its retrieval statistics.
///
/// Actions within each sequence are stably sorted by start time.
pub fn build_kb(
    catalog: Catalog,
    mut sequences: Vec<ActionSequenceRecord>,
    features: BTreeMap<String, FeatureSequence>,
) -> Result<KnowledgeBase> {
    if sequences.is_empty() {
        return Err(KbError::EmptyCorpus);
    }

    let mut feature_dim = None;
    for (name, fs) in &features {
        match feature_dim {
            None => feature_dim = Some(fs.dim()),
            Some(d) if d != fs.dim() => {
                return Err(KbError::FeatureDimensionMismatch {
                    feature_ref: name.clone(),
                    expected: d,
                    found: fs.dim(),
                })
            }
            Some(_) => {}
        }
    }

    let intent_dim = sequences[0].intent_embedding.len();
    let mut by_id = BTreeMap::new();
    for (pos, seq) in sequences.iter_mut().enumerate() {
        if seq.actions.is_empty() {
            return Err(KbError::EmptySequence(seq.seq_id.clone()));
        }
        if by_id.insert(seq.seq_id.clone(), pos).is_some() {
            return Err(KbError::DuplicateSequenceId(seq.seq_id.clone()));
        }
        if seq.intent_embedding.len() != intent_dim {
            return Err(KbError::IntentDimensionMismatch {
                seq_id: seq.seq_id.clone(),
                expected: intent_dim,
                found: seq.intent_embedding.len(),
            });
        }
        for action in &seq.actions {
            if !catalog.contains(action.class_id) {
                return Err(KbError::DanglingClassId {
                    seq_id: seq.seq_id.clone(),
                    class_id: action.class_id,
                });
            }
            let valid = action.t_start >= 0.0 && action.t_end >= action.t_start;
            if !valid {
                return Err(KbError::InvalidInterval {
                    seq_id: seq.seq_id.clone(),
                    t_start: action.t_start,
                    t_end: action.t_end,
                });
            }
        }
        if let Some(feature_ref) = &seq.feature_ref {
            if !features.contains_key(feature_ref) {
                return Err(KbError::DanglingFeatureRef {
                    seq_id: seq.seq_id.clone(),
                    feature_ref: feature_ref.clone(),
                });
            }
        }
        seq.actions.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    }

    let mut doc_freq = BTreeMap::new();
    let mut term_counts = Vec::with_capacity(sequences.len());
    let mut total_len = 0usize;
    for seq in &sequences {
        total_len += seq.actions.len();
        let mut counts: BTreeMap<ClassId, u32> = BTreeMap::new();
        for action in &seq.actions {
            *counts.entry(action.class_id).or_default() += 1;
        }
        for &class_id in counts.keys() {
            *doc_freq.entry(class_id).or_default() += 1;
        }
        term_counts.push(counts);
    }
    let avgdl = total_len as f64 / sequences.len() as f64;

    Ok(KnowledgeBase {
        catalog,
        sequences,
        features,
        feature_dim,
        avgdl,
        doc_freq,
        term_counts,
        by_id,
    })
}

impl KnowledgeBase {
    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn sequences(&self) -> &[ActionSequenceRecord] {
        &self.sequences
    }

    pub fn sequence(&self, seq_id: &str) -> Option<&ActionSequenceRecord> {
        self.by_id.get(seq_id).map(|&pos| &self.sequences[pos])
    }

    pub fn position(&self, seq_id: &str) -> Option<usize> {
        self.by_id.get(seq_id).copied()
    }

    pub fn features(&self) -> &BTreeMap<String, FeatureSequence> {
        &self.features
    }

    /// Feature sequence attached to the sequence at `pos`, if any.
    pub fn features_of(&self, pos: usize) -> Option<&FeatureSequence> {
        self.sequences[pos].feature_ref.as_ref().and_then(|r| self.features.get(r))
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn n_docs(&self) -> usize {
        self.sequences.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self) -> &BTreeMap<ClassId, usize> {
        &self.doc_freq
    }

    pub fn df(&self, class_id: ClassId) -> usize {
        self.doc_freq.get(&class_id).copied().unwrap_or(0)
    }

    /// Number of occurrences of `class_id` in the sequence at `pos`.
    pub fn term_count(&self, pos: usize, class_id: ClassId) -> u32 {
        self.term_counts[pos].get(&class_id).copied().unwrap_or(0)
    }

    /// Returns a copy of the knowledge base whose catalog carries the given
    /// visual prototypes.
    pub fn with_prototypes(mut self, prototypes: &BTreeMap<ClassId, Vec<f64>>) -> Self {
        self.catalog.set_prototypes(prototypes);
        self
    }

    pub fn into_parts(self) -> (Catalog, Vec<ActionSequenceRecord>, BTreeMap<String, FeatureSequence>) {
        (self.catalog, self.sequences, self.features)
    }
}
