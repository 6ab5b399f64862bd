//! Text-side numerics: phrase normalization, TF-IDF weighted word-vector
//! pooling, cosine similarity, and per-class visual prototypes.

mod lemma;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::kb::{Catalog, ClassId, KnowledgeBase};

pub use lemma::{lemmatize, normalize_tokens};

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("TF-IDF corpus is empty")]
    EmptyCorpus,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("word-vector file line {line}: {reason}")]
    BadWordVector { line: usize, reason: String },
    #[error("action class {0} is not in the catalog")]
    UnknownClass(ClassId),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// Normalizes an action label into space-separated verb/noun lemmas,
/// e.g. "Washing their hands" → "wash hand".
pub fn normalize_action_phrase(label: &str) -> Result<String> {
    let tokens = normalize_tokens(label);
    if tokens.is_empty() {
        return Err(EmbeddingError::EmptyLabel);
    }
    Ok(tokens.join(" "))
}

/// Word → vector lookup with a fixed dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch { left: self.dim, right: vector.len() });
        }
        self.entries.insert(word.into(), vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(w, v)| (w.as_str(), v.as_slice()))
    }

    /// Scales every vector by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let entries = self.entries.iter().map(|(w, v)| (w.clone(), v.iter().map(|x| x * s).collect())).collect();
        Self { dim: self.dim, entries }
    }

    /// Reads the text format: one word per line followed by its components.
    pub fn read(reader: impl Read) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let bad = |reason: String| EmbeddingError::BadWordVector { line: i + 1, reason };
            let line = line.map_err(|e| bad(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vector = parts
                .map(|p| p.parse::<f64>().map_err(|e| bad(format!("`{p}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vector.is_empty() {
                return Err(bad("no components".into()));
            }
            let table = table.get_or_insert_with(|| Self::new(vector.len()));
            table.insert(word.to_lowercase(), vector).map_err(|e| bad(e.to_string()))?;
        }
        table.ok_or(EmbeddingError::BadWordVector { line: 0, reason: "file has no vectors".into() })
    }

    pub fn write(&self, mut writer: impl Write) -> std::io::Result<()> {
        for (word, vector) in &self.entries {
            write!(writer, "{word}")?;
            for x in vector {
                write!(writer, " {x}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }
}

/// Smoothed inverse document frequencies over a phrase corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct TfIdfWeights {
    idf: BTreeMap<String, f64>,
    n_docs: usize,
}

impl TfIdfWeights {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// `ln((1+N)/(1+df)) + 1`; words outside the corpus get `df = 0`.
    pub fn idf(&self, word: &str) -> f64 {
        self.idf.get(word).copied().unwrap_or_else(|| Self::smoothed(self.n_docs, 0))
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.idf
    }

    fn smoothed(n: usize, df: usize) -> f64 {
        ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0
    }
}

pub fn tfidf_weights<S: AsRef<str>>(corpus: &[S]) -> Result<TfIdfWeights> {
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for phrase in corpus {
        let words: BTreeSet<&str> = phrase.as_ref().split_whitespace().collect();
        for w in words {
            *df.entry(w.to_string()).or_default() += 1;
        }
    }
    let n = corpus.len();
    let idf = df.into_iter().map(|(w, d)| (w, TfIdfWeights::smoothed(n, d))).collect();
    Ok(TfIdfWeights { idf, n_docs: n })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhraseEmbedding {
    pub vector: Vec<f64>,
    /// False when no word of the phrase was in the table.
    pub covered: bool,
}

/// `Σ_w tf(w)·idf(w)·vec(w)` over the words of a normalized phrase.
pub fn embed_phrase(phrase: &str, table: &WordVectorTable, weights: &TfIdfWeights) -> PhraseEmbedding {
    let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
    for w in phrase.split_whitespace() {
        *tf.entry(w).or_default() += 1;
    }
    let mut vector = vec![0.0; table.dim()];
    let mut covered = false;
    for (w, count) in tf {
        if let Some(v) = table.get(w) {
            covered = true;
            let scale = count as f64 * weights.idf(w);
            for (acc, x) in vector.iter_mut().zip(v) {
                *acc += scale * x;
            }
        }
    }
    PhraseEmbedding { vector, covered }
}

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch { left: u.len(), right: v.len() });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Phrase embeddings for every class of a catalog, with IDF computed over
/// the catalog's own normalized phrases.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassEmbeddings {
    vectors: BTreeMap<ClassId, Vec<f64>>,
    uncovered: Vec<ClassId>,
}

impl ClassEmbeddings {
    pub fn build(catalog: &Catalog, table: &WordVectorTable) -> Result<Self> {
        let phrases: Vec<&str> = catalog.classes().iter().map(|c| c.normalized_phrase.as_str()).collect();
        let weights = tfidf_weights(&phrases)?;
        let mut vectors = BTreeMap::new();
        let mut uncovered = Vec::new();
        for class in catalog.classes() {
            let e = embed_phrase(&class.normalized_phrase, table, &weights);
            if !e.covered {
                uncovered.push(class.id);
            }
            vectors.insert(class.id, e.vector);
        }
        Ok(Self { vectors, uncovered })
    }

    pub fn from_vectors(vectors: BTreeMap<ClassId, Vec<f64>>) -> Self {
        Self { vectors, uncovered: Vec::new() }
    }

    pub fn get(&self, id: ClassId) -> Result<&[f64]> {
        self.vectors.get(&id).map(Vec::as_slice).ok_or(EmbeddingError::UnknownClass(id))
    }

    pub fn dim(&self) -> usize {
        self.vectors.values().next().map_or(0, Vec::len)
    }

    /// Classes whose phrase had no word in the vector table.
    pub fn uncovered(&self) -> &[ClassId] {
        &self.uncovered
    }

    /// Mean of the embeddings of `ids`; the zero vector for an empty list.
    pub fn mean_of(&self, ids: &[ClassId]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim()];
        for &id in ids {
            for (a, x) in acc.iter_mut().zip(self.get(id)?) {
                *a += x;
            }
        }
        if !ids.is_empty() {
            let n = ids.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrototypeReport {
    pub prototypes: BTreeMap<ClassId, Vec<f64>>,
    /// Classes with no feature-bearing clip.
    pub no_clips: Vec<ClassId>,
}

/// Mean feature vector over all frames of all clips labeled with each class.
pub fn build_prototypes(kb: &KnowledgeBase) -> PrototypeReport {
    let mut sums: BTreeMap<ClassId, (Vec<f64>, usize)> = BTreeMap::new();
    for (pos, seq) in kb.sequences().iter().enumerate() {
        let Some(fs) = kb.features_of(pos) else { continue };
        for action in &seq.actions {
            let (mean, count) = sums.entry(action.class_id).or_insert_with(|| (vec![0.0; fs.dim()], 0));
            for i in fs.span_of(action.t_start, action.t_end) {
                // running mean keeps identical frames exact
                *count += 1;
                let k = *count as f64;
                for (m, &x) in mean.iter_mut().zip(fs.frame(i)) {
                    *m += (f64::from(x) - *m) / k;
                }
            }
        }
    }
    let no_clips = kb.catalog().ids().filter(|id| !sums.contains_key(id)).collect();
    let prototypes = sums.into_iter().map(|(id, (mean, _))| (id, mean)).collect();
    PrototypeReport { prototypes, no_clips }
}
