//! TOML run configuration with environment overrides.
//!
//! Only paths can be overridden, through `NSPLAN_KB_DIR`,
//! `NSPLAN_WORD_VECTORS` and `NSPLAN_OUTPUT_DIR`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reasoner::ReasonerConfig;
use crate::retrieval::RetrievalParams;
use crate::synth::SynthSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("`{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("`{field}`: path {path} does not exist")]
    MissingPath { field: &'static str, path: String },
    #[error("`{0}` is required when no [synth] section is given")]
    MissingField(&'static str),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Saved knowledge base directory; when absent the corpus is synthesized.
    pub kb_dir: Option<PathBuf>,
    /// Word-vector text file; defaults to `<kb_dir>/word_vectors.txt`.
    pub word_vectors: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuestionConfig {
    pub n_questions: usize,
    /// Share of each source sequence shown as the observed prefix.
    pub observed_fraction: f64,
    pub lambda: f64,
    pub n_distractors: usize,
}

impl Default for QuestionConfig {
    fn default() -> Self {
        Self { n_questions: 100, observed_fraction: 0.5, lambda: 0.7, n_distractors: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { ks: std::iter::once(1).chain((5..=50).step_by(5)).collect() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads for per-question work; 0 uses all cores.
    pub workers: usize,
    pub paths: Paths,
    pub synth: Option<SynthSpec>,
    pub questions: QuestionConfig,
    pub retrieval: RetrievalParams,
    pub reasoner: ReasonerConfig,
    pub sweep: SweepConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file and applies environment overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("NSPLAN_KB_DIR") {
            self.paths.kb_dir = Some(v.into());
        }
        if let Some(v) = get("NSPLAN_WORD_VECTORS") {
            self.paths.word_vectors = Some(v.into());
        }
        if let Some(v) = get("NSPLAN_OUTPUT_DIR") {
            self.paths.output_dir = Some(v.into());
        }
    }

    /// Checks values and that every configured path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, reason: String| Err(ConfigError::Invalid { field, reason });
        if let Err(e) = self.retrieval.validate() {
            return invalid("retrieval", e.to_string());
        }
        if let Some(spec) = &self.synth {
            if let Err(e) = spec.validate() {
                return invalid("synth", e.to_string());
            }
        }
        let q = &self.questions;
        if q.n_questions == 0 {
            return invalid("questions.n_questions", "must be positive".into());
        }
        if !(q.observed_fraction > 0.0 && q.observed_fraction < 1.0) {
            return invalid("questions.observed_fraction", format!("must be in (0, 1), got {}", q.observed_fraction));
        }
        if !(q.lambda >= 0.0 && q.lambda.is_finite()) {
            return invalid("questions.lambda", format!("must be finite and ≥ 0, got {}", q.lambda));
        }
        if q.n_distractors == 0 {
            return invalid("questions.n_distractors", "must be positive".into());
        }
        if self.sweep.ks.is_empty() || self.sweep.ks.contains(&0) {
            return invalid("sweep.ks", "must be a nonempty list of positive values".into());
        }
        if let Some(w) = self.reasoner.state_weight {
            if !w.is_finite() {
                return invalid("reasoner.state_weight", format!("must be finite, got {w}"));
            }
        }
        match &self.paths.kb_dir {
            Some(dir) if !dir.exists() => {
                return Err(ConfigError::MissingPath { field: "paths.kb_dir", path: dir.display().to_string() })
            }
            None if self.synth.is_none() => return Err(ConfigError::MissingField("paths.kb_dir")),
            _ => {}
        }
        if let Some(wv) = self.word_vectors_path() {
            if !wv.exists() {
                return Err(ConfigError::MissingPath { field: "paths.word_vectors", path: wv.display().to_string() });
            }
        }
        Ok(())
    }

    /// Word-vector file to load, if the corpus is not synthesized.
    pub fn word_vectors_path(&self) -> Option<PathBuf> {
        self.paths
            .word_vectors
            .clone()
            .or_else(|| self.paths.kb_dir.as_ref().map(|d| d.join("word_vectors.txt")))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_sweep_grid() {
        let cfg = PipelineConfig::from_toml("[synth]\n").unwrap();
        assert_eq!(cfg.sweep.ks, vec![1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
        assert_eq!(cfg.retrieval, RetrievalParams::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn missing_kb_dir_names_the_field() {
        let cfg = PipelineConfig::from_toml("[paths]\nkb_dir = \"/no/such/dir\"\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("paths.kb_dir"), "{err}");
        let err = PipelineConfig::from_toml("").unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("paths.kb_dir"), "{err}");
    }

    #[test]
    fn env_overrides() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_env(|k| match k {
            "NSPLAN_OUTPUT_DIR" => Some("/tmp/x".into()),
            "NSPLAN_KB_DIR" => Some("/tmp/kb".into()),
            "NSPLAN_SEED" => Some("42".into()),
            _ => None,
        });
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x"));
        assert_eq!(cfg.paths.kb_dir, Some(PathBuf::from("/tmp/kb")));
        assert_eq!(cfg.word_vectors_path(), Some(PathBuf::from("/tmp/kb/word_vectors.txt")));
        // only paths are overridable
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("sede = 3\n").is_err());
        assert!(PipelineConfig::from_toml("[retrieval]\nk2 = 1.0\n").is_err());
    }
}
