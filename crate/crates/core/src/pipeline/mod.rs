//! End-to-end pipeline: build or load a knowledge base, generate questions,
//! retrieve, answer and evaluate, with byte-stable outputs.

pub mod config;
pub mod io;
pub mod run;
pub mod stages;

use thiserror::Error;

pub use config::{ConfigError, PipelineConfig, QuestionConfig};
pub use run::{prepare, run_pipeline, sweep_k, write_run, Prepared, RunReport, SweepReport};
pub use stages::{answer_all, answer_question, evaluate, generate_questions, AnswerRecord, EvalReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Embedding(#[from] crate::embeddings::EmbeddingError),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error(transparent)]
    Reasoner(#[from] crate::reasoner::ReasonerError),
    #[error(transparent)]
    Mqa(#[from] crate::mqa::MqaError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Strips(#[from] crate::strips::StripsError),
    #[error(transparent)]
    Extract(#[from] crate::extractor::ExtractError),
    #[error("I/O failure on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed {path} line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("no sequence has at least two actions")]
    NoEligibleSequences,
    #[error("retrieved sequence `{0}` is not in the knowledge base")]
    UnknownSequence(String),
    #[error("question `{0}` has no answer record")]
    MissingAnswer(String),
    #[error("cannot start worker pool: {0}")]
    Workers(String),
}
