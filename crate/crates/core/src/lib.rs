//! Neuro-symbolic activity planning: a multimodal knowledge base of action
//! sequences, two-stage retrieval, STRIPS state reasoning, probabilistic
//! multi-choice answering and the supporting evaluation pipeline.

pub mod align;
pub mod embeddings;
pub mod extractor;
pub mod kb;
pub mod metrics;
pub mod mqa;
pub mod reasoner;
pub mod retrieval;
pub mod seed;
pub mod strips;
pub mod synth;
pub mod pipeline;
