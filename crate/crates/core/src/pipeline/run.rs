//! Whole-pipeline runs, the top-k sweep and the run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::PipelineConfig;
use super::io::{sha256_hex, to_json_pretty, to_jsonl, write_bytes};
use super::stages::{answer_all, answer_from_results, evaluate, generate_questions, query_of, AnswerRecord, EvalReport};
use super::PipelineError;
use crate::embeddings::{build_prototypes, ClassEmbeddings, WordVectorTable};
use crate::kb::{load_kb, ClassId, KnowledgeBase};
use crate::mqa::MultiChoiceQuestion;
use crate::reasoner::Representation;
use crate::retrieval::{retrieve, RetrievalParams};
use crate::seed::derive_seed;
use crate::synth::generate_corpus;

/// Knowledge base with prototypes attached, phrase embeddings and the
/// reasoner's action representation.
pub struct Prepared {
    pub kb: KnowledgeBase,
    pub embeddings: ClassEmbeddings,
    pub representation: Representation,
    /// Classes without any feature-bearing clip (zero prototype).
    pub no_clips: Vec<ClassId>,
}

/// Runs `f` on a pool of `workers` threads (0 = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Workers(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared, PipelineError> {
    cfg.validate()?;
    let (kb, table) = match (&cfg.paths.kb_dir, &cfg.synth) {
        (Some(dir), _) => {
            let kb = load_kb(dir)?;
            let path = cfg.word_vectors_path().expect("kb_dir is set");
            let file = File::open(&path)
                .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
            (kb, WordVectorTable::read(file)?)
        }
        (None, Some(spec)) => {
            let corpus = generate_corpus(spec, derive_seed(cfg.seed, "synth"))?;
            (corpus.build_kb()?, corpus.word_vectors)
        }
        (None, None) => unreachable!("validate requires a KB source"),
    };
    prepare_kb(kb, &table)
}

/// Attaches prototypes built from the KB's own features and embeds the
/// catalog phrases.
pub fn prepare_kb(kb: KnowledgeBase, table: &WordVectorTable) -> Result<Prepared, PipelineError> {
    let report = build_prototypes(&kb);
    let kb = kb.with_prototypes(&report.prototypes);
    let embeddings = ClassEmbeddings::build(kb.catalog(), table)?;
    let representation = Representation::from_prototypes(kb.catalog());
    Ok(Prepared { kb, embeddings, representation, no_clips: report.no_clips })
}

pub struct RunReport {
    pub questions: Vec<MultiChoiceQuestion>,
    pub answers: Vec<AnswerRecord>,
    pub eval: EvalReport,
}

pub fn run_prepared(cfg: &PipelineConfig, p: &Prepared) -> Result<RunReport, PipelineError> {
    with_workers(cfg.workers, || {
        let questions = generate_questions(&p.kb, &p.embeddings, &cfg.questions, cfg.seed)?;
        let answers = answer_all(&questions, &p.kb, &p.representation, &cfg.retrieval, &cfg.reasoner)?;
        let eval = evaluate(&questions, &answers)?;
        Ok(RunReport { questions, answers, eval })
    })?
}

/// build-kb → gen-mqa → retrieve → answer → eval.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    run_prepared(cfg, &prepare(cfg)?)
}

/// Writes `questions.jsonl`, `answers.jsonl`, `metrics.json` and a
/// `manifest.json` recording the config and output digests. Outputs are
/// byte-identical for identical inputs.
pub fn write_run(cfg: &PipelineConfig, p: &Prepared, report: &RunReport, dir: &Path) -> Result<(), PipelineError> {
    let files = [
        ("questions.jsonl", to_jsonl(&report.questions)),
        ("answers.jsonl", to_jsonl(&report.answers)),
        ("metrics.json", to_json_pretty(&report.eval)),
    ];
    let mut digests = BTreeMap::new();
    for (name, bytes) in &files {
        write_bytes(&dir.join(name), bytes)?;
        digests.insert(*name, sha256_hex(bytes));
    }
    let manifest = json!({
        "tool": "nsplan",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "kb": {
            "n_sequences": p.kb.n_docs(),
            "n_classes": p.kb.catalog().len(),
            "avgdl": p.kb.avgdl(),
            "feature_dim": p.kb.feature_dim(),
            "classes_without_clips": p.no_clips,
        },
        "metrics": report.eval,
        "outputs": digests,
    });
    write_bytes(&dir.join("manifest.json"), &to_json_pretty(&manifest))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mqa_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// MQA accuracy for every `k` in `cfg.sweep.ks`. Retrieval runs once with
/// the largest `k`; a shorter list is its prefix because the ranking order
/// is total.
pub fn sweep_prepared(cfg: &PipelineConfig, p: &Prepared) -> Result<SweepReport, PipelineError> {
    let k_max = cfg.sweep.ks.iter().copied().max().unwrap_or(1);
    let params = RetrievalParams { top_k: k_max, stage1_n: cfg.retrieval.stage1_n.max(k_max), ..cfg.retrieval };
    with_workers(cfg.workers, || {
        let questions = generate_questions(&p.kb, &p.embeddings, &cfg.questions, cfg.seed)?;
        let ranked = questions
            .par_iter()
            .map(|q| Ok(retrieve(&query_of(q), &p.kb, &params)?))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let rows = cfg
            .sweep
            .ks
            .iter()
            .map(|&k| {
                let answers = questions
                    .par_iter()
                    .zip(&ranked)
                    .map(|(q, r)| answer_from_results(q, r, k, &p.kb, &p.representation, &cfg.reasoner))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SweepRow { k, mqa_accuracy: evaluate(&questions, &answers)?.mqa_accuracy })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(SweepReport { rows })
    })?
}

pub fn sweep_k(cfg: &PipelineConfig) -> Result<SweepReport, PipelineError> {
    sweep_prepared(cfg, &prepare(cfg)?)
}
