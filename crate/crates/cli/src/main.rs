use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use nsplan::embeddings::{build_prototypes, ClassEmbeddings, WordVectorTable};
use nsplan::extractor::{extract_activities, ExtractorConfig, DEFAULT_THRESHOLD};
use nsplan::kb::{
    build_kb, load_kb, parse_schema_file, read_catalog_file, read_feature_dir, read_sequence_records,
    reference_catalog, save_kb, write_feature_dir, write_sequence_records, ActionRecord, ClassId, KnowledgeBase,
};
use nsplan::mqa::MultiChoiceQuestion;
use nsplan::pipeline::io::{read_jsonl, to_json_pretty, to_jsonl, write_bytes};
use nsplan::pipeline::run::{prepare_kb, run_prepared, sweep_prepared, write_run};
use nsplan::pipeline::stages::{answer_all, evaluate, generate_questions, AnswerRecord};
use nsplan::pipeline::{prepare, PipelineConfig, QuestionConfig};
use nsplan::reasoner::{ReasonerConfig, Representation, SimilarityBackend};
use nsplan::retrieval::{retrieve, Query, RankedResult, RetrievalParams};
use nsplan::strips::StateTemplateCatalog;
use nsplan::synth::{generate_corpus, SynthSpec};

#[derive(Parser)]
#[command(name = "nsplan", version, about = "Knowledge-base retrieval and multi-choice activity planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus as import files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// TOML generator spec; command-line values override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sequences: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        feature_dim: Option<usize>,
    },
    /// Build a knowledge base directory from import files.
    BuildKb {
        /// Catalog JSON; the shipped 157-class catalog when omitted.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        schemas: Option<PathBuf>,
        #[arg(long)]
        sequences: PathBuf,
        /// Directory of `<feature_ref>.bin` files.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Copied into the KB as `word_vectors.txt`.
        #[arg(long)]
        word_vectors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split per-video action records into activities.
    Extract {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        word_vectors: Option<PathBuf>,
        /// JSON lines of `{"video_id": .., "actions": [[class, t_start, t_end], ..]}`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        time_scale: Option<f64>,
    },
    /// Rank knowledge-base sequences for each query.
    Retrieve {
        #[arg(long)]
        kb: PathBuf,
        /// JSON lines of `{"id": .., "observed_actions": [..], "intent_embedding": [..], "features"?: ..}`.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file whose [retrieval] section overrides the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "k")]
        top_k: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        stage1_n: Option<usize>,
    },
    /// Generate multi-choice questions from knowledge-base sequences.
    GenMqa {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        word_vectors: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.7)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        n_questions: usize,
        #[arg(long, default_value_t = 0.5)]
        observed_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer multi-choice questions.
    Answer {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file whose [retrieval] and [reasoner] sections override the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        #[arg(long)]
        state_weight: Option<f64>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Score answers against question keys.
    Eval {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MQA accuracy as a function of the number of retrieved sequences.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Twed,
    Dtw,
    Mean,
    MaxPool,
}

impl From<Backend> for SimilarityBackend {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Twed => SimilarityBackend::default(),
            Backend::Dtw => SimilarityBackend::Dtw,
            Backend::Mean => SimilarityBackend::Mean,
            Backend::MaxPool => SimilarityBackend::MaxPool,
        }
    }
}

#[derive(Deserialize)]
struct VideoLine {
    video_id: String,
    actions: Vec<(ClassId, f64, f64)>,
}

#[derive(Serialize)]
struct ActivityLine {
    video_id: String,
    activities: Vec<Vec<(ClassId, f64, f64)>>,
}

#[derive(Deserialize)]
struct QueryLine {
    id: String,
    #[serde(flatten)]
    query: Query,
}

#[derive(Serialize)]
struct RetrievalLine {
    id: String,
    results: Vec<RankedResult>,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn word_vectors(kb: &Path, explicit: Option<PathBuf>) -> Result<WordVectorTable> {
    let path = explicit.unwrap_or_else(|| kb.join("word_vectors.txt"));
    let file = File::open(&path).with_context(|| format!("opening word vectors {}", path.display()))?;
    Ok(WordVectorTable::read(file)?)
}

fn open_kb(dir: &Path) -> Result<KnowledgeBase> {
    load_kb(dir).with_context(|| format!("loading knowledge base {}", dir.display()))
}

fn synth(
    out: &Path,
    spec_file: Option<PathBuf>,
    seed: u64,
    sequences: Option<usize>,
    sigma: Option<f64>,
    dim: Option<usize>,
) -> Result<()> {
    let mut spec: SynthSpec = match spec_file {
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthSpec::default(),
    };
    spec.n_sequences = sequences.unwrap_or(spec.n_sequences);
    spec.sigma = sigma.unwrap_or(spec.sigma);
    spec.feature_dim = dim.unwrap_or(spec.feature_dim);
    let corpus = generate_corpus(&spec, seed)?;
    write_bytes(&out.join("catalog.json"), &to_json_pretty(&corpus.catalog))?;
    write_bytes(&out.join("schemas.json"), corpus.schema_file_json().as_bytes())?;
    let mut seqs = Vec::new();
    write_sequence_records(&mut seqs, &corpus.sequences)?;
    write_bytes(&out.join("sequences.jsonl"), &seqs)?;
    write_feature_dir(out.join("features"), &corpus.features)?;
    let mut words = Vec::new();
    corpus.word_vectors.write(&mut words)?;
    write_bytes(&out.join("word_vectors.txt"), &words)?;
    eprintln!("wrote {} sequences to {}", corpus.sequences.len(), out.display());
    Ok(())
}

fn build(
    catalog: Option<PathBuf>,
    schemas: Option<PathBuf>,
    sequences: &Path,
    features: Option<PathBuf>,
    word_vectors: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let mut cat = match catalog {
        Some(p) => read_catalog_file(&p)?,
        None => reference_catalog(),
    };
    if let Some(p) = schemas {
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        cat.apply_schemas(parse_schema_file(&text, &StateTemplateCatalog::shipped())?)?;
    }
    let file = File::open(sequences).with_context(|| format!("opening {}", sequences.display()))?;
    let records = read_sequence_records(file)?;
    let feats = match features {
        Some(dir) => read_feature_dir(dir)?,
        None => Default::default(),
    };
    let kb = build_kb(cat, records, feats)?;
    save_kb(&kb, out)?;
    if let Some(wv) = word_vectors {
        std::fs::copy(&wv, out.join("word_vectors.txt")).with_context(|| format!("copying {}", wv.display()))?;
    }
    eprintln!("knowledge base with {} sequences written to {}", kb.n_docs(), out.display());
    Ok(())
}

fn answer_representation(kb: KnowledgeBase) -> (KnowledgeBase, Representation) {
    let report = build_prototypes(&kb);
    let kb = kb.with_prototypes(&report.prototypes);
    let rep = Representation::from_prototypes(kb.catalog());
    (kb, rep)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { out, spec, seed, sequences, sigma, feature_dim } => {
            synth(&out, spec, seed, sequences, sigma, feature_dim)
        }
        Command::BuildKb { catalog, schemas, sequences, features, word_vectors, out } => {
            build(catalog, schemas, &sequences, features, word_vectors, &out)
        }
        Command::Extract { kb, word_vectors: wv, input, out, threshold, time_scale } => {
            let kb_data = open_kb(&kb)?;
            let emb = ClassEmbeddings::build(kb_data.catalog(), &word_vectors(&kb, wv)?)?;
            let cfg = ExtractorConfig { threshold, time_scale };
            let videos: Vec<VideoLine> = read_jsonl(&input)?;
            let mut lines = Vec::with_capacity(videos.len());
            for v in videos {
                let actions: Vec<ActionRecord> = v.actions.iter().map(|&(c, s, e)| ActionRecord::new(c, s, e)).collect();
                let activities = extract_activities(&actions, kb_data.catalog(), &emb, &cfg)
                    .with_context(|| format!("video {}", v.video_id))?;
                lines.push(ActivityLine {
                    video_id: v.video_id,
                    activities: activities
                        .into_iter()
                        .map(|a| a.into_iter().map(|r| (r.class_id, r.t_start, r.t_end)).collect())
                        .collect(),
                });
            }
            write_bytes(&out, &to_jsonl(&lines))?;
            Ok(())
        }
        Command::Retrieve { kb, queries, out, config, top_k, epsilon, alpha, gamma, delta, stage1_n } => {
            let cfg = load_config(config.as_deref())?;
            let r = cfg.retrieval;
            let params = RetrievalParams {
                top_k: top_k.unwrap_or(r.top_k),
                epsilon: epsilon.unwrap_or(r.epsilon),
                alpha: alpha.unwrap_or(r.alpha),
                gamma: gamma.unwrap_or(r.gamma),
                delta: delta.unwrap_or(r.delta),
                stage1_n: stage1_n.unwrap_or(r.stage1_n),
                ..r
            };
            params.validate()?;
            let kb = open_kb(&kb)?;
            let queries: Vec<QueryLine> = read_jsonl(&queries)?;
            let lines = queries
                .into_iter()
                .map(|q| Ok(RetrievalLine { results: retrieve(&q.query, &kb, &params)?, id: q.id }))
                .collect::<Result<Vec<_>>>()?;
            write_bytes(&out, &to_jsonl(&lines))?;
            Ok(())
        }
        Command::GenMqa { kb, word_vectors: wv, seed, lambda, n_questions, observed_fraction, out } => {
            let table = word_vectors(&kb, wv)?;
            let p = prepare_kb(open_kb(&kb)?, &table)?;
            let qcfg = QuestionConfig { n_questions, observed_fraction, lambda, ..QuestionConfig::default() };
            let questions = generate_questions(&p.kb, &p.embeddings, &qcfg, seed)?;
            write_bytes(&out, &to_jsonl(&questions))?;
            eprintln!("wrote {} questions to {}", questions.len(), out.display());
            Ok(())
        }
        Command::Answer { kb, questions, out, config, top_k, backend, state_weight, workers } => {
            let cfg = load_config(config.as_deref())?;
            let params = RetrievalParams { top_k: top_k.unwrap_or(cfg.retrieval.top_k), ..cfg.retrieval };
            params.validate()?;
            let reasoner = ReasonerConfig {
                backend: backend.map_or(cfg.reasoner.backend, Into::into),
                state_weight: state_weight.or(cfg.reasoner.state_weight),
                ..cfg.reasoner
            };
            let (kb, rep) = answer_representation(open_kb(&kb)?);
            let questions: Vec<MultiChoiceQuestion> = read_jsonl(&questions)?;
            let answers = nsplan::pipeline::run::with_workers(workers, || {
                answer_all(&questions, &kb, &rep, &params, &reasoner)
            })??;
            write_bytes(&out, &to_jsonl(&answers))?;
            Ok(())
        }
        Command::Eval { questions, answers, out } => {
            let questions: Vec<MultiChoiceQuestion> = read_jsonl(&questions)?;
            let answers: Vec<AnswerRecord> = read_jsonl(&answers)?;
            let report = evaluate(&questions, &answers)?;
            let bytes = to_json_pretty(&report);
            match out {
                Some(p) => write_bytes(&p, &bytes)?,
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
            Ok(())
        }
        Command::Run { config, out } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(o) = out {
                cfg.paths.output_dir = Some(o);
            }
            let p = prepare(&cfg)?;
            let report = run_prepared(&cfg, &p)?;
            let dir = cfg.output_dir();
            write_run(&cfg, &p, &report, &dir)?;
            println!("mqa_accuracy {:.4} over {} questions", report.eval.mqa_accuracy, report.eval.n_questions);
            println!("outputs in {}", dir.display());
            Ok(())
        }
        Command::SweepK { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let report = sweep_prepared(&cfg, &prepare(&cfg)?)?;
            println!("{:>4}  {:>8}", "k", "accuracy");
            for row in &report.rows {
                println!("{:>4}  {:>8.4}", row.k, row.mqa_accuracy);
            }
            let path = out.unwrap_or_else(|| cfg.output_dir().join("sweep_k.json"));
            write_bytes(&path, &to_json_pretty(&report))?;
            Ok(())
        }
    }
}
