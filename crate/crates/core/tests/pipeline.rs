use std::fs;
use std::path::Path;

use nsplan::kb::save_kb;
use nsplan::pipeline::run::{run_prepared, sweep_prepared};
use nsplan::pipeline::{prepare, write_run, PipelineConfig};
use nsplan::seed::derive_seed;
use nsplan::synth::{generate_corpus, SynthSpec};

fn small() -> PipelineConfig {
    PipelineConfig::from_toml(
        r#"
seed = 3
[synth]
n_sequences = 80
feature_dim = 64
[questions]
n_questions = 30
[sweep]
ks = [1, 5, 10]
"#,
    )
    .unwrap()
}

fn run_into(cfg: &PipelineConfig, dir: &Path) {
    let p = prepare(cfg).unwrap();
    let report = run_prepared(cfg, &p).unwrap();
    write_run(cfg, &p, &report, dir).unwrap();
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_into(&cfg, a.path());
    run_into(&cfg, b.path());
    for name in ["manifest.json", "questions.jsonl", "answers.jsonl", "metrics.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn worker_count_does_not_change_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = small();
    cfg.workers = 1;
    run_into(&cfg, a.path());
    cfg.workers = 4;
    run_into(&cfg, b.path());
    for name in ["questions.jsonl", "answers.jsonl", "metrics.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn seed_changes_the_questions() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = small();
    run_into(&cfg, a.path());
    cfg.seed += 1;
    run_into(&cfg, b.path());
    assert_ne!(read(a.path(), "questions.jsonl"), read(b.path(), "questions.jsonl"));
}

#[test]
fn sweep_matches_single_runs() {
    let cfg = small();
    let p = prepare(&cfg).unwrap();
    let sweep = sweep_prepared(&cfg, &p).unwrap();
    assert_eq!(sweep.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 5, 10]);
    for row in &sweep.rows {
        let mut single = cfg.clone();
        single.retrieval.top_k = row.k;
        let acc = run_prepared(&single, &p).unwrap().eval.mqa_accuracy;
        assert_eq!(row.mqa_accuracy, acc, "k = {}", row.k);
    }
}

#[test]
fn saved_knowledge_base_reproduces_the_synthetic_run() {
    let cfg = small();
    let spec = cfg.synth.clone().unwrap();
    let corpus = generate_corpus(&spec, derive_seed(cfg.seed, "synth")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_kb(&corpus.build_kb().unwrap(), dir.path()).unwrap();
    corpus.word_vectors.write(fs::File::create(dir.path().join("word_vectors.txt")).unwrap()).unwrap();

    let mut from_disk = cfg.clone();
    from_disk.synth = None;
    from_disk.paths.kb_dir = Some(dir.path().to_path_buf());
    let a = run_prepared(&cfg, &prepare(&cfg).unwrap()).unwrap();
    let b = run_prepared(&from_disk, &prepare(&from_disk).unwrap()).unwrap();
    assert_eq!(a.questions, b.questions);
    assert_eq!(a.answers, b.answers);
}

#[test]
fn missing_kb_is_reported_by_field() {
    let cfg = PipelineConfig::from_toml("[paths]\nkb_dir = \"/definitely/not/here\"\n").unwrap();
    let err = prepare(&cfg).err().unwrap();
    assert!(err.to_string().contains("paths.kb_dir"), "{err}");
}

#[test]
fn tiny_catalog_fails_instead_of_looping() {
    // one class cannot yield five distinct distractors for a one-action future
    let mut cfg = small();
    cfg.synth = Some(SynthSpec { n_classes: 1, n_topics: 1, n_sequences: 10, mean_length: 2.0, max_length: 2, feature_dim: 4, ..SynthSpec::default() });
    let err = prepare(&cfg).and_then(|p| run_prepared(&cfg, &p)).err().expect("generation gives up");
    assert!(err.to_string().contains("attempts"), "{err}");
}
