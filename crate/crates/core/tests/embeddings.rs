use std::collections::BTreeMap;

use nsplan::embeddings::{build_prototypes, cosine, embed_phrase, tfidf_weights, WordVectorTable};
use nsplan::seed::derive_seed;
use nsplan::synth::{generate_corpus, SynthSpec};
use proptest::prelude::*;

fn table(vectors: &[Vec<f64>]) -> WordVectorTable {
    let mut t = WordVectorTable::new(vectors[0].len());
    for (w, v) in ["open", "door", "wash", "hand"].iter().zip(vectors) {
        t.insert(*w, v.clone()).unwrap();
    }
    t
}

fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 4)
}

proptest! {
    #[test]
    fn phrase_embedding_is_linear_in_the_table(v in vectors(), s in -3.0f64..3.0) {
        let corpus = ["open door", "wash hand", "open hand"];
        let w = tfidf_weights(&corpus).unwrap();
        let t = table(&v);
        let base = embed_phrase("open door", &t, &w).vector;
        let scaled = embed_phrase("open door", &t.scaled(s), &w).vector;
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a * s - b).abs() <= 1e-12);
        }
        // sum of the two weighted word vectors
        for (k, x) in base.iter().enumerate() {
            let want = w.idf("open") * v[0][k] + w.idf("door") * v[1][k];
            prop_assert!((x - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_ignores_positive_scale(u in prop::collection::vec(-2.0f64..2.0, 4), v in prop::collection::vec(-2.0f64..2.0, 4), s in 0.01f64..100.0) {
        let c = cosine(&u, &v).unwrap();
        let scaled: Vec<f64> = u.iter().map(|x| x * s).collect();
        prop_assert!((cosine(&scaled, &v).unwrap() - c).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&c));
    }
}

#[test]
fn prototypes_are_frame_means() {
    let spec = SynthSpec { n_sequences: 40, n_classes: 30, n_topics: 5, feature_dim: 6, sigma: 0.7, ..SynthSpec::default() };
    let corpus = generate_corpus(&spec, derive_seed(3, "prototype-test")).unwrap();
    let kb = corpus.build_kb().unwrap();
    let report = build_prototypes(&kb);

    let mut sums: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for (pos, seq) in kb.sequences().iter().enumerate() {
        let fs = kb.features_of(pos).unwrap();
        for a in &seq.actions {
            for i in fs.span_of(a.t_start, a.t_end) {
                let (sum, n) = sums.entry(a.class_id).or_insert_with(|| (vec![0.0; 6], 0));
                *n += 1;
                for (s, &x) in sum.iter_mut().zip(fs.frame(i)) {
                    *s += f64::from(x);
                }
            }
        }
    }
    assert_eq!(report.prototypes.len(), sums.len());
    for (id, (sum, n)) in sums {
        for (p, s) in report.prototypes[&id].iter().zip(sum) {
            assert!((p - s / n as f64).abs() <= 1e-9);
        }
    }
    let missing: Vec<u32> = (0..30).filter(|c| !report.prototypes.contains_key(c)).collect();
    assert_eq!(report.no_clips, missing);
}
