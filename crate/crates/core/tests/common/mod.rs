//! Independent reference implementations shared by the integration tests
//! and the acceptance runner. Deliberately naive: enumeration and direct
//! formulas, no dynamic programming.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nsplan::align::Metric;
use nsplan::embeddings::ClassEmbeddings;
use nsplan::kb::{ActionClass, ActionRecord, Catalog, ClassId, StatePredicate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- alignment

/// Minimum over every monotone path (→, ↓, ↘) from the top-left to the
/// bottom-right cell, costs summed along the path.
pub fn dtw_paths(c: &[Vec<f64>]) -> f64 {
    fn walk(c: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let (m, n) = (c.len(), c[0].len());
        if i == m - 1 && j == n - 1 {
            *best = best.min(acc);
            return;
        }
        if j + 1 < n {
            walk(c, i, j + 1, acc + c[i][j + 1], best);
        }
        if i + 1 < m {
            walk(c, i + 1, j, acc + c[i + 1][j], best);
        }
        if i + 1 < m && j + 1 < n {
            walk(c, i + 1, j + 1, acc + c[i + 1][j + 1], best);
        }
    }
    let mut best = f64::INFINITY;
    walk(c, 0, 0, c[0][0], &mut best);
    best
}

/// Like [`dtw_paths`] but a path may start at any cell of the first row
/// and stop at any cell of the last row.
pub fn otam_paths(c: &[Vec<f64>]) -> f64 {
    fn walk(c: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let (m, n) = (c.len(), c[0].len());
        if i == m - 1 {
            *best = best.min(acc);
        }
        if j + 1 < n {
            walk(c, i, j + 1, acc + c[i][j + 1], best);
        }
        if i + 1 < m {
            walk(c, i + 1, j, acc + c[i + 1][j], best);
        }
        if i + 1 < m && j + 1 < n {
            walk(c, i + 1, j + 1, acc + c[i + 1][j + 1], best);
        }
    }
    let mut best = f64::INFINITY;
    for j in 0..c[0].len() {
        walk(c, 0, j, c[0][j], &mut best);
    }
    best
}

/// TWED by enumerating every edit script (match, delete from x, delete
/// from y). Sequences carry an implicit zero element at index 0 and the
/// time stamp of element i is i.
pub fn twed_scripts(x: &[Vec<f64>], y: &[Vec<f64>], nu: f64, lam: f64, metric: Metric) -> f64 {
    let dim = x.first().or(y.first()).map_or(0, Vec::len);
    let zero = vec![0.0; dim];
    let at = |s: &[Vec<f64>], i: usize| if i == 0 { zero.clone() } else { s[i - 1].clone() };
    let d = |a: &[f64], b: &[f64]| metric.distance(a, b);

    let mut best = f64::INFINITY;
    let mut stack = vec![(0usize, 0usize, 0.0f64)];
    while let Some((i, j, acc)) = stack.pop() {
        if i == x.len() && j == y.len() {
            best = best.min(acc);
            continue;
        }
        if i < x.len() && j < y.len() {
            let (a, b) = ((i + 1) as f64, (j + 1) as f64);
            let stiff = nu * ((a - b).abs() + ((a - 1.0) - (b - 1.0)).abs());
            let cost = d(&at(x, i + 1), &at(y, j + 1)) + d(&at(x, i), &at(y, j)) + stiff;
            stack.push((i + 1, j + 1, acc + cost));
        }
        if i < x.len() {
            stack.push((i + 1, j, acc + (d(&at(x, i + 1), &at(x, i)) + nu + lam)));
        }
        if j < y.len() {
            stack.push((i, j + 1, acc + (d(&at(y, j + 1), &at(y, j)) + nu + lam)));
        }
    }
    best
}

pub fn random_matrix(rng: &mut ChaCha8Rng, max_side: usize) -> Vec<Vec<f64>> {
    let m = rng.random_range(1..=max_side);
    let n = rng.random_range(1..=max_side);
    // a quarter of the matrices use small integers so that ties occur
    let ints = rng.random_bool(0.25);
    (0..m)
        .map(|_| {
            (0..n)
                .map(|_| if ints { f64::from(rng.random_range(0..3u8)) } else { rng.random::<f64>() })
                .collect()
        })
        .collect()
}

pub fn random_series(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

// --------------------------------------------------------------------- BM25

/// BM25 of every document for a query set, recounting everything from the
/// raw documents.
pub fn bm25_brute(query: &[ClassId], docs: &[Vec<ClassId>], k1: f64, b: f64) -> Vec<f64> {
    let mut terms: Vec<ClassId> = Vec::new();
    for &q in query {
        if !terms.contains(&q) {
            terms.push(q);
        }
    }
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for &t in &terms {
                let f = doc.iter().filter(|&&a| a == t).count() as f64;
                if f == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(&t)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * doc.len() as f64 / avgdl));
            }
            score
        })
        .collect()
}

// ----------------------------------------------------------------- reasoner

/// `p(c_i) = Σ_j softmax(s_rank)_j · softmax(φ_j)_i`, evaluated literally.
pub fn double_sum(s_rank: &[f64], phi: &[Vec<f64>]) -> Vec<f64> {
    let zr: f64 = s_rank.iter().map(|s| s.exp()).sum();
    let n = phi[0].len();
    (0..n)
        .map(|i| {
            s_rank
                .iter()
                .zip(phi)
                .map(|(s, row)| {
                    let zc: f64 = row.iter().map(|v| v.exp()).sum();
                    (s.exp() / zr) * (row[i].exp() / zc)
                })
                .sum()
        })
        .collect()
}

// ------------------------------------------------------------------- STRIPS

/// Executes a sequence over a plain list of predicates. Returns the index
/// of the first action whose preconditions fail, and the final list.
pub fn replay_list(seq: &[ClassId], init: &[StatePredicate], catalog: &Catalog) -> (Option<usize>, Vec<StatePredicate>) {
    let mut state: Vec<StatePredicate> = init.to_vec();
    for (k, id) in seq.iter().enumerate() {
        let class = catalog.get(*id).expect("known class");
        if class.pre.iter().any(|p| !state.contains(p)) {
            return (Some(k), state);
        }
        state.retain(|s| !class.del.contains(s));
        for a in &class.add {
            if !state.contains(a) {
                state.push(a.clone());
            }
        }
    }
    (None, state)
}

// ------------------------------------------------------------------ metrics

fn grams(seq: &[ClassId], n: usize) -> Vec<Vec<ClassId>> {
    if seq.len() < n {
        return Vec::new();
    }
    (0..=seq.len() - n).map(|i| seq[i..i + n].to_vec()).collect()
}

/// Sentence BLEU with uniform weights and brevity penalty, counting n-grams
/// by linear scans. Orders where neither side has an n-gram are skipped.
pub fn bleu_brute(pred: &[ClassId], gt: &[ClassId], n: usize) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let mut precisions = Vec::new();
    for m in 1..=n {
        let p = grams(pred, m);
        let g = grams(gt, m);
        if p.is_empty() && g.is_empty() {
            continue;
        }
        let mut seen: Vec<&Vec<ClassId>> = Vec::new();
        let mut clipped = 0usize;
        for w in &p {
            if seen.contains(&w) {
                continue;
            }
            seen.push(w);
            let in_p = p.iter().filter(|v| *v == w).count();
            let in_g = g.iter().filter(|v| *v == w).count();
            clipped += in_p.min(in_g);
        }
        if clipped == 0 {
            return 0.0;
        }
        precisions.push(clipped as f64 / p.len() as f64);
    }
    let bp = if pred.len() < gt.len() { (1.0 - gt.len() as f64 / pred.len() as f64).exp() } else { 1.0 };
    if precisions.is_empty() {
        return bp;
    }
    let w = 1.0 / precisions.len() as f64;
    bp * precisions.iter().map(|p| p.powf(w)).product::<f64>()
}

pub fn dist_brute(lists: &[Vec<ClassId>], n: usize) -> f64 {
    let all: Vec<Vec<ClassId>> = lists.iter().flat_map(|s| grams(s, n)).collect();
    if all.is_empty() {
        return 0.0;
    }
    let mut distinct: Vec<&Vec<ClassId>> = Vec::new();
    for g in &all {
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    distinct.len() as f64 / all.len() as f64
}

// ---------------------------------------------------------------- extractor

/// Six classes over two topics. Classes 0 and 1 share an embedding, 2 and
/// 3 share another (but sit in different topics), 4 and 5 a third.
pub fn extractor_world() -> (Catalog, ClassEmbeddings) {
    let spec = [(0, 0, 0), (1, 0, 0), (2, 0, 1), (3, 1, 1), (4, 1, 2), (5, 1, 2)];
    let classes = spec
        .iter()
        .map(|&(id, topic, _)| ActionClass::new(id, format!("c{id}"), format!("c{id}"), topic))
        .collect();
    let vectors = spec
        .iter()
        .map(|&(id, _, axis)| {
            let mut v = vec![0.0; 3];
            v[axis] = 1.0;
            (id, v)
        })
        .collect::<BTreeMap<_, _>>();
    (Catalog::new(2, classes).unwrap(), ClassEmbeddings::from_vectors(vectors))
}

pub struct TracedCase {
    pub name: &'static str,
    pub actions: Vec<ActionRecord>,
    pub time_scale: Option<f64>,
    /// Expected activities as (class, t_start) pairs.
    pub expected: Vec<Vec<(ClassId, f64)>>,
}

fn at(class: ClassId, t: f64) -> ActionRecord {
    ActionRecord::new(class, t, t + 0.5)
}

/// Inputs for [`extractor_world`] with partitions traced by hand at
/// threshold 1.3. Pair scores are `cos + f_time + same_topic`, where
/// `f_time(0.1) ≈ 0.842`, `f_time(0.2) ≈ 0.682`, `f_time(0.3) ≈ 0.514`,
/// `f_time(0.5) ≈ 0.137` and `f_time(0.6) ≈ −0.089`.
pub fn traced_cases() -> Vec<TracedCase> {
    vec![
        TracedCase { name: "empty", actions: vec![], time_scale: Some(10.0), expected: vec![] },
        TracedCase {
            name: "single",
            actions: vec![at(0, 0.0)],
            time_scale: Some(10.0),
            expected: vec![vec![(0, 0.0)]],
        },
        // kitchen pair, then a bedroom pair 18 s later (x̂ = 0.6)
        TracedCase {
            name: "two rooms",
            actions: vec![at(0, 0.0), at(1, 2.0), at(4, 20.0), at(5, 22.0)],
            time_scale: Some(30.0),
            expected: vec![vec![(0, 0.0), (1, 2.0)], vec![(4, 20.0), (5, 22.0)]],
        },
        // 0→2 (1.842), 2→3 share an embedding (1.842), 3→4 share a topic (1.842)
        TracedCase {
            name: "bridge across topics",
            actions: vec![at(0, 0.0), at(2, 1.0), at(3, 2.0), at(4, 3.0)],
            time_scale: Some(10.0),
            expected: vec![vec![(0, 0.0), (2, 1.0), (3, 2.0), (4, 3.0)]],
        },
        // from 0: class 2 at x̂=0.1 scores 1.842, class 1 at x̂=0.3 scores 2.514;
        // after jumping to t=3 the earlier class 2 is out of reach
        TracedCase {
            name: "best not nearest",
            actions: vec![at(0, 0.0), at(2, 1.0), at(1, 3.0)],
            time_scale: Some(10.0),
            expected: vec![vec![(0, 0.0), (1, 3.0)], vec![(2, 1.0)]],
        },
        // from 2: classes 0 and 3 both score 1 + f_time(0.1); the lower id
        // wins and 0→3 scores only 1
        TracedCase {
            name: "tie to lowest class",
            actions: vec![at(3, 1.0), at(2, 0.0), at(0, 1.0)],
            time_scale: Some(10.0),
            expected: vec![vec![(2, 0.0), (0, 1.0)], vec![(3, 1.0)]],
        },
        // 1 + f_time(0.5) = 1.137 < 1.3
        TracedCase {
            name: "below threshold",
            actions: vec![at(0, 0.0), at(2, 5.0)],
            time_scale: Some(10.0),
            expected: vec![vec![(0, 0.0)], vec![(2, 5.0)]],
        },
        TracedCase {
            name: "repeated class",
            actions: vec![at(0, 2.0), at(0, 0.0), at(0, 1.0)],
            time_scale: Some(10.0),
            expected: vec![vec![(0, 0.0), (0, 1.0), (0, 2.0)]],
        },
        // time scale defaults to the span [0, 10]: 0→2 at x̂=0.3 scores
        // 1.514, 0→1 at x̂=0.9 only 0.688; then 2→1 at x̂=0.6 scores 0.911
        TracedCase {
            name: "default time scale",
            actions: vec![
                ActionRecord::new(0, 0.0, 1.0),
                ActionRecord::new(2, 3.0, 4.0),
                ActionRecord::new(1, 9.0, 10.0),
            ],
            time_scale: None,
            expected: vec![vec![(0, 0.0), (2, 3.0)], vec![(1, 9.0)]],
        },
        // two interleaved activities that never score across each other
        TracedCase {
            name: "interleaved",
            actions: vec![at(1, 1.5), at(5, 1.0), at(0, 0.5), at(4, 0.0)],
            time_scale: Some(10.0),
            expected: vec![vec![(4, 0.0), (5, 1.0)], vec![(0, 0.5), (1, 1.5)]],
        },
    ]
}
