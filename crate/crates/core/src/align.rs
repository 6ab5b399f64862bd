//! Dynamic-programming alignment kernels over vector sequences: cost
//! matrices, DTW, boundary-relaxed OTAM, TWED and pooled similarities.

use thiserror::Error;

use crate::kb::FeatureSequence;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cannot align an empty sequence")]
    EmptySequence,
    #[error("invalid cost matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid TWED parameters: nu = {nu}, lambda = {lam}")]
    InvalidParams { nu: f64, lam: f64 },
}

pub type Result<T, E = AlignError> = std::result::Result<T, E>;

/// Local distance between two vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `1 − cosine`. Two zero vectors are at distance 0, a zero vector and a
    /// nonzero one at distance 1.
    #[default]
    Cosine,
    L2,
}

impl Metric {
    pub fn distance<T: Copy + Into<f64>>(self, a: &[T], b: &[T]) -> f64 {
        match self {
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (&x, &y) in a.iter().zip(b) {
                    let (x, y): (f64, f64) = (x.into(), y.into());
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                cosine_distance(dot, na, nb)
            }
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x.into() - y.into();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

fn cosine_distance(dot: f64, na: f64, nb: f64) -> f64 {
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        // sqrt(na·nb) rather than sqrt(na)·sqrt(nb): for a = b this is
        // exactly dot, so d(v, v) = 0 holds bit-for-bit.
        _ => (1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0),
    }
}

/// Dense row-major matrix of local costs (or similarities).
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(AlignError::EmptySequence);
        }
        if values.len() != rows * cols {
            return Err(AlignError::InvalidMatrix(format!("{} values for a {rows}×{cols} matrix", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(AlignError::InvalidMatrix(format!("non-finite entry {v}")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AlignError::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every entry, e.g. `|c| 1.0 - c` to turn cosine
    /// distances into similarities.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// `C[i][j] = metric(x_i, y_j)` for two sequences of equal-dimension vectors.
pub fn pairwise<T, A, B>(x: &[A], y: &[B], metric: Metric) -> Result<CostMatrix>
where
    T: Copy + Into<f64>,
    A: AsRef<[T]>,
    B: AsRef<[T]>,
{
    if x.is_empty() || y.is_empty() {
        return Err(AlignError::EmptySequence);
    }
    let dim = x[0].as_ref().len();
    for v in x.iter().map(AsRef::as_ref).chain(y.iter().map(AsRef::as_ref)) {
        if v.len() != dim {
            return Err(AlignError::DimensionMismatch { left: dim, right: v.len() });
        }
    }
    let mut values = Vec::with_capacity(x.len() * y.len());
    match metric {
        Metric::Cosine => {
            let norm = |v: &[T]| v.iter().map(|&a| a.into() * a.into()).sum::<f64>();
            let ny: Vec<f64> = y.iter().map(|v| norm(v.as_ref())).collect();
            for a in x {
                let a = a.as_ref();
                let na = norm(a);
                for (b, &nb) in y.iter().zip(&ny) {
                    let dot: f64 = a.iter().zip(b.as_ref()).map(|(&p, &q)| p.into() * q.into()).sum();
                    values.push(cosine_distance(dot, na, nb));
                }
            }
        }
        Metric::L2 => {
            for a in x {
                for b in y {
                    values.push(metric.distance(a.as_ref(), b.as_ref()));
                }
            }
        }
    }
    CostMatrix::new(x.len(), y.len(), values)
}

/// Cost matrix between the frames of two feature sequences.
pub fn cost_matrix(x: &FeatureSequence, y: &FeatureSequence, metric: Metric) -> Result<CostMatrix> {
    if x.dim() != y.dim() {
        return Err(AlignError::DimensionMismatch { left: x.dim(), right: y.dim() });
    }
    let xs: Vec<&[f32]> = x.frames().collect();
    let ys: Vec<&[f32]> = y.frames().collect();
    pairwise(&xs, &ys, metric)
}

/// Minimal cumulative cost of a monotone, continuous path from the top-left
/// to the bottom-right cell using steps →, ↓ and ↘.
pub fn dtw(c: &CostMatrix) -> f64 {
    let (m, n) = (c.rows, c.cols);
    let mut prev = vec![f64::INFINITY; n];
    let mut cur = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut b = prev[j];
                if j > 0 {
                    b = b.min(cur[j - 1]).min(prev[j - 1]);
                }
                b
            };
            cur[j] = best + c.get(i, j);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n - 1]
}

/// OTAM distance: like [`dtw`] but the path may enter the first query row
/// at any reference column and leave the last row at any column. Rows index
/// the query, columns the reference. Hard minimum.
pub fn otam(c: &CostMatrix) -> f64 {
    let (m, n) = (c.rows, c.cols);
    let mut prev = vec![0.0f64; n];
    for j in 0..n {
        let carried = if j > 0 { prev[j - 1].min(0.0) } else { 0.0 };
        prev[j] = carried + c.get(0, j);
    }
    let mut cur = vec![0.0; n];
    for i in 1..m {
        for j in 0..n {
            let mut b = prev[j];
            if j > 0 {
                b = b.min(cur[j - 1]).min(prev[j - 1]);
            }
            cur[j] = b + c.get(i, j);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Stiffness `nu` and per-edit penalty `lam` of TWED.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TwedParams {
    pub nu: f64,
    pub lam: f64,
}

impl Default for TwedParams {
    fn default() -> Self {
        Self { nu: 1.0, lam: 1.0 }
    }
}

impl TwedParams {
    pub fn new(nu: f64, lam: f64) -> Result<Self> {
        let p = Self { nu, lam };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.nu) && ok(self.lam) {
            Ok(())
        } else {
            Err(AlignError::InvalidParams { nu: self.nu, lam: self.lam })
        }
    }
}

/// Time-warp edit distance with unit-spaced timestamps.
///
/// Both sequences are prefixed with a zero vector at time 0. Empty inputs
/// are allowed: the distance is then the cost of deleting every element.
pub fn twed<A: AsRef<[f64]>, B: AsRef<[f64]>>(x: &[A], y: &[B], p: TwedParams, metric: Metric) -> Result<f64> {
    p.validate()?;
    let dim = x.first().map(|v| v.as_ref().len()).or_else(|| y.first().map(|v| v.as_ref().len())).unwrap_or(0);
    for v in x.iter().map(AsRef::as_ref).chain(y.iter().map(AsRef::as_ref)) {
        if v.len() != dim {
            return Err(AlignError::DimensionMismatch { left: dim, right: v.len() });
        }
    }
    let zero = vec![0.0; dim];
    let xa = |i: usize| if i == 0 { zero.as_slice() } else { x[i - 1].as_ref() };
    let ya = |j: usize| if j == 0 { zero.as_slice() } else { y[j - 1].as_ref() };
    let d = |a: &[f64], b: &[f64]| metric.distance(a, b);
    let (n, m) = (x.len(), y.len());

    // deletion costs depend on one sequence only
    let del_x: Vec<f64> = (1..=n).map(|i| d(xa(i), xa(i - 1)) + p.nu + p.lam).collect();
    let del_y: Vec<f64> = (1..=m).map(|j| d(ya(j), ya(j - 1)) + p.nu + p.lam).collect();

    let mut prev = vec![0.0; m + 1];
    for j in 1..=m {
        prev[j] = prev[j - 1] + del_y[j - 1];
    }
    let mut cur = vec![0.0; m + 1];
    for i in 1..=n {
        cur[0] = prev[0] + del_x[i - 1];
        for j in 1..=m {
            let stiffness = p.nu * 2.0 * (i as f64 - j as f64).abs();
            let matched = prev[j - 1] + (d(xa(i), ya(j)) + d(xa(i - 1), ya(j - 1)) + stiffness);
            let drop_x = prev[j] + del_x[i - 1];
            let drop_y = cur[j - 1] + del_y[j - 1];
            cur[j] = matched.min(drop_x).min(drop_y);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Mean over all cells of a similarity matrix.
pub fn similarity_mean(sim: &CostMatrix) -> f64 {
    sim.values.iter().sum::<f64>() / sim.values.len() as f64
}

/// Mean over rows of the row maximum of a similarity matrix.
pub fn similarity_max(sim: &CostMatrix) -> f64 {
    (0..sim.rows)
        .map(|i| sim.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / sim.rows as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cost_matrices() {
        let x = FeatureSequence::from_frames(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = cost_matrix(&x, &x, Metric::Cosine).unwrap();
        assert_eq!((c.get(0, 0), c.get(1, 1)), (0.0, 0.0));
        assert_eq!(c.get(0, 1), 1.0);
        let l2 = pairwise(&[[1.0]], &[[4.0]], Metric::L2).unwrap();
        assert_eq!(l2.get(0, 0), 3.0);
        let y = FeatureSequence::from_frames(3, vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(cost_matrix(&x, &y, Metric::Cosine), Err(AlignError::DimensionMismatch { .. })));
        assert_eq!(pairwise::<f64, [f64; 1], [f64; 1]>(&[], &[[1.0]], Metric::L2), Err(AlignError::EmptySequence));
    }

    #[test]
    fn cosine_distance_of_self_is_exact() {
        let v = [0.1f64, -3.7, 2.2, 1e-3];
        assert_eq!(Metric::Cosine.distance(&v, &v), 0.0);
        assert_eq!(Metric::Cosine.distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(Metric::Cosine.distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw(&m(&[&[0.7]])), 0.7);
        assert_eq!(dtw(&m(&[&[0.0, 2.0], &[2.0, 0.0]])), 0.0);
        // paths: ↘ = 1+4, →↓ = 1+2+4, ↓→ = 1+3+4
        assert_eq!(dtw(&m(&[&[1.0, 2.0], &[3.0, 4.0]])), 5.0);
    }

    #[test]
    fn otam_examples() {
        let x: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c = pairwise(&x, &x, Metric::Cosine).unwrap();
        assert_eq!(otam(&c), 0.0);

        // query matches reference columns 1..3; everything else costs 1
        let window = m(&[&[1.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 0.0, 1.0]]);
        assert_eq!(otam(&window), 0.0);
        assert_eq!(dtw(&window), 2.0);

        // diagonal strictly cheapest: both agree
        let diag = m(&[&[0.1, 5.0, 5.0], &[5.0, 0.2, 5.0], &[5.0, 5.0, 0.3]]);
        assert_eq!(otam(&diag), dtw(&diag));
    }

    #[test]
    fn twed_examples() {
        let p = TwedParams::default();
        let x = vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]];
        assert_eq!(twed(&x, &x, p, Metric::Cosine).unwrap(), 0.0);
        // single elements: d(x,y) + d(0,0) + 0 stiffness
        let a = [vec![1.0, 0.0]];
        let b = [vec![0.6, 0.8]];
        assert!((twed(&a, &b, p, Metric::Cosine).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(twed::<Vec<f64>, Vec<f64>>(&[], &[], p, Metric::L2).unwrap(), 0.0);
        // deleting [3] alone: d(3, 0) + nu + lam
        assert_eq!(twed::<Vec<f64>, Vec<f64>>(&[vec![3.0]], &[], p, Metric::L2).unwrap(), 5.0);
        assert!(twed(&[vec![1.0]], &[vec![1.0, 2.0]], p, Metric::L2).is_err());
        assert!(TwedParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn pooled_similarities() {
        assert_eq!(similarity_mean(&m(&[&[1.0]])), 1.0);
        assert_eq!(similarity_max(&m(&[&[1.0]])), 1.0);
        let eye = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(similarity_mean(&eye), 0.5);
        assert_eq!(similarity_max(&eye), 1.0);
        let zero = m(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!((similarity_mean(&zero), similarity_max(&zero)), (0.0, 0.0));
    }
}
