//! Self-similar measures, cell functions and the averaging operator `P_n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::CellWord;

/// Tolerance on the total mass of user supplied weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A self-similar probability measure: `mu(K_w)` is the product of the symbol weights of `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarMeasure {
    weights: Vec<f64>,
}

impl SelfSimilarMeasure {
    pub fn uniform(branching: usize) -> Self {
        Self { weights: vec![1.0 / branching as f64; branching] }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidWeights(format!("weight {w} is not positive")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    /// One weight per line (blank lines and `#` comments ignored).
    pub fn parse(text: &str, branching: usize) -> Result<Self> {
        let weights = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.parse::<f64>().map_err(|e| Error::InvalidWeights(format!("`{l}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if weights.len() != branching {
            return Err(Error::InvalidWeights(format!(
                "expected {branching} weights, found {}",
                weights.len()
            )));
        }
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn branching(&self) -> usize {
        self.weights.len()
    }

    /// Decay rate `gamma = max weight`, so `mu(K_w) <= gamma^|w|` with `c_mu = 1`.
    pub fn gamma(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn mass(&self, w: &CellWord) -> f64 {
        w.symbols().iter().map(|&s| self.weights[s as usize]).product()
    }

    /// Mass of cell `idx` at level `n`.
    pub fn mass_of(&self, n: usize, mut idx: usize) -> f64 {
        let k = self.branching();
        let mut m = 1.0;
        for _ in 0..n {
            m *= self.weights[idx % k];
            idx /= k;
        }
        m
    }

    /// `mu(K_v) / mu(K_w)` for a descendant `v` (index `idx` at its level) `depth` levels below `w`.
    pub fn relative_mass(&self, depth: usize, idx: usize) -> f64 {
        self.mass_of(depth, idx)
    }

    /// `P_n` of the piecewise-constant lift of `f`: the `mu`-weighted average over descendants.
    pub fn project(&self, f: &CellFunction, to_level: usize) -> Result<CellFunction> {
        if to_level > f.level {
            return Err(Error::InvalidArgument(format!(
                "cannot project level {} to finer level {to_level}",
                f.level
            )));
        }
        let k = self.branching();
        let mut values = f.values.clone();
        for _ in to_level..f.level {
            values = values
                .chunks_exact(k)
                .map(|ch| ch.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
                .collect();
        }
        Ok(CellFunction { level: to_level, values })
    }

    /// `P_n` for a sparse function; absent cells are zero.
    pub fn project_sparse(&self, f: &SparseCellFunction, to_level: usize) -> Result<SparseCellFunction> {
        if to_level > f.level {
            return Err(Error::InvalidArgument(format!(
                "cannot project level {} to finer level {to_level}",
                f.level
            )));
        }
        let depth = f.level - to_level;
        let block = self.branching().pow(depth as u32);
        let mut indices: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (&idx, &v) in f.indices.iter().zip(&f.values) {
            let parent = idx / block;
            let contrib = v * self.relative_mass(depth, idx % block);
            match indices.last() {
                Some(&last) if last == parent => *values.last_mut().unwrap() += contrib,
                _ => {
                    indices.push(parent);
                    values.push(contrib);
                }
            }
        }
        Ok(SparseCellFunction { level: to_level, indices, values })
    }

    /// Exact `L^p(K, mu)` norm of the piecewise-constant lift.
    pub fn lp_norm(&self, f: &CellFunction, p: f64) -> f64 {
        let powered = CellFunction {
            level: f.level,
            values: f.values.iter().map(|v| v.abs().powf(p)).collect(),
        };
        let total = self.project(&powered, 0).expect("level 0 is coarsest").values[0];
        total.powf(1.0 / p)
    }

    pub fn lp_norm_sparse(&self, f: &SparseCellFunction, p: f64) -> f64 {
        f.indices
            .iter()
            .zip(&f.values)
            .map(|(&i, v)| self.mass_of(f.level, i) * v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// A real function on `T_n`, indexed like the level graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFunction {
    pub level: usize,
    pub values: Vec<f64>,
}

impl CellFunction {
    pub fn new(level: usize, values: Vec<f64>) -> Self {
        Self { level, values }
    }

    pub fn constant(level: usize, size: usize, c: f64) -> Self {
        Self { level, values: vec![c; size] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { level: self.level, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_sparse(&self) -> SparseCellFunction {
        let (indices, values) = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseCellFunction { level: self.level, indices, values }
    }
}

/// A function on `T_n` stored on its support (sorted indices); other cells are zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseCellFunction {
    pub level: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseCellFunction {
    /// `entries` must be sorted by index without duplicates.
    pub fn from_sorted(level: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let (indices, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { level, indices, values }
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        match self.indices.binary_search(&idx) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_dense(&self, size: usize) -> CellFunction {
        let mut values = vec![0.0; size];
        for (i, v) in self.iter() {
            values[i] = v;
        }
        CellFunction { level: self.level, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masses() {
        let m = SelfSimilarMeasure::uniform(8);
        assert_eq!(m.mass(&CellWord::root()), 1.0);
        assert!((m.mass(&"3.5".parse().unwrap()) - 1.0 / 64.0).abs() < 1e-18);
        let total: f64 = (0..512).map(|i| m.mass_of(3, i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_validation() {
        assert!(SelfSimilarMeasure::new(vec![0.5, 0.5]).is_ok());
        assert!(SelfSimilarMeasure::new(vec![0.5, 0.6]).is_err());
        assert!(SelfSimilarMeasure::new(vec![1.0, 0.0]).is_err());
        assert!(SelfSimilarMeasure::parse("0.25\n0.75\n", 2).is_ok());
        assert!(SelfSimilarMeasure::parse("0.25\n0.75\n", 3).is_err());
        assert!(SelfSimilarMeasure::parse("a\nb\n", 2).is_err());
    }

    #[test]
    fn projection_examples() {
        let u = SelfSimilarMeasure::uniform(2);
        let f = CellFunction::new(1, vec![0.0, 1.0]);
        assert_eq!(u.project(&f, 0).unwrap().values, vec![0.5]);
        let w = SelfSimilarMeasure::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!((w.project(&f, 0).unwrap().values[0] - 2.0 / 3.0).abs() < 1e-15);
        let c = CellFunction::constant(4, 16, 2.5);
        assert!(w.project(&c, 1).unwrap().values.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert!(u.project(&f, 2).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let u = SelfSimilarMeasure::uniform(8);
        assert!((u.lp_norm(&CellFunction::constant(2, 64, 1.0), 3.0) - 1.0).abs() < 1e-14);
        let mut v = vec![0.0; 64];
        v[17] = 1.0;
        assert!((u.lp_norm(&CellFunction::new(2, v), 2.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn sparse_matches_dense() {
        let w = SelfSimilarMeasure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let dense = CellFunction::new(3, (0..64).map(|i| if i % 5 == 0 { 0.0 } else { i as f64 }).collect());
        let sparse = dense.to_sparse();
        for lvl in 0..=3 {
            let a = w.project(&dense, lvl).unwrap();
            let b = w.project_sparse(&sparse, lvl).unwrap().to_dense(4usize.pow(lvl as u32));
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!((w.lp_norm(&dense, 1.7) - w.lp_norm_sparse(&sparse, 1.7)).abs() < 1e-12);
    }
}
