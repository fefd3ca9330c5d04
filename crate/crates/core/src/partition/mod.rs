//! The partition tree of a subdivision scheme, its level graphs and the
//! finite-depth certificates of the combinatorial assumptions.

mod certify;
mod scheme;
mod word;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

pub use certify::{DegreeCertificate, InclusionReport, InclusionViolation, MStarCertificate};
pub use scheme::{AdjacencyMode, SubdivisionScheme, BUILTIN_SCHEMES};
pub use word::CellWord;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// A set of cells of one level, stored as sorted lexicographic indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellSet {
    level: usize,
    cells: Vec<usize>,
}

impl CellSet {
    pub fn new(level: usize, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut cells: Vec<usize> = cells.into_iter().collect();
        cells.sort_unstable();
        cells.dedup();
        Self { level, cells }
    }

    pub fn empty(level: usize) -> Self {
        Self { level, cells: Vec::new() }
    }

    /// Rejects words of different levels.
    pub fn from_words(words: &[CellWord], branching: usize) -> Result<Self> {
        let level = words.first().map(CellWord::level).unwrap_or(0);
        for w in words {
            if w.level() != level {
                return Err(Error::LevelMismatch { expected: level, found: w.level() });
            }
            w.check(branching)?;
        }
        Ok(Self::new(level, words.iter().map(|w| w.index(branching))))
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.cells
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.cells.binary_search(&idx).is_ok()
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.level == other.level && self.cells.iter().all(|&c| other.contains(c))
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        debug_assert_eq!(self.level, other.level);
        CellSet::new(self.level, self.cells.iter().chain(&other.cells).copied())
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        CellSet::new(self.level, self.cells.iter().copied().filter(|&c| !other.contains(c)))
    }

    pub fn intersects(&self, other: &CellSet) -> bool {
        self.cells.iter().any(|&c| other.contains(c))
    }

    pub fn words(&self, branching: usize) -> Vec<CellWord> {
        self.cells.iter().map(|&i| CellWord::from_index(self.level, i, branching)).collect()
    }
}

/// Adjacency graph on `T_n`.
#[derive(Debug)]
pub struct LevelGraph {
    level: usize,
    graph: Graph,
    degree_max: usize,
}

impl LevelGraph {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn degree_max(&self) -> usize {
        self.degree_max
    }
}

/// Largest level for which [`Partition::level_graph`] will materialise a graph.
pub const MAX_GRAPH_CELLS: usize = 1 << 24;

/// A subdivision scheme together with a cache of its level graphs.
#[derive(Debug)]
pub struct Partition {
    scheme: Arc<SubdivisionScheme>,
    graphs: RwLock<HashMap<usize, Arc<LevelGraph>>>,
}

impl Partition {
    pub fn new(scheme: SubdivisionScheme) -> Self {
        Self { scheme: Arc::new(scheme), graphs: RwLock::new(HashMap::new()) }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        SubdivisionScheme::builtin(name).map(Self::new)
    }

    pub fn scheme(&self) -> &SubdivisionScheme {
        &self.scheme
    }

    pub fn branching(&self) -> usize {
        self.scheme.branching()
    }

    pub fn level_size(&self, n: usize) -> Result<usize> {
        self.scheme
            .level_size(n)
            .ok_or_else(|| Error::InvalidArgument(format!("level {n} too deep for this scheme")))
    }

    pub fn word(&self, level: usize, idx: usize) -> CellWord {
        CellWord::from_index(level, idx, self.branching())
    }

    pub fn index(&self, w: &CellWord) -> Result<usize> {
        w.check(self.branching())?;
        Ok(w.index(self.branching()))
    }

    pub fn set_of(&self, words: &[CellWord]) -> Result<CellSet> {
        CellSet::from_words(words, self.branching())
    }

    /// `S(w)`: one child per kept cell.
    pub fn children(&self, w: &CellWord) -> Result<Vec<CellWord>> {
        w.check(self.branching())?;
        Ok((0..self.branching() as u16).map(|s| w.child(s)).collect())
    }

    /// The parent map; fixes the root.
    pub fn pi(&self, w: &CellWord) -> CellWord {
        w.parent()
    }

    /// `S^m(A)`.
    pub fn refine(&self, a: &CellSet, m: usize) -> CellSet {
        let block = self.branching().pow(m as u32);
        CellSet {
            level: a.level + m,
            cells: a.cells.iter().flat_map(|&c| c * block..(c + 1) * block).collect(),
        }
    }

    /// `S^m` applied to a list of words; mixed levels are rejected.
    pub fn refine_words(&self, words: &[CellWord], m: usize) -> Result<Vec<CellWord>> {
        let set = self.set_of(words)?;
        Ok(self.refine(&set, m).words(self.branching()))
    }

    /// `pi^k(A)`.
    pub fn project(&self, a: &CellSet, k: usize) -> CellSet {
        let k = k.min(a.level);
        let block = self.branching().pow(k as u32);
        CellSet::new(a.level - k, a.cells.iter().map(|&c| c / block))
    }

    /// Closed cells intersect. `adjacent(w, w)` is true.
    pub fn adjacent(&self, u: &CellWord, v: &CellWord) -> Result<bool> {
        if u.level() != v.level() {
            return Err(Error::LevelMismatch { expected: u.level(), found: v.level() });
        }
        let n = u.level();
        let a = self.scheme.coords(n, self.index(u)?);
        let b = self.scheme.coords(n, self.index(v)?);
        Ok(self.scheme.cells_touch(a, b))
    }

    pub fn neighbors(&self, level: usize, idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(8);
        self.scheme.for_each_neighbor(level, idx, |j| out.push(j));
        out
    }

    /// `Gamma_M(w)`: cells reachable from `w` by at most `M` adjacency steps.
    pub fn gamma(&self, m: usize, w: &CellWord) -> Result<CellSet> {
        let idx = self.index(w)?;
        Ok(self.gamma_of_set(m, &CellSet::new(w.level(), [idx])))
    }

    /// `Gamma_M(A) = union of Gamma_M(w), w in A`.
    pub fn gamma_of_set(&self, m: usize, a: &CellSet) -> CellSet {
        let level = a.level;
        let mut seen: HashSet<usize> = a.cells.iter().copied().collect();
        let mut frontier = a.cells.clone();
        for _ in 0..m {
            let mut next = Vec::new();
            for &v in &frontier {
                self.scheme.for_each_neighbor(level, v, |u| {
                    if seen.insert(u) {
                        next.push(u);
                    }
                });
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        CellSet::new(level, seen)
    }

    /// Adjacency graph on `T_n`, built once and cached.
    pub fn level_graph(&self, n: usize) -> Result<Arc<LevelGraph>> {
        if let Some(g) = self.graphs.read().unwrap().get(&n) {
            return Ok(g.clone());
        }
        let size = self.level_size(n)?;
        if size > MAX_GRAPH_CELLS {
            return Err(Error::InvalidArgument(format!(
                "level {n} has {size} cells, too many to materialise a graph"
            )));
        }
        let graph = Graph::from_fn(size, |i, buf| self.scheme.for_each_neighbor(n, i, |j| buf.push(j)));
        let degree_max = graph.max_degree();
        let lg = Arc::new(LevelGraph { level: n, graph, degree_max });
        self.graphs.write().unwrap().insert(n, lg.clone());
        Ok(lg)
    }

    /// Induced subgraph of the level graph on an arbitrary (possibly huge-level) cell set.
    ///
    /// Vertex `k` of the result is `cells.indices()[k]`.
    pub fn induced_graph(&self, cells: &CellSet) -> Graph {
        let level = cells.level;
        let idx = &cells.cells;
        Graph::from_fn(idx.len(), |k, buf| {
            self.scheme.for_each_neighbor(level, idx[k], |j| {
                if let Ok(pos) = idx.binary_search(&j) {
                    buf.push(pos);
                }
            })
        })
    }
}
