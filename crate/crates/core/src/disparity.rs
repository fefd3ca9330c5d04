//! Covering systems and neighbour disparity constants.
//!
//! The disparity of a patch `A ⊆ T_n` at depth `m` is the largest ratio between
//! the coarse energy of `Avg_m g` on `A` and the fine energy of `g` on `S^m(A)`.
//! Every `g` on `S^m(A)` is the level-`(n+m)` projection of a piecewise constant
//! function, so maximising over `g` gives the exact constant.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::measure::{SelfSimilarMeasure, SparseCellFunction};
use crate::partition::{CellSet, CellWord, Partition};
use crate::penergy::{graph_energy, minimize, SolverOptions};

/// The family of patches used to take disparity maxima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CoveringSystem {
    /// `Γ_1(w)` for every `w ∈ T_n`.
    Stars,
    /// An explicit list of patches; the family at level `n` is the patches of that level.
    Family(Vec<CellSet>),
}

/// A covering of a set together with its verified covering numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub level: usize,
    pub patches: Vec<CellSet>,
    pub n_t: usize,
    pub n_e: usize,
}

impl CoveringSystem {
    /// Reads a family: one patch per line, cells as dotted words separated by whitespace.
    pub fn parse(text: &str, branching: usize) -> Result<Self> {
        let mut family = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words = line
                .split_whitespace()
                .map(|t| t.parse::<CellWord>())
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::SchemeParse { line: k + 1, msg: e.to_string() })?;
            family.push(CellSet::from_words(&words, branching)?);
        }
        if family.is_empty() {
            return Err(Error::InvalidArgument("covering family is empty".into()));
        }
        Ok(Self::Family(family))
    }

    /// The distinct patches of the family at level `n`.
    pub fn family(&self, partition: &Partition, n: usize) -> Result<Vec<CellSet>> {
        let mut out = match self {
            Self::Stars => {
                let size = partition.level_size(n)?;
                (0..size)
                    .map(|w| {
                        let mut cells = partition.neighbors(n, w);
                        cells.push(w);
                        CellSet::new(n, cells)
                    })
                    .collect::<Vec<_>>()
            }
            Self::Family(sets) => sets.iter().filter(|s| s.level() == n).cloned().collect(),
        };
        out.sort_by(|a, b| a.indices().cmp(b.indices()));
        out.dedup();
        Ok(out)
    }

    /// A covering of `a` by patches of the family, with `N_T` and `N_E` computed exhaustively on `a`.
    pub fn covering_of(&self, partition: &Partition, a: &CellSet) -> Result<Covering> {
        if a.is_empty() {
            return Err(Error::InvalidArgument("cannot cover an empty set".into()));
        }
        let n = a.level();
        let mut patches: Vec<CellSet> = match self {
            Self::Stars => a
                .indices()
                .iter()
                .map(|&w| {
                    let mut cells: Vec<usize> =
                        partition.neighbors(n, w).into_iter().filter(|&v| a.contains(v)).collect();
                    cells.push(w);
                    CellSet::new(n, cells)
                })
                .collect(),
            Self::Family(_) => self
                .family(partition, n)?
                .into_iter()
                .filter(|s| s.is_subset(a))
                .collect(),
        };
        patches.sort_by(|x, y| x.indices().cmp(y.indices()));
        patches.dedup();
        covering_numbers(partition, a, patches)
    }
}

fn covering_numbers(partition: &Partition, a: &CellSet, patches: Vec<CellSet>) -> Result<Covering> {
    let n = a.level();
    let cells = a.indices();
    let mut multiplicity = vec![0usize; cells.len()];
    let mut member_of: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
    for (i, patch) in patches.iter().enumerate() {
        for &c in patch.indices() {
            let k = cells.binary_search(&c).expect("patch inside the covered set");
            multiplicity[k] += 1;
            member_of[k].push(i);
        }
    }
    if let Some(k) = multiplicity.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "cell {} is not covered",
            partition.word(n, cells[k])
        )));
    }
    let n_t = multiplicity.iter().copied().max().unwrap_or(0);

    // pairs of adjacent cells sharing a patch, as a graph on the positions in `a`
    let graph = partition.induced_graph(a);
    let share = |x: usize, y: usize| member_of[x].iter().any(|i| member_of[y].contains(i));
    let chain = Graph::from_fn(cells.len(), |x, out| {
        out.extend(graph.neighbors(x).iter().map(|&y| y as usize).filter(|&y| share(x, y)));
    });
    let mut n_e = 0;
    for (x, y) in graph.edges() {
        if chain.has_edge(x, y) {
            n_e = n_e.max(1);
            continue;
        }
        let mut dist = vec![usize::MAX; cells.len()];
        dist[x] = 0;
        let mut queue = VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            for &v in chain.neighbors(u) {
                let v = v as usize;
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if dist[y] == usize::MAX {
            return Err(Error::InvalidArgument(format!(
                "adjacent cells {} and {} are not chained by the covering",
                partition.word(n, cells[x]),
                partition.word(n, cells[y])
            )));
        }
        n_e = n_e.max(dist[y]);
    }
    Ok(Covering { level: n, patches, n_t, n_e })
}

/// Settings of the restarted inverse power ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative ratio gain of one step falls below this.
    pub tol: f64,
    pub solver: SolverOptions,
}

impl Default for DisparityOptions {
    fn default() -> Self {
        Self { restarts: 32, seed: 0, max_iter: 2000, tol: 1e-15, solver: SolverOptions::default() }
    }
}

/// Best ratio found, with the function attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityEstimate {
    pub value: f64,
    /// The maximiser `g`, supported on `S^m(A)` at level `n + m`.
    pub maximizer: SparseCellFunction,
    pub restarts: usize,
    pub seed: u64,
    /// `value` is the ratio of an explicit feasible `g`, hence a lower bound of the sup.
    pub certified_lower: bool,
}

/// The finite-dimensional ratio problem of one patch.
#[derive(Clone, Debug)]
pub struct DisparityProblem {
    coarse_level: usize,
    m: usize,
    p: f64,
    fine_cells: Vec<usize>,
    coarse: Graph,
    fine: Graph,
    /// coarse position of each fine cell
    parent: Vec<usize>,
    /// `μ(K_v) / μ(K_w)` for each fine cell `v` below `w`
    weight: Vec<f64>,
    fine_labels: Vec<usize>,
    fine_components: usize,
}

impl DisparityProblem {
    pub fn new(
        partition: &Partition,
        measure: &SelfSimilarMeasure,
        a: &CellSet,
        m: usize,
        p: f64,
    ) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("p = {p} must lie in (1, inf)")));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("disparity needs m >= 1".into()));
        }
        if a.is_empty() {
            return Err(Error::InvalidArgument("empty patch".into()));
        }
        if measure.branching() != partition.branching() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for branching {}",
                measure.branching(),
                partition.branching()
            )));
        }
        let fine_set = partition.refine(a, m);
        let block = partition.branching().pow(m as u32);
        let parent: Vec<usize> = (0..fine_set.len()).map(|i| i / block).collect();
        let weight: Vec<f64> =
            fine_set.indices().iter().map(|&c| measure.relative_mass(m, c % block)).collect();
        let fine = partition.induced_graph(&fine_set);
        let (fine_labels, fine_components) = fine.components();
        Ok(Self {
            coarse_level: a.level(),
            m,
            p,
            fine_cells: fine_set.indices().to_vec(),
            coarse: partition.induced_graph(a),
            fine,
            parent,
            weight,
            fine_labels,
            fine_components,
        })
    }

    pub fn fine_len(&self) -> usize {
        self.fine.len()
    }

    pub fn fine_graph(&self) -> &Graph {
        &self.fine
    }

    pub fn coarse_graph(&self) -> &Graph {
        &self.coarse
    }

    /// `Avg_m g` on the patch.
    pub fn average(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.coarse.len()];
        for ((&c, &w), &x) in self.parent.iter().zip(&self.weight).zip(g) {
            out[c] += w * x;
        }
        out
    }

    pub fn coarse_energy(&self, g: &[f64]) -> f64 {
        graph_energy(&self.coarse, &self.average(g), self.p)
    }

    pub fn fine_energy(&self, g: &[f64]) -> f64 {
        graph_energy(&self.fine, g, self.p)
    }

    /// The ratio at `g`; `0/0` counts as 0 and `x/0` as infinity.
    pub fn ratio(&self, g: &[f64]) -> f64 {
        let num = self.coarse_energy(g);
        let den = self.fine_energy(g);
        if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    }

    /// Fails when some fine component carries a non-constant coarse potential.
    fn check_finite(&self) -> Result<()> {
        if self.fine_components == 1 {
            return Ok(());
        }
        for c in 0..self.fine_components {
            let ind: Vec<f64> =
                self.fine_labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            if self.coarse_energy(&ind) > 1e-14 {
                return Err(Error::InfiniteDisparity);
            }
        }
        Ok(())
    }

    fn coarse_gradient(&self, g: &[f64]) -> Vec<f64> {
        let h = self.average(g);
        let mut gc = vec![0.0; h.len()];
        for (x, y) in self.coarse.edges() {
            let d = h[x] - h[y];
            let t = self.p * d.abs().powf(self.p - 1.0) * d.signum();
            gc[x] += t;
            gc[y] -= t;
        }
        self.parent.iter().zip(&self.weight).map(|(&c, &w)| w * gc[c]).collect()
    }

    /// Removes the mean on each fine component and scales to unit Euclidean norm.
    fn normalize(&self, g: &mut [f64]) -> bool {
        let mut sum = vec![0.0; self.fine_components];
        let mut count = vec![0usize; self.fine_components];
        for (&l, &x) in self.fine_labels.iter().zip(g.iter()) {
            sum[l] += x;
            count[l] += 1;
        }
        for (&l, x) in self.fine_labels.iter().zip(g.iter_mut()) {
            *x -= sum[l] / count[l] as f64;
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return false;
        }
        g.iter_mut().for_each(|x| *x /= norm);
        true
    }

    /// Inverse power ascent from `start`: `g ← argmin_u E_fine(u) - ⟨∇E_coarse(Avg g), u⟩`.
    /// Returns the best ratio seen and its normalised argument.
    pub fn ascend(&self, start: &[f64], opts: &DisparityOptions) -> Result<(f64, Vec<f64>)> {
        self.check_finite()?;
        let mut g = start.to_vec();
        if !self.normalize(&mut g) {
            return Err(Error::InvalidArgument("start is constant on every component".into()));
        }
        let mut best = self.ratio(&g);
        let mut pinned = vec![None; self.fine.len()];
        let mut seen = vec![false; self.fine_components];
        for (v, &l) in self.fine_labels.iter().enumerate() {
            if !seen[l] {
                seen[l] = true;
                pinned[v] = Some(0.0);
            }
        }
        let mut solver = opts.solver.clone();
        solver.require_convergence = false;
        for _ in 0..opts.max_iter {
            let s = self.coarse_gradient(&g);
            if s.iter().all(|&x| x == 0.0) {
                break;
            }
            let out = minimize(&self.fine, &pinned, Some(&s), self.p, &solver, None);
            let mut u = out.values;
            if !self.normalize(&mut u) {
                break;
            }
            let r = self.ratio(&u);
            if !(r > best) {
                break;
            }
            let gain = (r - best) / r;
            best = r;
            g = u;
            if gain <= opts.tol {
                break;
            }
        }
        Ok((best, g))
    }

    /// Restarted ascent; restart `k` draws its start from the stream `k` of `seed`.
    pub fn maximize(&self, opts: &DisparityOptions) -> Result<DisparityEstimate> {
        self.check_finite()?;
        let level = self.coarse_level + self.m;
        if self.coarse.num_edges() == 0 {
            let zero = vec![0.0; self.fine_cells.len()];
            return Ok(self.estimate(level, 0.0, zero, opts));
        }
        let runs: Vec<Result<(f64, Vec<f64>)>> = (0..opts.restarts.max(1))
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(k as u64);
                let start: Vec<f64> = (0..self.fine.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                self.ascend(&start, opts)
            })
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for run in runs {
            let (r, g) = run?;
            if best.as_ref().map_or(true, |(b, _)| r > *b) {
                best = Some((r, g));
            }
        }
        let (value, g) = best.expect("at least one restart");
        Ok(self.estimate(level, value, g, opts))
    }

    fn estimate(&self, level: usize, value: f64, g: Vec<f64>, opts: &DisparityOptions) -> DisparityEstimate {
        DisparityEstimate {
            value,
            maximizer: SparseCellFunction::from_sorted(level, self.fine_cells.iter().copied().zip(g)),
            restarts: opts.restarts.max(1),
            seed: opts.seed,
            certified_lower: true,
        }
    }

    /// The ratio of a stored maximiser, re-evaluated from scratch.
    pub fn evaluate(&self, est: &DisparityEstimate) -> f64 {
        self.ratio(&est.maximizer.values)
    }
}

/// `σ_{p,m}(A)` as a certified lower bound.
pub fn sigma_pm(
    partition: &Partition,
    measure: &SelfSimilarMeasure,
    a: &CellSet,
    m: usize,
    p: f64,
    opts: &DisparityOptions,
) -> Result<DisparityEstimate> {
    DisparityProblem::new(partition, measure, a, m, p)?.maximize(opts)
}

/// `σ_{p,m,n}` over the covering family at level `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDisparity {
    pub value: f64,
    pub argmax: CellSet,
    pub patches: usize,
    /// Patches with distinct shapes, each solved once.
    pub distinct_shapes: usize,
}

/// Patches whose cells have the same relative positions have the same disparity,
/// since the refinement below every cell is the same.
fn shape_key(partition: &Partition, a: &CellSet) -> Vec<(i64, i64)> {
    let scheme = partition.scheme();
    let pts: Vec<(i64, i64)> = a
        .indices()
        .iter()
        .map(|&c| {
            let (x, y) = scheme.coords(a.level(), c);
            (x as i64, y as i64)
        })
        .collect();
    let x0 = pts.iter().map(|p| p.0).min().unwrap_or(0);
    let y0 = pts.iter().map(|p| p.1).min().unwrap_or(0);
    let mut key: Vec<(i64, i64)> = pts.iter().map(|&(x, y)| (x - x0, y - y0)).collect();
    key.sort_unstable();
    key
}

pub fn sigma_pmn(
    partition: &Partition,
    measure: &SelfSimilarMeasure,
    system: &CoveringSystem,
    m: usize,
    n: usize,
    p: f64,
    opts: &DisparityOptions,
) -> Result<LevelDisparity> {
    let family = system.family(partition, n)?;
    if family.is_empty() {
        return Err(Error::InvalidArgument(format!("no patches at level {n}")));
    }
    let mut shapes: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
    let mut reps = Vec::new();
    for (i, a) in family.iter().enumerate() {
        shapes.entry(shape_key(partition, a)).or_insert_with(|| {
            reps.push(i);
            reps.len() - 1
        });
    }
    let values: Vec<Result<f64>> = reps
        .par_iter()
        .map(|&i| sigma_pm(partition, measure, &family[i], m, p, opts).map(|e| e.value))
        .collect();
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > best.0 {
            best = (v, reps[k]);
        }
    }
    Ok(LevelDisparity {
        value: best.0,
        argmax: family[best.1].clone(),
        patches: family.len(),
        distinct_shapes: reps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> (Partition, SelfSimilarMeasure) {
        (Partition::builtin("interval2").unwrap(), SelfSimilarMeasure::uniform(2))
    }

    #[test]
    fn singleton_star_and_covering() {
        let (p, _) = interval();
        let a = CellSet::new(1, [0]);
        let c = CoveringSystem::Stars.covering_of(&p, &a).unwrap();
        assert_eq!(c.patches, vec![a]);
        assert_eq!((c.n_t, c.n_e), (1, 0));
    }

    #[test]
    fn interval_level_two_covering() {
        let (p, _) = interval();
        let a = CellSet::new(2, 0..4);
        let c = CoveringSystem::Stars.covering_of(&p, &a).unwrap();
        assert_eq!(c.patches.len(), 4);
        assert_eq!(c.n_t, 3);
        assert_eq!(c.n_e, 1);
    }

    #[test]
    fn unchained_family_rejected() {
        let (p, _) = interval();
        let fam = CoveringSystem::parse("0.0 0.1\n1.0 1.1\n", 2).unwrap();
        assert!(fam.covering_of(&p, &CellSet::new(2, 0..4)).is_err());
    }

    #[test]
    fn closed_form_on_interval() {
        let (p, mu) = interval();
        let e = sigma_pm(&p, &mu, &CellSet::new(1, [0, 1]), 1, 2.0, &DisparityOptions::default()).unwrap();
        assert!((e.value - 1.5).abs() < 1e-9, "{}", e.value);
        assert!(e.certified_lower);
    }

    #[test]
    fn single_cell_patch_has_zero_disparity() {
        let (p, mu) = interval();
        let e = sigma_pm(&p, &mu, &CellSet::new(2, [1]), 2, 3.0, &DisparityOptions::default()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn level_disparity_on_interval() {
        let (p, mu) = interval();
        let r = sigma_pmn(&p, &mu, &CoveringSystem::Stars, 1, 1, 2.0, &DisparityOptions::default()).unwrap();
        assert_eq!(r.patches, 1);
        assert!((r.value - 1.5).abs() < 1e-9);
    }

    #[test]
    fn disconnected_refinement_is_infinite() {
        // cells (0,0) and (1,1) touch at a corner, but their children do not
        let scheme = crate::partition::SubdivisionScheme::parse("hook", "L=3\n110\n010\n000\n").unwrap();
        let p = Partition::new(scheme);
        let mu = SelfSimilarMeasure::uniform(3);
        let a = CellSet::new(1, [0, 2]);
        assert!(p.adjacent(&p.word(1, 0), &p.word(1, 2)).unwrap());
        let r = sigma_pm(&p, &mu, &a, 1, 2.0, &DisparityOptions::default());
        assert!(matches!(r, Err(Error::InfiniteDisparity)));
    }
}
