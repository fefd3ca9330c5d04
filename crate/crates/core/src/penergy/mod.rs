//! Discrete p-energies, p-harmonic Dirichlet problems and effective conductances.

mod amg;
mod solver;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub(crate) use solver::minimize;
pub use solver::{SolveOutcome, SolverOptions};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::measure::{CellFunction, SparseCellFunction};
use crate::partition::{CellSet, CellWord, LevelGraph, Partition};

/// `sum over unordered adjacent pairs of |f(w) - f(v)|^p` on a whole graph.
pub fn graph_energy(graph: &Graph, values: &[f64], p: f64) -> f64 {
    solver::graph_energy(graph, values, p)
}

/// `E^n_{p,A}(f)`: half the ordered double sum over adjacent pairs inside `A`
/// (each unordered pair counted once). `None` means `A = T_n`.
pub fn energy(graph: &LevelGraph, f: &CellFunction, subset: Option<&CellSet>, p: f64) -> f64 {
    debug_assert_eq!(graph.level(), f.level);
    let g = graph.graph();
    match subset {
        None => graph_energy(g, &f.values, p),
        Some(a) => {
            let mut total = 0.0;
            for &w in a.indices() {
                for &v in g.neighbors(w) {
                    let v = v as usize;
                    if w < v && a.contains(v) {
                        total += (f.values[w] - f.values[v]).abs().powf(p);
                    }
                }
            }
            total
        }
    }
}

/// `E^n_p(f)` without materialising the level graph.
pub fn level_energy(partition: &Partition, f: &CellFunction, p: f64) -> f64 {
    let scheme = partition.scheme();
    let mut total = 0.0;
    for (w, &fw) in f.values.iter().enumerate() {
        scheme.for_each_neighbor(f.level, w, |v| {
            if w < v {
                total += (fw - f.values[v]).abs().powf(p);
            }
        });
    }
    total
}

/// `E^n_p(f)` for a function stored on its support; cost is proportional to the support.
pub fn level_energy_sparse(partition: &Partition, f: &SparseCellFunction, p: f64) -> f64 {
    let scheme = partition.scheme();
    let mut total = 0.0;
    for (&w, &fw) in f.indices.iter().zip(&f.values) {
        scheme.for_each_neighbor(f.level, w, |v| match f.indices.binary_search(&v) {
            // both in the support: count the pair once
            Ok(j) => {
                if w < v {
                    total += (fw - f.values[j]).abs().powf(p);
                }
            }
            Err(_) => total += fw.abs().powf(p),
        });
    }
    total
}

/// A p-energy minimisation with prescribed values on a subset of vertices.
#[derive(Clone, Debug)]
pub struct DirichletProblem<'g> {
    graph: &'g Graph,
    prescribed: Vec<Option<f64>>,
    p: f64,
}

impl<'g> DirichletProblem<'g> {
    pub fn new(graph: &'g Graph, prescribed: Vec<Option<f64>>, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("p = {p} must lie in (1, inf)")));
        }
        if prescribed.len() != graph.len() {
            return Err(Error::InvalidArgument(format!(
                "{} prescriptions for {} vertices",
                prescribed.len(),
                graph.len()
            )));
        }
        if prescribed.iter().all(Option::is_none) {
            return Err(Error::InvalidArgument("no prescribed vertices".into()));
        }
        if prescribed.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("prescribed values must be finite".into()));
        }
        Ok(Self { graph, prescribed, p })
    }

    pub fn from_map(graph: &'g Graph, fixed: &BTreeMap<usize, f64>, p: f64) -> Result<Self> {
        let mut prescribed = vec![None; graph.len()];
        for (&v, &x) in fixed {
            if v >= graph.len() {
                return Err(Error::InvalidArgument(format!("vertex {v} out of range")));
            }
            prescribed[v] = Some(x);
        }
        Self::new(graph, prescribed, p)
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn prescribed(&self) -> &[Option<f64>] {
        &self.prescribed
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Optimal value and minimiser of a Dirichlet problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConductanceResult {
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub epsilon_final: f64,
    pub converged: bool,
}

impl From<SolveOutcome> for ConductanceResult {
    fn from(o: SolveOutcome) -> Self {
        Self {
            value: o.energy,
            minimizer: o.values,
            kkt_residual: o.kkt,
            iterations: o.iterations,
            epsilon_final: o.eps_final,
            converged: o.converged,
        }
    }
}

pub fn solve_dirichlet(prob: &DirichletProblem<'_>, opts: &SolverOptions) -> Result<ConductanceResult> {
    solve_dirichlet_warm(prob, opts, None)
}

/// As [`solve_dirichlet`], starting from `warm` (indexed by vertex) on the free vertices.
pub fn solve_dirichlet_warm(
    prob: &DirichletProblem<'_>,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<ConductanceResult> {
    let out = minimize(prob.graph, &prob.prescribed, None, prob.p, opts, warm);
    if opts.require_convergence && !out.converged {
        return Err(Error::NonConvergence { iterations: out.iterations, kkt: out.kkt });
    }
    Ok(out.into())
}

/// `E_{p,m}(A1, A2, T_n)`: minimal energy on `T_{n+m}` with `f = 1` on `S^m(A1)`
/// and `f = 0` on `S^m(A2)`.
pub fn effective_conductance(
    partition: &Partition,
    a1: &CellSet,
    a2: &CellSet,
    m: usize,
    p: f64,
    opts: &SolverOptions,
) -> Result<ConductanceResult> {
    if a1.level() != a2.level() {
        return Err(Error::LevelMismatch { expected: a1.level(), found: a2.level() });
    }
    let overlap = a1.indices().iter().filter(|&&c| a2.contains(c)).count();
    if overlap > 0 {
        return Err(Error::OverlappingSets(overlap));
    }
    let graph = partition.level_graph(a1.level() + m)?;
    let mut prescribed = vec![None; graph.len()];
    for &c in partition.refine(a1, m).indices() {
        prescribed[c] = Some(1.0);
    }
    for &c in partition.refine(a2, m).indices() {
        prescribed[c] = Some(0.0);
    }
    let prob = DirichletProblem::new(graph.graph(), prescribed, p)?;
    solve_dirichlet(&prob, opts)
}

/// `E_{p,m}(w, T_{|w|} \ Gamma_{M*}(w), T_{|w|})`.
pub fn ring_conductance(
    partition: &Partition,
    w: &CellWord,
    m: usize,
    p: f64,
    m_star: usize,
    opts: &SolverOptions,
) -> Result<ConductanceResult> {
    if w.level() == 0 {
        return Err(Error::InvalidArgument("ring conductance needs |w| >= 1".into()));
    }
    let n = w.level();
    let inner = partition.set_of(std::slice::from_ref(w))?;
    let near = partition.gamma(m_star, w)?;
    let ground = CellSet::new(n, (0..partition.level_size(n)?).filter(|&c| !near.contains(c)));
    if ground.is_empty() {
        return Err(Error::EmptyGround { word: w.to_string(), m_star });
    }
    effective_conductance(partition, &inner, &ground, m, p, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        let g = Graph::path(2);
        assert_eq!(graph_energy(&g, &[3.0, 3.0, 3.0], 1.7), 0.0);
        assert_eq!(graph_energy(&Graph::path(1), &[0.0, 1.0], 2.5), 1.0);
        assert!((graph_energy(&g, &[0.0, 0.5, 1.0], 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subset_energy_uses_induced_pairs() {
        let p = Partition::builtin("interval2").unwrap();
        let g = p.level_graph(2).unwrap();
        let f = CellFunction::new(2, vec![0.0, 1.0, 3.0, 6.0]);
        assert_eq!(energy(&g, &f, None, 1.0), 6.0);
        assert_eq!(energy(&g, &f, Some(&CellSet::new(2, [0, 1, 3])), 1.0), 1.0);
        assert_eq!(level_energy(&p, &f, 1.0), 6.0);
        assert_eq!(level_energy_sparse(&p, &f.to_sparse(), 1.0), 6.0);
    }

    #[test]
    fn path_conductance_small_cases() {
        let opts = SolverOptions::default();
        for (n, p, expect) in [(4usize, 2.0, 0.25), (2, 3.0, 0.25)] {
            let g = Graph::path(n);
            let mut pre = vec![None; n + 1];
            pre[0] = Some(0.0);
            pre[n] = Some(1.0);
            let r = solve_dirichlet(&DirichletProblem::new(&g, pre, p).unwrap(), &opts).unwrap();
            assert!((r.value - expect).abs() < 1e-10, "{n} {p} {}", r.value);
            for (k, x) in r.minimizer.iter().enumerate() {
                assert!((x - k as f64 / n as f64).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn separated_constraints_give_zero() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]);
        let pre = vec![Some(1.0), None, Some(0.0), None];
        let r = solve_dirichlet(&DirichletProblem::new(&g, pre, 1.5).unwrap(), &SolverOptions::default()).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!((r.minimizer[1] - 1.0).abs() < 1e-8 && r.minimizer[3].abs() < 1e-8);
    }

    #[test]
    fn invalid_problems_rejected() {
        let g = Graph::path(2);
        assert!(DirichletProblem::new(&g, vec![Some(0.0), None, Some(1.0)], 1.0).is_err());
        assert!(DirichletProblem::new(&g, vec![None; 3], 2.0).is_err());
        assert!(DirichletProblem::new(&g, vec![Some(f64::NAN), None, None], 2.0).is_err());
    }

    #[test]
    fn conductance_errors() {
        let p = Partition::builtin("interval2").unwrap();
        let opts = SolverOptions::default();
        let a = CellSet::new(1, [0]);
        assert!(matches!(effective_conductance(&p, &a, &a, 1, 2.0, &opts), Err(Error::OverlappingSets(1))));
        let r = effective_conductance(&p, &a, &CellSet::new(1, [1]), 0, 2.0, &opts).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let w: CellWord = "0".parse().unwrap();
        assert!(matches!(ring_conductance(&p, &w, 1, 2.0, 1, &opts), Err(Error::EmptyGround { .. })));
    }

    #[test]
    fn interval_ring_conductance_matches_path_formula() {
        let p = Partition::builtin("interval2").unwrap();
        let opts = SolverOptions::default();
        for m in 0..5 {
            let r = ring_conductance(&p, &"0.1".parse().unwrap(), m, 2.0, 1, &opts).unwrap();
            let edges = (1usize << m) + 1;
            assert!((r.value - 1.0 / edges as f64).abs() < 1e-10, "m={m} {}", r.value);
        }
    }
}
