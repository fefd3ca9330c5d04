//! The cutoff construction of an unbounded function with bounded scaled energies.
//!
//! Around a target point `x = ∩ K_{ω(i)}` the words `w_j = ω(j(M*+1))` carry nested
//! rings `A_j = Γ_{M*}(w_j) ⊆ B_j = Γ_{2M*}(w_j) ⊆ B*_j = Γ_{2M*+1}(w_j)`. At level `n`
//! the cutoff `f_{n,j}` is 1 on `S^d(A_j)` and 0 off `S^d(B_j)`, `d = n - (M*+1)j`,
//! and `f_n = Σ_j f_{n,j} / j` peaks at the harmonic number `H_k`.
//!
//! Cutoffs are stored on their support only, so the memory and work of a level
//! scale with the rings rather than with `T_n`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disparity::CoveringSystem;
use crate::error::{Error, Result};
use crate::measure::{SelfSimilarMeasure, SparseCellFunction};
use crate::partition::{CellSet, CellWord, Partition};
use crate::penergy::{level_energy_sparse, minimize, SolverOptions};

/// An infinite address, given by a period or by an explicit prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Omega {
    Periodic(Vec<u16>),
    Prefix(Vec<u16>),
}

impl Omega {
    /// The first `len` symbols, if available.
    pub fn prefix(&self, len: usize) -> Option<Vec<u16>> {
        match self {
            Self::Periodic(period) if !period.is_empty() => {
                Some(period.iter().copied().cycle().take(len).collect())
            }
            Self::Periodic(_) => None,
            Self::Prefix(p) if p.len() >= len => Some(p[..len].to_vec()),
            Self::Prefix(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMode {
    /// The p-energy minimiser under the two constraints.
    HarmonicMinimizer,
    /// The pointwise max over `w ∈ A_j` of the per-cell minimisers.
    MaxOfCellCutoffs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaSource {
    Analytic,
    Fitted,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConfig {
    pub omega: Omega,
    pub p: f64,
    pub sigma: f64,
    pub sigma_source: SigmaSource,
    pub k_max: usize,
    pub m_star: usize,
    pub cutoff_mode: CutoffMode,
    pub solver: SolverOptions,
    /// Cutoff problems with more free cells than this use `budget`.
    pub budget_threshold: usize,
    pub budget: SolverOptions,
}

impl ConstructionConfig {
    /// Corner address, harmonic-minimiser cutoffs.
    pub fn new(partition: &Partition, p: f64, sigma: f64, k_max: usize, m_star: usize) -> Self {
        Self {
            omega: Omega::Periodic(vec![partition.scheme().corner_symbol()]),
            p,
            sigma,
            sigma_source: SigmaSource::User,
            k_max,
            m_star,
            cutoff_mode: CutoffMode::HarmonicMinimizer,
            solver: SolverOptions { require_convergence: false, ..SolverOptions::default() },
            budget_threshold: 100_000,
            budget: SolverOptions::budgeted(8, 200),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidArgument(format!("p = {} must lie in (1, inf)", self.p)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma = {} must be positive", self.sigma)));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        if self.m_star < 1 {
            return Err(Error::InvalidArgument("M* must be at least 1".into()));
        }
        Ok(())
    }

    /// Levels `n` of the run: every `n` with `1 <= floor(n / (M*+1)) <= k_max`
    /// that ends at `k_max (M*+1)`.
    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        (self.m_star + 1)..=self.k_max * (self.m_star + 1)
    }
}

/// The three neighbourhoods of `w_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rings {
    pub a: CellSet,
    pub b: CellSet,
    pub b_star: CellSet,
}

/// A cutoff `f_{n,j}` with its solve diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub n: usize,
    pub j: usize,
    pub f: SparseCellFunction,
    pub energy: f64,
    pub kkt: f64,
    pub converged: bool,
    pub iterations: usize,
    pub free_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffRecord {
    pub n: usize,
    pub j: usize,
    pub energy: f64,
    /// `σ^{n-(M*+1)j} E_p^n(f_{n,j})`.
    pub scaled: f64,
    pub kkt: f64,
    pub converged: bool,
    pub iterations: usize,
    pub free_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub n: usize,
    pub k: usize,
    pub cutoff_energies: Vec<f64>,
    pub energy: f64,
    /// `Σ_j j^{-p} E_p^n(f_{n,j})`.
    pub decomposition: f64,
    pub decomposition_rel_err: f64,
    pub scaled_energy: f64,
    /// Value of `f_n` on `S^{n-(M*+1)k}(A_k)` (all cells agree).
    pub plateau: f64,
    pub harmonic_number: f64,
    pub max_value: f64,
    pub lp_norm: f64,
    /// `(m, σ^m E_p^m(P_m f_n))` for `m = 1..=n`.
    pub projected: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub scheme: String,
    pub p: f64,
    pub sigma: f64,
    pub sigma_source: SigmaSource,
    pub m_star: usize,
    pub k_max: usize,
    pub cutoff_mode: CutoffMode,
    pub targets: Vec<CellWord>,
    pub cutoffs: Vec<CutoffRecord>,
    pub levels: Vec<LevelRecord>,
    /// Max over all cutoffs of `σ^{n-(M*+1)j} E_p^n(f_{n,j})`.
    pub c1: f64,
    pub zeta_p: f64,
    pub energy_bound: f64,
    pub max_scaled_energy: f64,
    /// The bound needs `σ <= 1`; `None` when it does not apply.
    pub energy_bound_holds: Option<bool>,
    pub l_star: usize,
    pub l_star_depth: usize,
    pub gamma: f64,
    pub c_mu: f64,
    pub lp_bound: f64,
    pub max_lp_norm: f64,
    pub lp_bound_holds: bool,
    /// Max over the run of `σ^m E_p^m(P_m f_n) / (σ^n E_p^n(f_n))`.
    pub c2_observed: f64,
    pub n_t: usize,
    pub n_e: usize,
    /// `L*^{N_E} N_E^{p-1} N_T`; the bound multiplies it by the disparity constant.
    pub c2_formula_factor: f64,
    pub all_converged: bool,
    pub depth: usize,
    pub notes: Vec<String>,
}

/// `Σ_{j≥1} j^{-p}` by Euler-Maclaurin summation after 1000 terms.
pub fn zeta(p: f64) -> f64 {
    assert!(p > 1.0);
    const N: usize = 1000;
    let head: f64 = (1..N).map(|j| (j as f64).powf(-p)).sum();
    let n = N as f64;
    head + n.powf(1.0 - p) / (p - 1.0) + 0.5 * n.powf(-p) + p / 12.0 * n.powf(-p - 1.0)
        - p * (p + 1.0) * (p + 2.0) / 720.0 * n.powf(-p - 3.0)
}

/// `1/j` as an unevaluated sum `hi + lo`.
fn reciprocal(j: usize) -> (f64, f64) {
    let jf = j as f64;
    let hi = 1.0 / jf;
    (hi, (-hi).mul_add(jf, 1.0) / jf)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `Σ_j v_j / j` in double-double arithmetic, rounded once at the end.
fn harmonic_combination(terms: impl IntoIterator<Item = (usize, f64)>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (j, v) in terms {
        let (hi, lo) = reciprocal(j);
        let prod = hi * v;
        let (t, err) = two_sum(s, prod);
        s = t;
        c += err + hi.mul_add(v, -prod) + lo * v;
    }
    s + c
}

/// `H_k`, correctly rounded in all but tie cases.
pub fn harmonic_number(k: usize) -> f64 {
    harmonic_combination((1..=k).map(|j| (j, 1.0)))
}

/// A run of the construction on one partition.
pub struct Construction<'a> {
    partition: &'a Partition,
    measure: &'a SelfSimilarMeasure,
    cfg: ConstructionConfig,
    targets: Vec<CellWord>,
    rings: Vec<Rings>,
}

impl<'a> Construction<'a> {
    pub fn new(
        partition: &'a Partition,
        measure: &'a SelfSimilarMeasure,
        cfg: ConstructionConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if measure.branching() != partition.branching() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for branching {}",
                measure.branching(),
                partition.branching()
            )));
        }
        let targets = target_sequence(partition, &cfg)?;
        let rings = (0..=cfg.k_max)
            .map(|j| rings_of(partition, &targets[j], cfg.m_star))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { partition, measure, cfg, targets, rings })
    }

    pub fn config(&self) -> &ConstructionConfig {
        &self.cfg
    }

    pub fn targets(&self) -> &[CellWord] {
        &self.targets
    }

    pub fn rings(&self, j: usize) -> &Rings {
        &self.rings[j]
    }

    /// Checks `π^{M*+1}(B*_{j+1}) ⊆ A_j` for `1 <= j < k_max`.
    pub fn check_nesting(&self) -> Result<()> {
        let step = self.cfg.m_star + 1;
        for j in 1..self.cfg.k_max {
            let image = self.partition.project(&self.rings[j + 1].b_star, step);
            let a = &self.rings[j].a;
            if let Some(&bad) = image.indices().iter().find(|&&c| !a.contains(c)) {
                return Err(Error::Nesting {
                    j,
                    detail: format!("{} lies outside A_{j}", self.partition.word(a.level(), bad)),
                });
            }
        }
        Ok(())
    }

    fn ring_level(&self, j: usize) -> usize {
        j * (self.cfg.m_star + 1)
    }

    /// Solves one cutoff problem on `S^d(outer)` plus its outer boundary at level
    /// `level + d`, with 1 on `S^d(inner)`. `warm` is the same problem one level up.
    fn solve_region(
        &self,
        inner: &CellSet,
        outer: &CellSet,
        d: usize,
        warm: Option<&SparseCellFunction>,
    ) -> Result<(SparseCellFunction, f64, bool, usize, usize)> {
        let level = outer.level();
        let n = level + d;
        let block = self.partition.branching().pow(d as u32);
        let region = self.partition.refine(outer, d);
        let in_region = |c: usize| outer.contains(c / block);
        let mut nodes: Vec<usize> = region.indices().to_vec();
        let scheme = self.partition.scheme();
        let mut boundary = Vec::new();
        for &c in region.indices() {
            scheme.for_each_neighbor(n, c, |v| {
                if !in_region(v) {
                    boundary.push(v);
                }
            });
        }
        boundary.sort_unstable();
        boundary.dedup();
        nodes.extend(boundary);
        nodes.sort_unstable();
        let nodes = CellSet::new(n, nodes);
        let graph = self.partition.induced_graph(&nodes);
        let prescribed: Vec<Option<f64>> = nodes
            .indices()
            .iter()
            .map(|&c| {
                let anc = c / block;
                if inner.contains(anc) {
                    Some(1.0)
                } else if outer.contains(anc) {
                    None
                } else {
                    Some(0.0)
                }
            })
            .collect();
        let free = prescribed.iter().filter(|x| x.is_none()).count();
        let k = self.partition.branching();
        let start: Option<Vec<f64>> = warm.map(|prev| {
            debug_assert_eq!(prev.level + 1, n);
            nodes.indices().iter().map(|&c| prev.get(c / k)).collect()
        });
        let opts = if free > self.cfg.budget_threshold { &self.cfg.budget } else { &self.cfg.solver };
        let out = minimize(&graph, &prescribed, None, self.cfg.p, opts, start.as_deref());
        let f = SparseCellFunction::from_sorted(
            n,
            nodes
                .indices()
                .iter()
                .zip(&out.values)
                .filter(|(&c, _)| in_region(c))
                .map(|(&c, &v)| (c, v.clamp(0.0, 1.0))),
        );
        Ok((f, out.kkt, out.converged, out.iterations, free))
    }

    /// `f_{n,j}` in the configured mode, warm-started from `f_{n-1,j}` when given.
    pub fn build_cutoff(&self, n: usize, j: usize, warm: Option<&Cutoff>) -> Result<Cutoff> {
        if j < 1 || j > self.cfg.k_max {
            return Err(Error::InvalidArgument(format!("j = {j} outside 1..={}", self.cfg.k_max)));
        }
        let level = self.ring_level(j);
        if n < level {
            return Err(Error::InvalidArgument(format!("(M*+1) j = {level} exceeds n = {n}")));
        }
        let rings = &self.rings[j];
        if rings.b.len() == self.partition.level_size(level)? {
            return Err(Error::InfeasibleCutoff { j, level });
        }
        let d = n - level;
        let warm_f = warm.filter(|w| w.j == j && w.n + 1 == n).map(|w| &w.f);
        let (f, kkt, converged, iterations, free_cells) = match self.cfg.cutoff_mode {
            CutoffMode::HarmonicMinimizer => self.solve_region(&rings.a, &rings.b, d, warm_f)?,
            CutoffMode::MaxOfCellCutoffs => {
                let parts: Vec<Result<_>> = rings
                    .a
                    .indices()
                    .par_iter()
                    .map(|&w| {
                        let inner = CellSet::new(level, [w]);
                        let outer =
                            self.partition.gamma(self.cfg.m_star, &self.partition.word(level, w))?;
                        self.solve_region(&inner, &outer, d, warm_f)
                    })
                    .collect();
                let mut merged: Vec<(usize, f64)> = Vec::new();
                let (mut kkt, mut conv, mut its, mut free) = (0.0f64, true, 0, 0);
                for part in parts {
                    let (f, k, c, i, fr) = part?;
                    merged.extend(f.iter());
                    kkt = kkt.max(k);
                    conv &= c;
                    its += i;
                    free += fr;
                }
                merged.sort_by(|x, y| x.0.cmp(&y.0).then(y.1.total_cmp(&x.1)));
                merged.dedup_by_key(|e| e.0);
                (SparseCellFunction::from_sorted(n, merged), kkt, conv, its, free)
            }
        };
        let energy = level_energy_sparse(self.partition, &f, self.cfg.p);
        Ok(Cutoff { n, j, f, energy, kkt, converged, iterations, free_cells })
    }

    /// `f_n = Σ_{j≤k} f_{n,j} / j` after checking that the ring supports are separated.
    pub fn assemble(&self, n: usize, cutoffs: &[&Cutoff]) -> Result<SparseCellFunction> {
        let k = n / (self.cfg.m_star + 1);
        if cutoffs.len() != k || cutoffs.iter().enumerate().any(|(i, c)| c.j != i + 1 || c.n != n) {
            return Err(Error::InvalidArgument(format!("assembly at n = {n} needs cutoffs j = 1..={k}")));
        }
        for j in 2..=k {
            self.check_support_separation(n, j)?;
        }
        let mut all: Vec<(usize, usize, f64)> =
            cutoffs.iter().flat_map(|c| c.f.iter().map(move |(i, v)| (i, c.j, v))).collect();
        all.sort_by_key(|e| (e.0, e.1));
        let mut entries = Vec::new();
        for group in all.chunk_by(|a, b| a.0 == b.0) {
            entries.push((group[0].0, harmonic_combination(group.iter().map(|e| (e.1, e.2)))));
        }
        Ok(SparseCellFunction::from_sorted(n, entries))
    }

    /// `Γ_1(S^{d_j}(B_j)) ⊆ S^{d_{j-1}}(A_{j-1})` at level `n`.
    pub fn check_support_separation(&self, n: usize, j: usize) -> Result<()> {
        let step = self.cfg.m_star + 1;
        let (lj, lprev) = (j * step, (j - 1) * step);
        let block_j = self.partition.branching().pow((n - lj) as u32);
        let block_prev = self.partition.branching().pow((n - lprev) as u32);
        let support = self.partition.refine(&self.rings[j].b, n - lj);
        let a_prev = &self.rings[j - 1].a;
        let scheme = self.partition.scheme();
        let mut offending = None;
        for &c in support.indices() {
            if !a_prev.contains(c / block_prev) {
                offending = Some(c);
                break;
            }
            scheme.for_each_neighbor(n, c, |v| {
                if offending.is_none() && !a_prev.contains(v / block_prev) {
                    offending = Some(v);
                }
            });
            if offending.is_some() {
                break;
            }
        }
        debug_assert!(support.indices().iter().all(|&c| self.rings[j].b.contains(c / block_j)));
        match offending {
            None => Ok(()),
            Some(c) => Err(Error::SupportSeparation {
                n,
                j,
                detail: format!("{} is outside S(A_{})", self.partition.word(n, c), j - 1),
            }),
        }
    }

    /// Runs every level of the configured range and gathers the report.
    pub fn run(&self) -> Result<ConstructionReport> {
        self.check_nesting()?;
        let step = self.cfg.m_star + 1;
        let levels: Vec<usize> = self.cfg.levels().collect();
        let n_max = *levels.last().expect("non-empty level range");
        // each j is a chain over n, warm-started from the previous level
        let chains: Vec<Result<Vec<Cutoff>>> = (1..=self.cfg.k_max)
            .into_par_iter()
            .map(|j| {
                let mut out: Vec<Cutoff> = Vec::new();
                for n in (j * step).max(levels[0])..=n_max {
                    let c = self.build_cutoff(n, j, out.last())?;
                    out.push(c);
                }
                Ok(out)
            })
            .collect();
        let mut by_key: HashMap<(usize, usize), Cutoff> = HashMap::new();
        for chain in chains {
            for c in chain? {
                by_key.insert((c.n, c.j), c);
            }
        }
        let mut records = Vec::new();
        for &n in &levels {
            let k = n / step;
            let cuts: Vec<&Cutoff> = (1..=k).map(|j| &by_key[&(n, j)]).collect();
            let f = self.assemble(n, &cuts)?;
            records.push(self.level_record(n, k, &cuts, &f)?);
        }
        let mut cutoffs: Vec<CutoffRecord> = by_key
            .values()
            .filter(|c| levels.contains(&c.n))
            .map(|c| CutoffRecord {
                n: c.n,
                j: c.j,
                energy: c.energy,
                scaled: c.energy * self.cfg.sigma.powi((c.n - c.j * step) as i32),
                kkt: c.kkt,
                converged: c.converged,
                iterations: c.iterations,
                free_cells: c.free_cells,
            })
            .collect();
        cutoffs.sort_by_key(|c| (c.n, c.j));
        self.verify_bounds(cutoffs, records)
    }

    fn level_record(&self, n: usize, k: usize, cuts: &[&Cutoff], f: &SparseCellFunction) -> Result<LevelRecord> {
        let p = self.cfg.p;
        let sigma = self.cfg.sigma;
        let energy = level_energy_sparse(self.partition, f, p);
        let decomposition: f64 =
            cuts.iter().enumerate().map(|(i, c)| ((i + 1) as f64).powf(-p) * c.energy).sum();
        let decomposition_rel_err = if energy == 0.0 && decomposition == 0.0 {
            0.0
        } else {
            (energy - decomposition).abs() / energy.abs().max(decomposition.abs())
        };
        let inner = self.partition.refine(&self.rings[k].a, n - k * (self.cfg.m_star + 1));
        let plateau_vals: Vec<f64> = inner.indices().iter().map(|&c| f.get(c)).collect();
        let plateau = plateau_vals[0];
        if plateau_vals.iter().any(|&v| v != plateau) {
            return Err(Error::InvalidArgument(format!("f_{n} is not constant on the innermost ring")));
        }
        let mut projected = Vec::with_capacity(n);
        for m in 1..=n {
            let pm = self.measure.project_sparse(f, m)?;
            projected.push((m, sigma.powi(m as i32) * level_energy_sparse(self.partition, &pm, p)));
        }
        Ok(LevelRecord {
            n,
            k,
            cutoff_energies: cuts.iter().map(|c| c.energy).collect(),
            energy,
            decomposition,
            decomposition_rel_err,
            scaled_energy: sigma.powi(n as i32) * energy,
            plateau,
            harmonic_number: harmonic_number(k),
            max_value: f.max(),
            lp_norm: self.measure.lp_norm_sparse(f, p),
            projected,
        })
    }

    /// Aggregates the bound comparisons of a run.
    pub fn verify_bounds(
        &self,
        cutoffs: Vec<CutoffRecord>,
        levels: Vec<LevelRecord>,
    ) -> Result<ConstructionReport> {
        let p = self.cfg.p;
        let m_star = self.cfg.m_star;
        let depth = levels.iter().map(|l| l.n).max().unwrap_or(0);
        let c1 = cutoffs.iter().map(|c| c.scaled).fold(0.0, f64::max);
        let zeta_p = zeta(p);
        let energy_bound = c1 * zeta_p;
        let max_scaled_energy = levels.iter().map(|l| l.scaled_energy).fold(0.0, f64::max);
        let applicable = self.cfg.sigma <= 1.0;
        let energy_bound_holds = applicable.then(|| max_scaled_energy <= energy_bound * (1.0 + 1e-12));

        let l_star_depth = depth.clamp(1, 4);
        let l_star = self.partition.certify_degree_bound(l_star_depth)?.l_star;
        let gamma = self.measure.gamma();
        let c_mu = 1.0;
        let base = ((l_star + 1) as f64).powi(2 * m_star as i32) * c_mu;
        // Σ_{j≥1} (base γ^{j(M*+1)})^{1/p}, a geometric series
        let q = gamma.powf((m_star + 1) as f64 / p);
        let lp_bound = base.powf(1.0 / p) * q / (1.0 - q);
        let max_lp_norm = levels.iter().map(|l| l.lp_norm).fold(0.0, f64::max);

        let mut c2_observed = 0.0f64;
        for l in &levels {
            if l.scaled_energy > 0.0 {
                for &(_, v) in &l.projected {
                    c2_observed = c2_observed.max(v / l.scaled_energy);
                }
            }
        }
        let covering_level = depth.clamp(1, 2);
        let all = CellSet::new(covering_level, 0..self.partition.level_size(covering_level)?);
        let cov = CoveringSystem::Stars.covering_of(self.partition, &all)?;
        let c2_formula_factor =
            (l_star as f64).powi(cov.n_e as i32) * (cov.n_e as f64).powf(p - 1.0) * cov.n_t as f64;

        let all_converged = cutoffs.iter().all(|c| c.converged);
        let mut notes = vec![format!(
            "finite-depth surrogates: C1, C2 and L* are maxima over levels <= {depth}"
        )];
        if !applicable {
            notes.push(format!("boundedness check inapplicable (sigma = {} > 1)", self.cfg.sigma));
        }
        if !all_converged {
            let worst = cutoffs.iter().map(|c| c.kkt).fold(0.0, f64::max);
            notes.push(format!(
                "some cutoff solves stopped at their work budget (max KKT residual {worst:.3e}); \
                 they are feasible cutoffs but not certified minimisers"
            ));
        }
        Ok(ConstructionReport {
            scheme: self.partition.scheme().name().to_string(),
            p,
            sigma: self.cfg.sigma,
            sigma_source: self.cfg.sigma_source,
            m_star,
            k_max: self.cfg.k_max,
            cutoff_mode: self.cfg.cutoff_mode,
            targets: self.targets.clone(),
            cutoffs,
            levels,
            c1,
            zeta_p,
            energy_bound,
            max_scaled_energy,
            energy_bound_holds,
            l_star,
            l_star_depth,
            gamma,
            c_mu,
            lp_bound,
            max_lp_norm,
            lp_bound_holds: max_lp_norm <= lp_bound,
            c2_observed,
            n_t: cov.n_t,
            n_e: cov.n_e,
            c2_formula_factor,
            all_converged,
            depth,
            notes,
        })
    }
}

/// `w_j = ω(j(M*+1))` for `j = 0..=k_max`, with `π^{M*+1}(w_{j+1}) = w_j` checked.
pub fn target_sequence(partition: &Partition, cfg: &ConstructionConfig) -> Result<Vec<CellWord>> {
    let step = cfg.m_star + 1;
    let len = cfg.k_max * step;
    let prefix = cfg.omega.prefix(len).ok_or_else(|| {
        Error::InvalidArgument(format!("omega does not provide {len} symbols"))
    })?;
    let full = CellWord::from_symbols(prefix);
    partition.index(&full)?;
    let words: Vec<CellWord> = (0..=cfg.k_max).map(|j| full.ancestor(len - j * step)).collect();
    for j in 0..cfg.k_max {
        if words[j + 1].ancestor(step) != words[j] {
            return Err(Error::Nesting { j, detail: "target words are not nested".into() });
        }
    }
    Ok(words)
}

/// `(Γ_{M*}(w), Γ_{2M*}(w), Γ_{2M*+1}(w))`.
pub fn rings_of(partition: &Partition, w: &CellWord, m_star: usize) -> Result<Rings> {
    if m_star < 1 {
        return Err(Error::InvalidArgument("M* must be at least 1".into()));
    }
    let a = partition.gamma(m_star, w)?;
    let b = partition.gamma(2 * m_star, w)?;
    let b_star = partition.gamma_of_set(1, &b);
    debug_assert!(a.is_subset(&b) && b.is_subset(&b_star));
    Ok(Rings { a, b, b_star })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(name: &str, p: f64, sigma: f64, k_max: usize, mode: CutoffMode) -> ConstructionReport {
        let part = Partition::builtin(name).unwrap();
        let mu = SelfSimilarMeasure::uniform(part.branching());
        let mut cfg = ConstructionConfig::new(&part, p, sigma, k_max, 1);
        cfg.cutoff_mode = mode;
        Construction::new(&part, &mu, cfg).unwrap().run().unwrap()
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        assert!((zeta(4.0) - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-13);
        assert!((zeta(1.3) - 3.931_949_211_809_54).abs() < 1e-10);
    }

    #[test]
    fn harmonic_numbers() {
        assert_eq!(harmonic_number(1), 1.0);
        assert_eq!(harmonic_number(2), 1.5);
        assert_eq!(harmonic_number(3), 11.0 / 6.0);
        assert_eq!(harmonic_number(4), 25.0 / 12.0);
        assert_eq!(harmonic_number(10), 7381.0 / 2520.0);
    }

    #[test]
    fn omega_prefixes() {
        assert_eq!(Omega::Periodic(vec![1, 2]).prefix(5), Some(vec![1, 2, 1, 2, 1]));
        assert_eq!(Omega::Prefix(vec![0, 1]).prefix(3), None);
        assert_eq!(Omega::Periodic(vec![]).prefix(1), None);
    }

    #[test]
    fn targets_are_nested() {
        let part = Partition::builtin("sierpinski-carpet").unwrap();
        let cfg = ConstructionConfig::new(&part, 1.3, 0.6, 3, 1);
        let w = target_sequence(&part, &cfg).unwrap();
        assert!(w[0].is_root());
        assert_eq!(w[3].level(), 6);
        let mut short = cfg.clone();
        short.omega = Omega::Prefix(vec![0; 5]);
        assert!(target_sequence(&part, &short).is_err());
    }

    #[test]
    fn zero_m_star_rejected() {
        let part = Partition::builtin("square2").unwrap();
        assert!(rings_of(&part, &CellWord::from_symbols(vec![0, 0]), 0).is_err());
        let mu = SelfSimilarMeasure::uniform(4);
        let cfg = ConstructionConfig::new(&part, 2.0, 1.0, 2, 0);
        assert!(Construction::new(&part, &mu, cfg).is_err());
    }

    #[test]
    fn cutoff_constraints_hold() {
        let part = Partition::builtin("square2").unwrap();
        let mu = SelfSimilarMeasure::uniform(4);
        let cfg = ConstructionConfig::new(&part, 2.0, 1.0, 2, 1);
        let c = Construction::new(&part, &mu, cfg).unwrap();
        let cut = c.build_cutoff(4, 1, None).unwrap();
        let r = c.rings(1);
        for (idx, v) in cut.f.iter() {
            let anc = idx / 16;
            assert!(r.b.contains(anc));
            assert!((0.0..=1.0).contains(&v));
            if r.a.contains(anc) {
                assert_eq!(v, 1.0);
            }
        }
        assert!(cut.converged);
    }

    #[test]
    fn interval_identities() {
        let rep = run("interval2", 2.0, 1.0, 3, CutoffMode::HarmonicMinimizer);
        assert_eq!(rep.levels.len(), 5);
        for l in &rep.levels {
            assert!(l.decomposition_rel_err < 1e-12);
            assert_eq!(l.plateau, harmonic_number(l.k));
        }
        assert_eq!(rep.energy_bound_holds, Some(true));
        assert!(rep.lp_bound_holds);
        assert!(rep.all_converged);
    }

    #[test]
    fn minimizer_beats_max_of_cells() {
        let a = run("square2", 1.5, 0.7, 2, CutoffMode::HarmonicMinimizer);
        let b = run("square2", 1.5, 0.7, 2, CutoffMode::MaxOfCellCutoffs);
        for (x, y) in a.cutoffs.iter().zip(&b.cutoffs) {
            assert_eq!((x.n, x.j), (y.n, y.j));
            assert!(x.energy <= y.energy * (1.0 + 1e-9), "{x:?} {y:?}");
        }
    }

    #[test]
    fn sigma_above_one_is_labelled() {
        let rep = run("interval2", 2.0, 2.0, 1, CutoffMode::HarmonicMinimizer);
        assert_eq!(rep.energy_bound_holds, None);
        assert!(rep.notes.iter().any(|n| n.contains("inapplicable")));
    }
}
