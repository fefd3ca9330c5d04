//! Minimisation of the epsilon-smoothed p-energy
//! `sum_e (|df_e|^2 + eps^2)^(p/2) - <c, f>` over the free vertices of a graph.
//!
//! Continuation stages shrink `eps` and take IRLS steps; the last stage polishes with
//! damped Newton. Linear systems are weighted graph Laplacians solved by CG with a
//! multigrid or Jacobi preconditioner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::amg::{Amg, Csr};
use crate::graph::Graph;

const PAR_THRESHOLD: usize = 32_768;
const NONE: u32 = u32::MAX;
const AMG_THRESHOLD: usize = 1_500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Initial smoothing, relative to the constraint scale.
    pub eps_start: f64,
    /// Final smoothing, relative to the constraint scale.
    pub eps_end: f64,
    pub max_stages: usize,
    /// Factor applied to `eps` between continuation stages.
    pub eps_factor: f64,
    pub irls_per_stage: usize,
    pub max_newton: usize,
    /// KKT tolerance, multiplied by `scale^(p-1)`.
    pub tol_kkt: f64,
    /// Relative energy tolerance; drives the Newton-decrement stopping rule.
    pub tol_energy: f64,
    pub cg_rtol: f64,
    pub max_cg: usize,
    /// Return an error instead of a best-effort result when not converged.
    pub require_convergence: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_start: 1e-2,
            eps_end: 1e-10,
            max_stages: 40,
            eps_factor: 0.5,
            irls_per_stage: 3,
            max_newton: 60,
            tol_kkt: 1e-9,
            tol_energy: 1e-8,
            cg_rtol: 1e-11,
            max_cg: 20_000,
            require_convergence: true,
        }
    }
}

impl SolverOptions {
    /// A bounded-work variant for very large problems: fewer stages and CG iterations,
    /// never fails. Used when a good feasible point matters more than a certificate.
    pub fn budgeted(max_newton: usize, max_cg: usize) -> Self {
        Self {
            eps_start: 1e-3,
            eps_end: 1e-8,
            eps_factor: 0.1,
            irls_per_stage: 1,
            max_newton,
            max_cg,
            cg_rtol: 1e-8,
            require_convergence: false,
            ..Self::default()
        }
    }
}

/// Raw outcome of a minimisation.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub values: Vec<f64>,
    /// Unsmoothed energy `sum_e |df_e|^p` over all edges of the graph.
    pub energy: f64,
    /// Max-norm of the smoothed gradient (minus source) over free vertices at `eps_final`.
    pub kkt: f64,
    pub iterations: usize,
    pub eps_final: f64,
    pub converged: bool,
}

#[inline]
fn phi(d: f64, p: f64, e2: f64) -> f64 {
    (d * d + e2).powf(0.5 * p)
}

#[inline]
fn dphi(d: f64, p: f64, e2: f64) -> f64 {
    p * d * (d * d + e2).powf(0.5 * p - 1.0)
}

#[inline]
fn ddphi(d: f64, p: f64, e2: f64) -> f64 {
    let s = d * d + e2;
    p * s.powf(0.5 * p - 2.0) * ((p - 1.0) * d * d + e2)
}

#[inline]
fn irls_weight(d: f64, p: f64, e2: f64) -> f64 {
    p * (d * d + e2).powf(0.5 * p - 1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PAR_THRESHOLD {
        a.par_iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Row-oriented view of the free part of the problem.
struct System<'a> {
    p: f64,
    values: Vec<f64>,
    free: Vec<usize>,
    /// Edges touching at least one free vertex, oriented `(a, b)`.
    edges: Vec<(u32, u32)>,
    row_offsets: Vec<usize>,
    /// `(edge, other free position or NONE, sign of this vertex in the edge)`.
    rows: Vec<(u32, u32, f64)>,
    source: Option<&'a [f64]>,
}

impl<'a> System<'a> {
    fn new(graph: &Graph, prescribed: &[Option<f64>], source: Option<&'a [f64]>, p: f64) -> Self {
        let n = graph.len();
        let mut pos = vec![NONE; n];
        let mut free = Vec::new();
        let mut values = vec![0.0; n];
        for v in 0..n {
            match prescribed[v] {
                Some(x) => values[v] = x,
                None => {
                    pos[v] = free.len() as u32;
                    free.push(v);
                }
            }
        }
        let mut edges = Vec::new();
        let mut edge_of = Vec::new();
        for (a, b) in graph.edges() {
            if pos[a] != NONE || pos[b] != NONE {
                edge_of.push((a, b));
                edges.push((a as u32, b as u32));
            }
        }
        let mut counts = vec![0usize; free.len() + 1];
        for &(a, b) in &edges {
            for v in [a, b] {
                if pos[v as usize] != NONE {
                    counts[pos[v as usize] as usize + 1] += 1;
                }
            }
        }
        for i in 0..free.len() {
            counts[i + 1] += counts[i];
        }
        let row_offsets = counts.clone();
        let mut fill = counts;
        let mut rows = vec![(0u32, NONE, 0.0); row_offsets[free.len()]];
        for (e, &(a, b)) in edges.iter().enumerate() {
            let (pa, pb) = (pos[a as usize], pos[b as usize]);
            if pa != NONE {
                rows[fill[pa as usize]] = (e as u32, pb, 1.0);
                fill[pa as usize] += 1;
            }
            if pb != NONE {
                rows[fill[pb as usize]] = (e as u32, pa, -1.0);
                fill[pb as usize] += 1;
            }
        }
        Self { p, values, free, edges, row_offsets, rows, source }
    }

    fn deltas(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.edges.iter().map(|&(a, b)| self.values[a as usize] - self.values[b as usize]));
    }

    fn objective(&self, deltas: &[f64], e2: f64) -> f64 {
        let p = self.p;
        let mut j: f64 = if deltas.len() >= PAR_THRESHOLD {
            deltas.par_iter().map(|&d| phi(d, p, e2)).sum()
        } else {
            deltas.iter().map(|&d| phi(d, p, e2)).sum()
        };
        if let Some(c) = self.source {
            j -= self.free.iter().map(|&v| c[v] * self.values[v]).sum::<f64>();
        }
        j
    }

    fn gradient(&self, deltas: &[f64], e2: f64, out: &mut [f64]) {
        let p = self.p;
        let row = |i: usize| -> f64 {
            let mut g = 0.0;
            for &(e, _, s) in &self.rows[self.row_offsets[i]..self.row_offsets[i + 1]] {
                g += s * dphi(deltas[e as usize], p, e2);
            }
            if let Some(c) = self.source {
                g -= c[self.free[i]];
            }
            g
        };
        if out.len() >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        } else {
            out.iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        }
    }

    fn matvec(&self, w: &[f64], x: &[f64], y: &mut [f64]) {
        let row = |i: usize| -> f64 {
            let mut acc = 0.0;
            for &(e, other, _) in &self.rows[self.row_offsets[i]..self.row_offsets[i + 1]] {
                let xo = if other == NONE { 0.0 } else { x[other as usize] };
                acc += w[e as usize] * (x[i] - xo);
            }
            acc
        };
        if y.len() >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
        }
    }

    fn diagonal(&self, w: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rows[self.row_offsets[i]..self.row_offsets[i + 1]]
                .iter()
                .map(|&(e, _, _)| w[e as usize])
                .sum::<f64>()
                .max(f64::MIN_POSITIVE);
        }
    }

    /// The free-free block of the weighted Laplacian, with a tiny diagonal shift
    /// so that the preconditioner stays definite.
    fn assemble(&self, w: &[f64]) -> Csr {
        let n = self.free.len();
        let mut m = Csr { ptr: Vec::with_capacity(n + 1), col: Vec::new(), val: Vec::new() };
        m.ptr.push(0);
        let mut diag = vec![0.0; n];
        self.diagonal(w, &mut diag);
        let shift = 1e-12 * diag.iter().copied().fold(0.0, f64::max);
        for i in 0..n {
            m.col.push(i as u32);
            m.val.push(diag[i] + shift);
            for &(e, other, _) in &self.rows[self.row_offsets[i]..self.row_offsets[i + 1]] {
                if other != NONE {
                    m.col.push(other);
                    m.val.push(-w[e as usize]);
                }
            }
            m.ptr.push(m.col.len());
        }
        m
    }

    /// Preconditioned CG for `A_w x = rhs`: multigrid on large systems, Jacobi otherwise.
    fn pcg(&self, w: &[f64], rhs: &[f64], rtol: f64, max_it: usize) -> (Vec<f64>, usize) {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let bnorm = dot(rhs, rhs).sqrt();
        if bnorm == 0.0 {
            return (x, 0);
        }
        let amg = (n >= AMG_THRESHOLD).then(|| Amg::new(self.assemble(w)));
        let mut diag = vec![0.0; n];
        self.diagonal(w, &mut diag);
        let precondition = |r: &[f64], z: &mut [f64]| match &amg {
            Some(m) => m.apply(r, z),
            None => z.iter_mut().zip(r).zip(&diag).for_each(|((z, r), d)| *z = r / d),
        };
        let mut z = vec![0.0; n];
        precondition(&r, &mut z);
        let mut dir = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for it in 0..max_it {
            self.matvec(w, &dir, &mut q);
            let dq = dot(&dir, &q);
            if dq <= 0.0 || !dq.is_finite() {
                return (x, it);
            }
            let alpha = rz / dq;
            for k in 0..n {
                x[k] += alpha * dir[k];
                r[k] -= alpha * q[k];
            }
            if dot(&r, &r).sqrt() <= rtol * bnorm {
                return (x, it + 1);
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                dir[k] = z[k] + beta * dir[k];
            }
        }
        (x, max_it)
    }
}

/// Full unsmoothed energy over all edges of `graph`.
pub(crate) fn graph_energy(graph: &Graph, values: &[f64], p: f64) -> f64 {
    graph.edges().map(|(a, b)| (values[a] - values[b]).abs().powf(p)).sum()
}

/// Minimises the smoothed energy with the given prescribed values.
///
/// Free vertices in components without any prescribed vertex are set to zero.
/// `warm` provides initial values for the free vertices (indexed by vertex).
pub(crate) fn minimize(
    graph: &Graph,
    prescribed: &[Option<f64>],
    source: Option<&[f64]>,
    p: f64,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> SolveOutcome {
    let mut prescribed = prescribed.to_vec();
    let (labels, ncomp) = graph.components();
    let mut anchored = vec![false; ncomp];
    for (v, x) in prescribed.iter().enumerate() {
        if x.is_some() {
            anchored[labels[v]] = true;
        }
    }
    for v in 0..graph.len() {
        if !anchored[labels[v]] {
            prescribed[v] = Some(0.0);
        }
    }

    let fixed: Vec<f64> = prescribed.iter().flatten().copied().collect();
    let lo = fixed.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut scale = if fixed.is_empty() { 0.0 } else { hi - lo };
    if let Some(c) = source {
        scale = scale.max(inf_norm(c).powf(1.0 / (p - 1.0)));
    }
    if scale == 0.0 {
        scale = 1.0;
    }
    let tol_kkt = opts.tol_kkt * scale.powf(p - 1.0);
    let eps_end = opts.eps_end * scale;

    let mut sys = System::new(graph, &prescribed, source, p);
    let nfree = sys.free.len();
    if let Some(w0) = warm {
        for &v in &sys.free {
            sys.values[v] = w0[v];
        }
    } else if !fixed.is_empty() {
        let mid = 0.5 * (lo + hi);
        for &v in &sys.free {
            sys.values[v] = mid;
        }
    }

    let mut deltas = Vec::new();
    let mut grad = vec![0.0; nfree];
    let mut weights = vec![0.0; sys.edges.len()];
    let mut iterations = 0;

    // Harmonic (p = 2) extension as the starting point.
    if warm.is_none() && nfree > 0 && source.is_none() {
        sys.deltas(&mut deltas);
        let saved_p = sys.p;
        sys.p = 2.0;
        sys.gradient(&deltas, 0.0, &mut grad);
        sys.p = saved_p;
        weights.iter_mut().for_each(|w| *w = 2.0);
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let (d, _) = sys.pcg(&weights, &rhs, opts.cg_rtol, opts.max_cg);
        for (k, &v) in sys.free.iter().enumerate() {
            sys.values[v] += d[k];
        }
        iterations += 1;
    }

    // the quadratic case needs no smoothing continuation
    let mut eps = if p == 2.0 { eps_end } else { (opts.eps_start * scale).max(eps_end) };
    let mut converged = nfree == 0;
    let mut kkt = 0.0;
    let mut dvec = vec![0.0; nfree];
    let mut trial = Vec::new();
    for _stage in 0..opts.max_stages.max(1) {
        if nfree == 0 {
            break;
        }
        let last = eps <= eps_end * (1.0 + 1e-12);
        let e2 = eps * eps;
        let steps = if last { opts.max_newton } else { opts.irls_per_stage };
        for _ in 0..steps {
            sys.deltas(&mut deltas);
            sys.gradient(&deltas, e2, &mut grad);
            kkt = inf_norm(&grad);
            if kkt <= tol_kkt {
                if last {
                    converged = true;
                }
                break;
            }
            for (w, &d) in weights.iter_mut().zip(&deltas) {
                *w = if last { ddphi(d, p, e2) } else { irls_weight(d, p, e2) };
            }
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let rtol = if last { opts.cg_rtol } else { opts.cg_rtol.max(1e-6) };
            let (mut d, _) = sys.pcg(&weights, &rhs, rtol, opts.max_cg);
            iterations += 1;
            let mut slope = dot(&grad, &d);
            if !(slope < 0.0) {
                // fall back to scaled steepest descent
                let mut diag = vec![0.0; nfree];
                sys.diagonal(&weights, &mut diag);
                d = grad.iter().zip(&diag).map(|(g, w)| -g / w).collect();
                slope = dot(&grad, &d);
            }
            let decrement = -slope;
            dvec.copy_from_slice(&d);
            let j0 = sys.objective(&deltas, e2);
            if last && decrement <= 1e-3 * opts.tol_energy * j0.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
            let ddelta = edge_directions(&sys, &dvec);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                trial.clear();
                trial.extend(deltas.iter().zip(&ddelta).map(|(d, dd)| d + t * dd));
                let mut jt: f64 = trial.iter().map(|&d| phi(d, p, e2)).sum();
                if let Some(c) = source {
                    jt -= sys
                        .free
                        .iter()
                        .enumerate()
                        .map(|(k, &v)| c[v] * (sys.values[v] + t * dvec[k]))
                        .sum::<f64>();
                }
                if jt <= j0 + 1e-4 * t * slope {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                if last {
                    // no representable decrease left
                    converged = decrement <= opts.tol_energy * j0.abs().max(f64::MIN_POSITIVE);
                }
                break;
            }
            for (k, &v) in sys.free.iter().enumerate() {
                sys.values[v] += t * dvec[k];
            }
            if !last && decrement <= 1e-6 * j0.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if last {
            break;
        }
        eps = (eps * opts.eps_factor).max(eps_end);
    }
    if nfree > 0 {
        let e2 = eps * eps;
        sys.deltas(&mut deltas);
        sys.gradient(&deltas, e2, &mut grad);
        kkt = inf_norm(&grad);
        if kkt <= tol_kkt && eps <= eps_end * (1.0 + 1e-12) {
            converged = true;
        }
    }
    let energy = graph_energy(graph, &sys.values, p);
    SolveOutcome { values: sys.values, energy, kkt, iterations, eps_final: eps, converged }
}

/// Change of every edge difference along the free-vertex direction `d`.
fn edge_directions(sys: &System<'_>, d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; sys.edges.len()];
    for i in 0..sys.free.len() {
        for &(e, _, s) in &sys.rows[sys.row_offsets[i]..sys.row_offsets[i + 1]] {
            out[e as usize] += s * d[i];
        }
    }
    out
}
