//! Scaling exponent fits, conductive homogeneity diagnostics, the conformal
//! dimension crossing and the scaled energy sequence of a function.
//!
//! Every supremum over an infinite index set is replaced by a maximum over the
//! configured depth; the reports carry that depth.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disparity::{sigma_pmn, CoveringSystem, DisparityOptions};
use crate::error::{Error, Result};
use crate::measure::{CellFunction, SelfSimilarMeasure};
use crate::partition::{CellWord, Partition};
use crate::penergy::{level_energy, ring_conductance, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSource {
    /// Ring conductances, decaying like `σ^{-m}`.
    Conductance,
    /// Disparity constants, growing like `σ^m`.
    Disparity,
}

impl std::fmt::Display for FitSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Conductance => "conductance",
            Self::Disparity => "disparity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Aitken extrapolation of the consecutive log-ratios.
    Extrapolated,
    LeastSquares,
}

/// A geometric-rate fit of `value(m)` against `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub p: f64,
    pub source: FitSource,
    pub samples: Vec<(usize, f64)>,
    /// Slope of the fitted line `log value = intercept + log_slope * m`.
    pub log_slope: f64,
    pub intercept: f64,
    pub sigma_hat: f64,
    /// Max absolute deviation of the log values from the fitted line.
    pub residual: f64,
    /// Consecutive ratios oriented so that each estimates `σ`.
    pub ratio_estimates: Vec<f64>,
    pub method: FitMethod,
    /// Plain least-squares slope, reported for comparison.
    pub ls_slope: f64,
}

impl ScalingFit {
    /// Fits the samples; the rate is extrapolated from the consecutive log-ratios
    /// when at least three of them converge geometrically, and least squares otherwise.
    pub fn new(p: f64, source: FitSource, mut samples: Vec<(usize, f64)>) -> Result<Self> {
        samples.sort_by_key(|s| s.0);
        samples.dedup_by_key(|s| s.0);
        if samples.len() < 2 {
            return Err(Error::DegenerateFit("need at least two distinct m".into()));
        }
        if let Some(&(m, v)) = samples.iter().find(|s| !(s.1 > 0.0 && s.1.is_finite())) {
            return Err(Error::DegenerateFit(format!("value {v} at m = {m} has no logarithm")));
        }
        let sign = match source {
            FitSource::Conductance => -1.0,
            FitSource::Disparity => 1.0,
        };
        let xs: Vec<f64> = samples.iter().map(|s| s.0 as f64).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let ls_slope = sxy / sxx;

        // per-unit-m log-rates of consecutive samples
        let rates: Vec<f64> = samples
            .windows(2)
            .map(|w| (w[1].1.ln() - w[0].1.ln()) / (w[1].0 - w[0].0) as f64)
            .collect();
        let ratio_estimates = rates.iter().map(|r| (sign * r).exp()).collect();
        let consecutive = samples.windows(2).all(|w| w[1].0 == w[0].0 + 1);
        let (log_slope, method) = match aitken(&rates) {
            Some(r) if consecutive => (r, FitMethod::Extrapolated),
            _ => (ls_slope, FitMethod::LeastSquares),
        };
        let intercept = ys.iter().zip(&xs).map(|(y, x)| y - log_slope * x).sum::<f64>() / n;
        let residual = ys
            .iter()
            .zip(&xs)
            .map(|(y, x)| (y - intercept - log_slope * x).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            p,
            source,
            samples,
            log_slope,
            intercept,
            sigma_hat: (sign * log_slope).exp(),
            residual,
            ratio_estimates,
            method,
            ls_slope,
        })
    }
}

/// Limit of a geometrically converging sequence from its last three terms.
fn aitken(r: &[f64]) -> Option<f64> {
    if r.len() < 3 {
        return None;
    }
    let [a, b, c] = [r[r.len() - 3], r[r.len() - 2], r[r.len() - 1]];
    let (d1, d2) = (b - a, c - b);
    let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
    if d2.abs() <= 1e-12 * scale {
        return Some(c);
    }
    let q = d2 / d1;
    if !(q > 0.0 && q < 0.95) {
        return None;
    }
    Some(c + d2 * q / (1.0 - q))
}

/// Words of the shallowest level `≥ 1` whose ring ground set `T_n \ Γ_{M*}(w)` is non-empty.
pub fn default_ring_samples(partition: &Partition, m_star: usize) -> Result<Vec<CellWord>> {
    for n in 1..=12 {
        let size = partition.level_size(n)?;
        let words: Vec<CellWord> = (0..size)
            .filter(|&c| {
                let w = partition.word(n, c);
                partition.gamma(m_star, &w).map(|g| g.len() < size).unwrap_or(false)
            })
            .map(|c| partition.word(n, c))
            .collect();
        if !words.is_empty() {
            return Ok(words);
        }
    }
    Err(Error::InvalidArgument("no word with a non-empty ring ground set".into()))
}

/// Drops samples that a grid symmetry maps onto an earlier sample of the same level.
fn symmetry_representatives(partition: &Partition, samples: &[CellWord]) -> Result<Vec<CellWord>> {
    let scheme = partition.scheme();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for w in samples {
        let idx = partition.index(w)?;
        let canon = scheme.symmetric_images(w.level(), idx)[0];
        if seen.insert((w.level(), canon)) {
            out.push(w.clone());
        }
    }
    Ok(out)
}

/// Max over `samples` of the ring conductance at depth `m`, with the attaining word.
pub fn max_ring_conductance(
    partition: &Partition,
    samples: &[CellWord],
    m: usize,
    p: f64,
    m_star: usize,
    opts: &SolverOptions,
) -> Result<(f64, CellWord)> {
    let reps = symmetry_representatives(partition, samples)?;
    let values: Vec<Result<f64>> = reps
        .par_iter()
        .map(|w| {
            ring_conductance(partition, w, m, p, m_star, opts).map(|r| r.value).map_err(|e| {
                Error::AtSample { word: w.to_string(), m, source: Box::new(e) }
            })
        })
        .collect();
    let mut best: Option<(f64, CellWord)> = None;
    for (w, v) in reps.into_iter().zip(values) {
        let v = v?;
        if best.as_ref().map_or(true, |b| v > b.0) {
            best = Some((v, w));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no ring samples".into()))
}

pub fn fit_sigma_conductance(
    partition: &Partition,
    p: f64,
    m_range: RangeInclusive<usize>,
    samples: &[CellWord],
    m_star: usize,
    opts: &SolverOptions,
) -> Result<ScalingFit> {
    if m_range.clone().count() < 3 {
        return Err(Error::DegenerateFit(format!("m range {m_range:?} has fewer than 3 points")));
    }
    let mut points = Vec::new();
    for m in m_range {
        points.push((m, max_ring_conductance(partition, samples, m, p, m_star, opts)?.0));
    }
    ScalingFit::new(p, FitSource::Conductance, points)
}

#[allow(clippy::too_many_arguments)]
pub fn fit_sigma_disparity(
    partition: &Partition,
    measure: &SelfSimilarMeasure,
    system: &CoveringSystem,
    p: f64,
    m_range: RangeInclusive<usize>,
    n: usize,
    opts: &DisparityOptions,
) -> Result<ScalingFit> {
    if m_range.clone().count() < 2 {
        return Err(Error::DegenerateFit(format!("m range {m_range:?} has fewer than 2 points")));
    }
    let mut points = Vec::new();
    for m in m_range {
        points.push((m, sigma_pmn(partition, measure, system, m, n, p, opts)?.value));
    }
    ScalingFit::new(p, FitSource::Disparity, points)
}

/// One term of the homogeneity product sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityEntry {
    pub m: usize,
    /// Max of `σ_{p,m,n}` over `n ≤ n_max`.
    pub sigma_pm: f64,
    /// Max of the ring conductance over the sampled words.
    pub ring: f64,
    pub product: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub p: f64,
    pub entries: Vec<HomogeneityEntry>,
    pub max_over_min: f64,
    /// Running max of the products stays within 10% over the second half of the range.
    /// A heuristic reading of a finite sequence, not a proof of boundedness.
    pub bounded_looking: bool,
    pub n_max: usize,
    pub ring_level: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn check_homogeneity(
    partition: &Partition,
    measure: &SelfSimilarMeasure,
    system: &CoveringSystem,
    p: f64,
    m_max: usize,
    n_max: usize,
    m_star: usize,
    opts: &DisparityOptions,
) -> Result<HomogeneityReport> {
    if m_max < 1 || n_max < 1 {
        return Err(Error::InvalidArgument("homogeneity check needs m_max, n_max >= 1".into()));
    }
    let samples = default_ring_samples(partition, m_star)?;
    let mut entries = Vec::new();
    for m in 1..=m_max {
        let mut sigma_pm = 0.0f64;
        for n in 1..=n_max {
            sigma_pm = sigma_pm.max(sigma_pmn(partition, measure, system, m, n, p, opts)?.value);
        }
        let ring = max_ring_conductance(partition, &samples, m, p, m_star, &opts.solver)?.0;
        entries.push(HomogeneityEntry { m, sigma_pm, ring, product: sigma_pm * ring });
    }
    Ok(HomogeneityReport::from_entries(p, entries, n_max, samples[0].level()))
}

impl HomogeneityReport {
    /// Summarises precomputed entries; `entries` must be non-empty.
    pub fn from_entries(p: f64, entries: Vec<HomogeneityEntry>, n_max: usize, ring_level: usize) -> Self {
        let products: Vec<f64> = entries.iter().map(|e| e.product).collect();
        let hi = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = products.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            p,
            entries,
            max_over_min: hi / lo,
            bounded_looking: running_max_stable(&products, 0.1),
            n_max,
            ring_level,
        }
    }
}

fn running_max_stable(xs: &[f64], rel: f64) -> bool {
    let mut run = Vec::with_capacity(xs.len());
    let mut cur = f64::NEG_INFINITY;
    for &x in xs {
        cur = cur.max(x);
        run.push(cur);
    }
    let mid = run[run.len() / 2];
    let last = run[run.len() - 1];
    last.is_finite() && last <= (1.0 + rel) * mid
}

/// The `σ̂(p) = 1` crossing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimArEstimate {
    pub p_star: f64,
    pub bracket: (f64, f64),
    pub tol_p: f64,
    /// Every `(p, σ̂(p))` evaluated, in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
    /// Whether `σ̂` increased along the pre-bisection sample grid.
    pub monotone_on_grid: bool,
    pub depth: usize,
}

/// Bisection for `sigma(p) = 1` on `[p_lo, p_hi]` (either order), after checking
/// monotonicity on a grid of `grid` interior points.
pub fn bisect_crossing(
    sigma: impl Fn(f64) -> Result<f64>,
    p_lo: f64,
    p_hi: f64,
    tol_p: f64,
    grid: usize,
) -> Result<(f64, (f64, f64), Vec<(f64, f64)>, bool)> {
    if !(tol_p > 0.0) {
        return Err(Error::InvalidArgument(format!("tol_p = {tol_p} must be positive")));
    }
    let (mut lo, mut hi) = if p_lo <= p_hi { (p_lo, p_hi) } else { (p_hi, p_lo) };
    if !(lo > 1.0) {
        return Err(Error::InvalidArgument(format!("p range must lie in (1, inf), got {lo}")));
    }
    let mut evals = Vec::new();
    let s_lo = sigma(lo)?;
    let s_hi = sigma(hi)?;
    evals.push((lo, s_lo));
    evals.push((hi, s_hi));
    if !(s_lo < 1.0 && 1.0 < s_hi) {
        return Err(Error::NoBracket { p_lo: lo, p_hi: hi, sigma_lo: s_lo, sigma_hi: s_hi });
    }
    let mut grid_vals = vec![(lo, s_lo)];
    for k in 1..=grid {
        let q = lo + (hi - lo) * k as f64 / (grid + 1) as f64;
        let s = sigma(q)?;
        evals.push((q, s));
        grid_vals.push((q, s));
    }
    grid_vals.push((hi, s_hi));
    let monotone = grid_vals.windows(2).all(|w| w[0].1 <= w[1].1);
    // shrink to the grid cell containing the first crossing
    if let Some(w) = grid_vals.windows(2).find(|w| w[0].1 < 1.0 && w[1].1 >= 1.0) {
        lo = w[0].0;
        hi = w[1].0;
    }
    while hi - lo > tol_p {
        let mid = 0.5 * (lo + hi);
        let s = sigma(mid)?;
        evals.push((mid, s));
        if s < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), (lo, hi), evals, monotone))
}

/// Crossing of the conductance-fitted `σ̂(p)` through 1.
#[allow(clippy::too_many_arguments)]
pub fn estimate_dim_ar(
    partition: &Partition,
    p_lo: f64,
    p_hi: f64,
    tol_p: f64,
    m_range: RangeInclusive<usize>,
    samples: &[CellWord],
    m_star: usize,
    opts: &SolverOptions,
) -> Result<DimArEstimate> {
    let depth = samples.iter().map(|w| w.level()).max().unwrap_or(0) + m_range.end();
    let sigma = |p: f64| {
        fit_sigma_conductance(partition, p, m_range.clone(), samples, m_star, opts).map(|f| f.sigma_hat)
    };
    let (p_star, bracket, evaluations, monotone_on_grid) = bisect_crossing(sigma, p_lo, p_hi, tol_p, 3)?;
    Ok(DimArEstimate { p_star, bracket, tol_p, evaluations, monotone_on_grid, depth })
}

/// `m ↦ σ^m E_p^m(P_m f)` for `m = 1..=N`, `N` the level of `f`.
pub fn wp_functional(
    partition: &Partition,
    measure: &SelfSimilarMeasure,
    f: &CellFunction,
    sigma: f64,
    p: f64,
) -> Result<Vec<(usize, f64)>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} must be positive")));
    }
    (1..=f.level)
        .map(|m| {
            let pm = measure.project(f, m)?;
            Ok((m, sigma.powi(m as i32) * level_energy(partition, &pm, p)))
        })
        .collect()
}
