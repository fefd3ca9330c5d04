//! One function per subcommand.

use std::fs;
use std::time::Instant;

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};

use pcarpet_core::construction::{Construction, ConstructionConfig, ConstructionReport, CutoffMode, Omega, SigmaSource};
use pcarpet_core::disparity::{sigma_pm, sigma_pmn, CoveringSystem, DisparityEstimate, DisparityOptions, LevelDisparity};
use pcarpet_core::homogeneity::{
    default_ring_samples, estimate_dim_ar, fit_sigma_conductance, max_ring_conductance, FitSource,
    HomogeneityEntry, HomogeneityReport, ScalingFit,
};
use pcarpet_core::partition::{DegreeCertificate, InclusionReport, MStarCertificate};
use pcarpet_core::penergy::{effective_conductance, ring_conductance};
use pcarpet_core::{CellSet, CellWord, SolverOptions};

use crate::cache::{cached, input_hash, Cache};
use crate::context::Context;
use crate::{
    failure, usage, BenchArgs, CacheAction, CheckArgs, Cli, Command, ConductanceArgs, ConstructArgs, CutoffArg,
    DimarArgs, DisparityArgs, ScanArgs, ScanSource,
};

/// Covering checks stop before levels larger than this.
const COVERING_CELLS: usize = 40_000;
/// Relative gap between the two rate fits that is reported as a disagreement.
const DISAGREEMENT: f64 = 0.15;

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Cache { action: CacheAction::Compact } = &cli.command {
        let dir = cli.cache_dir.as_deref().ok_or_else(|| usage("cache compact needs --cache-dir"))?;
        let (kept, dropped) = Cache::compact(dir)?;
        println!("cache compacted: {kept} records kept, {dropped} dropped");
        return Ok(());
    }
    let mut ctx = Context::new(cli)?;
    let result = match &cli.command {
        Command::Check(a) => check(&ctx, a),
        Command::Conductance(a) => conductance(&mut ctx, a),
        Command::Disparity(a) => disparity(&mut ctx, a),
        Command::SigmaScan(a) => sigma_scan(&mut ctx, a),
        Command::Dimar(a) => dimar(&mut ctx, a),
        Command::Construct(a) => construct(&mut ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Cache { .. } => unreachable!("handled above"),
    };
    if let Some(c) = &ctx.cache {
        if c.hits() > 0 {
            eprintln!("cache: {} results reused", c.hits());
        }
    }
    result
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("p = {p} must lie in (1, inf)")))
    }
}

/// Comma separated dotted words of one level.
fn parse_set(ctx: &Context, text: &str) -> Result<CellSet> {
    let words = text
        .split(',')
        .map(|t| t.trim().parse::<CellWord>())
        .collect::<pcarpet_core::Result<Vec<_>>>()?;
    if words.is_empty() {
        return Err(usage("empty cell list"));
    }
    Ok(ctx.partition.set_of(&words)?)
}

/// Shortest decimal that reads back to the same float.
fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Serialize)]
struct CoveringRow {
    level: usize,
    patches: usize,
    n_t: usize,
    n_e: usize,
}

#[derive(Serialize)]
struct CheckReport {
    degree: DegreeCertificate,
    m_star: Option<MStarCertificate>,
    m_star_error: Option<String>,
    inclusion: Option<InclusionReport>,
    covering: Vec<CoveringRow>,
    covering_error: Option<String>,
    passed: bool,
}

fn check(ctx: &Context, a: &CheckArgs) -> Result<()> {
    let depth = ctx.depth.unwrap_or(4);
    if depth < 2 {
        return Err(usage("check needs --depth >= 2"));
    }
    let part = &ctx.partition;
    let degree = part.certify_degree_bound(depth)?;
    let (m_star, m_star_error) = match part.certify_m_star(depth, a.m_hi) {
        Ok(c) => (Some(c), None),
        Err(e @ pcarpet_core::Error::NoValidMStar { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let inclusion = match &m_star {
        Some(c) => Some(part.verify_deep_projection_inclusion(c.m_star, a.k_max, depth)?),
        None => None,
    };
    let mut covering = Vec::new();
    let mut covering_error = None;
    for n in 1..=depth {
        let size = part.level_size(n)?;
        if size > COVERING_CELLS {
            break;
        }
        match CoveringSystem::Stars.covering_of(part, &CellSet::new(n, 0..size)) {
            Ok(c) => covering.push(CoveringRow { level: n, patches: c.patches.len(), n_t: c.n_t, n_e: c.n_e }),
            Err(e) => {
                covering_error = Some(format!("level {n}: {e}"));
                break;
            }
        }
    }
    let passed = m_star.is_some()
        && inclusion.as_ref().is_some_and(|r| r.holds)
        && covering_error.is_none();

    println!("scheme {} (depth {depth})", ctx.scheme_name);
    println!("  degree bound L*        {:>6}   per level {:?}", degree.l_star, degree.per_level);
    match (&m_star, &m_star_error) {
        (Some(c), _) => println!("  M*                     {:>6}", c.m_star),
        (None, Some(e)) => println!("  M*                     FAILED   {e}"),
        _ => {}
    }
    if let Some(r) = &inclusion {
        let verdict = if r.holds { "holds" } else { "VIOLATED" };
        println!("  projected inclusions   {verdict:>6}   {} cases", r.checked);
        if let Some(v) = &r.violation {
            println!("    word {} k={} offending cell {}", v.word, v.k, v.offending);
        }
    }
    for c in &covering {
        println!("  covering T_{:<2}  patches {:>6}  N_T {:>3}  N_E {:>3}", c.level, c.patches, c.n_t, c.n_e);
    }
    if let Some(e) = &covering_error {
        println!("  covering FAILED  {e}");
    }
    println!("  finite-depth verdict: checks hold up to level {depth} only");

    let report = CheckReport { degree, m_star, m_star_error, inclusion, covering, covering_error, passed };
    ctx.write_json("check.json", &ctx.stamp(depth, &report))?;
    if passed {
        Ok(())
    } else {
        Err(failure("a combinatorial check failed"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ConductanceRecord {
    scheme: String,
    p: f64,
    n: usize,
    m: usize,
    sets_hash: String,
    value: f64,
    kkt: f64,
    iters: usize,
    converged: bool,
}

fn conductance(ctx: &mut Context, a: &ConductanceArgs) -> Result<()> {
    check_p(a.p)?;
    let opts = SolverOptions::default();
    let (n, sets_hash, compute): (usize, String, Box<dyn FnOnce(&Context) -> Result<_>>) =
        match (&a.word, &a.a1, &a.a2) {
            (Some(word), _, _) => {
                let w: CellWord = word.parse()?;
                ctx.partition.index(&w)?;
                let hash = input_hash(&("ring", w.to_string(), a.mstar));
                let (m, p, mstar) = (a.m, a.p, a.mstar);
                (
                    w.level(),
                    hash,
                    Box::new(move |c: &Context| Ok(ring_conductance(&c.partition, &w, m, p, mstar, &opts)?)),
                )
            }
            (None, Some(s1), Some(s2)) => {
                let a1 = parse_set(ctx, s1)?;
                let a2 = parse_set(ctx, s2)?;
                let hash = input_hash(&("sets", a1.level(), a1.indices(), a2.level(), a2.indices()));
                let (m, p) = (a.m, a.p);
                (
                    a1.level(),
                    hash,
                    Box::new(move |c: &Context| Ok(effective_conductance(&c.partition, &a1, &a2, m, p, &opts)?)),
                )
            }
            _ => return Err(usage("conductance needs --word or both --a1 and --a2")),
        };
    let key = input_hash(&("conductance", &ctx.scheme_hash, a.p, n, a.m, &sets_hash));
    let mut cache = ctx.cache.take();
    let record = cached(&mut cache, "conductance", &key, || {
        let r = compute(ctx)?;
        Ok(ConductanceRecord {
            scheme: ctx.scheme_name.clone(),
            p: a.p,
            n,
            m: a.m,
            sets_hash: sets_hash.clone(),
            value: r.value,
            kkt: r.kkt_residual,
            iters: r.iterations,
            converged: r.converged,
        })
    });
    ctx.cache = cache;
    let record = record?;
    println!("{}", serde_json::to_string(&record)?);
    ctx.write_json("conductance.json", &ctx.stamp(n + a.m, &record))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DisparityOutput {
    Patch(DisparityEstimate),
    Level(LevelDisparity),
}

fn covering_system(ctx: &Context, file: Option<&std::path::Path>) -> Result<(CoveringSystem, String)> {
    match file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading covering {}", path.display()))?;
            let system = CoveringSystem::parse(&text, ctx.partition.branching())?;
            Ok((system, input_hash(&text)))
        }
        None => Ok((CoveringSystem::Stars, "stars".into())),
    }
}

fn disparity(ctx: &mut Context, a: &DisparityArgs) -> Result<()> {
    check_p(a.p)?;
    if a.m < 1 {
        return Err(usage("disparity needs --m >= 1"));
    }
    if a.restarts < 1 {
        return Err(usage("--restarts must be at least 1"));
    }
    let opts = DisparityOptions { restarts: a.restarts, seed: ctx.seed, ..DisparityOptions::default() };
    let mut cache = ctx.cache.take();
    let out = match (&a.set, a.level) {
        (Some(s), _) => {
            let set = parse_set(ctx, s)?;
            let key = input_hash(&("disparity-patch", &ctx.scheme_hash, a.p, a.m, set.level(), set.indices(), &opts));
            let est: Result<DisparityEstimate> = cached(&mut cache, "disparity", &key, || {
                Ok(sigma_pm(&ctx.partition, &ctx.measure, &set, a.m, a.p, &opts)?)
            });
            let est = est?;
            println!(
                "sigma_(p={},m={})(A) >= {}  (|A| = {}, level {}, {} restarts, seed {})",
                a.p,
                a.m,
                num(est.value),
                set.len(),
                set.level(),
                est.restarts,
                est.seed
            );
            (set.level(), DisparityOutput::Patch(est))
        }
        (None, Some(n)) => {
            let (system, system_hash) = covering_system(ctx, a.covering.as_deref())?;
            let key = input_hash(&("disparity-level", &ctx.scheme_hash, a.p, a.m, n, &system_hash, &opts));
            let lev: Result<LevelDisparity> = cached(&mut cache, "disparity", &key, || {
                Ok(sigma_pmn(&ctx.partition, &ctx.measure, &system, a.m, n, a.p, &opts)?)
            });
            let lev = lev?;
            let words: Vec<String> =
                lev.argmax.words(ctx.partition.branching()).iter().map(|w| w.to_string()).collect();
            println!(
                "sigma_(p={},m={},n={}) >= {}  ({} patches, {} shapes, argmax {{{}}})",
                a.p,
                a.m,
                n,
                num(lev.value),
                lev.patches,
                lev.distinct_shapes,
                words.join(", ")
            );
            (n, DisparityOutput::Level(lev))
        }
        (None, None) => {
            ctx.cache = cache;
            return Err(usage("disparity needs --set or --level"));
        }
    };
    ctx.cache = cache;
    ctx.write_json("disparity.json", &ctx.stamp(out.0 + a.m, &out.1))?;
    Ok(())
}

#[derive(Serialize)]
struct ScanEntry {
    p: f64,
    conductance: Option<ScalingFit>,
    disparity: Option<ScalingFit>,
    /// `|σ_c - σ_d| / max(σ_c, σ_d)`.
    disagreement: Option<f64>,
    disagreement_flagged: bool,
    homogeneity: Option<HomogeneityReport>,
    errors: Vec<String>,
}

#[derive(Serialize)]
struct ScanReport {
    ring_level: usize,
    ring_samples: Vec<CellWord>,
    disparity_level: usize,
    restarts: usize,
    m_star: usize,
    entries: Vec<ScanEntry>,
}

fn sigma_scan(ctx: &mut Context, a: &ScanArgs) -> Result<()> {
    for &p in &a.p {
        check_p(p)?;
    }
    if a.m_min > a.m_max {
        return Err(usage(format!("empty m range {}..={}", a.m_min, a.m_max)));
    }
    let want_c = a.source != ScanSource::Disparity;
    let want_d = a.source != ScanSource::Conductance;
    let points = a.m_max - a.m_min + 1;
    if want_c && points < 3 {
        return Err(usage("a conductance fit needs at least 3 values of m"));
    }
    if want_d && (points < 2 || a.m_min < 1) {
        return Err(usage("a disparity fit needs at least 2 values of m, all >= 1"));
    }
    let samples = default_ring_samples(&ctx.partition, a.mstar)?;
    let ring_level = samples[0].level();
    let n = a.n.unwrap_or(ring_level);
    if n < 1 {
        return Err(usage("--n must be at least 1"));
    }
    let solver = SolverOptions::default();
    let dopts = DisparityOptions { restarts: a.restarts, seed: ctx.seed, ..DisparityOptions::default() };
    let mut cache = ctx.cache.take();
    let mut entries = Vec::new();
    let mut first_error: Option<anyhow::Error> = None;
    let mut rows = Vec::new();

    // a scan point at a time, so an interrupted scan keeps what it computed
    let ring_point = |cache: &mut Option<Cache>, m: usize, p: f64| -> Result<f64> {
        let key = input_hash(&("ring-max", &ctx.scheme_hash, p, m, a.mstar, ring_level));
        let (v, _w): (f64, CellWord) = cached(cache, "sigma-scan", &key, || {
            Ok(max_ring_conductance(&ctx.partition, &samples, m, p, a.mstar, &solver)?)
        })?;
        Ok(v)
    };
    let disparity_point = |cache: &mut Option<Cache>, m: usize, level: usize, p: f64| -> Result<f64> {
        let key = input_hash(&("disparity-level", &ctx.scheme_hash, p, m, level, "stars", &dopts));
        let lev: LevelDisparity = cached(cache, "sigma-scan", &key, || {
            Ok(sigma_pmn(&ctx.partition, &ctx.measure, &CoveringSystem::Stars, m, level, p, &dopts)?)
        })?;
        Ok(lev.value)
    };

    for &p in &a.p {
        let mut entry = ScanEntry {
            p,
            conductance: None,
            disparity: None,
            disagreement: None,
            disagreement_flagged: false,
            homogeneity: None,
            errors: Vec::new(),
        };
        let mut record = |entry: &mut ScanEntry, e: anyhow::Error| {
            entry.errors.push(format!("{e:#}"));
            eprintln!("p={p}: {e:#}");
            if first_error.is_none() {
                first_error = Some(e);
            }
        };
        if want_c {
            let pts: Result<Vec<(usize, f64)>> =
                (a.m_min..=a.m_max).map(|m| Ok((m, ring_point(&mut cache, m, p)?))).collect();
            match pts.and_then(|pts| Ok(ScalingFit::new(p, FitSource::Conductance, pts)?)) {
                Ok(fit) => entry.conductance = Some(fit),
                Err(e) => record(&mut entry, e),
            }
        }
        if want_d {
            let pts: Result<Vec<(usize, f64)>> =
                (a.m_min..=a.m_max).map(|m| Ok((m, disparity_point(&mut cache, m, n, p)?))).collect();
            match pts.and_then(|pts| Ok(ScalingFit::new(p, FitSource::Disparity, pts)?)) {
                Ok(fit) => entry.disparity = Some(fit),
                Err(e) => record(&mut entry, e),
            }
        }
        if let (Some(c), Some(d)) = (&entry.conductance, &entry.disparity) {
            let gap = (c.sigma_hat - d.sigma_hat).abs() / c.sigma_hat.max(d.sigma_hat);
            entry.disagreement = Some(gap);
            entry.disagreement_flagged = gap > DISAGREEMENT;
            let homogeneity: Result<Vec<HomogeneityEntry>> = (a.m_min..=a.m_max)
                .map(|m| {
                    let mut sigma_pm = 0.0f64;
                    for level in 1..=n {
                        sigma_pm = sigma_pm.max(disparity_point(&mut cache, m, level, p)?);
                    }
                    let ring = ring_point(&mut cache, m, p)?;
                    Ok(HomogeneityEntry { m, sigma_pm, ring, product: sigma_pm * ring })
                })
                .collect();
            match homogeneity {
                Ok(list) => entry.homogeneity = Some(HomogeneityReport::from_entries(p, list, n, ring_level)),
                Err(e) => record(&mut entry, e),
            }
        }
        for fit in [&entry.conductance, &entry.disparity].into_iter().flatten() {
            for &(m, v) in &fit.samples {
                rows.push(vec![
                    ctx.scheme_name.clone(),
                    num(p),
                    m.to_string(),
                    fit.source.to_string(),
                    num(v),
                    num(fit.sigma_hat),
                    num(fit.residual),
                ]);
            }
        }
        print_scan_entry(&entry);
        entries.push(entry);
    }
    ctx.cache = cache;

    let depth = ring_level.max(n) + a.m_max;
    ctx.write_csv(
        "sigma_scan.csv",
        &["scheme", "p", "m", "source", "value", "sigma_hat", "residual"],
        &rows,
        depth,
    )?;
    let report = ScanReport {
        ring_level,
        ring_samples: samples,
        disparity_level: n,
        restarts: a.restarts,
        m_star: a.mstar,
        entries,
    };
    ctx.write_json("sigma_scan.json", &ctx.stamp(depth, &report))?;
    match first_error {
        Some(e) => Err(e.context("some scan points failed; the remaining points were written")),
        None => Ok(()),
    }
}

fn print_scan_entry(e: &ScanEntry) {
    let describe = |fit: &Option<ScalingFit>| match fit {
        Some(f) => format!("{:.6} ({:?}, residual {:.2e})", f.sigma_hat, f.method, f.residual),
        None => "-".into(),
    };
    println!("p = {}", e.p);
    println!("  conductance  sigma_hat {}", describe(&e.conductance));
    println!("  disparity    sigma_hat {}", describe(&e.disparity));
    if let Some(gap) = e.disagreement {
        let flag = if e.disagreement_flagged { "  DISAGREE" } else { "" };
        println!("  relative gap {:.1}%{flag}", 100.0 * gap);
    }
    if let Some(h) = &e.homogeneity {
        let verdict = if h.bounded_looking { "looks bounded" } else { "still growing" };
        println!("  homogeneity  max/min {:.3}, {verdict}", h.max_over_min);
    }
}

fn dimar(ctx: &mut Context, a: &DimarArgs) -> Result<()> {
    if !(a.tol_p > 0.0) {
        return Err(usage(format!("--tol-p = {} must be positive", a.tol_p)));
    }
    check_p(a.p_lo)?;
    check_p(a.p_hi)?;
    if a.m_min > a.m_max || a.m_max - a.m_min < 2 {
        return Err(usage("the conductance fit needs at least 3 values of m"));
    }
    let samples = default_ring_samples(&ctx.partition, a.mstar)?;
    let solver = SolverOptions::default();
    let key = input_hash(&("dimar", &ctx.scheme_hash, a.p_lo, a.p_hi, a.tol_p, a.m_min, a.m_max, a.mstar));
    let mut cache = ctx.cache.take();
    let est = cached(&mut cache, "dimar", &key, || {
        Ok(estimate_dim_ar(&ctx.partition, a.p_lo, a.p_hi, a.tol_p, a.m_min..=a.m_max, &samples, a.mstar, &solver)?)
    });
    ctx.cache = cache;
    let est = est.map_err(|e| match e.downcast_ref::<pcarpet_core::Error>() {
        Some(pcarpet_core::Error::NoBracket { .. }) => e.context("crossing outside the requested p range"),
        _ => e,
    })?;
    println!(
        "p* = {:.4}  bracket [{:.4}, {:.4}]  tol {}  (finite-depth estimate: ring words at level {}, depth {})",
        est.p_star,
        est.bracket.0,
        est.bracket.1,
        est.tol_p,
        samples[0].level(),
        est.depth
    );
    if !est.monotone_on_grid {
        eprintln!("warning: sigma_hat(p) is not monotone on the sample grid; the crossing may not be unique");
    }
    ctx.write_json("dimar.json", &ctx.stamp(est.depth, &est))?;
    Ok(())
}

#[derive(Serialize)]
struct ConstructOutput<'a> {
    fit: Option<&'a ScalingFit>,
    report: &'a ConstructionReport,
}

fn construct(ctx: &mut Context, a: &ConstructArgs) -> Result<()> {
    check_p(a.p)?;
    let (sigma, source, fit) = if a.sigma == "fit" {
        if a.fit_m_min > a.fit_m_max || a.fit_m_max - a.fit_m_min < 2 {
            return Err(usage("the conductance fit needs at least 3 values of m"));
        }
        let samples = default_ring_samples(&ctx.partition, a.mstar)?;
        let key = input_hash(&("fit", &ctx.scheme_hash, a.p, a.fit_m_min, a.fit_m_max, a.mstar));
        let mut cache = ctx.cache.take();
        let fit: Result<ScalingFit> = cached(&mut cache, "construct", &key, || {
            Ok(fit_sigma_conductance(
                &ctx.partition,
                a.p,
                a.fit_m_min..=a.fit_m_max,
                &samples,
                a.mstar,
                &SolverOptions::default(),
            )?)
        });
        ctx.cache = cache;
        let fit = fit?;
        (fit.sigma_hat, SigmaSource::Fitted, Some(fit))
    } else {
        let s: f64 = a.sigma.parse().map_err(|_| usage(format!("--sigma `{}` is neither a number nor `fit`", a.sigma)))?;
        (s, SigmaSource::User, None)
    };
    let mut cfg = ConstructionConfig::new(&ctx.partition, a.p, sigma, a.kmax, a.mstar);
    cfg.sigma_source = source;
    if let Some(text) = &a.omega {
        let w: CellWord = text.parse()?;
        if w.is_root() {
            return Err(usage("--omega needs at least one symbol"));
        }
        ctx.partition.index(&w)?;
        cfg.omega = Omega::Periodic(w.symbols().to_vec());
    }
    cfg.cutoff_mode = match a.cutoff {
        CutoffArg::Min => CutoffMode::HarmonicMinimizer,
        CutoffArg::Max => CutoffMode::MaxOfCellCutoffs,
    };
    let key = input_hash(&("construct", &ctx.scheme_hash, &ctx.measure.weights(), &cfg));
    let mut cache = ctx.cache.take();
    let report: Result<ConstructionReport> = cached(&mut cache, "construct", &key, || {
        Ok(Construction::new(&ctx.partition, &ctx.measure, cfg.clone())?.run()?)
    });
    ctx.cache = cache;
    let report = report?;

    let depth = report.depth;
    ctx.write_json("construct_report.json", &ctx.stamp(depth, &ConstructOutput { fit: fit.as_ref(), report: &report }))?;
    let mut scaled = Vec::new();
    let mut plateau = Vec::new();
    let mut lp = Vec::new();
    for l in &report.levels {
        for &(m, v) in &l.projected {
            scaled.push(vec![l.n.to_string(), m.to_string(), num(v)]);
        }
        if !plateau.iter().any(|r: &Vec<String>| r[0] == l.k.to_string()) {
            plateau.push(vec![l.k.to_string(), num(l.plateau), num(l.harmonic_number)]);
        }
        lp.push(vec![l.n.to_string(), num(l.lp_norm)]);
    }
    ctx.write_csv("scaled_energy.csv", &["n", "m", "scaled_energy"], &scaled, depth)?;
    ctx.write_csv("plateau.csv", &["k", "plateau", "harmonic_number"], &plateau, depth)?;
    ctx.write_csv("lp_norm.csv", &["n", "lp_norm"], &lp, depth)?;

    print_construction(&report, fit.as_ref());
    let unconverged: Vec<String> = report
        .cutoffs
        .iter()
        .filter(|c| !c.converged)
        .map(|c| format!("(n={}, j={}, kkt {:.1e})", c.n, c.j, c.kkt))
        .collect();
    if !unconverged.is_empty() {
        eprintln!("warning: {} cutoff solves stopped at their budget: {}", unconverged.len(), unconverged.join(" "));
    }
    if report.energy_bound_holds == Some(false) || !report.lp_bound_holds {
        return Err(failure("a bound of the construction is violated"));
    }
    Ok(())
}

fn print_construction(r: &ConstructionReport, fit: Option<&ScalingFit>) {
    println!("construction on {} with p = {}, sigma = {:.6} ({:?}), M* = {}, k_max = {}", r.scheme, r.p, r.sigma, r.sigma_source, r.m_star, r.k_max);
    if let Some(f) = fit {
        println!("  fitted from ring conductances at m = {:?} ({:?})", f.samples.iter().map(|s| s.0).collect::<Vec<_>>(), f.method);
    }
    let targets: Vec<String> = r.targets.iter().map(|w| w.to_string()).collect();
    println!("  targets w_j: {}", targets.join("  "));
    println!("  {:>3} {:>2} {:>14} {:>14} {:>10} {:>12}", "n", "k", "scaled energy", "plateau", "H_k", "Lp norm");
    for l in &r.levels {
        println!(
            "  {:>3} {:>2} {:>14.6} {:>14.10} {:>10.6} {:>12.6}",
            l.n, l.k, l.scaled_energy, l.plateau, l.harmonic_number, l.lp_norm
        );
    }
    println!("  C1 = {:.6}, zeta(p) = {:.6}", r.c1, r.zeta_p);
    match r.energy_bound_holds {
        Some(h) => println!(
            "  scaled energy max {:.6} vs bound {:.6}: {}",
            r.max_scaled_energy,
            r.energy_bound,
            if h { "holds" } else { "VIOLATED" }
        ),
        None => println!("  energy bound inapplicable: it needs sigma <= 1, got {:.6}", r.sigma),
    }
    println!(
        "  Lp norm max {:.6} vs bound {:.6}: {}",
        r.max_lp_norm,
        r.lp_bound,
        if r.lp_bound_holds { "holds" } else { "VIOLATED" }
    );
    println!(
        "  observed C2 = {:.4}; N_T = {}, N_E = {}, formula factor {:.4} times the disparity constant",
        r.c2_observed, r.n_t, r.n_e, r.c2_formula_factor
    );
    for note in &r.notes {
        println!("  note: {note}");
    }
}

fn bench(ctx: &Context, a: &BenchArgs) -> Result<()> {
    for &p in &a.p {
        check_p(p)?;
    }
    let depth = ctx.depth.unwrap_or(4);
    let samples = default_ring_samples(&ctx.partition, a.mstar)?;
    let w = &samples[0];
    if depth < w.level() {
        return Err(usage(format!("--depth must be at least the ring level {}", w.level())));
    }
    let opts = SolverOptions::default();
    let mut rows = Vec::new();
    println!("ring conductance around {w}");
    println!("  {:>5} {:>3} {:>9} {:>6} {:>10} {:>10}", "p", "m", "cells", "iters", "kkt", "seconds");
    for &p in &a.p {
        for m in 0..=depth - w.level() {
            let cells = ctx.partition.level_size(w.level() + m)?;
            let t = Instant::now();
            let r = ring_conductance(&ctx.partition, w, m, p, a.mstar, &opts)?;
            let secs = t.elapsed().as_secs_f64();
            println!("  {:>5} {:>3} {:>9} {:>6} {:>10.2e} {:>10.4}", p, m, cells, r.iterations, r.kkt_residual, secs);
            rows.push(vec![num(p), m.to_string(), cells.to_string(), r.iterations.to_string(), num(r.value), format!("{secs:.6}")]);
        }
    }
    ctx.write_csv("bench.csv", &["p", "m", "cells", "iterations", "value", "seconds"], &rows, depth)?;
    Ok(())
}
