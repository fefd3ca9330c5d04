//! Smoothed-aggregation algebraic multigrid, used as a CG preconditioner for the
//! weighted Laplacians of the Newton and IRLS steps.

/// Square or rectangular sparse matrix in compressed rows.
#[derive(Clone, Debug, Default)]
pub(crate) struct Csr {
    pub ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.ptr[i]..self.ptr[i + 1];
        (&self.col[r.clone()], &self.val[r])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum();
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.rows())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).find(|(&j, _)| j as usize == i).map_or(0.0, |(_, &a)| a)
            })
            .collect()
    }

    fn transpose(&self, ncols: usize) -> Csr {
        let mut counts = vec![0usize; ncols + 1];
        for &j in &self.col {
            counts[j as usize + 1] += 1;
        }
        for k in 0..ncols {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut col = vec![0u32; self.col.len()];
        let mut val = vec![0.0; self.val.len()];
        for i in 0..self.rows() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                let slot = &mut fill[j as usize];
                col[*slot] = i as u32;
                val[*slot] = a;
                *slot += 1;
            }
        }
        Csr { ptr: counts, col, val }
    }

    /// `self * other`, where `other` has `ncols` columns.
    fn matmul(&self, other: &Csr, ncols: usize) -> Csr {
        let mut acc = vec![0.0; ncols];
        let mut mark = vec![usize::MAX; ncols];
        let mut touched: Vec<u32> = Vec::new();
        let mut out = Csr { ptr: vec![0], col: Vec::new(), val: Vec::new() };
        for i in 0..self.rows() {
            touched.clear();
            let (c, v) = self.row(i);
            for (&k, &a) in c.iter().zip(v) {
                let (c2, v2) = other.row(k as usize);
                for (&j, &b) in c2.iter().zip(v2) {
                    let j = j as usize;
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j as u32);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                out.col.push(j);
                out.val.push(acc[j as usize]);
            }
            out.ptr.push(out.col.len());
        }
        out
    }
}

struct Level {
    a: Csr,
    p: Csr,
    r: Csr,
}

pub(crate) struct Amg {
    levels: Vec<Level>,
    coarse_a: Csr,
    /// Dense lower Cholesky factor of the coarsest operator.
    chol: Vec<f64>,
    nc: usize,
}

const COARSE_SIZE: usize = 400;
/// Coarsening stops once rows carry this many entries on average.
const MAX_ROW_FILL: usize = 48;
const MAX_DENSE: usize = 1_000;
const STRENGTH: f64 = 0.08;

/// Greedy aggregation along strong couplings; returns the aggregate of every row.
fn aggregate(a: &Csr, diag: &[f64]) -> (Vec<u32>, usize) {
    let n = a.rows();
    const NONE: u32 = u32::MAX;
    let strong = |i: usize| {
        let (c, v) = a.row(i);
        c.iter().zip(v).filter_map(move |(&j, &x)| {
            let j = j as usize;
            (j != i && x.abs() >= STRENGTH * (diag[i] * diag[j]).abs().sqrt()).then_some((j, x.abs()))
        })
    };
    let mut agg = vec![NONE; n];
    let mut count = 0u32;
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        if strong(i).all(|(j, _)| agg[j] == NONE) {
            agg[i] = count;
            for (j, _) in strong(i) {
                agg[j] = count;
            }
            count += 1;
        }
    }
    let snapshot = agg.clone();
    for i in 0..n {
        if agg[i] == NONE {
            let best = strong(i)
                .filter(|&(j, _)| snapshot[j] != NONE)
                .max_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((j, _)) = best {
                agg[i] = snapshot[j];
            }
        }
    }
    for i in 0..n {
        if agg[i] == NONE {
            agg[i] = count;
            for (j, _) in strong(i) {
                if agg[j] == NONE {
                    agg[j] = count;
                }
            }
            count += 1;
        }
    }
    (agg, count as usize)
}

/// Largest eigenvalue of `D^{-1} A` by a few power steps.
fn spectral_radius(a: &Csr, dinv: &[f64]) -> f64 {
    let n = a.rows();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut y = vec![0.0; n];
    let mut lambda = 1.0;
    for _ in 0..12 {
        a.matvec(&x, &mut y);
        for (yi, d) in y.iter_mut().zip(dinv) {
            *yi *= d;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        lambda = norm / xn;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    lambda
}

fn cholesky(a: &Csr) -> Vec<f64> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let (c, v) = a.row(i);
        for (&j, &x) in c.iter().zip(v) {
            l[i * n + j as usize] = x;
        }
    }
    let scale = (0..n).map(|i| l[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = l[j * n + j] - (0..j).map(|k| l[j * n + k].powi(2)).sum::<f64>();
        if d <= 1e-14 * scale {
            d = 1e-14 * scale;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let s = l[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / d;
        }
        for i in 0..j {
            l[i * n + j] = 0.0;
        }
    }
    l
}

impl Amg {
    pub fn new(a: Csr) -> Self {
        let mut levels = Vec::new();
        let mut a = a;
        while a.rows() > COARSE_SIZE && levels.len() < 25 && a.col.len() <= MAX_ROW_FILL * a.rows() {
            let n = a.rows();
            let diag = a.diagonal();
            let (agg, nagg) = aggregate(&a, &diag);
            if nagg * 10 > n * 9 {
                break;
            }
            let dinv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
            let omega = 4.0 / 3.0 / spectral_radius(&a, &dinv);
            // P = (I - ω D^{-1} A) P0 with piecewise constant P0
            let mut p = Csr { ptr: vec![0], col: Vec::new(), val: Vec::new() };
            let mut acc: std::collections::BTreeMap<u32, f64> = Default::default();
            for i in 0..n {
                acc.clear();
                *acc.entry(agg[i]).or_default() += 1.0;
                let (c, v) = a.row(i);
                for (&j, &x) in c.iter().zip(v) {
                    *acc.entry(agg[j as usize]).or_default() -= omega * dinv[i] * x;
                }
                for (&k, &x) in &acc {
                    if x != 0.0 {
                        p.col.push(k);
                        p.val.push(x);
                    }
                }
                p.ptr.push(p.col.len());
            }
            let r = p.transpose(nagg);
            let ap = a.matmul(&p, nagg);
            let coarse = r.matmul(&ap, nagg);
            levels.push(Level { a, p, r });
            a = coarse;
        }
        let nc = a.rows();
        let chol = if nc <= MAX_DENSE { cholesky(&a) } else { Vec::new() };
        Self { levels, coarse_a: a, chol, nc }
    }

    /// One symmetric V-cycle for `A z = r` from `z = 0`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }

    fn cycle(&self, k: usize, b: &[f64], x: &mut [f64]) {
        if k == self.levels.len() {
            self.solve_coarse(b, x);
            return;
        }
        let lvl = &self.levels[k];
        x.iter_mut().for_each(|v| *v = 0.0);
        gauss_seidel(&lvl.a, b, x, false);
        let n = b.len();
        let mut res = vec![0.0; n];
        lvl.a.matvec(x, &mut res);
        for (ri, bi) in res.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let nc = lvl.r.rows();
        let mut bc = vec![0.0; nc];
        lvl.r.matvec(&res, &mut bc);
        let mut xc = vec![0.0; nc];
        self.cycle(k + 1, &bc, &mut xc);
        let mut corr = vec![0.0; n];
        lvl.p.matvec(&xc, &mut corr);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        gauss_seidel(&lvl.a, b, x, true);
    }

    fn solve_coarse(&self, b: &[f64], x: &mut [f64]) {
        let n = self.nc;
        if self.chol.is_empty() {
            x.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..20 {
                gauss_seidel(&self.coarse_a, b, x, false);
                gauss_seidel(&self.coarse_a, b, x, true);
            }
            return;
        }
        let l = &self.chol;
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
            x[i] = (b[i] - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
            x[i] = (x[i] - s) / l[i * n + i];
        }
    }
}

fn gauss_seidel(a: &Csr, b: &[f64], x: &mut [f64], backward: bool) {
    let n = a.rows();
    let mut sweep = |i: usize| {
        let (c, v) = a.row(i);
        let mut s = b[i];
        let mut d = 0.0;
        for (&j, &x_ij) in c.iter().zip(v) {
            if j as usize == i {
                d = x_ij;
            } else {
                s -= x_ij * x[j as usize];
            }
        }
        if d > 0.0 {
            x[i] = s / d;
        }
    };
    if backward {
        (0..n).rev().for_each(&mut sweep);
    } else {
        (0..n).for_each(&mut sweep);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dirichlet Laplacian of an `s x s` grid.
    fn grid(s: usize) -> Csr {
        let mut m = Csr { ptr: vec![0], col: Vec::new(), val: Vec::new() };
        for y in 0..s {
            for x in 0..s {
                let mut row = vec![((y * s + x) as u32, 4.0)];
                if x > 0 {
                    row.push(((y * s + x - 1) as u32, -1.0));
                }
                if x + 1 < s {
                    row.push(((y * s + x + 1) as u32, -1.0));
                }
                if y > 0 {
                    row.push((((y - 1) * s + x) as u32, -1.0));
                }
                if y + 1 < s {
                    row.push((((y + 1) * s + x) as u32, -1.0));
                }
                row.sort_by_key(|e| e.0);
                for (c, v) in row {
                    m.col.push(c);
                    m.val.push(v);
                }
                m.ptr.push(m.col.len());
            }
        }
        m
    }

    #[test]
    fn v_cycle_contracts_the_error() {
        let a = grid(64);
        let amg = Amg::new(a.clone());
        assert!(amg.levels.len() >= 2);
        let n = a.rows();
        let b: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let norm0 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..10 {
            let mut z = vec![0.0; n];
            amg.apply(&r, &mut z);
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += zi;
            }
            a.matvec(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(&b) {
                *ri = bi - *ri;
            }
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-4 * norm0, "{norm} vs {norm0}");
    }

    #[test]
    fn small_systems_solved_directly() {
        let a = grid(5);
        let amg = Amg::new(a.clone());
        let b = vec![1.0; 25];
        let mut x = vec![0.0; 25];
        amg.apply(&b, &mut x);
        let mut ax = vec![0.0; 25];
        a.matvec(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-10));
    }
}
