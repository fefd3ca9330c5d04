//! Exhaustive finite-depth checks of the combinatorial assumptions.
//!
//! A passing check says nothing about levels deeper than the reported depth.

use serde::{Deserialize, Serialize};

use super::{CellSet, CellWord, Partition};
use crate::error::{Error, Result};

/// Maximum neighbour count observed over levels `1..=depth`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeCertificate {
    pub l_star: usize,
    pub per_level: Vec<usize>,
    pub depth: usize,
}

/// Smallest `M` with `pi(Gamma_{M+1}(w)) ⊆ Gamma_M(pi(w))` at levels `2..=depth`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MStarCertificate {
    pub m_star: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionViolation {
    pub word: CellWord,
    pub k: usize,
    /// A cell of the left-hand side missing from the right-hand side.
    pub offending: CellWord,
}

/// Outcome of an exhaustive inclusion check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub holds: bool,
    pub checked: usize,
    pub depth: usize,
    pub violation: Option<InclusionViolation>,
}

impl Partition {
    pub fn certify_degree_bound(&self, n_max: usize) -> Result<DegreeCertificate> {
        if n_max < 1 {
            return Err(Error::InvalidArgument("degree certificate needs depth >= 1".into()));
        }
        let mut per_level = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let size = self.level_size(n)?;
            let mut best = 0;
            for idx in 0..size {
                let mut d = 0;
                self.scheme().for_each_neighbor(n, idx, |_| d += 1);
                best = best.max(d);
            }
            per_level.push(best);
        }
        Ok(DegreeCertificate {
            l_star: per_level.iter().copied().max().unwrap_or(0),
            per_level,
            depth: n_max,
        })
    }

    /// `pi^k(Gamma_{radius_lhs}(w)) ⊆ Gamma_{radius_rhs}(pi^k(w))` for every `w` at
    /// levels `n_min..=n_max`.
    fn check_projected_gamma(
        &self,
        k: usize,
        radius_lhs: usize,
        radius_rhs: usize,
        n_min: usize,
        n_max: usize,
    ) -> Result<InclusionReport> {
        let mut checked = 0;
        for n in n_min..=n_max {
            if n < k {
                continue;
            }
            let block = self.branching().pow(k as u32);
            for idx in 0..self.level_size(n)? {
                let lhs = self.project(&self.gamma_of_set(radius_lhs, &CellSet::new(n, [idx])), k);
                let rhs = self.gamma_of_set(radius_rhs, &CellSet::new(n - k, [idx / block]));
                checked += 1;
                if let Some(&bad) = lhs.indices().iter().find(|&&c| !rhs.contains(c)) {
                    return Ok(InclusionReport {
                        holds: false,
                        checked,
                        depth: n_max,
                        violation: Some(InclusionViolation {
                            word: self.word(n, idx),
                            k,
                            offending: self.word(n - k, bad),
                        }),
                    });
                }
            }
        }
        Ok(InclusionReport { holds: true, checked, depth: n_max, violation: None })
    }

    /// Smallest `M` in `1..=m_hi` satisfying the one-step projection inclusion.
    pub fn certify_m_star(&self, n_max: usize, m_hi: usize) -> Result<MStarCertificate> {
        if n_max < 2 {
            return Err(Error::InvalidArgument("M* certificate needs depth >= 2".into()));
        }
        for m in 1..=m_hi {
            if self.check_projected_gamma(1, m + 1, m, 2, n_max)?.holds {
                return Ok(MStarCertificate { m_star: m, depth: n_max });
            }
        }
        Err(Error::NoValidMStar { m_hi, depth: n_max })
    }

    /// `pi(Gamma_i(w)) ⊆ Gamma_i(pi(w))` for all `i <= i_max`.
    pub fn verify_projection_inclusion(&self, i_max: usize, n_max: usize) -> Result<InclusionReport> {
        let mut total = 0;
        for i in 0..=i_max {
            let r = self.check_projected_gamma(1, i, i, 1, n_max)?;
            total += r.checked;
            if !r.holds {
                return Ok(InclusionReport { checked: total, ..r });
            }
        }
        Ok(InclusionReport { holds: true, checked: total, depth: n_max, violation: None })
    }

    /// `pi^k(Gamma_{M*+k}(w)) ⊆ Gamma_{M*}(pi^k(w))` for `k <= k_max` and every
    /// `w` at levels `k+1..=n_max`.
    pub fn verify_deep_projection_inclusion(&self, m_star: usize, k_max: usize, n_max: usize) -> Result<InclusionReport> {
        let mut total = 0;
        for k in 0..=k_max {
            let r = self.check_projected_gamma(k, m_star + k, m_star, k + 1, n_max)?;
            total += r.checked;
            if !r.holds {
                return Ok(InclusionReport { checked: total, ..r });
            }
        }
        Ok(InclusionReport { holds: true, checked: total, depth: n_max, violation: None })
    }
}
