//! Lattice determination from a complete, error-free set of representation
//! values.
//!
//! [`enumerate_candidates_exact`] is the plain recursion: diagonal entries are
//! drawn from `Λ`, each off-diagonal entry from `q = s_mm + s_nn + 2 s_mn`,
//! and the search window for the next diagonal entry ends at the first value
//! the current block fails to represent. [`enumerate_lattices_exact`] keeps
//! the candidates whose own representation set below the cutoff is exactly
//! `Λ`, and marks equivalent pairs.

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::latmath::{enumerate_reps, enumerate_reps_exact, isometries, LatError, RatMat, SymMat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error("the value list is empty")]
    Empty,
    #[error("rank must be between 1 and 4, got {0}")]
    Rank(usize),
    #[error("values must be positive, distinct and below the cutoff")]
    BadValues,
    #[error("search exceeded {0} steps")]
    Watchdog(u64),
    #[error("ranks must satisfy low < high")]
    RankOrder,
    #[error(transparent)]
    Lattice(#[from] LatError),
}

/// `Λ ∩ (0, cutoff]`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLambda {
    pub values: Vec<Rational64>,
    pub cutoff: Rational64,
}

impl ExactLambda {
    pub fn new(mut values: Vec<Rational64>, cutoff: Rational64) -> Result<Self, ExactError> {
        values.sort();
        if values.is_empty() {
            return Err(ExactError::Empty);
        }
        let distinct = values.windows(2).all(|w| w[0] < w[1]);
        if !distinct || !values[0].is_positive() || *values.last().unwrap() > cutoff {
            return Err(ExactError::BadValues);
        }
        Ok(ExactLambda { values, cutoff })
    }

    /// Representation values of `s` up to `cutoff`.
    pub fn of_form(s: &RatMat, cutoff: Rational64) -> Result<Self, ExactError> {
        let v = enumerate_reps_exact(s, cutoff)?;
        ExactLambda::new(v, cutoff)
    }

    /// From integer values with cutoff at the largest one.
    pub fn from_ints(v: &[i64]) -> Result<Self, ExactError> {
        let vals: Vec<Rational64> = v.iter().map(|&x| Rational64::from_integer(x)).collect();
        let c = vals.iter().copied().max().ok_or(ExactError::Empty)?;
        ExactLambda::new(vals, c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub gram: RatMat,
    /// Position of an earlier solution found to be equivalent.
    pub equivalent_to: Option<usize>,
}

/// Step budget for the recursion.
pub const DEFAULT_WATCHDOG: u64 = 50_000_000;

struct Search<'a> {
    n_target: usize,
    q: &'a [Rational64],
    ans: Vec<RatMat>,
    steps: u64,
    budget: u64,
}

fn half() -> Rational64 {
    Rational64::new(1, 2)
}

impl Search<'_> {
    /// Largest 1-based `i ≤ M` such that `q₁ … q_{i−1}` are all values of
    /// the leading `n × n` block.
    fn rep_prefix(&self, s: &RatMat, n: usize) -> Result<usize, ExactError> {
        let m = self.q.len();
        let reps = enumerate_reps_exact(&s.leading(n), self.q[m - 1])?;
        let missing = self.q.iter().position(|v| reps.binary_search(v).is_err());
        Ok(missing.map_or(m, |p| (p + 1).min(m)))
    }

    /// Largest 1-based `i` with `q_i ≤ bound`, or 0.
    fn upto(&self, bound: Rational64) -> usize {
        self.q.partition_point(|v| *v <= bound)
    }

    // m, n are 1-based as in the recursion; i_lo..=i_hi are 1-based indices
    fn run(&mut self, m: usize, n: usize, s: &mut RatMat, i_lo: usize, i_hi: usize) -> Result<(), ExactError> {
        for l in i_lo..=i_hi {
            self.steps += 1;
            if self.steps > self.budget {
                return Err(ExactError::Watchdog(self.budget));
            }
            let ql = self.q[l - 1];
            if m == n {
                s.set(n - 1, n - 1, ql);
            } else {
                let v = (ql - s.a[m - 1][m - 1] - s.a[n - 1][n - 1]) * half();
                s.set(m - 1, n - 1, v);
            }
            if m == 1 {
                if s.minor(n).is_positive() {
                    if n >= self.n_target {
                        self.ans.push(s.leading(n));
                    } else {
                        let m2 = self.rep_prefix(s, n)?;
                        let lo = if m == n { l } else { i_lo };
                        self.run(n + 1, n + 1, s, lo, m2)?;
                    }
                }
            } else if m == n {
                let m2 = self.upto(s.a[n - 2][n - 2] + s.a[n - 1][n - 1]);
                self.run(m - 1, n, s, l, m2)?;
            } else {
                let m2 = self.upto(s.a[m - 2][m - 2] * 2 + s.a[n - 1][n - 1]);
                self.run(m - 1, n, s, i_lo, m2)?;
            }
        }
        // leave the entries as the caller set them
        if m == n {
            s.set(n - 1, n - 1, Rational64::zero());
        } else {
            s.set(m - 1, n - 1, Rational64::zero());
        }
        Ok(())
    }
}

/// Every `n × n` matrix produced by the recursion started at
/// `m = n = I = J = 1`, in generation order.
pub fn enumerate_candidates_exact(n: usize, lambda: &ExactLambda, budget: u64) -> Result<Vec<RatMat>, ExactError> {
    if !(1..=4).contains(&n) {
        return Err(ExactError::Rank(n));
    }
    if lambda.values.is_empty() {
        return Err(ExactError::Empty);
    }
    let mut search = Search { n_target: n, q: &lambda.values, ans: Vec::new(), steps: 0, budget };
    let mut s = RatMat::zero(n);
    search.run(1, 1, &mut s, 1, 1)?;
    Ok(search.ans)
}

/// Candidates whose values up to the cutoff are exactly `Λ`. Equivalent
/// solutions (bounded unimodular search, entries ≤ 2) are flagged.
pub fn enumerate_lattices_exact(n: usize, lambda: &ExactLambda) -> Result<Vec<ExactSolution>, ExactError> {
    let raw = enumerate_candidates_exact(n, lambda, DEFAULT_WATCHDOG)?;
    let mut out: Vec<ExactSolution> = Vec::new();
    for g in raw {
        if enumerate_reps_exact(&g, lambda.cutoff)? != lambda.values {
            continue;
        }
        if out.iter().any(|o| o.gram == g) {
            continue;
        }
        let f = g.to_symmat();
        let equivalent_to = out.iter().position(|o| !isometries(&o.gram.to_symmat(), &f, 2, 1e-12, 1).is_empty());
        out.push(ExactSolution { gram: g, equivalent_to });
    }
    Ok(out)
}

/// Whether some value of `high` up to `c` is missing from the values of
/// `low`.
pub fn check_no_sublattice_containment(high: &SymMat, low: &SymMat, c: f64) -> Result<bool, ExactError> {
    if low.n() >= high.n() {
        return Err(ExactError::RankOrder);
    }
    let hv = enumerate_reps(high, c)?;
    let lv = enumerate_reps(low, c * (1.0 + 1e-9))?;
    let tol = 1e-9 * c.max(1.0);
    Ok(hv.iter().any(|(v, _)| !lv.iter().any(|(w, _)| (v - w).abs() <= tol)))
}
