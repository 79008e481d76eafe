//! Peak lists and formal sums of observed q-values.
//!
//! A [`QSum`] is a sparse linear combination `Σ cᵢ qᵢ` of observed peaks.
//! Coefficients are exact multiples of 1/12, stored as integer twelfths, so
//! cancellation is exact. Values and errors are evaluated against a
//! [`PeakList`] in floating point.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Rational64;
use num_traits::Signed;
use smallvec::SmallVec;
use thiserror::Error;

/// Every coefficient is an integer multiple of `1 / DENOM`.
pub const DENOM: i64 = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QError {
    #[error("peak index {0} is out of range")]
    UnknownIndex(usize),
    #[error("coefficient {0} is not a multiple of 1/12")]
    Denominator(Rational64),
    #[error("invalid peak ({0}, {1}): positions must be positive and errors non-negative")]
    BadPeak(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedPeak {
    /// 1-based position in the sorted list.
    pub index: usize,
    pub q_val: f64,
    pub q_err: f64,
}

/// Observed peaks sorted ascending by position, indexed from 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeakList {
    peaks: Vec<ObservedPeak>,
}

impl PeakList {
    /// Builds a list from `(q, err)` pairs in any order.
    pub fn new<I: IntoIterator<Item = (f64, f64)>>(pairs: I) -> Result<Self, QError> {
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for (q, e) in pairs {
            if !(q.is_finite() && q > 0.0 && e.is_finite() && e >= 0.0) {
                return Err(QError::BadPeak(q, e));
            }
            raw.push((q, e));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let peaks = raw
            .into_iter()
            .enumerate()
            .map(|(i, (q_val, q_err))| ObservedPeak { index: i + 1, q_val, q_err })
            .collect();
        Ok(PeakList { peaks })
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&ObservedPeak> {
        index.checked_sub(1).and_then(|i| self.peaks.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObservedPeak> {
        self.peaks.iter()
    }

    pub fn values(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.q_val).collect()
    }

    /// Value of peak `index`; panics on a bad index.
    #[inline]
    pub fn q(&self, index: usize) -> f64 {
        self.peaks[index - 1].q_val
    }

    #[inline]
    pub fn e(&self, index: usize) -> f64 {
        self.peaks[index - 1].q_err
    }

    /// The first `n` peaks.
    pub fn truncated(&self, n: usize) -> PeakList {
        PeakList { peaks: self.peaks.iter().take(n).copied().collect() }
    }

    /// Same positions with every value and error multiplied by `k`.
    pub fn scaled(&self, k: f64) -> PeakList {
        PeakList {
            peaks: self
                .peaks
                .iter()
                .map(|p| ObservedPeak { index: p.index, q_val: p.q_val * k, q_err: p.q_err * k })
                .collect(),
        }
    }
}

/// Formal sum `Σ (nᵢ/12) qᵢ`. Terms are kept sorted by peak index with no
/// zero coefficients, so structural equality is formal equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QSum {
    terms: SmallVec<[(u32, i32); 4]>,
}

fn to_twelfths(r: Rational64) -> Result<i64, QError> {
    let num = r.numer() * DENOM;
    if num % r.denom() != 0 {
        return Err(QError::Denominator(r));
    }
    Ok(num / r.denom())
}

impl QSum {
    pub fn zero() -> QSum {
        QSum::default()
    }

    /// `q_i` without checking the index against a peak list.
    pub fn unit(index: usize) -> QSum {
        let mut terms = SmallVec::new();
        terms.push((index as u32, DENOM as i32));
        QSum { terms }
    }

    pub fn atom(peaks: &PeakList, index: usize) -> Result<QSum, QError> {
        if peaks.get(index).is_none() {
            return Err(QError::UnknownIndex(index));
        }
        Ok(QSum::unit(index))
    }

    /// `α·a + β·b`.
    pub fn combine(a: &QSum, b: &QSum, alpha: Rational64, beta: Rational64) -> Result<QSum, QError> {
        let sa = a.scale(alpha)?;
        let sb = b.scale(beta)?;
        Ok(sa.add(&sb))
    }

    pub fn scale(&self, alpha: Rational64) -> Result<QSum, QError> {
        let mut terms = SmallVec::new();
        for &(i, n) in &self.terms {
            let c = alpha * Rational64::new(n as i64, DENOM);
            let t = to_twelfths(c)?;
            if t != 0 {
                terms.push((i, t as i32));
            }
        }
        Ok(QSum { terms })
    }

    fn merge(&self, other: &QSum, sign: i32) -> QSum {
        let mut terms: SmallVec<[(u32, i32); 4]> = SmallVec::new();
        let (mut x, mut y) = (0, 0);
        let (a, b) = (&self.terms, &other.terms);
        while x < a.len() || y < b.len() {
            let take = match (a.get(x), b.get(y)) {
                (Some(p), Some(q)) => p.0.cmp(&q.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match take {
                Ordering::Less => {
                    terms.push(a[x]);
                    x += 1;
                }
                Ordering::Greater => {
                    terms.push((b[y].0, sign * b[y].1));
                    y += 1;
                }
                Ordering::Equal => {
                    let n = a[x].1 + sign * b[y].1;
                    if n != 0 {
                        terms.push((a[x].0, n));
                    }
                    x += 1;
                    y += 1;
                }
            }
        }
        QSum { terms }
    }

    pub fn add(&self, other: &QSum) -> QSum {
        self.merge(other, 1)
    }

    pub fn sub(&self, other: &QSum) -> QSum {
        self.merge(other, -1)
    }

    pub fn times(&self, k: i32) -> QSum {
        if k == 0 {
            return QSum::zero();
        }
        QSum { terms: self.terms.iter().map(|&(i, n)| (i, n * k)).collect() }
    }

    /// Half of the sum. Fails when a coefficient would leave the 1/12 grid.
    pub fn half(&self) -> Result<QSum, QError> {
        self.scale(Rational64::new(1, 2))
    }

    pub fn val(&self, peaks: &PeakList) -> f64 {
        let s: f64 = self.terms.iter().map(|&(i, n)| n as f64 * peaks.q(i as usize)).sum();
        s / DENOM as f64
    }

    pub fn err(&self, peaks: &PeakList) -> f64 {
        let s: f64 = self
            .terms
            .iter()
            .map(|&(i, n)| {
                let t = n as f64 * peaks.e(i as usize);
                t * t
            })
            .sum();
        s.sqrt() / DENOM as f64
    }

    /// Indices with a nonzero coefficient, ascending.
    pub fn terms(&self) -> Vec<usize> {
        self.terms.iter().map(|&(i, _)| i as usize).collect()
    }

    pub fn coeff(&self, index: usize) -> Rational64 {
        self.terms
            .iter()
            .find(|t| t.0 as usize == index)
            .map_or(Rational64::from_integer(0), |t| Rational64::new(t.1 as i64, DENOM))
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (usize, Rational64)> + '_ {
        self.terms.iter().map(|&(i, n)| (i as usize, Rational64::new(n as i64, DENOM)))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The peak index when the sum is a single observed peak.
    pub fn as_atom(&self) -> Option<usize> {
        match self.terms.as_slice() {
            [(i, n)] if *n as i64 == DENOM => Some(*i as usize),
            _ => None,
        }
    }

    pub fn is_atom(&self) -> bool {
        self.as_atom().is_some()
    }

    /// Largest index referenced, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.terms.last().map(|t| t.0 as usize)
    }

    /// Value order with a lexicographic tie-break on the coefficients.
    pub fn cmp_by_value(&self, other: &QSum, peaks: &PeakList) -> Ordering {
        self.val(peaks).total_cmp(&other.val(peaks)).then_with(|| self.cmp(other))
    }
}

impl fmt::Display for QSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (i, c)) in self.coefficients().enumerate() {
            let (neg, a) = (c < Rational64::from_integer(0), c.abs());
            if neg {
                write!(f, "-")?;
            } else if k > 0 {
                write!(f, "+")?;
            }
            if a != Rational64::from_integer(1) {
                write!(f, "{a}")?;
            }
            write!(f, "q{i}")?;
        }
        Ok(())
    }
}
