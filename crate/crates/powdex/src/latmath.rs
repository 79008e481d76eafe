//! Gram matrices of rank ≤ 4: cells, reduction, representation sets.

use std::f64::consts::PI;
use std::fmt;

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::qformal::{PeakList, QSum};

pub const MAXN: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatError {
    #[error("matrix is not positive definite")]
    NotPosDef,
    #[error("unsupported rank {0}")]
    Rank(usize),
    #[error("invalid cell parameters")]
    BadCell,
    #[error("need at least two q-values")]
    TooFewValues,
    #[error("reduction did not converge")]
    NoConvergence,
}

/// Integer matrix of size `n ≤ 4` acting on row vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntMat {
    pub n: usize,
    pub m: [[i64; MAXN]; MAXN],
}

impl IntMat {
    pub fn identity(n: usize) -> IntMat {
        let mut m = [[0; MAXN]; MAXN];
        for (i, row) in m.iter_mut().enumerate().take(n) {
            row[i] = 1;
        }
        IntMat { n, m }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> IntMat {
        let n = rows.len();
        let mut m = [[0; MAXN]; MAXN];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = rows[i][j];
            }
        }
        IntMat { n, m }
    }

    pub fn from3(r: [[i64; 3]; 3]) -> IntMat {
        let mut m = [[0; MAXN]; MAXN];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
        }
        IntMat { n: 3, m }
    }

    pub fn mul(&self, o: &IntMat) -> IntMat {
        let n = self.n;
        let mut m = [[0; MAXN]; MAXN];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = (0..n).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        IntMat { n, m }
    }

    pub fn transpose(&self) -> IntMat {
        let mut m = [[0; MAXN]; MAXN];
        for i in 0..self.n {
            for j in 0..self.n {
                m[i][j] = self.m[j][i];
            }
        }
        IntMat { n: self.n, m }
    }

    pub fn det(&self) -> i64 {
        let rows: Vec<Vec<i128>> =
            (0..self.n).map(|i| (0..self.n).map(|j| self.m[i][j] as i128).collect()).collect();
        det_int(&rows) as i64
    }

    pub fn is_unimodular(&self) -> bool {
        self.det().abs() == 1
    }

    pub fn neg(&self) -> IntMat {
        let mut m = self.m;
        for row in m.iter_mut() {
            for x in row.iter_mut() {
                *x = -*x;
            }
        }
        IntMat { n: self.n, m }
    }

    pub fn row(&self, i: usize) -> Vec<i64> {
        self.m[i][..self.n].to_vec()
    }

    pub fn max_abs(&self) -> i64 {
        (0..self.n).flat_map(|i| (0..self.n).map(move |j| (i, j))).map(|(i, j)| self.m[i][j].abs()).max().unwrap_or(0)
    }
}

fn det_int(a: &[Vec<i128>]) -> i128 {
    match a.len() {
        0 => 1,
        1 => a[0][0],
        n => {
            let mut s = 0;
            for j in 0..n {
                if a[0][j] == 0 {
                    continue;
                }
                let minor: Vec<Vec<i128>> =
                    a[1..].iter().map(|r| r.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, x)| *x).collect()).collect();
                let t = a[0][j] * det_int(&minor);
                s += if j % 2 == 0 { t } else { -t };
            }
            s
        }
    }
}

/// Symmetric matrix of rank `n ≤ 4`, optionally carrying entry errors and
/// the formal sums the entries were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    a: [[f64; MAXN]; MAXN],
    errors: Option<[[f64; MAXN]; MAXN]>,
    sums: Option<Vec<QSum>>,
}

impl SymMat {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> SymMat {
        assert!((1..=MAXN).contains(&n));
        let mut a = [[0.0; MAXN]; MAXN];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        SymMat { n, a, errors: None, sums: None }
    }

    /// Uses the upper triangle of `rows`.
    pub fn from_rows(rows: &[Vec<f64>]) -> SymMat {
        SymMat::from_fn(rows.len(), |i, j| rows[i][j])
    }

    pub fn from2(r: [[f64; 2]; 2]) -> SymMat {
        SymMat::from_fn(2, |i, j| r[i][j])
    }

    pub fn from3(r: [[f64; 3]; 3]) -> SymMat {
        SymMat::from_fn(3, |i, j| r[i][j])
    }

    pub fn identity(n: usize) -> SymMat {
        SymMat::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(d: &[f64]) -> SymMat {
        SymMat::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    /// Entries from formal sums (row-major, `n × n`, symmetric), with values
    /// and propagated errors evaluated on `peaks`.
    pub fn from_sums(n: usize, sums: Vec<QSum>, peaks: &PeakList) -> SymMat {
        assert_eq!(sums.len(), n * n);
        let mut s = SymMat::from_fn(n, |i, j| sums[i * n + j].val(peaks));
        s.sums = Some(sums);
        s.refresh_errors(peaks);
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn errors(&self) -> Option<&[[f64; MAXN]; MAXN]> {
        self.errors.as_ref()
    }

    pub fn error(&self, i: usize, j: usize) -> f64 {
        self.errors.map_or(0.0, |e| e[i][j])
    }

    pub fn sums(&self) -> Option<&[QSum]> {
        self.sums.as_deref()
    }

    pub fn sum(&self, i: usize, j: usize) -> Option<&QSum> {
        self.sums.as_ref().map(|s| &s[i * self.n + j])
    }

    pub fn set_errors(&mut self, e: [[f64; MAXN]; MAXN]) {
        self.errors = Some(e);
    }

    /// Recomputes entry errors from the stored formal sums.
    pub fn refresh_errors(&mut self, peaks: &PeakList) {
        if let Some(s) = &self.sums {
            let mut e = [[0.0; MAXN]; MAXN];
            for i in 0..self.n {
                for j in 0..self.n {
                    e[i][j] = s[i * self.n + j].err(peaks);
                }
            }
            self.errors = Some(e);
        }
    }

    pub fn without_extras(&self) -> SymMat {
        SymMat { n: self.n, a: self.a, errors: None, sums: None }
    }

    pub fn to3(&self) -> [[f64; 3]; 3] {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            row.copy_from_slice(&self.a[i][..3]);
        }
        r
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.a[i][..self.n].to_vec()).collect()
    }

    pub fn quad(&self, v: &[i64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            if v[i] == 0 {
                continue;
            }
            let mut t = 0.0;
            for j in 0..self.n {
                t += self.a[i][j] * v[j] as f64;
            }
            s += v[i] as f64 * t;
        }
        s
    }

    pub fn dot(&self, u: &[i64], v: &[i64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += u[i] as f64 * self.a[i][j] * v[j] as f64;
            }
        }
        s
    }

    /// Leading principal minors `d₁ … dₙ`.
    pub fn leading_minors(&self) -> Vec<f64> {
        (1..=self.n).map(|k| det_f(&self.a, k)).collect()
    }

    pub fn det(&self) -> f64 {
        det_f(&self.a, self.n)
    }

    pub fn is_pos_def(&self) -> bool {
        self.leading_minors().iter().all(|&d| d > 0.0)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.a[i][j].abs());
            }
        }
        m
    }

    pub fn scaled(&self, k: f64) -> SymMat {
        SymMat::from_fn(self.n, |i, j| self.a[i][j] * k)
    }

    pub fn inverse(&self) -> Result<SymMat, LatError> {
        let n = self.n;
        let mut m = [[0.0; 2 * MAXN]; MAXN];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = self.a[i][j];
            }
            m[i][n + i] = 1.0;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
            if m[p][c].abs() < 1e-300 {
                return Err(LatError::NotPosDef);
            }
            m.swap(c, p);
            let d = m[c][c];
            for x in m[c].iter_mut() {
                *x /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r][c];
                    if f != 0.0 {
                        for k in 0..2 * n {
                            m[r][k] -= f * m[c][k];
                        }
                    }
                }
            }
        }
        Ok(SymMat::from_fn(n, |i, j| 0.5 * (m[i][n + j] + m[j][n + i])))
    }

    /// `g S gᵀ`. Formal sums are carried through exactly; errors are
    /// dropped until [`SymMat::refresh_errors`] is called.
    pub fn transform(&self, g: &IntMat) -> SymMat {
        let n = self.n;
        let mut out = SymMat::from_fn(n, |i, j| {
            let mut s = 0.0;
            for k in 0..n {
                if g.m[i][k] == 0 {
                    continue;
                }
                for l in 0..n {
                    s += g.m[i][k] as f64 * self.a[k][l] * g.m[j][l] as f64;
                }
            }
            s
        });
        if let Some(src) = &self.sums {
            let mut sums = vec![QSum::zero(); n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = QSum::zero();
                    for k in 0..n {
                        for l in 0..n {
                            let c = g.m[i][k] * g.m[j][l];
                            if c != 0 {
                                acc = acc.add(&src[k * n + l].times(c as i32));
                            }
                        }
                    }
                    sums[i * n + j] = acc;
                }
            }
            out.sums = Some(sums);
        }
        out
    }

    /// Largest entrywise difference relative to the largest entry.
    pub fn rel_diff(&self, o: &SymMat) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.a[i][j] - o.a[i][j]).abs());
            }
        }
        d / self.max_abs().max(o.max_abs())
    }
}

impl fmt::Display for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{:.6}", self.a[i][j])?;
            }
        }
        write!(f, "]")
    }
}

fn det_f(a: &[[f64; MAXN]; MAXN], k: usize) -> f64 {
    match k {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        _ => {
            let mut s = 0.0;
            for j in 0..k {
                let mut sub = [[0.0; MAXN]; MAXN];
                for r in 1..k {
                    let mut c2 = 0;
                    for c in 0..k {
                        if c != j {
                            sub[r - 1][c2] = a[r][c];
                            c2 += 1;
                        }
                    }
                }
                let t = a[0][j] * det_f(&sub, k - 1);
                s += if j % 2 == 0 { t } else { -t };
            }
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LatticeParams {
    pub fn new(a: f64, b: f64, c: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        LatticeParams { a, b, c, alpha, beta, gamma }
    }

    pub fn cubic(a: f64) -> Self {
        Self::new(a, a, a, 90.0, 90.0, 90.0)
    }
}

/// Hermite constants with `γ₂² = 4/3` and `γ₃³ = 2`.
pub struct HermiteConstants;

impl HermiteConstants {
    pub fn gamma(n: usize) -> Option<f64> {
        match n {
            1 => Some(1.0),
            2 => Some((4.0f64 / 3.0).sqrt()),
            3 => Some(2f64.powf(1.0 / 3.0)),
            _ => None,
        }
    }
}

pub fn gram_from_cell(p: &LatticeParams) -> Result<SymMat, LatError> {
    let ok = [p.a, p.b, p.c].iter().all(|x| x.is_finite() && *x > 0.0)
        && [p.alpha, p.beta, p.gamma].iter().all(|x| *x > 0.0 && *x < 180.0);
    if !ok {
        return Err(LatError::BadCell);
    }
    let c = |deg: f64| {
        // exact zero at right angles keeps orthogonal cells diagonal
        if deg == 90.0 {
            0.0
        } else {
            deg.to_radians().cos()
        }
    };
    let s = SymMat::from3([
        [p.a * p.a, p.a * p.b * c(p.gamma), p.a * p.c * c(p.beta)],
        [0.0, p.b * p.b, p.b * p.c * c(p.alpha)],
        [0.0, 0.0, p.c * p.c],
    ]);
    if !s.is_pos_def() {
        return Err(LatError::NotPosDef);
    }
    Ok(s)
}

pub fn cell_from_gram(s: &SymMat) -> Result<LatticeParams, LatError> {
    if s.n() != 3 {
        return Err(LatError::Rank(s.n()));
    }
    if !s.is_pos_def() {
        return Err(LatError::NotPosDef);
    }
    let (a, b, c) = (s.get(0, 0).sqrt(), s.get(1, 1).sqrt(), s.get(2, 2).sqrt());
    let ang = |x: f64| x.clamp(-1.0, 1.0).acos().to_degrees();
    Ok(LatticeParams {
        a,
        b,
        c,
        alpha: ang(s.get(1, 2) / (b * c)),
        beta: ang(s.get(0, 2) / (a * c)),
        gamma: ang(s.get(0, 1) / (a * b)),
    })
}

/// Cell volume for a Gram matrix, `sqrt(det S)`.
pub fn volume(s: &SymMat) -> f64 {
    s.det().max(0.0).sqrt()
}

pub fn is_pos_def(s: &SymMat) -> bool {
    s.is_pos_def()
}

/// Niggli reduction of a 3×3 Gram matrix.
///
/// Returns the reduced matrix together with `g` (det +1) such that
/// `g S gᵀ` equals it. `tol` is relative to the mean diagonal entry.
pub fn niggli_reduce(s: &SymMat, tol: f64) -> Result<(SymMat, IntMat), LatError> {
    if s.n() != 3 {
        return Err(LatError::Rank(s.n()));
    }
    if !s.is_pos_def() {
        return Err(LatError::NotPosDef);
    }
    let eps = tol * s.trace() / 3.0;
    let mut g = IntMat::identity(3);
    let mut cur = s.clone();
    let apply = |cur: &mut SymMat, g: &mut IntMat, t: [[i64; 3]; 3]| {
        let t = IntMat::from3(t);
        *cur = cur.transform(&t);
        *g = t.mul(g);
    };
    let sgn = |x: f64| if x > eps { 1 } else if x < -eps { -1 } else { 0 };
    let s1 = |x: f64| if x < 0.0 { -1 } else { 1 };
    let mut iter = 0;
    'outer: loop {
        iter += 1;
        if iter > 10_000 {
            return Err(LatError::NoConvergence);
        }
        let p = |c: &SymMat| {
            (c.get(0, 0), c.get(1, 1), c.get(2, 2), 2.0 * c.get(1, 2), 2.0 * c.get(0, 2), 2.0 * c.get(0, 1))
        };
        let (a, b, c, xi, eta, zeta) = p(&cur);
        if a > b + eps || ((a - b).abs() <= eps && xi.abs() > eta.abs() + eps) {
            apply(&mut cur, &mut g, [[0, -1, 0], [-1, 0, 0], [0, 0, -1]]);
            continue;
        }
        if b > c + eps || ((b - c).abs() <= eps && eta.abs() > zeta.abs() + eps) {
            apply(&mut cur, &mut g, [[-1, 0, 0], [0, 0, -1], [0, -1, 0]]);
            continue;
        }
        let (l, m, n) = (sgn(xi), sgn(eta), sgn(zeta));
        if l * m * n == 1 {
            let (i, j, k) = (if l == -1 { -1 } else { 1 }, if m == -1 { -1 } else { 1 }, if n == -1 { -1 } else { 1 });
            if (i, j, k) != (1, 1, 1) {
                apply(&mut cur, &mut g, [[i, 0, 0], [0, j, 0], [0, 0, k]]);
            }
        } else {
            let (mut i, mut j, mut k) = (1, 1, 1);
            let mut zero_at = None;
            if l == 1 {
                i = -1;
            } else if l == 0 {
                zero_at = Some(0);
            }
            if m == 1 {
                j = -1;
            } else if m == 0 {
                zero_at = Some(1);
            }
            if n == 1 {
                k = -1;
            } else if n == 0 {
                zero_at = Some(2);
            }
            if i * j * k < 0 {
                match zero_at {
                    Some(0) => i = -1,
                    Some(1) => j = -1,
                    Some(_) => k = -1,
                    None => {}
                }
            }
            if (i, j, k) != (1, 1, 1) {
                apply(&mut cur, &mut g, [[i, 0, 0], [0, j, 0], [0, 0, k]]);
            }
        }
        let (a, b, _c, xi, eta, zeta) = p(&cur);
        if xi.abs() > b + eps || ((b - xi).abs() <= eps && 2.0 * eta < zeta - eps) || ((xi + b).abs() <= eps && zeta < -eps) {
            apply(&mut cur, &mut g, [[1, 0, 0], [0, 1, 0], [0, -s1(xi), 1]]);
            continue 'outer;
        }
        if eta.abs() > a + eps || ((a - eta).abs() <= eps && 2.0 * xi < zeta - eps) || ((eta + a).abs() <= eps && zeta < -eps) {
            apply(&mut cur, &mut g, [[1, 0, 0], [0, 1, 0], [-s1(eta), 0, 1]]);
            continue 'outer;
        }
        if zeta.abs() > a + eps || ((a - zeta).abs() <= eps && 2.0 * xi < eta - eps) || ((zeta + a).abs() <= eps && eta < -eps) {
            apply(&mut cur, &mut g, [[1, 0, 0], [-s1(zeta), 1, 0], [0, 0, 1]]);
            continue 'outer;
        }
        let t = xi + eta + zeta + a + b;
        if t < -eps || (t.abs() <= eps && 2.0 * (a + eta) + zeta > eps) {
            apply(&mut cur, &mut g, [[1, 0, 0], [0, 1, 0], [1, 1, 1]]);
            continue 'outer;
        }
        break;
    }
    if g.det() < 0 {
        g = g.neg();
    }
    let mut out = s.transform(&g);
    out.errors = None;
    Ok((out, g))
}

/// Checks the Niggli conditions (main and special) within `tol`.
pub fn is_niggli_reduced(s: &SymMat, tol: f64) -> bool {
    if s.n() != 3 {
        return false;
    }
    let e = tol * s.trace() / 3.0;
    let (a, b, c) = (s.get(0, 0), s.get(1, 1), s.get(2, 2));
    let (xi, eta, zeta) = (2.0 * s.get(1, 2), 2.0 * s.get(0, 2), 2.0 * s.get(0, 1));
    if a > b + e || b > c + e {
        return false;
    }
    let positive = xi > e && eta > e && zeta > e;
    let nonpos = xi <= e && eta <= e && zeta <= e;
    if !(positive || nonpos) {
        return false;
    }
    if xi.abs() > b + e || eta.abs() > a + e || zeta.abs() > a + e {
        return false;
    }
    if xi + eta + zeta + a + b < -e {
        return false;
    }
    let eq = |x: f64, y: f64| (x - y).abs() <= e;
    if eq(a, b) && xi.abs() > eta.abs() + e {
        return false;
    }
    if eq(b, c) && eta.abs() > zeta.abs() + e {
        return false;
    }
    if eq(xi, b) && zeta > 2.0 * eta + e {
        return false;
    }
    if eq(eta, a) && zeta > 2.0 * xi + e {
        return false;
    }
    if eq(zeta, a) && eta > 2.0 * xi + e {
        return false;
    }
    if eq(xi, -b) && zeta.abs() > e {
        return false;
    }
    if eq(eta, -a) && zeta.abs() > e {
        return false;
    }
    if eq(zeta, -a) && eta.abs() > e {
        return false;
    }
    if eq(xi + eta + zeta + a + b, 0.0) && 2.0 * (a + eta) + zeta > e {
        return false;
    }
    true
}

fn ternary_vectors(n: usize) -> Vec<[i64; MAXN]> {
    let total = 3usize.pow(n as u32);
    (0..total)
        .map(|mut k| {
            let mut v = [0; MAXN];
            for x in v.iter_mut().take(n) {
                *x = (k % 3) as i64 - 1;
                k /= 3;
            }
            v
        })
        .filter(|v| v.iter().any(|&x| x != 0))
        .collect()
}

/// Minkowski reduction for `n ≤ 4`. Returns the reduced form and `g` with
/// `g S gᵀ` equal to it.
pub fn minkowski_reduce(s: &SymMat) -> Result<(SymMat, IntMat), LatError> {
    let n = s.n();
    if !(1..=MAXN).contains(&n) {
        return Err(LatError::Rank(n));
    }
    if !s.is_pos_def() {
        return Err(LatError::NotPosDef);
    }
    let mut g = IntMat::identity(n);
    let mut cur = s.without_extras();
    let cands = ternary_vectors(n);
    let mut iter = 0;
    loop {
        iter += 1;
        if iter > 100_000 {
            return Err(LatError::NoConvergence);
        }
        // stable sort of the basis by length
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| cur.get(x, x).total_cmp(&cur.get(y, y)));
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            let mut p = IntMat { n, m: [[0; MAXN]; MAXN] };
            for (i, &o) in order.iter().enumerate() {
                p.m[i][o] = 1;
            }
            cur = cur.transform(&p);
            g = p.mul(&g);
        }
        let mut changed = false;
        'search: for i in 0..n {
            let sii = cur.get(i, i);
            for v in &cands {
                let Some(k) = (i..n).rev().find(|&k| v[k].abs() == 1) else { continue };
                let val = cur.quad(&v[..n]);
                if val < sii * (1.0 - 1e-12) {
                    let mut t = IntMat::identity(n);
                    t.m[k][..n].copy_from_slice(&v[..n]);
                    cur = cur.transform(&t);
                    g = t.mul(&g);
                    changed = true;
                    break 'search;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok((s.without_extras().transform(&g), g))
}

/// Calls `f(v, vᵀSv)` for every nonzero integer vector with `vᵀSv ≤ cutoff`.
/// Fincke–Pohst enumeration over the Cholesky factorisation, so the search
/// is complete for any positive-definite input.
pub fn for_each_short_vector<F: FnMut(&[i64], f64)>(s: &SymMat, cutoff: f64, mut f: F) -> Result<(), LatError> {
    let n = s.n();
    if !s.is_pos_def() {
        return Err(LatError::NotPosDef);
    }
    if cutoff <= 0.0 {
        return Ok(());
    }
    let mut q = [[0.0; MAXN]; MAXN];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = s.get(i, j);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            q[j][i] = q[i][j];
            q[i][j] /= q[i][i];
        }
        for k in i + 1..n {
            for l in k..n {
                q[k][l] -= q[k][i] * q[i][l];
            }
        }
    }
    let bound = cutoff * (1.0 + 1e-9);
    let limit = cutoff * (1.0 + 1e-12);
    let mut x = [0i64; MAXN];
    fn rec<F: FnMut(&[i64], f64)>(
        i: usize,
        n: usize,
        rem: f64,
        q: &[[f64; MAXN]; MAXN],
        x: &mut [i64; MAXN],
        s: &SymMat,
        limit: f64,
        f: &mut F,
    ) {
        let c: f64 = (i + 1..n).map(|j| q[i][j] * x[j] as f64).sum();
        let r = (rem.max(0.0) / q[i][i]).sqrt();
        let lo = (-c - r).ceil() as i64;
        let hi = (-c + r).floor() as i64;
        for xi in lo..=hi {
            x[i] = xi;
            let t = xi as f64 + c;
            let rem2 = rem - q[i][i] * t * t;
            if rem2 < -1e-12 * limit {
                continue;
            }
            if i == 0 {
                if x[..n].iter().any(|&v| v != 0) {
                    let val = s.quad(&x[..n]);
                    if val <= limit {
                        f(&x[..n], val);
                    }
                }
            } else {
                rec(i - 1, n, rem2, q, x, s, limit, f);
            }
        }
        x[i] = 0;
    }
    rec(n - 1, n, bound, &q, &mut x, s, limit, &mut f);
    Ok(())
}

/// All nonzero vectors with `vᵀSv ≤ cutoff`, with their values.
pub fn short_vectors(s: &SymMat, cutoff: f64) -> Result<Vec<(Vec<i64>, f64)>, LatError> {
    let mut out = Vec::new();
    for_each_short_vector(s, cutoff, |v, val| out.push((v.to_vec(), val)))?;
    Ok(out)
}

/// Groups sorted values that agree to within `rel` (relative).
pub fn group_values(mut vals: Vec<f64>, rel: f64) -> Vec<(f64, usize)> {
    vals.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in vals {
        match out.last_mut() {
            Some((w, k)) if (v - *w).abs() <= rel * w.abs().max(1e-300) => *k += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// The representation set below `cutoff` as sorted `(value, multiplicity)`
/// pairs; multiplicity counts vectors (`v` and `-v` separately).
pub fn enumerate_reps(s: &SymMat, cutoff: f64) -> Result<Vec<(f64, usize)>, LatError> {
    let (r, _) = minkowski_reduce(s)?;
    let mut vals = Vec::new();
    for_each_short_vector(&r, cutoff, |_, v| vals.push(v))?;
    Ok(group_values(vals, 1e-9))
}

/// Symmetric matrix with exact rational entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RatMat {
    pub n: usize,
    pub a: [[Rational64; MAXN]; MAXN],
}

impl RatMat {
    pub fn zero(n: usize) -> RatMat {
        RatMat { n, a: [[Rational64::zero(); MAXN]; MAXN] }
    }

    pub fn from_ints(rows: &[Vec<i64>]) -> RatMat {
        let mut m = RatMat::zero(rows.len());
        for (i, r) in rows.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                m.a[i][j] = Rational64::from_integer(x);
            }
        }
        m
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational64) {
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn to_symmat(&self) -> SymMat {
        SymMat::from_fn(self.n, |i, j| *self.a[i][j].numer() as f64 / *self.a[i][j].denom() as f64)
    }

    /// Determinant of the leading `k × k` block, by exact elimination.
    pub fn minor(&self, k: usize) -> Rational64 {
        let mut m: Vec<Vec<Rational64>> = (0..k).map(|i| self.a[i][..k].to_vec()).collect();
        let mut det = Rational64::from_integer(1);
        for c in 0..k {
            let Some(p) = (c..k).find(|&r| !m[r][c].is_zero()) else { return Rational64::zero() };
            if p != c {
                m.swap(p, c);
                det = -det;
            }
            let d = m[c][c];
            det *= d;
            for r in c + 1..k {
                let f = m[r][c] / d;
                if !f.is_zero() {
                    for x in c..k {
                        let t = m[c][x];
                        m[r][x] -= f * t;
                    }
                }
            }
        }
        det
    }

    pub fn det(&self) -> Rational64 {
        self.minor(self.n)
    }

    pub fn leading(&self, k: usize) -> RatMat {
        let mut m = RatMat::zero(k);
        for i in 0..k {
            for j in 0..k {
                m.a[i][j] = self.a[i][j];
            }
        }
        m
    }

    pub fn quad(&self, v: &[i64]) -> Rational64 {
        let mut s = Rational64::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                if v[i] != 0 && v[j] != 0 {
                    s += self.a[i][j] * Rational64::from_integer(v[i] * v[j]);
                }
            }
        }
        s
    }

    pub fn transform(&self, g: &IntMat) -> RatMat {
        let mut out = RatMat::zero(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let mut s = Rational64::zero();
                for k in 0..self.n {
                    for l in 0..self.n {
                        let c = g.m[i][k] * g.m[j][l];
                        if c != 0 {
                            s += self.a[k][l] * Rational64::from_integer(c);
                        }
                    }
                }
                out.a[i][j] = s;
            }
        }
        out
    }
}

impl fmt::Display for RatMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.a[i][j])?;
            }
        }
        write!(f, "]")
    }
}

/// Exact representation values `≤ cutoff` of a rational form, ascending and
/// distinct.
pub fn enumerate_reps_exact(s: &RatMat, cutoff: Rational64) -> Result<Vec<Rational64>, LatError> {
    let f = s.to_symmat();
    let c = *cutoff.numer() as f64 / *cutoff.denom() as f64;
    let mut out = Vec::new();
    for_each_short_vector(&f, c * (1.0 + 1e-9) + 1e-12, |v, _| {
        let q = s.quad(v);
        if q <= cutoff {
            out.push(q);
        }
    })?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// `D₂ = 4/(3d²)` and `D₃ = 3·2^(-1/3)/d²`: bounds on the largest diagonal
/// entry of a Minkowski-reduced reciprocal Gram matrix when lattice points
/// are at least `d` apart.
pub fn lagarias_bound(n: usize, d: f64) -> Result<f64, LatError> {
    match n {
        2 => Ok(4.0 / (3.0 * d * d)),
        3 => Ok(3.0 * 2f64.powf(-1.0 / 3.0) / (d * d)),
        _ => Err(LatError::Rank(n)),
    }
}

/// Volume window `(Vol_min, Vol_max)` in Å³ from the smallest q-values.
pub fn auto_volume_bounds(qs: &[f64]) -> Result<(f64, f64), LatError> {
    if qs.len() < 2 {
        return Err(LatError::TooFewValues);
    }
    let j = qs.len().min(20);
    let v = 2.0 * PI / 3.0 * (qs[j - 1].powf(1.5) - qs[0].powf(1.5)) / (j - 1) as f64;
    let vmin = if v > 0.0 { (1.0 / v).max(5.0) } else { 5.0 };
    Ok((vmin, 30.0 * vmin))
}

/// One class of `ℤⁿ/2ℤⁿ` with its minimal value and the vectors attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiClass {
    pub class: Vec<u8>,
    pub vonorm: f64,
    pub vectors: Vec<Vec<i64>>,
}

impl VoronoiClass {
    /// Number of `±` pairs attaining the minimum.
    pub fn pairs(&self) -> usize {
        (self.vectors.len() / 2).max(1)
    }
}

/// Box half-width, in Minkowski-reduced coordinates, for the Voronoi search.
pub const VORONOI_WINDOW: i64 = 4;

/// Vonorms and Voronoi vectors of all `2ⁿ` classes, in the coordinates of `s`.
pub fn voronoi_vector_classes(s: &SymMat) -> Result<Vec<VoronoiClass>, LatError> {
    let n = s.n();
    if !(2..=3).contains(&n) {
        return Err(LatError::Rank(n));
    }
    let (r, g) = minkowski_reduce(s)?;
    let gt = g.transpose();
    let w = VORONOI_WINDOW;
    let k = (2 * w + 1) as usize;
    let mut best: Vec<(f64, Vec<Vec<i64>>)> = vec![(f64::INFINITY, Vec::new()); 1 << n];
    let total = k.pow(n as u32);
    for idx in 0..total {
        let mut v = [0i64; MAXN];
        let mut t = idx;
        for x in v.iter_mut().take(n) {
            *x = (t % k) as i64 - w;
            t /= k;
        }
        if v[..n].iter().all(|&x| x == 0) {
            continue;
        }
        let val = r.quad(&v[..n]);
        let orig: Vec<i64> = (0..n).map(|i| (0..n).map(|j| gt.m[i][j] * v[j]).sum()).collect();
        let cls = orig.iter().enumerate().fold(0usize, |acc, (i, &x)| acc | ((x.rem_euclid(2) as usize) << i));
        if cls == 0 {
            continue;
        }
        let b = &mut best[cls];
        let tol = 1e-9 * val.max(b.0.min(1e300));
        if val < b.0 - tol {
            *b = (val, vec![orig]);
        } else if (val - b.0).abs() <= tol {
            b.1.push(orig);
        }
    }
    best[0] = (0.0, vec![vec![0; n]]);
    Ok(best
        .into_iter()
        .enumerate()
        .map(|(cls, (vonorm, mut vectors))| {
            vectors.sort();
            VoronoiClass { class: (0..n).map(|i| ((cls >> i) & 1) as u8).collect(), vonorm, vectors }
        })
        .collect())
}

/// Integer matrices `g` with entries bounded by `max_entry`, `|det g| = 1`
/// and `g A gᵀ ≈ B` (entrywise within `tol · max|B|`). Stops after `limit`.
pub fn isometries(a: &SymMat, b: &SymMat, max_entry: i64, tol: f64, limit: usize) -> Vec<IntMat> {
    let n = a.n();
    if n != b.n() || !a.is_pos_def() || !b.is_pos_def() {
        return Vec::new();
    }
    let eps = tol * b.max_abs();
    let top = (0..n).map(|i| b.get(i, i)).fold(0.0, f64::max) + eps;
    let mut pool: Vec<(Vec<i64>, f64)> = Vec::new();
    let _ = for_each_short_vector(a, top, |v, val| {
        if v.iter().all(|x| x.abs() <= max_entry) {
            pool.push((v.to_vec(), val));
        }
    });
    pool.sort_by(|x, y| x.0.cmp(&y.0));
    let rows: Vec<Vec<&Vec<i64>>> =
        (0..n).map(|i| pool.iter().filter(|(_, v)| (v - b.get(i, i)).abs() <= eps).map(|(v, _)| v).collect()).collect();
    let mut out = Vec::new();
    let mut chosen: Vec<&Vec<i64>> = Vec::new();
    fn rec<'a>(
        i: usize,
        n: usize,
        rows: &[Vec<&'a Vec<i64>>],
        chosen: &mut Vec<&'a Vec<i64>>,
        a: &SymMat,
        b: &SymMat,
        eps: f64,
        out: &mut Vec<IntMat>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if i == n {
            let g = IntMat::from_rows(&chosen.iter().map(|r| (*r).clone()).collect::<Vec<_>>());
            if g.is_unimodular() {
                out.push(g);
            }
            return;
        }
        for v in &rows[i] {
            if chosen.iter().enumerate().all(|(j, u)| (a.dot(u, v) - b.get(j, i)).abs() <= eps) {
                chosen.push(v);
                rec(i + 1, n, rows, chosen, a, b, eps, out, limit);
                chosen.pop();
            }
        }
    }
    rec(0, n, &rows, &mut chosen, a, b, eps, &mut out, limit);
    out
}

/// Whether `g A gᵀ ≈ B` for some bounded unimodular `g`.
pub fn equivalent(a: &SymMat, b: &SymMat, max_entry: i64, tol: f64) -> bool {
    !isometries(a, b, max_entry, tol, 1).is_empty()
}
