//! Superbases and local topograph structure for ranks 2 and 3.
//!
//! A node is a superbase `(l₁, …, lₙ₊₁)` with `Σ lᵢ = 0`. Moves are applied
//! by position, so compositions of moves can be checked as words.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::latmath::{voronoi_vector_classes, SymMat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopoError {
    #[error("unsupported rank {0}")]
    Rank(usize),
    #[error("vectors do not form a superbase")]
    NotSuperbase,
    #[error("superbases are not adjacent")]
    NotAdjacent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Superbase {
    n: usize,
    v: Vec<Vec<i64>>,
}

fn sign_normal(v: &[i64]) -> Vec<i64> {
    match v.iter().find(|&&x| x != 0) {
        Some(&x) if x < 0 => v.iter().map(|y| -y).collect(),
        _ => v.to_vec(),
    }
}

fn det(rows: &[Vec<i64>]) -> i64 {
    match rows.len() {
        2 => rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
        3 => {
            let (a, b, c) = (&rows[0], &rows[1], &rows[2]);
            a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
        }
        _ => 0,
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Whether `u, v` extend to a basis of `ℤⁿ` (gcd of the 2×2 minors is 1).
pub fn is_primitive_pair(u: &[i64], v: &[i64]) -> bool {
    let n = u.len();
    let mut g = 0;
    for i in 0..n {
        for j in i + 1..n {
            g = gcd(g, u[i] * v[j] - u[j] * v[i]);
        }
    }
    g == 1
}

impl Superbase {
    pub fn standard(n: usize) -> Result<Superbase, TopoError> {
        if !(2..=3).contains(&n) {
            return Err(TopoError::Rank(n));
        }
        let mut v: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect();
        v.push(vec![-1; n]);
        Ok(Superbase { n, v })
    }

    pub fn new(v: Vec<Vec<i64>>) -> Result<Superbase, TopoError> {
        let n = v.len().saturating_sub(1);
        if !(2..=3).contains(&n) {
            return Err(TopoError::Rank(n));
        }
        if v.iter().any(|x| x.len() != n) {
            return Err(TopoError::NotSuperbase);
        }
        let sum_zero = (0..n).all(|k| v.iter().map(|x| x[k]).sum::<i64>() == 0);
        if !sum_zero || det(&v[..n]).abs() != 1 {
            return Err(TopoError::NotSuperbase);
        }
        Ok(Superbase { n, v })
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn vectors(&self) -> &[Vec<i64>] {
        &self.v
    }

    /// Canonical node identity: sign-normalised vectors, sorted.
    pub fn key(&self) -> Vec<Vec<i64>> {
        let mut k: Vec<Vec<i64>> = self.v.iter().map(|x| sign_normal(x)).collect();
        k.sort();
        k
    }

    /// The move `τᵢⱼ` by position (0-based, `i ≠ j`).
    pub fn apply_move(&self, i: usize, j: usize) -> Superbase {
        assert!(i != j && i <= self.n && j <= self.n);
        let li = self.v[i].clone();
        let lj = self.v[j].clone();
        let mut v = self.v.clone();
        if self.n == 2 {
            // {l_i, -l_j, l_j - l_i}
            let k = 3 - i - j;
            v[j] = lj.iter().map(|x| -x).collect();
            v[k] = lj.iter().zip(&li).map(|(a, b)| a - b).collect();
        } else {
            for (p, w) in v.iter_mut().enumerate() {
                if p == i {
                    *w = li.iter().map(|x| -x).collect();
                } else if p != j {
                    *w = w.iter().zip(&li).map(|(a, b)| a + b).collect();
                }
            }
        }
        Superbase { n: self.n, v }
    }

    /// Sums over nonempty proper subsets, up to sign: the `2ⁿ − 1`
    /// Voronoi vectors of the node's domain.
    pub fn voronoi_set(&self) -> Vec<Vec<i64>> {
        let m = self.n + 1;
        let mut out: Vec<Vec<i64>> = Vec::new();
        for mask in 1..(1u32 << m) - 1 {
            if mask & 1 == 0 {
                continue; // complements give the same vector up to sign
            }
            let mut s = vec![0; self.n];
            for (p, w) in self.v.iter().enumerate() {
                if mask >> p & 1 == 1 {
                    for k in 0..self.n {
                        s[k] += w[k];
                    }
                }
            }
            out.push(sign_normal(&s));
        }
        out.sort();
        out.dedup();
        out
    }

    fn moves(&self) -> Vec<(usize, usize)> {
        let m = self.n + 1;
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
    }
}

/// The adjacent nodes: three for rank 2, six for rank 3.
pub fn neighbors(sb: &Superbase) -> Result<Vec<Superbase>, TopoError> {
    if !(2..=3).contains(&sb.n) {
        return Err(TopoError::Rank(sb.n));
    }
    Ok(sb.moves().into_iter().map(|(i, j)| sb.apply_move(i, j)).collect())
}

/// An edge between adjacent nodes; `u`, `v` are the two vectors whose
/// values label it.
#[derive(Debug, Clone, PartialEq)]
pub struct TopographEdge {
    pub from: Superbase,
    pub to: Superbase,
    pub u: Vec<i64>,
    pub v: Vec<i64>,
}

impl TopographEdge {
    pub fn from_move(from: &Superbase, i: usize, j: usize) -> TopographEdge {
        TopographEdge { to: from.apply_move(i, j), u: from.v[i].clone(), v: from.v[j].clone(), from: from.clone() }
    }

    pub fn between(a: &Superbase, b: &Superbase) -> Result<TopographEdge, TopoError> {
        let kb = b.key();
        a.moves()
            .into_iter()
            .find(|&(i, j)| a.apply_move(i, j).key() == kb)
            .map(|(i, j)| TopographEdge { from: a.clone(), to: b.clone(), u: a.v[i].clone(), v: a.v[j].clone() })
            .ok_or(TopoError::NotAdjacent)
    }

    /// Orientation as the sign of `uᵀ S v`.
    pub fn direction(&self, s: &SymMat) -> i8 {
        let d = s.dot(&self.u, &self.v);
        if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    }
}

/// `{uᵀS₀u, vᵀS₀v}`, smaller first.
pub fn edge_label(s0: &SymMat, e: &TopographEdge) -> (f64, f64) {
    let (a, b) = (s0.quad(&e.u), s0.quad(&e.v));
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetCheck {
    Holds,
    Fails,
    /// `S` lies on a wall: some class has more than one Voronoi pair.
    Degenerate,
}

/// Checks that the two endpoint domains differ in exactly one Voronoi class
/// each, that the differing vectors are `±(u+v)` and `±(u−v)` with `u, v`
/// primitive, and that the four values satisfy the parallelogram law on `S`.
pub fn verify_facet_property(s: &SymMat, e: &TopographEdge) -> Result<FacetCheck, TopoError> {
    let n = s.n();
    if !(2..=3).contains(&n) || e.from.n != n {
        return Err(TopoError::Rank(n));
    }
    let classes = voronoi_vector_classes(s).map_err(|_| TopoError::Rank(n))?;
    if classes.iter().skip(1).any(|c| c.pairs() > 1) {
        return Ok(FacetCheck::Degenerate);
    }
    let (pa, pb) = (e.from.voronoi_set(), e.to.voronoi_set());
    let only_a: Vec<&Vec<i64>> = pa.iter().filter(|x| !pb.contains(x)).collect();
    let only_b: Vec<&Vec<i64>> = pb.iter().filter(|x| !pa.contains(x)).collect();
    if only_a.len() != 1 || only_b.len() != 1 || pa.len() != (1 << n) - 1 || pb.len() != (1 << n) - 1 {
        return Ok(FacetCheck::Fails);
    }
    let (w1, w2) = (only_a[0], only_b[0]);
    let half = |sign: i64| -> Option<Vec<i64>> {
        let s: Vec<i64> = w1.iter().zip(w2).map(|(a, b)| a + sign * b).collect();
        if s.iter().all(|x| x % 2 == 0) {
            Some(s.iter().map(|x| x / 2).collect())
        } else {
            None
        }
    };
    let (Some(x), Some(y)) = (half(1), half(-1)) else { return Ok(FacetCheck::Fails) };
    if !is_primitive_pair(&x, &y) {
        return Ok(FacetCheck::Fails);
    }
    let mut got = [sign_normal(&x), sign_normal(&y)];
    let mut want = [sign_normal(&e.u), sign_normal(&e.v)];
    got.sort();
    want.sort();
    if got != want {
        return Ok(FacetCheck::Fails);
    }
    let lhs = s.quad(w1) + s.quad(w2);
    let rhs = 2.0 * (s.quad(&e.u) + s.quad(&e.v));
    if (lhs - rhs).abs() > 1e-9 * rhs.abs().max(1.0) {
        return Ok(FacetCheck::Fails);
    }
    Ok(FacetCheck::Holds)
}

/// Breadth-first exploration to `depth`; returns `(nodes, edges)` counts and
/// whether any node was reached along two different paths.
pub fn explore(start: &Superbase, depth: usize) -> (usize, usize, bool) {
    let mut seen: HashSet<Vec<Vec<i64>>> = HashSet::new();
    let mut edges: HashSet<(Vec<Vec<i64>>, Vec<Vec<i64>>)> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.key());
    queue.push_back((start.clone(), 0usize));
    let mut revisit = false;
    while let Some((node, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        let k = node.key();
        for nb in neighbors(&node).unwrap_or_default() {
            let kn = nb.key();
            let e = if k < kn { (k.clone(), kn.clone()) } else { (kn.clone(), k.clone()) };
            if !edges.insert(e) {
                continue;
            }
            if seen.insert(kn) {
                queue.push_back((nb, d + 1));
            } else {
                revisit = true;
            }
        }
    }
    (seen.len(), edges.len(), revisit)
}

/// Plain-text adjacency list with edge labels, for debugging.
pub fn dump_adjacency(s: &SymMat, start: &Superbase, depth: usize) -> String {
    let mut out = String::new();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    seen.insert(start.key());
    while let Some((node, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        for (i, j) in node.moves() {
            let e = TopographEdge::from_move(&node, i, j);
            let (a, b) = edge_label(s, &e);
            let _ = writeln!(out, "{:?} -> {:?} [{a} {b}]", node.key(), e.to.key());
            if seen.insert(e.to.key()) {
                queue.push_back((e.to, d + 1));
            }
        }
    }
    out
}
