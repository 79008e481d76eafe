//! Systematic-absence rule families and the densities of admissible
//! residue pairs and triples.
//!
//! Rules are written for coordinates `u` in the conventional reciprocal
//! basis. For centred lattices the reciprocal lattice is a sublattice of
//! those coordinates, so residues are enumerated in a primitive basis `x` of
//! it and mapped with `u = x·B`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Centering {
    Primitive,
    Body,
    Face,
}

/// The rule families, with the centring variant where one letter has two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbsenceCategory {
    AFace,
    ABody,
    BFace,
    BBody,
    C,
    D,
    E,
    FPrimitive,
    FBody,
    G,
    H,
    I,
    J,
    K,
    L,
    M,
    N,
}

use AbsenceCategory::*;

pub type ResidueVector = [i64; 3];

const J_MOD4: &[[i64; 3]] = &[[0, 0, 0], [0, 2, 2], [1, 1, 2], [1, 2, 3], [2, 3, 3]];
const J_MOD8: &[[i64; 3]] = &[
    [0, 2, 4],
    [0, 4, 6],
    [0, 1, 1],
    [1, 1, 4],
    [0, 3, 3],
    [3, 3, 4],
    [0, 1, 7],
    [1, 4, 7],
    [0, 3, 5],
    [3, 4, 5],
];

/// Whether `u` or `-u` is a permutation of one of `sets` modulo `m`.
fn braces(u: ResidueVector, m: i64, sets: &[[i64; 3]]) -> bool {
    let key = |s: i64| {
        let mut x = [(s * u[0]).rem_euclid(m), (s * u[1]).rem_euclid(m), (s * u[2]).rem_euclid(m)];
        x.sort_unstable();
        x
    };
    let (p, q) = (key(1), key(-1));
    sets.iter().any(|s| {
        let mut s = *s;
        s.sort_unstable();
        s == p || s == q
    })
}

impl AbsenceCategory {
    pub const ALL: [AbsenceCategory; 17] = [AFace, ABody, BFace, BBody, C, D, E, FPrimitive, FBody, G, H, I, J, K, L, M, N];

    /// One representative per letter, in table order.
    pub const ROWS: [AbsenceCategory; 14] = [AFace, BFace, C, D, E, FPrimitive, G, H, I, J, K, L, M, N];

    pub fn letter(self) -> char {
        match self {
            AFace | ABody => 'A',
            BFace | BBody => 'B',
            C => 'C',
            D => 'D',
            E => 'E',
            FPrimitive | FBody => 'F',
            G => 'G',
            H => 'H',
            I => 'I',
            J => 'J',
            K => 'K',
            L => 'L',
            M => 'M',
            N => 'N',
        }
    }

    /// The variant named in the rule table, if the letter has two.
    pub fn variant(self) -> Option<Centering> {
        match self {
            AFace | BFace => Some(Centering::Face),
            ABody | BBody | FBody => Some(Centering::Body),
            FPrimitive => Some(Centering::Primitive),
            _ => None,
        }
    }

    /// Centring of the real lattice the rule is written for.
    pub fn lattice_centering(self) -> Centering {
        match self {
            AFace | BFace => Centering::Face,
            D | E | FPrimitive | G | H => Centering::Primitive,
            _ => Centering::Body,
        }
    }

    /// Smallest modulus through which the rule factors.
    pub fn modulus(self) -> i64 {
        match self {
            C | FPrimitive => 2,
            D | E => 6,
            J | M => 8,
            _ => 4,
        }
    }

    /// Rows of `B`: a primitive basis of the reciprocal lattice in
    /// conventional coordinates.
    pub fn basis(self) -> [[i64; 3]; 3] {
        basis_for(self.lattice_centering())
    }

    /// Extinction test for conventional coordinates `u` (any integers).
    pub fn is_extinct(self, u: ResidueVector) -> bool {
        let m = |k: i64| [u[0].rem_euclid(k), u[1].rem_euclid(k), u[2].rem_euclid(k)];
        match self {
            AFace => (u[0] + u[1] + u[2]).rem_euclid(4) == 2,
            ABody => (2 * u[1] + u[2]).rem_euclid(4) == 2,
            BFace => braces(u, 4, &[[0, 0, 2], [0, 2, 2]]),
            BBody => braces(u, 4, &[[1, 1, 0], [3, 3, 0], [1, 3, 2]]),
            C => m(2) == [1, 1, 0],
            D => (u[0] - u[1]).rem_euclid(3) == 0 && u[2].rem_euclid(2) == 1,
            E => u[0].rem_euclid(2) == 0 && u[1].rem_euclid(2) == 0 && u[2].rem_euclid(3) != 0,
            FPrimitive => braces(u, 2, &[[1, 1, 1]]),
            FBody => braces(u, 4, &[[0, 0, 2], [2, 2, 2]]),
            G => braces(u, 2, &[[0, 0, 1], [1, 1, 1]]) && !braces(u, 4, &[[0, 1, 2], [0, 2, 3]]),
            H => braces(u, 2, &[[0, 0, 0], [0, 0, 1]]) && !braces(u, 4, &[[0, 1, 2], [0, 2, 3], [0, 0, 0], [2, 2, 2]]),
            I => braces(u, 4, &[[0, 0, 2], [0, 2, 2]]),
            J => !braces(u, 4, J_MOD4) && !braces(u, 8, J_MOD8),
            K => braces(u, 4, &[[2, 2, 2]]),
            L => braces(u, 4, &[[0, 1, 1], [0, 1, 3], [0, 3, 3], [2, 2, 2]]),
            M => !braces(u, 4, J_MOD4) && !braces(u, 8, &[[0, 2, 4], [0, 4, 6]]),
            N => !braces(u, 4, &[[0, 0, 0], [1, 1, 2], [1, 2, 3], [2, 3, 3]]),
        }
    }

    /// Extinction test for coordinates `x` in the primitive basis.
    pub fn is_extinct_primitive(self, x: [i64; 3]) -> bool {
        self.is_extinct(to_conventional(x, &self.basis()))
    }
}

impl fmt::Display for AbsenceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AFace => "A-face",
            ABody => "A-body",
            BFace => "B-face",
            BBody => "B-body",
            FPrimitive => "F-primitive",
            FBody => "F-body",
            other => return write!(f, "{}", other.letter()),
        };
        f.write_str(s)
    }
}

impl FromStr for AbsenceCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().to_ascii_uppercase().replace('_', "-");
        let c = match t.as_str() {
            "A" | "A-FACE" | "AF" => AFace,
            "A-BODY" | "AI" => ABody,
            "B" | "B-FACE" | "BF" => BFace,
            "B-BODY" | "BI" => BBody,
            "C" => C,
            "D" => D,
            "E" => E,
            "F" | "F-PRIMITIVE" | "FP" => FPrimitive,
            "F-BODY" | "FI" => FBody,
            "G" => G,
            "H" => H,
            "I" => I,
            "J" => J,
            "K" => K,
            "L" => L,
            "M" => M,
            "N" => N,
            _ => return Err(format!("unknown absence category '{s}'")),
        };
        Ok(c)
    }
}

pub fn basis_for(c: Centering) -> [[i64; 3]; 3] {
    match c {
        Centering::Primitive => [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        Centering::Body => [[0, 1, 1], [1, 0, 1], [1, 1, 0]],
        Centering::Face => [[-1, 1, 1], [1, -1, 1], [1, 1, -1]],
    }
}

pub fn to_conventional(x: [i64; 3], b: &[[i64; 3]; 3]) -> ResidueVector {
    let mut u = [0; 3];
    for (k, uk) in u.iter_mut().enumerate() {
        *uk = (0..3).map(|j| x[j] * b[j][k]).sum();
    }
    u
}

pub fn is_extinct(cat: AbsenceCategory, u: ResidueVector) -> bool {
    cat.is_extinct(u)
}

fn primes_of(m: i64) -> Vec<i64> {
    let mut ps = Vec::new();
    let mut r = m;
    let mut p = 2;
    while r > 1 {
        if r % p == 0 {
            ps.push(p);
            while r % p == 0 {
                r /= p;
            }
        }
        p += 1;
    }
    ps
}

fn rank_mod_p(vs: &[ResidueVector], p: i64) -> usize {
    let mut rows: Vec<[i64; 3]> = vs.iter().map(|v| [v[0].rem_euclid(p), v[1].rem_euclid(p), v[2].rem_euclid(p)]).collect();
    let mut r = 0;
    for c in 0..3 {
        let Some(piv) = (r..rows.len()).find(|&i| rows[i][c] != 0) else { continue };
        rows.swap(r, piv);
        let inv = (1..p).find(|k| (k * rows[r][c]) % p == 1).unwrap_or(1);
        for i in 0..rows.len() {
            if i != r && rows[i][c] != 0 {
                let f = rows[i][c] * inv % p;
                for k in 0..3 {
                    rows[i][k] = (rows[i][k] - f * rows[r][k]).rem_euclid(p);
                }
            }
        }
        r += 1;
    }
    r
}

/// Rank test: the residues lift to a primitive set of `ℤ³` iff their
/// reduction has full rank modulo every prime dividing `m`.
pub fn is_primitive_tuple(m: i64, tuple: &[ResidueVector]) -> bool {
    primes_of(m).into_iter().all(|p| rank_mod_p(tuple, p) == tuple.len())
}

fn all_residues(m: i64) -> Vec<ResidueVector> {
    let m3 = (m * m * m) as usize;
    (0..m3)
        .map(|i| {
            let i = i as i64;
            [i / (m * m), (i / m) % m, i % m]
        })
        .collect()
}

/// All `k`-tuples (`k ≤ 3`) of residues mod `m` that lift to primitive sets.
pub fn residue_primitive_tuples(m: i64, k: usize) -> Vec<Vec<ResidueVector>> {
    assert!((1..=3).contains(&k));
    let all = all_residues(m);
    let mut out: Vec<Vec<ResidueVector>> = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for t in &out {
            for v in &all {
                let mut t2 = t.clone();
                t2.push(*v);
                if is_primitive_tuple(m, &t2) {
                    next.push(t2);
                }
            }
        }
        out = next;
    }
    out
}

/// An exact ratio `good / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Density {
    pub good: u64,
    pub total: u64,
}

impl Density {
    pub fn value(&self) -> f64 {
        self.good as f64 / self.total as f64
    }
}

/// Reading of the `±l₁+l₂+l₃` clause in the triple condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterRule {
    /// Both `l₁+l₂+l₃` and `-l₁+l₂+l₃` must be non-extinct.
    NonExtinct,
    /// Both must be extinct.
    Extinct,
}

/// Residue tables for one rule at one modulus.
struct Tables {
    m: i64,
    size: usize,
    primes: Vec<i64>,
    ext: Vec<bool>,
    /// Ordered pairs that lift to primitive pairs.
    prim2: Vec<bool>,
    /// Ordered primitive pairs with `m·a + (m−1)·b` non-extinct for all `m`.
    good2: Vec<bool>,
}

impl Tables {
    fn new(m: i64, extinct: &(dyn Fn([i64; 3]) -> bool + Sync)) -> Tables {
        let all = all_residues(m);
        let size = all.len();
        let primes = primes_of(m);
        let ext: Vec<bool> = all.iter().map(|&x| extinct(x)).collect();
        let idx = |v: [i64; 3]| (v[0].rem_euclid(m) * m * m + v[1].rem_euclid(m) * m + v[2].rem_euclid(m)) as usize;
        let rows: Vec<(Vec<bool>, Vec<bool>)> = all
            .par_iter()
            .map(|&a| {
                let mut p = vec![false; size];
                let mut g = vec![false; size];
                for (j, &b) in all.iter().enumerate() {
                    if !primes.iter().all(|&q| rank_mod_p(&[a, b], q) == 2) {
                        continue;
                    }
                    p[j] = true;
                    g[j] = (0..m).all(|k| !ext[idx([k * a[0] + (k - 1) * b[0], k * a[1] + (k - 1) * b[1], k * a[2] + (k - 1) * b[2]])]);
                }
                (p, g)
            })
            .collect();
        let mut prim2 = Vec::with_capacity(size * size);
        let mut good2 = Vec::with_capacity(size * size);
        for (p, g) in rows {
            prim2.extend(p);
            good2.extend(g);
        }
        Tables { m, size, primes, ext, prim2, good2 }
    }

    #[inline]
    fn idx(&self, v: [i64; 3]) -> usize {
        let m = self.m;
        (v[0].rem_euclid(m) * m * m + v[1].rem_euclid(m) * m + v[2].rem_euclid(m)) as usize
    }

    #[inline]
    fn vec(&self, i: usize) -> [i64; 3] {
        let (i, m) = (i as i64, self.m);
        [i / (m * m), (i / m) % m, i % m]
    }

    fn pairs(&self) -> Density {
        let total = self.prim2.iter().filter(|&&b| b).count() as u64;
        let good = self.good2.iter().filter(|&&b| b).count() as u64;
        Density { good, total }
    }

    fn triples(&self, outer: OuterRule) -> Density {
        let n = self.size;
        let (good, total) = (0..n)
            .into_par_iter()
            .map(|ia| {
                let a = self.vec(ia);
                let (mut good, mut total) = (0u64, 0u64);
                for ib in 0..n {
                    if !self.prim2[ia * n + ib] {
                        continue;
                    }
                    let b = self.vec(ib);
                    let axb = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
                    let nab = [-a[0] - b[0], -a[1] - b[1], -a[2] - b[2]];
                    let inb = self.idx(nab);
                    let pair_b = self.good2[ia * n + inb] || self.good2[ib * n + inb];
                    for ic in 0..n {
                        let c = self.vec(ic);
                        let d = axb[0] * c[0] + axb[1] * c[1] + axb[2] * c[2];
                        if !self.primes.iter().all(|&p| d % p != 0) {
                            continue;
                        }
                        total += 1;
                        if !pair_b {
                            continue;
                        }
                        let e1 = self.ext[self.idx([a[0] + b[0] + c[0], a[1] + b[1] + c[1], a[2] + b[2] + c[2]])];
                        let e2 = self.ext[self.idx([b[0] + c[0] - a[0], b[1] + c[1] - a[1], b[2] + c[2] - a[2]])];
                        let outer_ok = match outer {
                            OuterRule::NonExtinct => !e1 && !e2,
                            OuterRule::Extinct => e1 && e2,
                        };
                        if !outer_ok {
                            continue;
                        }
                        let inc = self.idx([-a[0] - c[0], -a[1] - c[1], -a[2] - c[2]]);
                        if self.good2[ia * n + inc] || self.good2[ic * n + inc] {
                            good += 1;
                        }
                    }
                }
                (good, total)
            })
            .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
        Density { good, total }
    }
}

fn tables(cat: AbsenceCategory, m: i64) -> Tables {
    assert!(m % cat.modulus() == 0, "modulus must be a multiple of the rule's");
    let b = cat.basis();
    Tables::new(m, &move |x| cat.is_extinct(to_conventional(x, &b)))
}

/// Density of admissible pairs among primitive residue pairs.
pub fn pair_density(cat: AbsenceCategory) -> Density {
    pair_density_mod(cat, cat.modulus())
}

pub fn pair_density_mod(cat: AbsenceCategory, m: i64) -> Density {
    tables(cat, m).pairs()
}

/// Density of admissible ordered triples among primitive residue triples.
pub fn triple_density(cat: AbsenceCategory) -> Density {
    triple_density_with(cat, cat.modulus(), OuterRule::NonExtinct)
}

pub fn triple_density_with(cat: AbsenceCategory, m: i64, outer: OuterRule) -> Density {
    tables(cat, m).triples(outer)
}

/// Both densities for one category, sharing the pair tables.
pub fn densities(cat: AbsenceCategory) -> (Density, Density) {
    let t = tables(cat, cat.modulus());
    (t.pairs(), t.triples(OuterRule::NonExtinct))
}

/// Whether "non-extinct for all `m`" equals "non-extinct for seven
/// consecutive `m`" on every primitive pair, for an arbitrary rule on
/// residues mod `modulus` (primitive coordinates).
pub fn window_equivalence_for(modulus: i64, extinct: &(dyn Fn([i64; 3]) -> bool + Sync)) -> bool {
    let t = Tables::new(modulus, extinct);
    let n = t.size;
    let m = modulus;
    (0..n).into_par_iter().all(|ia| {
        let a = t.vec(ia);
        (0..n).all(|ib| {
            if !t.prim2[ia * n + ib] {
                return true;
            }
            let b = t.vec(ib);
            let ok: Vec<bool> = (0..m)
                .map(|k| !t.ext[t.idx([k * a[0] + (k - 1) * b[0], k * a[1] + (k - 1) * b[1], k * a[2] + (k - 1) * b[2]])])
                .collect();
            let windowed = (0..m).any(|k| (0..7).all(|d| ok[((k + d) % m) as usize]));
            windowed == t.good2[ia * n + ib]
        })
    })
}

pub fn window_equivalence(cat: AbsenceCategory) -> bool {
    let b = cat.basis();
    window_equivalence_for(cat.modulus(), &move |x| cat.is_extinct(to_conventional(x, &b)))
}
