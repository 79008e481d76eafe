//! Zone search and the 2D → 3D combination.
//!
//! A zone `({Q₁,Q₂},{Q₃,Q₄})` records four q-values satisfying the
//! parallelogram law `2(Q₁+Q₂) = Q₃+Q₄`, i.e. `|l₁|², |l₂|², |l₁±l₂|²` of a
//! 2D sublattice. Zones are scored by how far they extend along a chain of
//! the topograph, pruned, then paired on a shared `Q₁` to build 3×3 Gram
//! matrices of the reciprocal lattice.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::latmath::SymMat;
use crate::qformal::{PeakList, QSum};

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub pair_in: (QSum, QSum),
    pub pair_out: (QSum, QSum),
    pub score: Option<usize>,
}

fn ordered(a: QSum, b: QSum) -> (QSum, QSum) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Zone {
    pub fn new(q1: QSum, q2: QSum, q3: QSum, q4: QSum) -> Zone {
        Zone { pair_in: ordered(q1, q2), pair_out: ordered(q3, q4), score: None }
    }

    pub fn key(&self) -> (QSum, QSum, QSum, QSum) {
        (self.pair_in.0.clone(), self.pair_in.1.clone(), self.pair_out.0.clone(), self.pair_out.1.clone())
    }

    /// True when one of the inner pair is not an observed peak.
    pub fn is_synthesized(&self) -> bool {
        !(self.pair_in.0.is_atom() && self.pair_in.1.is_atom())
    }

    /// `[[Q₁, ½(Q₃−Q₁−Q₂)], [·, Q₂]]`.
    pub fn gram2(&self, peaks: &PeakList) -> SymMat {
        let (q1, q2) = (&self.pair_in.0, &self.pair_in.1);
        let off = self.pair_out.0.sub(q1).sub(q2).half().expect("coefficients stay on the 1/12 grid");
        SymMat::from_sums(2, vec![q1.clone(), off.clone(), off, q2.clone()], peaks)
    }

    /// `|val(2Q₁+2Q₂−Q₃−Q₄)|`.
    pub fn residual(&self, peaks: &PeakList) -> f64 {
        let lhs = self.pair_in.0.add(&self.pair_in.1).times(2);
        lhs.sub(&self.pair_out.0).sub(&self.pair_out.1).val(peaks).abs()
    }
}

/// A candidate 3D Gram matrix with the peaks that built it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub gram: SymMat,
    pub source: Vec<usize>,
}

/// Admission test for `({q_r,q_s},{q_t,q_u})`: the parallelogram law within
/// `c·min{2·Err(q_r+q_s), Err(q_t+q_u)}` and the triangle bounds
/// `(√q_r−√q_s)² ≤ q_t, q_u ≤ (√q_r+√q_s)²`.
pub fn parallelogram_admits(peaks: &PeakList, c: f64, r: usize, s: usize, t: usize, u: usize) -> bool {
    let (qr, qs, qt, qu) = (peaks.q(r), peaks.q(s), peaks.q(t), peaks.q(u));
    let (er, es, et, eu) = (peaks.e(r), peaks.e(s), peaks.e(t), peaks.e(u));
    let e_in = if r == s { 2.0 * er } else { (er * er + es * es).sqrt() };
    let e_out = if t == u { 2.0 * et } else { (et * et + eu * eu).sqrt() };
    let resid = (2.0 * (qr + qs) - (qt + qu)).abs();
    if resid > c * (2.0 * e_in).min(e_out) {
        return false;
    }
    let (a, b) = (qr.sqrt(), qs.sqrt());
    let (lo, hi) = ((a - b) * (a - b), (a + b) * (a + b));
    lo <= qt && qt <= hi && lo <= qu && qu <= hi
}

/// Every admitted zone, found by scanning a window of the sorted pair sums.
pub fn enumerate_parallelogram(peaks: &PeakList, c: f64) -> Vec<Zone> {
    let n = peaks.len();
    let mut sums: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(n * (n + 1) / 2);
    for r in 1..=n {
        for s in r..=n {
            let e = if r == s { 2.0 * peaks.e(r) } else { peaks.e(r).hypot(peaks.e(s)) };
            sums.push((peaks.q(r) + peaks.q(s), e, r, s));
        }
    }
    sums.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.2, x.3).cmp(&(y.2, y.3))));
    let mut out: Vec<(usize, usize, usize, usize)> = Vec::new();
    for &(v, e, r, s) in &sums {
        let slack = 1e-12 * v;
        let lo = 2.0 * v - 2.0 * c * e - slack;
        let hi = 2.0 * v + 2.0 * c * e + slack;
        let start = sums.partition_point(|x| x.0 < lo);
        for &(_, _, t, u) in sums[start..].iter().take_while(|x| x.0 <= hi) {
            if parallelogram_admits(peaks, c, r, s, t, u) {
                out.push((r, s, t, u));
            }
        }
    }
    out.sort_unstable();
    out.into_iter().map(|(r, s, t, u)| Zone::new(QSum::unit(r), QSum::unit(s), QSum::unit(t), QSum::unit(u))).collect()
}

/// A zone list with a lookup from formal identity to position.
#[derive(Debug, Clone, Default)]
pub struct ZoneSet {
    pub zones: Vec<Zone>,
    index: HashMap<(QSum, QSum, QSum, QSum), usize>,
}

impl ZoneSet {
    pub fn new(zones: Vec<Zone>) -> ZoneSet {
        let mut s = ZoneSet::default();
        for z in zones {
            s.insert(z);
        }
        s
    }

    /// Adds `z` unless an identical zone exists; returns whether it was new.
    pub fn insert(&mut self, z: Zone) -> bool {
        let k = z.key();
        if self.index.contains_key(&k) {
            return false;
        }
        self.index.insert(k, self.zones.len());
        self.zones.push(z);
        true
    }

    pub fn contains(&self, z: &Zone) -> bool {
        self.index.contains_key(&z.key())
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

/// One solution of the three-q relation `3q_r + q_t = 3q_s + q_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ThreeQ {
    pub r: usize,
    pub s: usize,
    pub t: usize,
    pub u: usize,
}

/// Quadruples satisfying the three-q relation within
/// `c·min{Err(3q_r+q_t), Err(3q_s+q_u)}` whose implied `l₁·l₂ =
/// (q_u−4q_r−q_s)/4` obeys Cauchy–Schwarz. Each relation is reported once,
/// with `r < s`.
pub fn three_q_relations(peaks: &PeakList, c: f64) -> Vec<ThreeQ> {
    let n = peaks.len();
    let mut sums: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(n * n);
    for r in 1..=n {
        for t in 1..=n {
            let e = if r == t { 4.0 * peaks.e(r) } else { (3.0 * peaks.e(r)).hypot(peaks.e(t)) };
            sums.push((3.0 * peaks.q(r) + peaks.q(t), e, r, t));
        }
    }
    sums.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.2, x.3).cmp(&(y.2, y.3))));
    let mut out = Vec::new();
    for &(v, e, r, t) in &sums {
        let slack = 1e-12 * v;
        let start = sums.partition_point(|x| x.0 < v - c * e - slack);
        for &(_, e2, s, u) in sums[start..].iter().take_while(|x| x.0 <= v + c * e + slack) {
            if r >= s {
                continue;
            }
            let resid = QSum::unit(r).times(3).add(&QSum::unit(t)).sub(&QSum::unit(s).times(3)).sub(&QSum::unit(u));
            if resid.val(peaks).abs() > c * e.min(e2) {
                continue;
            }
            let (qr, qs, qu) = (peaks.q(r), peaks.q(s), peaks.q(u));
            let x = (qu - 4.0 * qr - qs) / 4.0;
            if x * x < qr * qs {
                out.push(ThreeQ { r, s, t, u });
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// `q₋₁ = (−2q_r + q_s + q_u)/2`.
pub fn synthesized_q(rel: &ThreeQ) -> QSum {
    QSum::unit(rel.s).add(&QSum::unit(rel.u)).sub(&QSum::unit(rel.r).times(2)).half().expect("half-integer coefficients")
}

/// Adds the two zones implied by each three-q relation unless an observed
/// peak already plays the role of `q₋₁`. Returns the number inserted.
pub fn enumerate_three_q(peaks: &PeakList, c: f64, a2: &mut ZoneSet) -> usize {
    let rels = three_q_relations(peaks, c);
    // pair_out -> observed partners found next to a given inner element
    let mut by_out: HashMap<(QSum, QSum), Vec<(QSum, QSum)>> = HashMap::new();
    for z in &a2.zones {
        if !z.is_synthesized() {
            by_out.entry(z.pair_out.clone()).or_default().push(z.pair_in.clone());
        }
    }
    let observed_partner = |inner: usize, out: (usize, usize)| {
        let key = ordered(QSum::unit(out.0), QSum::unit(out.1));
        let me = QSum::unit(inner);
        by_out.get(&key).is_some_and(|v| v.iter().any(|(a, b)| *a == me || *b == me))
    };
    let mut added = 0;
    for rel in rels {
        if observed_partner(rel.r, (rel.s, rel.u)) || observed_partner(rel.s, (rel.r, rel.t)) {
            continue;
        }
        let q = synthesized_q(&rel);
        let z1 = Zone::new(q.clone(), QSum::unit(rel.r), QSum::unit(rel.s), QSum::unit(rel.u));
        let z2 = Zone::new(q, QSum::unit(rel.s), QSum::unit(rel.r), QSum::unit(rel.t));
        added += a2.insert(z1) as usize;
        added += a2.insert(z2) as usize;
    }
    added
}

/// Index of zones by their inner pair.
struct InnerIndex<'a> {
    zones: &'a [Zone],
    by_in: HashMap<(QSum, QSum), Vec<usize>>,
}

impl<'a> InnerIndex<'a> {
    fn new(zones: &'a [Zone]) -> Self {
        let mut by_in: HashMap<(QSum, QSum), Vec<usize>> = HashMap::new();
        for (i, z) in zones.iter().enumerate() {
            by_in.entry(z.pair_in.clone()).or_default().push(i);
        }
        InnerIndex { zones, by_in }
    }
}

/// Result of one subtopograph expansion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expansion {
    /// Zone positions, ascending.
    pub members: Vec<usize>,
    /// Parent → child links of the chosen subgraph.
    pub edges: Vec<(usize, usize)>,
}

fn expand_rec(
    ix: &InnerIndex<'_>,
    e: usize,
    r4: &QSum,
    visited: &mut HashSet<(usize, QSum)>,
) -> (Vec<usize>, Vec<(usize, usize)>) {
    let z = &ix.zones[e];
    let mut members = vec![e];
    let mut edges = Vec::new();
    let inner = [&z.pair_in.0, &z.pair_in.1];
    for (i, j) in [(0usize, 1usize), (1, 0)] {
        let (ri, rj) = (inner[i], inner[j]);
        if !rj.is_atom() {
            continue;
        }
        let Some(list) = ix.by_in.get(&ordered(ri.clone(), r4.clone())) else { continue };
        let mut best: (Vec<usize>, Vec<(usize, usize)>, usize) = (Vec::new(), Vec::new(), usize::MAX);
        for &k in list {
            let zk = &ix.zones[k];
            let q = if zk.pair_out.0 == *rj {
                &zk.pair_out.1
            } else if zk.pair_out.1 == *rj {
                &zk.pair_out.0
            } else {
                continue;
            };
            if !q.is_atom() || !visited.insert((k, q.clone())) {
                continue;
            }
            let (m, ed) = expand_rec(ix, k, q, visited);
            if m.len() > best.0.len() {
                best = (m, ed, k);
            }
        }
        if best.2 != usize::MAX {
            edges.push((e, best.2));
            members.extend(best.0);
            edges.extend(best.1);
        }
    }
    members.sort_unstable();
    members.dedup();
    (members, edges)
}

/// Expands from `e = ({R₁,R₂},{R₃,R₄})` oriented so that `r4` is the
/// element used to continue the chain.
pub fn expand_subtopograph(zones: &[Zone], e: usize, r4_first: bool) -> Expansion {
    let ix = InnerIndex::new(zones);
    expand_with(&ix, e, r4_first)
}

fn expand_with(ix: &InnerIndex<'_>, e: usize, r4_first: bool) -> Expansion {
    let z = &ix.zones[e];
    let r4 = if r4_first { &z.pair_out.0 } else { &z.pair_out.1 };
    let mut visited = HashSet::new();
    visited.insert((e, r4.clone()));
    let (members, edges) = expand_rec(ix, e, r4, &mut visited);
    Expansion { members, edges }
}

/// Scores every zone: `C(e)` is the size of the union of the two oriented
/// expansions, and every member of that union receives the same score.
pub fn score_zones(zones: &mut [Zone]) {
    let scores: Vec<Option<usize>> = {
        let ix = InnerIndex::new(zones);
        let mut scores: Vec<Option<usize>> = vec![None; zones.len()];
        for e in 0..zones.len() {
            if scores[e].is_some() {
                continue;
            }
            let mut u = expand_with(&ix, e, false).members;
            u.extend(expand_with(&ix, e, true).members);
            u.sort_unstable();
            u.dedup();
            let c = u.len();
            for m in u {
                if scores[m].is_none() {
                    scores[m] = Some(c);
                }
            }
        }
        scores
    };
    for (z, s) in zones.iter_mut().zip(scores) {
        z.score = s;
    }
}

/// `C(e)` of one zone, computed from scratch.
pub fn zone_score(zones: &[Zone], e: usize) -> usize {
    let ix = InnerIndex::new(zones);
    let mut u = expand_with(&ix, e, false).members;
    u.extend(expand_with(&ix, e, true).members);
    u.sort_unstable();
    u.dedup();
    u.len()
}

/// Keeps the `n_zone` best zones: higher score first, then smaller
/// `det S(e)`, then formal order.
pub fn prune_zones(zones: Vec<Zone>, peaks: &PeakList, n_zone: usize) -> Vec<Zone> {
    let mut keyed: Vec<(usize, f64, Zone)> = zones
        .into_iter()
        .map(|z| {
            let d = z.gram2(peaks).det();
            (z.score.unwrap_or(1), d, z)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then_with(|| a.2.key().cmp(&b.2.key())));
    keyed.truncate(n_zone);
    keyed.into_iter().map(|(_, _, z)| z).collect()
}

/// An ordered zone `(Q₁,Q₂,Q₃,Q₄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quad {
    pub q: [QSum; 4],
    pub zone: usize,
}

/// The four orderings of every zone (fewer when `Q₁ = Q₂` or `Q₃ = Q₄`).
pub fn quads(zones: &[Zone]) -> Vec<Quad> {
    let mut out = Vec::new();
    for (k, z) in zones.iter().enumerate() {
        let (a, b) = &z.pair_in;
        let (c, d) = &z.pair_out;
        let mut seen: Vec<[QSum; 4]> = Vec::new();
        for q in [
            [a.clone(), b.clone(), c.clone(), d.clone()],
            [b.clone(), a.clone(), c.clone(), d.clone()],
            [a.clone(), b.clone(), d.clone(), c.clone()],
            [b.clone(), a.clone(), d.clone(), c.clone()],
        ] {
            if !seen.contains(&q) {
                seen.push(q.clone());
                out.push(Quad { q, zone: k });
            }
        }
    }
    out
}

struct NumQuad {
    q: [f64; 4],
    pos: usize,
}

/// Pairs quads sharing `Q₁` and closes each pair with an observed `q_k =
/// |l₁+l₂+l₃|²`, keeping positive-definite results with
/// `det_min ≤ det S ≤ det_max`.
pub fn combine_to_3d(zones: &[Zone], peaks: &PeakList, c: f64, det_min: f64, det_max: f64) -> Vec<Candidate> {
    let mut out = Vec::new();
    combine_to_3d_chunked(zones, peaks, c, det_min, det_max, usize::MAX, |chunk| out.extend(chunk));
    out
}

/// Same candidates in the same order as [`combine_to_3d`], handed to `f` in
/// chunks of at most `chunk` so the full list is never held at once.
pub fn combine_to_3d_chunked(
    zones: &[Zone],
    peaks: &PeakList,
    c: f64,
    det_min: f64,
    det_max: f64,
    chunk: usize,
    mut f: impl FnMut(Vec<Candidate>),
) {
    let qs = quads(zones);
    let num: Vec<NumQuad> = qs
        .iter()
        .enumerate()
        .map(|(pos, q)| NumQuad { q: [0, 1, 2, 3].map(|i| q.q[i].val(peaks)), pos })
        .collect();
    // groups of quads whose Q₁ match
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut by_atom: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut synth: Vec<usize> = Vec::new();
    for (i, q) in qs.iter().enumerate() {
        match q.q[0].as_atom() {
            Some(a) => by_atom.entry(a).or_default().push(i),
            None => synth.push(i),
        }
    }
    let mut atoms: Vec<usize> = by_atom.keys().copied().collect();
    atoms.sort_unstable();
    for a in atoms {
        let g = &by_atom[&a];
        let mut pairs = Vec::new();
        for (x, &i) in g.iter().enumerate() {
            for &j in &g[x + 1..] {
                if qs[i].zone != qs[j].zone {
                    pairs.push((i, j));
                }
            }
        }
        groups.push(pairs);
    }
    synth.sort_by(|&i, &j| num[i].q[0].total_cmp(&num[j].q[0]).then(i.cmp(&j)));
    let max_err = synth.iter().map(|&i| qs[i].q[0].err(peaks)).fold(0.0, f64::max);
    let mut spairs = Vec::new();
    for (x, &i) in synth.iter().enumerate() {
        let ei = qs[i].q[0].err(peaks);
        for &j in &synth[x + 1..] {
            if num[j].q[0] - num[i].q[0] > c * (ei + max_err) * (1.0 + 1e-12) {
                break;
            }
            if qs[i].zone == qs[j].zone {
                continue;
            }
            let d = qs[i].q[0].sub(&qs[j].q[0]);
            if d.val(peaks).abs() <= c * d.err(peaks) {
                spairs.push(if i < j { (i, j) } else { (j, i) });
            }
        }
    }
    spairs.sort_unstable();
    groups.push(spairs);

    let values = peaks.values();
    let found: Vec<Vec<(usize, usize, usize)>> = groups
        .par_iter()
        .map(|pairs| {
            let mut out = Vec::new();
            for &(i, j) in pairs {
                let (a, b) = (&num[i], &num[j]);
                let s11 = a.q[0];
                let s22 = a.q[1];
                let s33 = b.q[1];
                let s12 = 0.5 * (a.q[2] - a.q[0] - a.q[1]);
                let s13 = 0.5 * (b.q[2] - a.q[0] - b.q[1]);
                if s11 * s22 - s12 * s12 <= 0.0 || s11 * s33 - s13 * s13 <= 0.0 {
                    continue;
                }
                // det as a concave quadratic in s23
                let bq = s12 * s13;
                let c0 = s11 * s22 * s33 - s12 * s12 * s33 - s13 * s13 * s22;
                let disc = bq * bq + s11 * (c0 - det_min);
                if disc < 0.0 {
                    continue;
                }
                let r = disc.sqrt();
                let (x_lo, x_hi) = ((bq - r) / s11, (bq + r) / s11);
                let base = a.q[2] + b.q[2] - a.q[0];
                let (lo, hi) = (2.0 * x_lo + base, 2.0 * x_hi + base);
                let pad = 1e-9 * hi.abs().max(1.0);
                let start = values.partition_point(|&v| v < lo - pad);
                for (off, &qk) in values[start..].iter().enumerate() {
                    if qk > hi + pad {
                        break;
                    }
                    let s23 = 0.5 * (qk - base);
                    let det = c0 - s11 * s23 * s23 + 2.0 * bq * s23;
                    if det > 0.0 && det >= det_min && det <= det_max {
                        out.push((a.pos, b.pos, start + off + 1));
                    }
                }
            }
            out
        })
        .collect();
    let triples: Vec<(usize, usize, usize)> = found.into_iter().flatten().collect();
    for part in triples.chunks(chunk.max(1)) {
        f(part.par_iter().filter_map(|&(i, j, k)| build_candidate(&qs, peaks, i, j, k)).collect());
    }
}

fn build_candidate(qs: &[Quad], peaks: &PeakList, i: usize, j: usize, k: usize) -> Option<Candidate> {
    let (a, b) = (&qs[i].q, &qs[j].q);
    let half = |s: QSum| s.half().expect("coefficients stay on the 1/12 grid");
    let s12 = half(a[2].sub(&a[0]).sub(&a[1]));
    let s13 = half(b[2].sub(&a[0]).sub(&b[1]));
    let s23 = half(a[0].sub(&a[2]).sub(&b[2]).add(&QSum::unit(k)));
    let sums = vec![
        a[0].clone(),
        s12.clone(),
        s13.clone(),
        s12,
        a[1].clone(),
        s23.clone(),
        s13,
        s23,
        b[1].clone(),
    ];
    let gram = SymMat::from_sums(3, sums, peaks);
    let mut source: Vec<usize> = gram.sums().unwrap().iter().flat_map(|s| s.terms()).collect();
    source.sort_unstable();
    source.dedup();
    gram.is_pos_def().then_some(Candidate { gram, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_canonical_order() {
        let z1 = Zone::new(QSum::unit(2), QSum::unit(1), QSum::unit(4), QSum::unit(3));
        let z2 = Zone::new(QSum::unit(1), QSum::unit(2), QSum::unit(3), QSum::unit(4));
        assert_eq!(z1, z2);
    }
}
