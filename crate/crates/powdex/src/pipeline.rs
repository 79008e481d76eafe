//! End-to-end indexing: parameters, zone search, 3D candidates, reduction,
//! merit, classification and ranking.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::enumerate::{combine_to_3d_chunked, enumerate_parallelogram, enumerate_three_q, prune_zones, score_zones, Zone, ZoneSet};
use crate::latmath::{
    auto_volume_bounds, cell_from_gram, enumerate_reps, isometries, niggli_reduce, IntMat, LatError, LatticeParams, SymMat,
};
use crate::qformal::PeakList;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("need at least two peaks")]
    TooFewPeaks,
    #[error("invalid parameter: {0}")]
    BadParam(&'static str),
    #[error(transparent)]
    Lattice(#[from] LatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceType {
    Lab,
    Synchrotron,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexingParams {
    /// Zero shift in degrees, applied when q-values come from 2θ.
    pub delta_two_theta: f64,
    pub c: f64,
    pub n_peak: usize,
    pub n_zone: usize,
    pub n_sol: usize,
    pub vol_min: f64,
    pub vol_max: f64,
    /// Minimum interatomic distance in Å.
    pub d: f64,
    pub prune: bool,
}

impl IndexingParams {
    /// `(det S_min, det S_max) = (Vol_max⁻², Vol_min⁻²)` for the reciprocal
    /// Gram matrix.
    pub fn det_window(&self) -> (f64, f64) {
        (self.vol_max.powi(-2), self.vol_min.powi(-2))
    }

    /// Number of peaks used by the figure of merit.
    pub fn merit_n(&self) -> usize {
        self.n_peak.min(20)
    }

    fn check(&self) -> Result<(), IndexError> {
        if self.c.is_nan() || self.c <= 0.0 {
            return Err(IndexError::BadParam("c"));
        }
        if self.n_peak < 2 {
            return Err(IndexError::BadParam("n_peak"));
        }
        if self.n_zone == 0 || self.n_sol == 0 {
            return Err(IndexError::BadParam("n_zone/n_sol"));
        }
        if !(self.vol_min > 0.0 && self.vol_max >= self.vol_min) {
            return Err(IndexError::BadParam("volume bounds"));
        }
        Ok(())
    }
}

pub fn n_zone_for(n_peak: usize) -> usize {
    n_peak * (n_peak + 1) / 3
}

pub fn n_sol_for(n_zone: usize) -> usize {
    n_zone.saturating_mul(n_zone).min(64000)
}

/// AUTO parameters for a peak list.
pub fn auto_params(peaks: &PeakList, source: SourceType) -> Result<IndexingParams, IndexError> {
    auto_params_with_d(peaks, source, 2.0)
}

pub fn auto_params_with_d(peaks: &PeakList, source: SourceType, d: f64) -> Result<IndexingParams, IndexError> {
    if peaks.len() < 2 {
        return Err(IndexError::TooFewPeaks);
    }
    let q_lim = 10.0 / (d * d);
    let below = peaks.iter().filter(|p| p.q_val < q_lim).count();
    let n_peak = below.min(48).max(2.min(peaks.len()));
    let vals: Vec<f64> = peaks.values().into_iter().take(n_peak).collect();
    let (vol_min, vol_max) = auto_volume_bounds(&vals)?;
    let n_zone = n_zone_for(n_peak);
    Ok(IndexingParams {
        delta_two_theta: 0.0,
        c: match source {
            SourceType::Lab => 1.5,
            SourceType::Synchrotron => 1.0,
        },
        n_peak,
        n_zone,
        n_sol: n_sol_for(n_zone),
        vol_min,
        vol_max,
        d,
        prune: true,
    })
}

/// Exact fits have `⟨|Δq|⟩` floored at `q_n / (2·10⁶)`.
pub const MERIT_CAP: f64 = 1e6;

/// de Wolff `M_n = q_n / (2 ⟨|Δq|⟩ N_calc)` with `N_calc` the number of
/// distinct calculated values `≤ q_n`. Returns `(M_n, N_calc)`.
pub fn figure_of_merit(s: &SymMat, peaks: &PeakList, n: usize) -> Result<(f64, usize), LatError> {
    let n = n.min(peaks.len());
    if n == 0 {
        return Ok((0.0, 0));
    }
    let qn = peaks.q(n);
    let calc: Vec<f64> = enumerate_reps(s, qn * 1.25)?.into_iter().map(|x| x.0).collect();
    let n_calc = calc.iter().filter(|&&v| v <= qn * (1.0 + 1e-9)).count();
    if n_calc == 0 {
        return Ok((0.0, 0));
    }
    let mut total = 0.0;
    for p in peaks.iter().take(n) {
        let k = calc.partition_point(|&v| v < p.q_val);
        let mut best = f64::INFINITY;
        if k < calc.len() {
            best = best.min(calc[k] - p.q_val);
        }
        if k > 0 {
            best = best.min(p.q_val - calc[k - 1]);
        }
        total += best;
    }
    let mean = (total / n as f64).max(qn / (2.0 * MERIT_CAP));
    Ok(((qn / (2.0 * mean * n_calc as f64)).min(MERIT_CAP), n_calc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BravaisType {
    TriclinicP,
    MonoclinicP,
    MonoclinicC,
    OrthorhombicP,
    OrthorhombicC,
    OrthorhombicI,
    OrthorhombicF,
    TetragonalP,
    TetragonalI,
    Rhombohedral,
    HexagonalP,
    CubicP,
    CubicI,
    CubicF,
}

impl BravaisType {
    pub const ALL: [BravaisType; 14] = [
        BravaisType::TriclinicP,
        BravaisType::MonoclinicP,
        BravaisType::MonoclinicC,
        BravaisType::OrthorhombicP,
        BravaisType::OrthorhombicC,
        BravaisType::OrthorhombicI,
        BravaisType::OrthorhombicF,
        BravaisType::TetragonalP,
        BravaisType::TetragonalI,
        BravaisType::Rhombohedral,
        BravaisType::HexagonalP,
        BravaisType::CubicP,
        BravaisType::CubicI,
        BravaisType::CubicF,
    ];

    pub fn symbol(self) -> &'static str {
        use BravaisType::*;
        match self {
            TriclinicP => "aP",
            MonoclinicP => "mP",
            MonoclinicC => "mC",
            OrthorhombicP => "oP",
            OrthorhombicC => "oC",
            OrthorhombicI => "oI",
            OrthorhombicF => "oF",
            TetragonalP => "tP",
            TetragonalI => "tI",
            Rhombohedral => "hR",
            HexagonalP => "hP",
            CubicP => "cP",
            CubicI => "cI",
            CubicF => "cF",
        }
    }

    pub fn name(self) -> &'static str {
        use BravaisType::*;
        match self {
            TriclinicP => "triclinic P",
            MonoclinicP => "monoclinic P",
            MonoclinicC => "monoclinic C",
            OrthorhombicP => "orthorhombic P",
            OrthorhombicC => "orthorhombic C",
            OrthorhombicI => "orthorhombic I",
            OrthorhombicF => "orthorhombic F",
            TetragonalP => "tetragonal P",
            TetragonalI => "tetragonal I",
            Rhombohedral => "rhombohedral",
            HexagonalP => "hexagonal P",
            CubicP => "cubic P",
            CubicI => "cubic I",
            CubicF => "cubic F",
        }
    }
}

impl fmt::Display for BravaisType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for BravaisType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        BravaisType::ALL.into_iter().find(|b| b.symbol() == s.trim()).ok_or_else(|| format!("unknown Bravais type '{s}'"))
    }
}

fn det3(t: &[[i64; 3]; 3]) -> i64 {
    t[0][0] * (t[1][1] * t[2][2] - t[1][2] * t[2][1]) - t[0][1] * (t[1][0] * t[2][2] - t[1][2] * t[2][0])
        + t[0][2] * (t[1][0] * t[2][1] - t[1][1] * t[2][0])
}

/// Whether the centering of the conventional cell `t` (rows in primitive
/// coordinates, `|det| = 2`) is body-centring.
fn is_body_centred(t: &[[i64; 3]; 3]) -> bool {
    let d = det3(t);
    // rows of adj(t)/d give the primitive vectors in conventional coordinates
    let adj = |i: usize, j: usize| {
        let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
        let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
        t[r0][c0] * t[r1][c1] - t[r0][c1] * t[r1][c0]
    };
    (0..3).any(|i| (0..3).all(|k| adj(i, k).rem_euclid(d.abs()) != 0))
}

/// Lattice type of a real-space Gram matrix: the order of its automorphism
/// group (entries in `[−2, 2]`) gives the crystal system, the smallest
/// conventional cell gives the centering.
pub fn bravais_classify(s: &SymMat, tol: f64) -> BravaisType {
    use BravaisType::*;
    if s.n() != 3 || !s.is_pos_def() {
        return TriclinicP;
    }
    let order = isometries(s, s, 2, tol, 100).len();
    let system = match order {
        48 => 7,
        24 => 6,
        12 => 5,
        16 => 4,
        8 => 3,
        4 => 2,
        _ => return TriclinicP,
    };
    match system {
        6 => return HexagonalP,
        5 => return Rhombohedral,
        _ => {}
    }
    let mut vecs: Vec<([i64; 3], f64)> = Vec::new();
    for x in -2i64..=2 {
        for y in -2i64..=2 {
            for z in -2i64..=2 {
                let v = [x, y, z];
                let first = v.iter().find(|&&c| c != 0);
                if matches!(first, Some(&c) if c > 0) {
                    vecs.push((v, s.quad(&v)));
                }
            }
        }
    }
    let orth = |a: &([i64; 3], f64), b: &([i64; 3], f64)| s.dot(&a.0, &b.0).abs() <= tol * (a.1 * b.1).sqrt();
    let eq = |x: f64, y: f64| (x - y).abs() <= tol * x.max(y);
    let mut best: Option<(i64, bool)> = None;
    for (i, a) in vecs.iter().enumerate() {
        for (j, b) in vecs.iter().enumerate() {
            if j == i || !orth(a, b) {
                continue;
            }
            for (k, c) in vecs.iter().enumerate() {
                if k == i || k == j || !orth(b, c) {
                    continue;
                }
                let shape = match system {
                    7 => orth(a, c) && eq(a.1, b.1) && eq(b.1, c.1),
                    4 => orth(a, c) && eq(a.1, b.1),
                    3 => orth(a, c),
                    // unique axis b, perpendicular to a and c
                    _ => orth(a, b),
                };
                if !shape {
                    continue;
                }
                let t = [a.0, b.0, c.0];
                let d = det3(&t).abs();
                if d == 0 || d > 4 || d == 3 {
                    continue;
                }
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, d == 2 && is_body_centred(&t)));
                }
            }
        }
    }
    let Some((d, body)) = best else { return TriclinicP };
    match (system, d, body) {
        (7, 1, _) => CubicP,
        (7, 2, _) => CubicI,
        (7, _, _) => CubicF,
        (4, 1, _) => TetragonalP,
        (4, _, _) => TetragonalI,
        (3, 1, _) => OrthorhombicP,
        (3, 2, true) => OrthorhombicI,
        (3, 2, false) => OrthorhombicC,
        (3, _, _) => OrthorhombicF,
        (2, 1, _) => MonoclinicP,
        (2, _, _) => MonoclinicC,
        _ => TriclinicP,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Niggli-reduced reciprocal Gram matrix, with provenance sums.
    pub gram: SymMat,
    /// Maps the combined basis to the reduced one.
    pub transform: IntMat,
    /// Reduced real-space cell.
    pub cell: LatticeParams,
    pub volume: f64,
    pub merit: f64,
    pub n_calc: usize,
    pub bravais: BravaisType,
    pub source: Vec<usize>,
}

impl Solution {
    /// Niggli-reduced real-space Gram matrix.
    pub fn real_gram(&self) -> Result<SymMat, LatError> {
        Ok(niggli_reduce(&self.gram.without_extras().inverse()?, 1e-9)?.0)
    }

    pub fn det(&self) -> f64 {
        self.gram.det()
    }
}

/// Niggli cell of the real lattice for a reciprocal Gram matrix.
pub fn real_niggli(recip: &SymMat) -> Result<SymMat, LatError> {
    Ok(niggli_reduce(&recip.without_extras().inverse()?, 1e-9)?.0)
}

fn lex_cmp(a: &SymMat, b: &SymMat) -> Ordering {
    let key = |s: &SymMat| [s.get(0, 0), s.get(1, 1), s.get(2, 2), s.get(1, 2), s.get(0, 2), s.get(0, 1)];
    let (x, y) = (key(a), key(b));
    x.iter().zip(&y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

const ENTRIES: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// A reduced form laid out for fast comparison.
struct Flat {
    v: [f64; 6],
    e: [f64; 6],
    scale: f64,
}

impl Flat {
    fn new(g: &SymMat) -> Self {
        Flat { v: ENTRIES.map(|(i, j)| g.get(i, j)), e: ENTRIES.map(|(i, j)| g.error(i, j)), scale: g.max_abs() }
    }

    fn e_max(&self) -> f64 {
        self.e.iter().copied().fold(0.0, f64::max)
    }

    /// Entrywise agreement within `max(c·combined error, 1e-6·scale)`.
    fn same(&self, o: &Flat, c: f64) -> bool {
        let floor = 1e-6 * self.scale.max(o.scale);
        (0..6).all(|k| {
            let d = (self.v[k] - o.v[k]).abs();
            d <= floor || d * d <= c * c * (self.e[k] * self.e[k] + o.e[k] * o.e[k])
        })
    }
}

fn quantize(g: &SymMat, u: f64) -> [i64; 6] {
    ENTRIES.map(|(i, j)| (g.get(i, j) / u).round() as i64)
}

const LEAF: usize = 8;
const NONE: u32 = u32::MAX;

struct KdNode {
    lo: [f64; 6],
    hi: [f64; 6],
    start: u32,
    end: u32,
    left: u32,
    right: u32,
    parent: u32,
    /// Kept forms below this node.
    kept: u32,
}

/// Static k-d tree over one group of forms. Lookups only visit subtrees
/// holding kept forms.
struct KdTree {
    idx: Vec<usize>,
    nodes: Vec<KdNode>,
    /// Leaf holding each member.
    leaf: HashMap<usize, u32>,
    /// Largest error of each entry over the members.
    e_max: [f64; 6],
}

impl KdTree {
    fn build(members: Vec<usize>, flat: &[Flat]) -> Self {
        let mut e_max = [0.0f64; 6];
        for &j in &members {
            for d in 0..6 {
                e_max[d] = e_max[d].max(flat[j].e[d]);
            }
        }
        let mut t = KdTree { idx: members, nodes: Vec::new(), leaf: HashMap::new(), e_max };
        if !t.idx.is_empty() {
            t.split(0, t.idx.len(), NONE, flat);
        }
        t
    }

    fn split(&mut self, start: usize, end: usize, parent: u32, flat: &[Flat]) -> u32 {
        let mut lo = [f64::INFINITY; 6];
        let mut hi = [f64::NEG_INFINITY; 6];
        for &j in &self.idx[start..end] {
            for d in 0..6 {
                lo[d] = lo[d].min(flat[j].v[d]);
                hi[d] = hi[d].max(flat[j].v[d]);
            }
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(KdNode { lo, hi, start: start as u32, end: end as u32, left: NONE, right: NONE, parent, kept: 0 });
        if end - start <= LEAF {
            for &j in &self.idx[start..end] {
                self.leaf.insert(j, id);
            }
            return id;
        }
        let dim = (0..6).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = (start + end) / 2;
        self.idx[start..end].select_nth_unstable_by(mid - start, |&a, &b| flat[a].v[dim].total_cmp(&flat[b].v[dim]));
        let l = self.split(start, mid, id, flat);
        let r = self.split(mid, end, id, flat);
        let node = &mut self.nodes[id as usize];
        node.left = l;
        node.right = r;
        id
    }

    fn mark_kept(&mut self, j: usize) {
        let mut n = self.leaf[&j];
        while n != NONE {
            let node = &mut self.nodes[n as usize];
            node.kept += 1;
            n = node.parent;
        }
    }

    fn any_match(&self, f: &Flat, flat: &[Flat], keep: &[bool], c: f64, slack: f64) -> bool {
        if self.nodes.is_empty() || self.nodes[0].kept == 0 {
            return false;
        }
        let h: [f64; 6] = std::array::from_fn(|d| c * (f.e[d] + self.e_max[d]) + slack);
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.kept == 0 || (0..6).any(|d| f.v[d] + h[d] < node.lo[d] || f.v[d] - h[d] > node.hi[d]) {
                continue;
            }
            if node.left == NONE {
                let members = &self.idx[node.start as usize..node.end as usize];
                if members.iter().any(|&j| keep[j] && flat[j].same(f, c)) {
                    return true;
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        false
    }
}

/// Greedy duplicate removal in input order. Forms are grouped by the size
/// of their largest error, one k-d tree per group, so that a lookup box
/// follows the errors actually involved.
fn dedup_mask(grams: &[&SymMat], c: f64) -> Vec<bool> {
    let n = grams.len();
    let mut keep = vec![false; n];
    if n == 0 {
        return keep;
    }
    let flat: Vec<Flat> = grams.iter().map(|g| Flat::new(g)).collect();
    let s_max = flat.iter().map(|f| f.scale).fold(0.0, f64::max);
    let slack = 1e-6 * s_max;
    let mut pos: Vec<f64> = flat.iter().map(Flat::e_max).filter(|&e| e > 0.0).collect();
    pos.sort_by(f64::total_cmp);
    let e0 = if pos.is_empty() { f64::MIN_POSITIVE } else { pos[0].max(pos[pos.len() / 2] / 4.0) };
    let class_of = |e: f64| if e <= e0 { 0 } else { (e / e0).log2().ceil() as usize };
    let class: Vec<usize> = flat.iter().map(|f| class_of(f.e_max())).collect();
    let n_class = class.iter().copied().max().unwrap_or(0) + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_class];
    for (i, &k) in class.iter().enumerate() {
        members[k].push(i);
    }
    let mut trees: Vec<KdTree> = members.into_iter().map(|m| KdTree::build(m, &flat)).collect();
    // near-identical forms short-circuit the lookup
    let mut exact: HashSet<[i64; 6]> = HashSet::new();
    let u = 1e-9 * flat.iter().map(|f| f.scale).fold(f64::INFINITY, f64::min);
    for (i, g) in grams.iter().enumerate() {
        let key = quantize(g, u);
        if exact.contains(&key) {
            continue;
        }
        if trees.iter().any(|t| t.any_match(&flat[i], &flat, &keep, c, slack)) {
            continue;
        }
        keep[i] = true;
        exact.insert(key);
        trees[class[i]].mark_kept(i);
    }
    keep
}

/// Merges duplicates of reduced Gram matrices, keeping the first of each
/// group. Input order is preserved.
pub fn dedup_grams(grams: Vec<(SymMat, IntMat, Vec<usize>)>, c: f64) -> Vec<(SymMat, IntMat, Vec<usize>)> {
    let keep = dedup_mask(&grams.iter().map(|g| &g.0).collect::<Vec<_>>(), c);
    grams.into_iter().zip(keep).filter(|(_, k)| *k).map(|(g, _)| g).collect()
}

fn merit_order(a: &Solution, b: &Solution) -> Ordering {
    b.merit.total_cmp(&a.merit).then_with(|| lex_cmp(&a.gram, &b.gram))
}

/// Merges duplicates, keeping the best merit of each group, caps the count
/// at `n_sol` by dropping the smallest volumes, then orders by merit (ties
/// by reduced entries).
pub fn dedup_and_rank(solutions: Vec<Solution>, n_sol: usize, c: f64) -> Vec<Solution> {
    cap_and_sort(dedup_best(solutions, c), n_sol)
}

fn dedup_best(mut solutions: Vec<Solution>, c: f64) -> Vec<Solution> {
    solutions.sort_by(merit_order);
    let keep = dedup_mask(&solutions.iter().map(|s| &s.gram).collect::<Vec<_>>(), c);
    solutions.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect()
}

fn cap_and_sort(mut out: Vec<Solution>, n_sol: usize) -> Vec<Solution> {
    if out.len() > n_sol {
        out.sort_by(|a, b| b.volume.total_cmp(&a.volume).then_with(|| lex_cmp(&a.gram, &b.gram)));
        out.truncate(n_sol);
    }
    out.sort_by(merit_order);
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexStats {
    pub n_peak: usize,
    pub zones_parallelogram: usize,
    pub zones_three_q: usize,
    pub zones_kept: usize,
    pub candidates: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexReport {
    pub solutions: Vec<Solution>,
    pub stats: IndexStats,
    pub params: IndexingParams,
}

/// Zone search through scoring and pruning.
pub fn search_zones(peaks: &PeakList, params: &IndexingParams) -> (Vec<Zone>, IndexStats) {
    let mut stats = IndexStats { n_peak: peaks.len(), ..Default::default() };
    let mut set = ZoneSet::new(enumerate_parallelogram(peaks, params.c));
    stats.zones_parallelogram = set.len();
    stats.zones_three_q = enumerate_three_q(peaks, params.c, &mut set);
    let mut zones = set.zones;
    if params.prune {
        score_zones(&mut zones);
        zones = prune_zones(zones, peaks, params.n_zone);
    }
    stats.zones_kept = zones.len();
    (zones, stats)
}

/// Relative tolerance for symmetry tests on a solution.
fn symmetry_tol(g: &SymMat) -> f64 {
    let rel = (0..3).map(|i| g.error(i, i) / g.get(i, i)).fold(0.0, f64::max);
    (4.0 * rel).clamp(1e-6, 1e-2)
}

const CHUNK: usize = 1 << 16;

/// Runs the whole search on the first `n_peak` peaks.
pub fn index(peaks: &PeakList, params: &IndexingParams) -> Result<IndexReport, IndexError> {
    params.check()?;
    if peaks.len() < 2 {
        return Err(IndexError::TooFewPeaks);
    }
    let p = peaks.truncated(params.n_peak);
    let (zones, mut stats) = search_zones(&p, params);
    let (dmin, dmax) = params.det_window();

    // identical reductions are common; drop them before the merit pass
    let mut seen: HashSet<[i64; 6]> = HashSet::new();
    let mut reduced: Vec<(SymMat, IntMat, Vec<usize>)> = Vec::new();
    combine_to_3d_chunked(&zones, &p, params.c, dmin, dmax, CHUNK, |cands| {
        stats.candidates += cands.len();
        let red: Vec<_> = cands
            .into_par_iter()
            .filter_map(|cand| niggli_reduce(&cand.gram, 1e-9).ok().map(|(r, g)| (r, g, cand.source)))
            .collect();
        for (mut r, g, source) in red {
            if !seen.insert(quantize(&r, 1e-12 * r.max_abs())) {
                continue;
            }
            r.refresh_errors(&p);
            reduced.push((r, g, source));
        }
    });

    let n = params.merit_n();
    let sols: Vec<Solution> = reduced
        .into_par_iter()
        .filter_map(|(gram, transform, source)| {
            let (merit, n_calc) = figure_of_merit(&gram, &p, n).ok()?;
            let real = real_niggli(&gram).ok()?;
            let cell = cell_from_gram(&real).ok()?;
            let volume = real.det().sqrt();
            Some(Solution { gram, transform, cell, volume, merit, n_calc, bravais: BravaisType::TriclinicP, source })
        })
        .collect();
    let sols = dedup_best(sols, params.c);
    stats.unique = sols.len();
    let mut sols = cap_and_sort(sols, params.n_sol);
    for s in &mut sols {
        if let Ok(real) = real_niggli(&s.gram) {
            s.bravais = bravais_classify(&real, symmetry_tol(&s.gram));
        }
    }
    Ok(IndexReport { solutions: sols, stats, params: params.clone() })
}
