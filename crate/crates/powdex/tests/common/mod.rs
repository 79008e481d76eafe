//! Brute-force oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use powdex::enumerate::Zone;
use powdex::latmath::{for_each_short_vector, voronoi_vector_classes, IntMat, SymMat};
use powdex::synth::{qlist_plain, random_cell, reciprocal_gram};
use powdex::topograph::Superbase;
use powdex::{PeakList, QSum};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random positive definite matrix `L Lᵀ` of rank `n ≤ 4`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMat {
    let mut l = [[0.0; 4]; 4];
    for i in 0..n {
        l[i][i] = rng.random_range(1.0..3.0);
        for j in 0..i {
            l[i][j] = rng.random_range(-2.0..2.0);
        }
    }
    SymMat::from_fn(n, |i, j| (0..n).map(|k| l[i][k] * l[j][k]).sum())
}

pub fn random_unimodular(rng: &mut ChaCha8Rng, steps: usize) -> IntMat {
    let mut g = IntMat::identity(3);
    for _ in 0..steps {
        let (i, j) = (rng.random_range(0..3), rng.random_range(0..3));
        if i == j {
            continue;
        }
        let k: i64 = if rng.random_bool(0.5) { 1 } else { -1 };
        let mut e = IntMat::identity(3);
        e.m[i][j] = k;
        g = e.mul(&g);
    }
    g
}

// Box search with |v_i| ≤ sqrt(c·(S⁻¹)_ii), which encloses the ellipsoid.
pub fn brute_reps(s: &SymMat, c: f64) -> Vec<(f64, usize)> {
    let n = s.n();
    let inv = s.inverse().unwrap();
    let b: Vec<i64> = (0..n).map(|i| (c * inv.get(i, i)).sqrt().floor() as i64).collect();
    let mut vals = Vec::new();
    let mut v = vec![0i64; n];
    fn rec(d: usize, b: &[i64], v: &mut Vec<i64>, s: &SymMat, c: f64, out: &mut Vec<f64>) {
        if d == v.len() {
            if v.iter().any(|&x| x != 0) {
                let q = s.quad(v);
                if q <= c {
                    out.push(q);
                }
            }
            return;
        }
        for x in -b[d]..=b[d] {
            v[d] = x;
            rec(d + 1, b, v, s, c, out);
        }
    }
    rec(0, &b, &mut v, s, c, &mut vals);
    vals.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for q in vals {
        match out.last_mut() {
            Some((w, k)) if q - *w <= 1e-9 * *w => *k += 1,
            _ => out.push((q, 1)),
        }
    }
    out
}

pub fn reps_agree(got: &[(f64, usize)], want: &[(f64, usize)]) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| g.1 == w.1 && (g.0 - w.0).abs() <= 1e-9 * w.0)
}

/// 30 peaks: 20 jittered lattice values and 10 random ones.
pub fn random_list(rng: &mut ChaCha8Rng) -> PeakList {
    let cell = random_cell(rng, 50.0, 400.0);
    let s = reciprocal_gram(&cell).unwrap();
    let mut qs = qlist_plain(&s, 3.0).unwrap();
    qs.truncate(20);
    let hi = *qs.last().unwrap();
    for _ in 0..10 {
        qs.push(rng.random_range(qs[0]..hi));
    }
    let rows: Vec<(f64, f64)> = qs
        .into_iter()
        .map(|q| {
            let e = q * rng.random_range(2e-4..2e-3);
            (q * (1.0 + rng.random_range(-1e-3..1e-3)), e)
        })
        .collect();
    PeakList::new(rows).unwrap()
}

fn pair_err(p: &PeakList, a: usize, b: usize) -> f64 {
    if a == b {
        2.0 * p.e(a)
    } else {
        (p.e(a).powi(2) + p.e(b).powi(2)).sqrt()
    }
}

pub fn brute_parallelogram(p: &PeakList, c: f64) -> BTreeSet<(usize, usize, usize, usize)> {
    let n = p.len();
    let mut out = BTreeSet::new();
    for r in 1..=n {
        for s in r..=n {
            for t in 1..=n {
                for w in t..=n {
                    let resid = (2.0 * (p.q(r) + p.q(s)) - (p.q(t) + p.q(w))).abs();
                    if resid > c * (2.0 * pair_err(p, r, s)).min(pair_err(p, t, w)) {
                        continue;
                    }
                    let (a, b) = (p.q(r).sqrt(), p.q(s).sqrt());
                    let (lo, hi) = ((a - b).powi(2), (a + b).powi(2));
                    if [p.q(t), p.q(w)].iter().all(|&q| lo <= q && q <= hi) {
                        out.insert((r, s, t, w));
                    }
                }
            }
        }
    }
    out
}

pub fn as_tuple(z: &Zone) -> (usize, usize, usize, usize) {
    let a = |q: &QSum| q.as_atom().unwrap();
    (a(&z.pair_in.0), a(&z.pair_in.1), a(&z.pair_out.0), a(&z.pair_out.1))
}

/// Whether a 2×2 Gram matrix is realised by two independent vectors of `s`.
pub fn is_true_zone(g2: &SymMat, s: &SymMat) -> bool {
    let (a, b, c) = (g2.get(0, 0), g2.get(1, 1), g2.get(0, 1));
    let tol = 1e-7 * a.max(b);
    let (mut va, mut vb) = (Vec::new(), Vec::new());
    for_each_short_vector(s, a.max(b) * (1.0 + 1e-6), |v, q| {
        if (q - a).abs() <= tol {
            va.push(v.to_vec());
        }
        if (q - b).abs() <= tol {
            vb.push(v.to_vec());
        }
    })
    .unwrap();
    va.iter().any(|u| vb.iter().any(|w| (s.dot(u, w) - c).abs() <= tol && u != w && u.iter().zip(w).any(|(x, y)| *x != -*y)))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn is_primitive_set(v: &[[i64; 3]]) -> bool {
    match v.len() {
        1 => gcd(gcd(v[0][0], v[0][1]), v[0][2]) == 1,
        2 => {
            let (a, b) = (v[0], v[1]);
            let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            gcd(gcd(c[0], c[1]), c[2]) == 1
        }
        3 => {
            let (a, b, c) = (v[0], v[1], v[2]);
            let d = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);
            d.abs() == 1
        }
        _ => unreachable!(),
    }
}

/// Searches lifts `r + m·t` with `t ∈ [-w, w]` entrywise for a primitive set.
pub fn lifts(m: i64, t: &[[i64; 3]], w: i64) -> bool {
    let k = t.len();
    let span = (2 * w + 1) as usize;
    let total = span.pow(3 * k as u32);
    (0..total).any(|mut idx| {
        let mut v = t.to_vec();
        for x in v.iter_mut() {
            for c in x.iter_mut() {
                *c += m * ((idx % span) as i64 - w);
                idx /= span;
            }
        }
        is_primitive_set(&v)
    })
}

pub fn normal(v: &[i64]) -> Vec<i64> {
    match v.iter().find(|&&x| x != 0) {
        Some(&x) if x < 0 => v.iter().map(|y| -y).collect(),
        _ => v.to_vec(),
    }
}

/// Voronoi vectors of `s` (one per `±` pair), when `s` is off every wall.
pub fn voronoi_set(s: &SymMat) -> Option<Vec<Vec<i64>>> {
    let cls = voronoi_vector_classes(s).unwrap();
    let mut out = Vec::new();
    for c in cls.iter().filter(|c| c.class.iter().any(|&b| b != 0)) {
        if c.vectors.len() != 2 {
            return None;
        }
        out.push(normal(&c.vectors[0]));
    }
    out.sort();
    Some(out)
}

/// The superbase whose subset sums are the Voronoi vectors of `s`.
pub fn node_of(s: &SymMat) -> Superbase {
    let n = s.n();
    let vs = voronoi_set(s).expect("general position");
    let mut pool: Vec<Vec<i64>> = vs.clone();
    pool.extend(vs.iter().map(|v| v.iter().map(|x| -x).collect::<Vec<_>>()));
    let pick = |idx: &[usize]| -> Option<Superbase> {
        let mut v: Vec<Vec<i64>> = idx.iter().map(|&i| pool[i].clone()).collect();
        v.push((0..n).map(|k| -v.iter().map(|x| x[k]).sum::<i64>()).collect());
        let sb = Superbase::new(v).ok()?;
        (sb.voronoi_set() == vs).then_some(sb)
    };
    let m = pool.len();
    if n == 2 {
        for a in 0..m {
            for b in 0..m {
                if let Some(sb) = pick(&[a, b]) {
                    return sb;
                }
            }
        }
    } else {
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    if let Some(sb) = pick(&[a, b, c]) {
                        return sb;
                    }
                }
            }
        }
    }
    panic!("no obtuse superbase for {s:?}");
}
