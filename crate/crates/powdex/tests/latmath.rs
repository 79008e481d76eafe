use std::f64::consts::PI;

use num_rational::Rational64;
use powdex::latmath::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{brute_reps, random_pd, random_unimodular};

#[test]
fn reps_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for t in 0..20 {
        let n = 2 + t % 3;
        let s = random_pd(&mut rng, n);
        let got = enumerate_reps(&s, 50.0).unwrap();
        let want = brute_reps(&s, 50.0);
        assert_eq!(got.len(), want.len(), "case {t}");
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.1, w.1, "case {t}");
            assert!((g.0 - w.0).abs() <= 1e-9 * w.0, "case {t}");
        }
    }
}

#[test]
fn short_vectors_are_complete() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let s = random_pd(&mut rng, 3);
        let n_fast = short_vectors(&s, 20.0).unwrap().len();
        let n_slow: usize = brute_reps(&s, 20.0).iter().map(|x| x.1).sum();
        assert_eq!(n_fast, n_slow);
    }
}

#[test]
fn niggli_idempotent_and_unimodular() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let s = random_pd(&mut rng, 3);
        let (r, g) = niggli_reduce(&s, 1e-9).unwrap();
        assert_eq!(g.det(), 1);
        assert!(g.is_unimodular());
        assert!(s.transform(&g).rel_diff(&r) == 0.0);
        assert!(is_niggli_reduced(&r, 1e-9));
        let (r2, g2) = niggli_reduce(&r, 1e-9).unwrap();
        assert_eq!(g2, IntMat::identity(3));
        assert_eq!(r2.rows(), r.rows());
    }
}

#[test]
fn niggli_form_is_basis_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let s = random_pd(&mut rng, 3);
        let h = random_unimodular(&mut rng, 12);
        let (a, _) = niggli_reduce(&s, 1e-9).unwrap();
        let (b, _) = niggli_reduce(&s.transform(&h), 1e-9).unwrap();
        assert!(a.rel_diff(&b) < 1e-9, "{a:?} vs {b:?}");
    }
}

#[test]
fn niggli_known_cells() {
    // body-centred cubic primitive cell reduces to a rhombohedral setting
    let s = SymMat::from3([[3.0, -1.0, -1.0], [-1.0, 3.0, -1.0], [-1.0, -1.0, 3.0]]);
    let (r, _) = niggli_reduce(&s, 1e-9).unwrap();
    assert_eq!(r.get(0, 0), 3.0);
    assert_eq!(r.get(1, 1), 3.0);
    assert_eq!(r.get(2, 2), 3.0);
    assert_eq!(r.det(), s.det());
    // a long basis of the unit cube comes back as the identity
    let g = IntMat::from3([[1, 2, 3], [0, 1, 4], [0, 0, 1]]);
    let (r, _) = niggli_reduce(&SymMat::identity(3).transform(&g), 1e-9).unwrap();
    assert_eq!(r.rows(), SymMat::identity(3).rows());
}

#[test]
fn minkowski_reduces_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let s = random_pd(&mut rng, 4);
        let (r, g) = minkowski_reduce(&s).unwrap();
        assert_eq!(g.det().abs(), 1);
        assert!(s.transform(&g).rel_diff(&r) < 1e-12);
        // successive minima: the first diagonal entry is the shortest vector
        let min = short_vectors(&s, r.get(0, 0) * (1.0 + 1e-9)).unwrap().iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        assert!((min - r.get(0, 0)).abs() <= 1e-9 * min);
    }
}

#[test]
fn cell_round_trip() {
    let p = LatticeParams::new(4.1, 5.3, 6.7, 81.0, 97.5, 110.0);
    let g = gram_from_cell(&p).unwrap();
    let q = cell_from_gram(&g).unwrap();
    for (x, y) in [(p.a, q.a), (p.b, q.b), (p.c, q.c), (p.alpha, q.alpha), (p.beta, q.beta), (p.gamma, q.gamma)] {
        assert!((x - y).abs() < 1e-12 * x);
    }
    let cube = gram_from_cell(&LatticeParams::cubic(4.0)).unwrap();
    assert_eq!(volume(&cube), 64.0);
    assert!(gram_from_cell(&LatticeParams::new(1.0, 1.0, 1.0, 150.0, 150.0, 150.0)).is_err());
}

#[test]
fn exact_reps_agree_with_float() {
    let s = RatMat::from_ints(&[vec![2, 1, 0], vec![1, 3, 1], vec![0, 1, 4]]);
    let exact = enumerate_reps_exact(&s, Rational64::from_integer(40)).unwrap();
    let float = enumerate_reps(&s.to_symmat(), 40.0).unwrap();
    assert_eq!(exact.len(), float.len());
    for (e, f) in exact.iter().zip(&float) {
        assert_eq!(*e.numer() as f64 / *e.denom() as f64, f.0);
    }
}

#[test]
fn volume_bounds_by_hand() {
    // j = 2: v = 2π/3 · (4^1.5 − 1) = 14π/3, so 1/v < 5
    assert_eq!(auto_volume_bounds(&[1.0, 4.0]).unwrap(), (5.0, 150.0));
    let qs = [0.01, 0.04];
    let v = 2.0 * PI / 3.0 * (0.008 - 0.001);
    let (lo, hi) = auto_volume_bounds(&qs).unwrap();
    assert!((lo - 1.0 / v).abs() < 1e-9 * lo);
    assert!((hi - 30.0 / v).abs() < 1e-9 * hi);
    assert!(auto_volume_bounds(&[1.0]).is_err());
}

#[test]
fn lagarias_constants() {
    assert!((lagarias_bound(2, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((lagarias_bound(3, 1.0).unwrap() - 3.0 / 2f64.cbrt()).abs() < 1e-15);
    assert!(lagarias_bound(4, 1.0).is_err());
}

#[test]
fn isometries_of_the_cube() {
    let s = SymMat::identity(3);
    assert_eq!(isometries(&s, &s, 1, 1e-12, 100).len(), 48);
    let t = SymMat::diag(&[1.0, 1.0, 2.0]);
    assert_eq!(isometries(&t, &t, 1, 1e-12, 100).len(), 16);
    assert!(!equivalent(&s, &t, 2, 1e-9));
}

#[test]
fn voronoi_classes_of_the_square() {
    let cls = voronoi_vector_classes(&SymMat::identity(2)).unwrap();
    let by = |c: [u8; 2]| cls.iter().find(|x| x.class == c).unwrap().clone();
    assert_eq!(by([1, 0]).vonorm, 1.0);
    assert_eq!(by([0, 1]).vonorm, 1.0);
    // (1,1) is attained by ±(1,1) and ±(1,−1): a wall
    let d = by([1, 1]);
    assert_eq!(d.vonorm, 2.0);
    assert_eq!(d.pairs(), 2);
}

fn pd3() -> impl Strategy<Value = SymMat> {
    (prop::array::uniform3(1.0f64..3.0), prop::array::uniform3(-2.0f64..2.0)).prop_map(|(d, o)| {
        let l = [[d[0], 0.0, 0.0], [o[0], d[1], 0.0], [o[1], o[2], d[2]]];
        SymMat::from_fn(3, |i, j| (0..3).map(|k| l[i][k] * l[j][k]).sum())
    })
}

proptest! {
    #[test]
    fn niggli_preserves_det_and_reps(s in pd3()) {
        let (r, _) = niggli_reduce(&s, 1e-9).unwrap();
        prop_assert!((r.det() - s.det()).abs() <= 1e-9 * s.det());
        let a = enumerate_reps(&s, 10.0).unwrap();
        let b = enumerate_reps(&r, 10.0).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.1, y.1);
            prop_assert!((x.0 - y.0).abs() <= 1e-9 * x.0);
        }
    }

    #[test]
    fn inverse_is_inverse(s in pd3()) {
        let i = s.inverse().unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let p: f64 = (0..3).map(|k| s.get(r, k) * i.get(k, c)).sum();
                let want = if r == c { 1.0 } else { 0.0 };
                prop_assert!((p - want).abs() < 1e-9);
            }
        }
    }
}
