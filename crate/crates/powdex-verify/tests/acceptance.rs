//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! `cargo test -p powdex-verify --test acceptance -- 3 7` runs a subset.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use powdex::absences::{densities, is_primitive_tuple, residue_primitive_tuples, window_equivalence, AbsenceCategory};
use powdex::enumerate::{combine_to_3d, enumerate_parallelogram};
use powdex::exactsolve::{enumerate_lattices_exact, ExactLambda, ExactSolution};
use powdex::latmath::{enumerate_reps, equivalent, gram_from_cell, is_niggli_reduced, niggli_reduce, IntMat, LatticeParams, RatMat, SymMat};
use powdex::pipeline::{auto_params, index, search_zones, IndexReport, SourceType};
use powdex::synth::{corrupt, qlist_from_lattice, random_cell, reciprocal_gram, SynthConfig};
use powdex::topograph::{edge_label, neighbors, verify_facet_property, FacetCheck, TopographEdge};
use powdex::{PeakList, QSum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../powdex/tests/common/mod.rs"]
mod common;
use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

/// Entrywise agreement of two reduced forms relative to the larger entry.
fn same_form(g: &SymMat, t: &SymMat, rel: f64) -> bool {
    (0..3).all(|a| (0..3).all(|b| (g.get(a, b) - t.get(a, b)).abs() <= rel * t.max_abs()))
}

const TABLE: [(AbsenceCategory, f64, f64); 14] = {
    use AbsenceCategory::*;
    [
        (AFace, 0.321, 0.286),
        (BFace, 0.286, 0.143),
        (C, 0.476, 0.190),
        (D, 0.341, 0.209),
        (E, 0.736, 0.604),
        (FPrimitive, 0.714, 0.571),
        (G, 0.214, 0.027),
        (H, 0.429, 0.058),
        (I, 0.714, 0.571),
        (J, 0.071, 0.022),
        (K, 0.857, 0.786),
        (L, 0.107, 0.004),
        (M, 0.036, 0.004),
        (N, 0.036, 0.004),
    ]
};

fn density_rows() -> Vec<String> {
    let mut bad = Vec::new();
    for (cat, pair, triple) in TABLE {
        let (p, t) = densities(cat);
        if (p.value() - pair).abs() > 5e-4 || (t.value() - triple).abs() > 5e-4 {
            bad.push(format!("{cat}: {:.4}/{:.4} vs {pair}/{triple}", p.value(), t.value()));
        }
    }
    bad
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let bad = pool(1).install(density_rows);
    let one = t.elapsed();
    let t = Instant::now();
    let bad8 = pool(8).install(density_rows);
    let eight = t.elapsed();
    let pass = bad.is_empty() && bad8.is_empty() && one.as_secs() <= 600 && eight.as_secs() <= 120;
    outcome(pass, format!("14 rows, mismatches {bad:?}; {:.1}s on 1 thread, {:.1}s on 8", secs(one), secs(eight)))
}

fn exact(form: &[Vec<i64>], cutoff: i64) -> Vec<ExactSolution> {
    let lam = ExactLambda::of_form(&RatMat::from_ints(form), Rational64::from_integer(cutoff)).unwrap();
    enumerate_lattices_exact(form.len(), &lam).unwrap()
}

fn has(sols: &[ExactSolution], want: &[Vec<i64>]) -> bool {
    let w = RatMat::from_ints(want).to_symmat();
    sols.iter().any(|s| equivalent(&s.gram.to_symmat(), &w, 2, 1e-12))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let cube = exact(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]], 30);
    let a = has(&cube, &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]) && has(&cube, &[vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
    let hex = exact(&[vec![2, 1], vec![1, 2]], 60);
    let b = has(&hex, &[vec![2, 1], vec![1, 2]]) && has(&hex, &[vec![2, 0], vec![0, 6]]);
    let el = t.elapsed();
    let classes = cube.iter().filter(|s| s.equivalent_to.is_none()).count();
    outcome(
        a && b && el.as_secs_f64() < 10.0,
        format!("cube: I and diag(1,2,2) {a} ({classes} classes); hexagonal: form and diag(2,6) {b}; {:.2}s", secs(el)),
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let s = reciprocal_gram(&LatticeParams::cubic(4.0)).unwrap();
    let qs = qlist_from_lattice(&s, 2.5, None).unwrap();
    let peaks = PeakList::new(qs.iter().map(|&q| (q, q * 1e-9))).unwrap();
    let params = auto_params(&peaks, SourceType::Lab).unwrap();
    let r = index(&peaks, &params).unwrap();
    let el = t.elapsed();
    let want = |p: LatticeParams| niggli_reduce(&gram_from_cell(&p).unwrap(), 1e-9).unwrap().0;
    let cubic = want(LatticeParams::cubic(4.0));
    let h = 4.0 / 2f64.sqrt();
    let tetra = want(LatticeParams::new(h, h, 4.0, 90.0, 90.0, 90.0));
    let find = |t: &SymMat| r.solutions.iter().position(|s| same_form(&s.real_gram().unwrap(), t, 1e-9));
    let (pc, pt) = (find(&cubic), find(&tetra));
    let kinds = |p: Option<usize>| p.map(|i| r.solutions[i].bravais.symbol());
    outcome(
        pc.is_some() && pt.is_some() && kinds(pc) == Some("cP") && kinds(pt) == Some("tP") && el.as_secs() < 60,
        format!("cubic a=4 at rank {:?} ({:?}), tetragonal a=2.828 c=4 at rank {:?} ({:?}); {:.1}s", pc.map(|i| i + 1), kinds(pc), pt.map(|i| i + 1), kinds(pt), secs(el)),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut ok = 0;
    let mut missed = Vec::new();
    for i in 0..50 {
        let cat = AbsenceCategory::ROWS[i % 14];
        let cell = random_cell(&mut rng, 50.0, 1500.0);
        let s = reciprocal_gram(&cell).unwrap();
        let qs = qlist_from_lattice(&s, 2.5, Some(cat)).unwrap();
        let peaks = PeakList::new(qs.iter().map(|&q| (q, q * 1e-9))).unwrap();
        let params = auto_params(&peaks, SourceType::Synchrotron).unwrap();
        let r = index(&peaks, &params).unwrap();
        let (truth, _) = niggli_reduce(&gram_from_cell(&cell).unwrap(), 1e-9).unwrap();
        if r.solutions.first().is_some_and(|top| same_form(&top.real_gram().unwrap(), &truth, 1e-6)) {
            ok += 1;
        } else {
            let pos = r.solutions.iter().position(|x| same_form(&x.real_gram().unwrap(), &truth, 1e-6));
            let below = params.vol_min > truth.det().sqrt();
            missed.push(format!("{i}/{cat} rank {:?}{}", pos.map(|p| p + 1), if below { " Vol_min above truth" } else { "" }));
        }
    }
    let el = t.elapsed();
    outcome(ok >= 49 && el.as_secs() < 300, format!("{ok}/50 top-merit match (need 49); {:.0}s; missed {missed:?}", secs(el)))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = Instant::now();
    let mut ok = 0;
    let mut missed = Vec::new();
    for i in 0..50 {
        let cat = AbsenceCategory::ROWS[i % 14];
        let cell = random_cell(&mut rng, 50.0, 1500.0);
        let s = reciprocal_gram(&cell).unwrap();
        let qs = qlist_from_lattice(&s, 2.5, Some(cat)).unwrap();
        let cfg = SynthConfig {
            q_max: 2.5,
            epsilon1: 0.1,
            false_peaks: Some(3),
            sigma_rel: 2e-4,
            err_abs: 0.0,
            err_rel: 2e-4,
            seed: 100 + i as u64,
            ..Default::default()
        };
        let peaks = corrupt(&qs, &cfg).unwrap();
        let params = auto_params(&peaks, SourceType::Lab).unwrap();
        let p = peaks.truncated(params.n_peak);
        let (dmin, dmax) = params.det_window();
        let (truth, _) = niggli_reduce(&s, 1e-9).unwrap();
        let (zones, _) = search_zones(&p, &params);
        let found = combine_to_3d(&zones, &p, params.c, dmin, dmax).iter().any(|k| {
            let g = niggli_reduce(&k.gram, 1e-9).unwrap().0;
            ((g.det() - truth.det()) / truth.det()).abs() <= 1e-2 && equivalent(&g, &truth, 2, 3e-3)
        });
        if found {
            ok += 1;
        } else {
            missed.push(format!("{i}/{cat}"));
        }
    }
    outcome(ok >= 45, format!("{ok}/50 with the true cell among candidates (need 45); {:.0}s; missed {missed:?}", secs(t.elapsed())))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let runs = 20;
    let (mut retained, mut zone_bound) = (0, true);
    let mut missed = Vec::new();
    let mut ratios = Vec::new();
    for i in 0..runs {
        let cat = AbsenceCategory::ROWS[i % 14];
        let cell = random_cell(&mut rng, 50.0, 1500.0);
        let s = reciprocal_gram(&cell).unwrap();
        let qs = qlist_from_lattice(&s, 2.5, Some(cat)).unwrap();
        let cfg = SynthConfig { q_max: 2.5, err_abs: 0.0, err_rel: 5e-4, seed: 200 + i as u64, ..Default::default() };
        let peaks = corrupt(&qs, &cfg).unwrap();
        let mut params = auto_params(&peaks, SourceType::Lab).unwrap();
        params.n_sol = usize::MAX;
        let p = peaks.truncated(params.n_peak);
        let (zones, st) = search_zones(&p, &params);
        zone_bound &= st.zones_kept <= params.n_zone && params.n_zone == params.n_peak * (params.n_peak + 1) / 3;
        let true_zone = zones.iter().any(|z| is_true_zone(&z.gram2(&p), &s));
        let (truth, _) = niggli_reduce(&gram_from_cell(&cell).unwrap(), 1e-9).unwrap();
        let hit = |r: &IndexReport| r.solutions.iter().any(|x| same_form(&x.real_gram().unwrap(), &truth, 1e-6));
        let t = Instant::now();
        let pruned = index(&peaks, &params).unwrap();
        let t_pruned = t.elapsed();
        if true_zone && hit(&pruned) {
            retained += 1;
        } else {
            missed.push(format!("{i}/{cat} zone {true_zone}"));
        }
        if i < 2 && params.n_peak == 48 {
            params.prune = false;
            let t = Instant::now();
            let full = index(&peaks, &params).unwrap();
            let t_full = t.elapsed();
            ratios.push(secs(t_pruned) / secs(t_full));
            if !hit(&full) {
                missed.push(format!("{i} also missed unpruned"));
            }
        }
    }
    let frac = retained as f64 / runs as f64;
    let fast = !ratios.is_empty() && ratios.iter().all(|&r| r <= 0.25);
    outcome(
        frac >= 0.95 && zone_bound && fast,
        format!(
            "retained {retained}/{runs} (need 95%), missed {missed:?}; |A2| <= N_zone {zone_bound}; time ratios at N_peak 48 {:?}",
            ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut zones_ok = 0;
    let mut zones = 0;
    for t in 0..20 {
        let p = random_list(&mut rng);
        let c = if t % 2 == 0 { 1.5 } else { 1.0 };
        let got: BTreeSet<_> = enumerate_parallelogram(&p, c).iter().map(as_tuple).collect();
        let want = brute_parallelogram(&p, c);
        zones += want.len();
        zones_ok += (got == want) as usize;
    }
    let mut reps_ok = 0;
    for t in 0..20 {
        let s = random_pd(&mut rng, 2 + t % 3);
        reps_ok += reps_agree(&enumerate_reps(&s, 50.0).unwrap(), &brute_reps(&s, 50.0)) as usize;
    }
    let mut rank_ok = true;
    for m in [2i64, 3, 4] {
        let all: Vec<[i64; 3]> = (0..m * m * m).map(|i| [i / (m * m), (i / m) % m, i % m]).collect();
        for a in &all {
            rank_ok &= is_primitive_tuple(m, &[*a]) == lifts(m, &[*a], 1);
            for b in &all {
                rank_ok &= is_primitive_tuple(m, &[*a, *b]) == lifts(m, &[*a, *b], 1);
            }
        }
        for _ in 0..300 {
            let t: Vec<[i64; 3]> = (0..3).map(|_| all[rng.random_range(0..all.len())]).collect();
            let want = lifts(m, &t, 1) || (is_primitive_tuple(m, &t) && lifts(m, &t, 2));
            rank_ok &= is_primitive_tuple(m, &t) == want;
        }
        rank_ok &= residue_primitive_tuples(m, 1).len() == all.iter().filter(|a| lifts(m, &[**a], 1)).count();
    }
    outcome(
        zones_ok == 20 && reps_ok == 20 && rank_ok,
        format!("parallelogram {zones_ok}/20 lists ({zones} zones); reps {reps_ok}/20; rank criterion M=2,3,4 {rank_ok}"),
    )
}

fn criterion_8() -> Outcome {
    let bad: Vec<String> = AbsenceCategory::ROWS.iter().filter(|&&c| !window_equivalence(c)).map(|c| c.to_string()).collect();
    let extra = AbsenceCategory::ALL.iter().all(|&c| window_equivalence(c));
    outcome(bad.is_empty(), format!("14 categories, failing {bad:?}; all 17 rule sets {extra}"))
}

fn err_fixtures() -> bool {
    let p = PeakList::new([(0.1, 3.0), (0.2, 4.0), (0.35, 12.0), (0.5, 0.0)]).unwrap();
    let u = QSum::unit;
    let s12 = u(1).add(&u(2));
    let s123 = s12.add(&u(3)).times(3);
    s12.err(&p) == 5.0 && u(1).times(2).err(&p) == 6.0 && s123.err(&p) == 39.0 && s12.half().unwrap().err(&p) == 2.5
}

fn niggli_invariants(rng: &mut ChaCha8Rng) -> bool {
    (0..200).all(|_| {
        let s = random_pd(rng, 3);
        let (r, g) = niggli_reduce(&s, 1e-9).unwrap();
        let (r2, g2) = niggli_reduce(&r, 1e-9).unwrap();
        g.det() == 1 && s.transform(&g).rel_diff(&r) == 0.0 && is_niggli_reduced(&r, 1e-9) && g2 == IntMat::identity(3) && r2.rows() == r.rows()
    })
}

fn facet_property(rng: &mut ChaCha8Rng) -> bool {
    (0..100).all(|t| {
        let s = random_pd(rng, 2 + t % 2);
        let node = node_of(&s);
        let reps: Vec<f64> = enumerate_reps(&s, 4.0 * s.trace()).unwrap().into_iter().map(|x| x.0).collect();
        let has = |q: f64| reps.iter().any(|&r| (r - q).abs() <= 1e-9 * q);
        neighbors(&node).unwrap().iter().all(|nb| {
            let e = TopographEdge::between(&node, nb).unwrap();
            let (a, b) = edge_label(&s, &e);
            verify_facet_property(&s, &e).unwrap() == FacetCheck::Holds && has(a) && has(b)
        })
    })
}

fn det_window(rng: &mut ChaCha8Rng) -> bool {
    (0..5).all(|_| {
        let p = random_list(rng);
        let zones: Vec<_> = enumerate_parallelogram(&p, 1.5).into_iter().take(120).collect();
        let all = combine_to_3d(&zones, &p, 1.5, 0.0, f64::INFINITY);
        let mut dets: Vec<f64> = all.iter().map(|k| k.gram.det()).collect();
        dets.sort_by(f64::total_cmp);
        // edges sit in gaps so rounding of the determinant cannot matter
        let edge = |k: usize| {
            let j = (k..dets.len() - 1).find(|&j| dets[j + 1] - dets[j] > 1e-9 * dets[j]).unwrap();
            (dets[j] + dets[j + 1]) / 2.0
        };
        let (lo, hi) = (edge(dets.len() / 4), edge(3 * dets.len() / 4));
        let key = |k: &powdex::enumerate::Candidate| (k.source.clone(), k.gram.rows().concat().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        let mut want: Vec<_> = all.iter().filter(|k| (lo..=hi).contains(&k.gram.det())).map(key).collect();
        let mut got: Vec<_> = combine_to_3d(&zones, &p, 1.5, lo, hi).iter().map(key).collect();
        want.sort();
        got.sort();
        !want.is_empty() && got == want
    })
}

fn thread_independent() -> bool {
    let s = reciprocal_gram(&LatticeParams::new(5.2, 6.1, 7.3, 90.0, 103.0, 90.0)).unwrap();
    let qs = qlist_from_lattice(&s, 0.5, Some(AbsenceCategory::C)).unwrap();
    let cfg = SynthConfig { q_max: 0.5, epsilon1: 0.1, false_peaks: Some(2), sigma_rel: 1e-4, err_rel: 2e-4, seed: 9, ..Default::default() };
    let peaks = corrupt(&qs, &cfg).unwrap();
    let mut params = auto_params(&peaks, SourceType::Lab).unwrap();
    params.n_peak = params.n_peak.min(24);
    params.n_zone = params.n_peak * (params.n_peak + 1) / 3;
    let one = pool(1).install(|| index(&peaks, &params).unwrap());
    let four = pool(4).install(|| index(&peaks, &params).unwrap());
    !one.solutions.is_empty() && one == four
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let checks = [
        ("err formula", err_fixtures()),
        ("Niggli idempotent/unimodular", niggli_invariants(&mut rng)),
        ("facet property", facet_property(&mut rng)),
        ("det window", det_window(&mut rng)),
        ("thread count", thread_independent()),
    ];
    let failing: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(failing.is_empty(), format!("{} suites, failing {failing:?}", checks.len()))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // a name filter from `cargo test NAME` that does not match skips the run
    if args.iter().any(|a| !a.starts_with('-') && a.parse::<usize>().is_err() && !"acceptance".contains(a.as_str())) {
        return;
    }
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let all: [fn() -> Outcome; 9] =
        [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9];
    let mut failed = 0;
    for (k, run) in all.iter().enumerate() {
        let n = k + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let o = run();
        failed += !o.pass as usize;
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
