//! Synthetic peak lists for testing: exact q-values of a lattice, optional
//! systematic absences, then missing peaks, false peaks and jitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::absences::AbsenceCategory;
use crate::latmath::{for_each_short_vector, gram_from_cell, group_values, LatError, LatticeParams, SymMat};
use crate::qformal::{PeakList, QError};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub q_max: f64,
    pub category: Option<AbsenceCategory>,
    /// Probability that a true peak is missing.
    pub epsilon1: f64,
    /// Expected false peaks per true value.
    pub epsilon2: f64,
    /// Exact number of false peaks, overriding `epsilon2`.
    pub false_peaks: Option<usize>,
    pub sigma_rel: f64,
    /// `q_err = max(err_abs, err_rel · q)`.
    pub err_abs: f64,
    pub err_rel: f64,
    /// Zero shift in degrees and wavelength in Å for a 2θ round trip.
    pub two_theta: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            q_max: 1.0,
            category: None,
            epsilon1: 0.0,
            epsilon2: 0.0,
            false_peaks: None,
            sigma_rel: 0.0,
            err_abs: 1e-7,
            err_rel: 1e-5,
            two_theta: None,
            seed: 0,
        }
    }
}

/// Distinct values `|l*|² ≤ q_max` of the form `s_star`, skipping values
/// whose attaining vectors are all extinct. `s_star` is taken as the Gram
/// matrix of the primitive basis the category's rules are written for.
pub fn qlist_from_lattice(
    s_star: &SymMat,
    q_max: f64,
    category: Option<AbsenceCategory>,
) -> Result<Vec<f64>, LatError> {
    let mut vals = Vec::new();
    for_each_short_vector(s_star, q_max * (1.0 + 1e-12), |v, q| {
        if q > q_max {
            return;
        }
        let keep = match category {
            Some(cat) if v.len() == 3 => !cat.is_extinct_primitive([v[0], v[1], v[2]]),
            _ => true,
        };
        vals.push((q, keep));
    })?;
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, bool)> = Vec::new();
    for (q, keep) in vals {
        match out.last_mut() {
            Some((w, k)) if (q - *w).abs() <= 1e-9 * w.abs() => *k |= keep,
            _ => out.push((q, keep)),
        }
    }
    Ok(out.into_iter().filter(|x| x.1).map(|x| x.0).collect())
}

/// All distinct values without absences, grouped to `1e-9` relative.
pub fn qlist_plain(s_star: &SymMat, q_max: f64) -> Result<Vec<f64>, LatError> {
    let mut vals = Vec::new();
    for_each_short_vector(s_star, q_max * (1.0 + 1e-12), |_, q| {
        if q <= q_max {
            vals.push(q)
        }
    })?;
    Ok(group_values(vals, 1e-9).into_iter().map(|x| x.0).collect())
}

/// `q = (2 sin θ / λ)²` with `2θ` in degrees.
pub fn q_from_two_theta(two_theta: f64, lambda: f64) -> f64 {
    let s = 2.0 * (two_theta.to_radians() / 2.0).sin() / lambda;
    s * s
}

pub fn two_theta_from_q(q: f64, lambda: f64) -> f64 {
    2.0 * (q.sqrt() * lambda / 2.0).clamp(-1.0, 1.0).asin().to_degrees()
}

/// First-order error of `q` for an error `d2t` (degrees) in `2θ`.
pub fn q_err_from_two_theta(two_theta: f64, d2t: f64, lambda: f64) -> f64 {
    let th = two_theta.to_radians() / 2.0;
    // dq/d(2θ) = (4/λ²)·sin θ cos θ per radian of 2θ
    (4.0 / (lambda * lambda) * th.sin() * th.cos() * d2t.to_radians()).abs()
}

/// Applies the noise model of `cfg` to an ascending list of true values.
pub fn corrupt(qs: &[f64], cfg: &SynthConfig) -> Result<PeakList, QError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, cfg.sigma_rel.max(0.0)).expect("finite sigma");
    let mut out: Vec<f64> = Vec::with_capacity(qs.len());
    for &q in qs {
        let drop = cfg.epsilon1 > 0.0 && rng.random::<f64>() < cfg.epsilon1;
        if drop {
            continue;
        }
        let eta = if cfg.sigma_rel > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
        out.push(q * (1.0 + eta));
    }
    let n_false = match cfg.false_peaks {
        Some(k) => k,
        None if cfg.epsilon2 > 0.0 && !qs.is_empty() => {
            let lam = cfg.epsilon2 * qs.len() as f64;
            Poisson::new(lam).map(|p| p.sample(&mut rng) as usize).unwrap_or(0)
        }
        None => 0,
    };
    if n_false > 0 && !qs.is_empty() {
        let lo = qs[0];
        let hi = cfg.q_max.max(lo * (1.0 + 1e-9));
        for _ in 0..n_false {
            out.push(rng.random_range(lo..hi));
        }
    }
    if let Some((shift, lambda)) = cfg.two_theta {
        out = out
            .into_iter()
            .map(|q| q_from_two_theta(two_theta_from_q(q, lambda) + shift, lambda))
            .collect();
    }
    PeakList::new(out.into_iter().map(|q| (q, cfg.err_abs.max(cfg.err_rel * q))))
}

/// Reciprocal Gram matrix of a real-space cell.
pub fn reciprocal_gram(cell: &LatticeParams) -> Result<SymMat, LatError> {
    gram_from_cell(cell)?.inverse()
}

/// A random cell with volume in `[vol_lo, vol_hi]` and moderate shape: axis
/// ratios within 1:2.5 and angles in 60°–120°.
pub fn random_cell<R: Rng>(rng: &mut R, vol_lo: f64, vol_hi: f64) -> LatticeParams {
    loop {
        let a = 1.0f64;
        let b = rng.random_range(1.0..2.5);
        let c = rng.random_range(1.0..2.5);
        let al = rng.random_range(60.0..120.0);
        let be = rng.random_range(60.0..120.0);
        let ga = rng.random_range(60.0..120.0);
        let p = LatticeParams::new(a, b, c, al, be, ga);
        let Ok(g) = gram_from_cell(&p) else { continue };
        let v = g.det().sqrt();
        if v < 0.3 {
            continue;
        }
        let target = rng.random_range(vol_lo..vol_hi);
        let k = (target / v).cbrt();
        return LatticeParams::new(a * k, b * k, c * k, al, be, ga);
    }
}
