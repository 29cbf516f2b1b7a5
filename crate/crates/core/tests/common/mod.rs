//! Random instances and independently coded model formulas for the oracle tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use vusni_core::data::{Dataset, DiseaseClass, SubjectRecord};
use vusni_core::params::ParamVector;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Moderate random parameters for `p` covariates.
pub fn random_xi(rng: &mut ChaCha20Rng, p: usize) -> ParamVector {
    let b = 2 + p;
    let mut v = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    for _ in 0..3 * b {
        v.push(rng.random_range(-1.5..1.5));
    }
    ParamVector::from_flat(v).unwrap()
}

/// Plain-formula probabilities: `(ρ, π_class)` at `(t, a)`.
pub fn naive_probs(xi: &[f64], p: usize, t: f64, a: &[f64]) -> ([f64; 3], [f64; 3]) {
    let b = 2 + p;
    let lin = |off: usize| xi[off] + xi[off + 1] * t + (0..p).map(|j| xi[off + 2 + j] * a[j]).sum::<f64>();
    let h = lin(2);
    let f1 = lin(2 + b);
    let f2 = lin(2 + 2 * b);
    let z = 1.0 + f1.exp() + f2.exp();
    let rho = [f1.exp() / z, f2.exp() / z, 1.0 / z];
    let s = |x: f64| 1.0 / (1.0 + (-x).exp());
    (rho, [s(h + xi[0]), s(h + xi[1]), s(h)])
}

/// Data drawn from the model at `xi`; `tie_grid > 0` rounds `T` to force ties.
pub fn draw_data(rng: &mut ChaCha20Rng, xi: &ParamVector, n: usize, tie_grid: f64) -> Dataset {
    let p = xi.p();
    loop {
        let mut recs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut t: f64 = rng.sample(StandardNormal);
            if tie_grid > 0.0 {
                t = (t / tie_grid).round() * tie_grid;
            }
            let a: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let (rho, pi) = naive_probs(xi.as_slice(), p, t, &a);
            let u: f64 = rng.random();
            let k = if u < rho[0] { 0 } else if u < rho[0] + rho[1] { 1 } else { 2 };
            let rec = if rng.random::<f64>() < pi[k] {
                SubjectRecord::verified(t, a, DiseaseClass::from_index(k))
            } else {
                SubjectRecord::unverified(t, a)
            };
            recs.push(rec);
        }
        let data = Dataset::new(recs, p).unwrap();
        if data.class_counts().iter().all(|&c| c > 0) && data.n_verified() < n {
            return data;
        }
    }
}

/// `|a − b| ≤ tol · max(|b|, floor · scale)` with `scale = ‖b‖∞`: a relative
/// test that does not divide by exact or rounding-level zeros.
pub fn rel_err_vec(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

pub fn kernel(t1: f64, t2: f64, t3: f64) -> f64 {
    if t1 < t2 && t2 < t3 {
        1.0
    } else if (t1 == t2 && t2 < t3) || (t1 < t2 && t2 == t3) {
        0.5
    } else if t1 == t2 && t2 == t3 {
        1.0 / 6.0
    } else {
        0.0
    }
}

/// Direct triple loop: `(Σ I w1 w2 w3, Σ w1 w2 w3)` over distinct ordered triples.
pub fn brute_ratio(t: &[f64], w: &[[f64; 3]]) -> (f64, f64) {
    let n = t.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for l in 0..n {
            for r in 0..n {
                if i == l || l == r || i == r {
                    continue;
                }
                let prod = w[i][0] * w[l][1] * w[r][2];
                num += kernel(t[i], t[l], t[r]) * prod;
                den += prod;
            }
        }
    }
    (num, den)
}
