//! Influence-function variance of the VUS estimators.
//!
//! Each estimator solves `Ḡ(μ, ξ̂) = 0`, where `Ḡ` averages over ordered
//! distinct triples the kernel `G_{iℓr} = w1ᵢ w2_ℓ w3_r (I_{iℓr} − μ)` and the
//! weights are the pseudo labels. Linearizing in both the subjects and `ξ̂`
//! gives per-subject values
//!
//! ```text
//!   Q̂ᵢ = ∂Ḡ/∂ξ · (𝓘/n)⁻¹ · 𝒮ᵢ(ξ̂)  +  Σ_{ℓ,r} (G_{iℓr} + G_{ℓir} + G_{ℓri}) / ((n−1)(n−2))
//! ```
//!
//! and `Λ̂ = Σ Q̂ᵢ² / (n − 1) / (θ̂₁θ̂₂θ̂₃)²`, so that `se = √(Λ̂ / n)`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // needed only when std is not linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimators::{
    fitted_probs, nonparametric_labels, pseudo_labels, pseudo_labels_from_probs, vus_nonparametric, Method, PseudoLabels,
};
use crate::fit::ModelFit;
use crate::linalg::SymmetricFactor;
use crate::math::normal_quantile;
use crate::model::{subject_scores, SubjectProbs};
use crate::params::ParamVector;
use crate::trisum::{kernel, slot_sums, triple_sums, TieGroups};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceBreakdown {
    pub q: Vec<f64>,
    pub lambda_hat: f64,
    /// Triple average of `∂G/∂ξ` over all `8 + 3p` coordinates.
    pub dg_dxi: Vec<f64>,
    pub score_part: Vec<f64>,
    pub kernel_part: Vec<f64>,
}

impl InfluenceBreakdown {
    pub fn mean_q(&self) -> f64 {
        self.q.iter().sum::<f64>() / self.q.len() as f64
    }

    pub fn sd_q(&self) -> f64 {
        let m = self.mean_q();
        let ss: f64 = self.q.iter().map(|x| (x - m) * (x - m)).sum();
        (ss / (self.q.len() as f64 - 1.0)).sqrt()
    }
}

pub fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(level))
    }
}

/// `√(Λ̂ / n)`.
pub fn standard_error(lambda_hat: f64, n: usize) -> f64 {
    (lambda_hat / n as f64).sqrt()
}

/// `μ̂ ± z_{(1+level)/2} · se`, truncated to `[0, 1]`.
pub fn confidence_interval(mu: f64, se: f64, level: f64) -> (f64, f64) {
    let z = normal_quantile(0.5 + level / 2.0);
    ((mu - z * se).clamp(0.0, 1.0), (mu + z * se).clamp(0.0, 1.0))
}

/// The kernel `G_{iℓr} = w1ᵢ w2_ℓ w3_r (I_{iℓr} − μ)` in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTerms {
    pub mu: f64,
    pub t: Vec<f64>,
    /// Per-subject weights `(w1ᵢ, w2ᵢ, w3ᵢ)`.
    pub weights: Vec<[f64; 3]>,
}

impl KernelTerms {
    /// `G_{iℓr}` for one ordered triple.
    pub fn triple(&self, i: usize, l: usize, r: usize) -> f64 {
        self.weights[i][0] * self.weights[l][1] * self.weights[r][2] * (kernel(self.t[i], self.t[l], self.t[r]) - self.mu)
    }

    /// Average of `G` over the `n(n−1)(n−2)` ordered distinct triples.
    pub fn average(&self) -> f64 {
        let groups = TieGroups::new(&self.t);
        let col = |k: usize| self.weights.iter().map(|w| w[k]).collect::<Vec<_>>();
        let s = triple_sums(&groups, &col(0), &col(1), &col(2)).expect("weights cover every subject");
        (s.kernel - self.mu * s.product) / triple_count(self.t.len())
    }
}

fn triple_count(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) * (n - 2.0)
}

fn labels_at(method: Method, xi: &ParamVector, data: &Dataset) -> Result<PseudoLabels> {
    pseudo_labels_from_probs(method, data, &fitted_probs(data, xi)?)
}

pub fn estimating_kernel_terms(method: Method, mu: f64, xi: &ParamVector, data: &Dataset) -> Result<KernelTerms> {
    let labels = labels_at(method, xi, data)?;
    Ok(KernelTerms { mu, t: data.test_results(), weights: labels.dtilde })
}

/// Derivatives of one subject's three weights with respect to the local
/// predictors `(η₁, η₂, η₃, f₁, f₂)`, where `ηₖ = h + λₖ` (`λ₃ = 0`) is the
/// verification logit of class `k` and `f₁, f₂` are the disease logits.
fn weight_local_derivatives(method: Method, r: &SubjectRecord, pr: &SubjectProbs) -> [[f64; 5]; 3] {
    let q = pr.pi_class;
    let delta = |a: usize, b: usize| (a == b) as u8 as f64;
    let d_rho = |k: usize| -> [f64; 5] {
        let rho = pr.rho;
        [0.0, 0.0, 0.0, rho[k] * (delta(k, 0) - rho[0]), rho[k] * (delta(k, 1) - rho[1])]
    };
    let d_rho0 = |k: usize| -> [f64; 5] {
        let p = pr.rho0;
        let s: [f64; 3] = core::array::from_fn(|j| p[k] * (-q[k] * delta(k, j) + p[j] * q[j]));
        [s[0], s[1], s[2], p[k] * (delta(k, 0) - p[0]), p[k] * (delta(k, 1) - p[1])]
    };
    let d_rho1 = |k: usize| -> [f64; 5] {
        let p = pr.rho1v;
        let s: [f64; 3] = core::array::from_fn(|j| p[k] * ((1.0 - q[k]) * delta(k, j) - p[j] * (1.0 - q[j])));
        [s[0], s[1], s[2], p[k] * (delta(k, 0) - p[0]), p[k] * (delta(k, 1) - p[1])]
    };
    // d(1/q_c)
    let d_inv_q = |c: usize| -> [f64; 5] {
        let mut out = [0.0; 5];
        out[c] = -(1.0 - q[c]) / q[c];
        out
    };
    let zero = [0.0; 5];
    match (method, r.d) {
        (Method::Nonparametric, _) | (Method::Msi, Some(_)) | (Method::Ipw, None) => [zero; 3],
        (Method::Fi, _) => core::array::from_fn(d_rho),
        (Method::FiAlt, Some(_)) => core::array::from_fn(d_rho1),
        (Method::FiAlt | Method::Msi | Method::Pdr, None) => core::array::from_fn(d_rho0),
        (Method::Ipw, Some(c)) => {
            let c = c.index();
            core::array::from_fn(|k| if k == c { d_inv_q(c) } else { zero })
        }
        (Method::Pdr, Some(c)) => {
            let c = c.index();
            let dq = d_inv_q(c);
            let inv = 1.0 / q[c];
            core::array::from_fn(|k| {
                let dr = d_rho0(k);
                let oh = delta(k, c);
                core::array::from_fn(|m| oh * dq[m] - dr[m] * (inv - 1.0) - pr.rho0[k] * dq[m])
            })
        }
    }
}

/// Maps local derivatives onto `ξ` coordinates (same chain rule as the score).
fn scatter_local(xi: &ParamVector, r: &SubjectRecord, local: &[f64; 5], out: &mut [f64]) {
    out[0] += local[0];
    out[1] += local[1];
    let blocks = [
        (xi.tau_pi_range().start, local[0] + local[1] + local[2]),
        (xi.tau_rho_range(1).start, local[3]),
        (xi.tau_rho_range(2).start, local[4]),
    ];
    for (base, w) in blocks {
        out[base] += w;
        out[base + 1] += w * r.t;
        for (j, x) in r.a.iter().enumerate() {
            out[base + 2 + j] += w * x;
        }
    }
}

/// Per-subject slot coefficients `Fᵢ − μF⁰ᵢ`, `Mᵢ − μM⁰ᵢ`, `Lᵢ − μL⁰ᵢ`.
fn slot_coefficients(labels: &PseudoLabels, mu: f64, groups: &TieGroups) -> Vec<[f64; 3]> {
    let cols = [labels.column(0), labels.column(1), labels.column(2)];
    let s = slot_sums(groups, &cols[0], &cols[1], &cols[2]).expect("weights cover every subject");
    (0..cols[0].len())
        .map(|i| [s.first[i] - mu * s.first0[i], s.second[i] - mu * s.second0[i], s.third[i] - mu * s.third0[i]])
        .collect()
}

fn dg_from_coefficients(
    method: Method,
    xi: &ParamVector,
    data: &Dataset,
    probs: &[SubjectProbs],
    coef: &[[f64; 3]],
) -> Vec<f64> {
    let mut out = vec![0.0; xi.dim()];
    for ((r, pr), c) in data.records().iter().zip(probs).zip(coef) {
        let jac = weight_local_derivatives(method, r, pr);
        let local: [f64; 5] = core::array::from_fn(|m| c[0] * jac[0][m] + c[1] * jac[1][m] + c[2] * jac[2][m]);
        scatter_local(xi, r, &local, &mut out);
    }
    let norm = triple_count(data.len());
    out.iter_mut().for_each(|x| *x /= norm);
    out
}

/// Triple average of `∂G_{iℓr}/∂ξ` at `(μ, ξ)`.
pub fn dg_dxi(method: Method, mu: f64, xi: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    let probs = fitted_probs(data, xi)?;
    let labels = pseudo_labels_from_probs(method, data, &probs)?;
    let groups = TieGroups::new(&data.test_results());
    let coef = slot_coefficients(&labels, mu, &groups);
    Ok(dg_from_coefficients(method, xi, data, &probs, &coef))
}

/// Kernel part of `Q̂ᵢ`: `Σ_{ℓ,r}(G_{iℓr} + G_{ℓir} + G_{ℓri}) / ((n−1)(n−2))`.
pub fn kernel_part(labels: &PseudoLabels, mu: f64, groups: &TieGroups) -> Vec<f64> {
    let n = labels.dtilde.len() as f64;
    let norm = (n - 1.0) * (n - 2.0);
    slot_coefficients(labels, mu, groups)
        .iter()
        .zip(&labels.dtilde)
        .map(|(c, w)| (w[0] * c[0] + w[1] * c[1] + w[2] * c[2]) / norm)
        .collect()
}

/// Full breakdown for an estimate already computed from `fit`.
pub fn influence_values(method: Method, mu_hat: f64, fit: &ModelFit, data: &Dataset) -> Result<InfluenceBreakdown> {
    let groups = TieGroups::new(&data.test_results());
    if method == Method::Nonparametric {
        let labels = nonparametric_labels(data)?;
        return influence_from_labels(&labels, mu_hat, labels.theta_hat(), None, data, &groups);
    }
    let labels = pseudo_labels(method, data, fit)?;
    influence_from_labels(&labels, mu_hat, labels.theta_hat(), Some(fit), data, &groups)
}

pub(crate) fn influence_from_labels(
    labels: &PseudoLabels,
    mu: f64,
    theta: [f64; 3],
    fit: Option<&ModelFit>,
    data: &Dataset,
    groups: &TieGroups,
) -> Result<InfluenceBreakdown> {
    let n = data.len();
    let kernel_part = kernel_part(labels, mu, groups);
    let (dg, score_part) = match fit {
        Some(fit) if labels.method.needs_fit() => {
            let xi = &fit.xi_hat;
            let probs = fitted_probs(data, xi)?;
            let coef = slot_coefficients(labels, mu, groups);
            let dg = dg_from_coefficients(labels.method, xi, data, &probs, &coef);
            let free = fit.free_indices();
            let factor = SymmetricFactor::new(&fit.free_information())?;
            let dg_free: Vec<f64> = free.iter().map(|&j| dg[j]).collect();
            let v = factor.solve(&dg_free)?;
            let scores = subject_scores(xi, data)?;
            let sp = scores
                .iter()
                .map(|s| n as f64 * free.iter().zip(&v).map(|(&j, vj)| s[j] * vj).sum::<f64>())
                .collect();
            (dg, sp)
        }
        _ => (vec![0.0; fit.map_or(0, |f| f.xi_hat.dim())], vec![0.0; n]),
    };
    let q: Vec<f64> = kernel_part.iter().zip(&score_part).map(|(k, s)| k + s).collect();
    let denom = theta[0] * theta[1] * theta[2];
    let lambda_hat = q.iter().map(|x| x * x).sum::<f64>() / (n as f64 - 1.0) / (denom * denom);
    Ok(InfluenceBreakdown { q, lambda_hat, dg_dxi: dg, score_part, kernel_part })
}

/// Bootstrap standard error of the nonparametric estimator, resampling
/// subjects with replacement. Resamples missing a class are redrawn.
pub fn bootstrap_se(data: &Dataset, reps: usize, seed: u64) -> Result<f64> {
    let n = data.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(reps);
    let mut attempts = 0usize;
    while values.len() < reps {
        attempts += 1;
        if attempts > 20 * reps.max(1) {
            return Err(Error::TooManyFailures { failed: attempts - values.len(), total: attempts });
        }
        let recs: Vec<SubjectRecord> = (0..n).map(|_| data.records()[rng.random_range(0..n)].clone()).collect();
        let boot = Dataset::new(recs, data.p())?;
        match vus_nonparametric(&boot) {
            Ok(v) => values.push(v),
            Err(Error::EmptyClass(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let m = values.iter().sum::<f64>() / reps as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (reps as f64 - 1.0).max(1.0)).sqrt())
}
