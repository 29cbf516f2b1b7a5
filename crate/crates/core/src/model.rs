//! Joint verification/disease model.
//!
//! Disease: multinomial logit with class 3 as reference,
//! `ρₖ ∝ exp(τ_ρk · U)` for `k = 1, 2` and `ρ₃ ∝ 1`.
//! Verification: `Pr(V = 1 | D, T, A) = σ(τ_π · U + λ₁D₁ + λ₂D₂)`, where
//! `U = (1, T, Aᵀ)ᵀ`. The three class-specific verification probabilities are
//! written `π₁₀, π₀₁, π₀₀` (indexed here by class 1, 2, 3).
//!
//! The log-likelihood and score are evaluated in log space so they are exact
//! and smooth everywhere; the probability accessors clamp to
//! `[PROB_FLOOR, 1 − PROB_FLOOR]` as reported quantities.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // needed only when std is not linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, logsumexp, sigmoid};
use crate::params::ParamVector;

pub const PROB_FLOOR: f64 = 1e-10;

const UNDERFLOW: f64 = 1e-300;

fn dot_design(coef: &[f64], t: f64, a: &[f64]) -> f64 {
    let mut s = coef[0] + coef[1] * t;
    for (c, x) in coef[2..].iter().zip(a) {
        s += c * x;
    }
    s
}

/// Linear predictors `(h, f₁, f₂)` for one subject.
pub(crate) fn linear_predictors(xi: &ParamVector, t: f64, a: &[f64]) -> (f64, f64, f64) {
    (
        dot_design(xi.tau_pi(), t, a),
        dot_design(xi.tau_rho(1), t, a),
        dot_design(xi.tau_rho(2), t, a),
    )
}

fn check_dims(xi: &ParamVector, a: &[f64]) -> Result<()> {
    if xi.p() != a.len() {
        return Err(Error::DimensionMismatch { expected: xi.p(), found: a.len() });
    }
    Ok(())
}

fn clamp_prob(x: f64) -> f64 {
    x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn softmax3(f1: f64, f2: f64) -> [f64; 3] {
    let m = f1.max(f2).max(0.0);
    let e = [(f1 - m).exp(), (f2 - m).exp(), (-m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

/// `(ρ₁, ρ₂, ρ₃) = Pr(Dₖ = 1 | T, A)`, clamped and renormalized.
pub fn disease_probs(xi: &ParamVector, t: f64, a: &[f64]) -> Result<[f64; 3]> {
    check_dims(xi, a)?;
    let (_, f1, f2) = linear_predictors(xi, t, a);
    let mut rho = softmax3(f1, f2).map(clamp_prob);
    let s: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|r| *r /= s);
    Ok(rho)
}

/// `Pr(V = 1 | D₁ = d1, D₂ = d2, T, A)`; `(1, 1)` is not a valid pattern.
pub fn verification_prob(xi: &ParamVector, d1: u8, d2: u8, t: f64, a: &[f64]) -> Result<f64> {
    check_dims(xi, a)?;
    let shift = match (d1, d2) {
        (1, 0) => xi.lambda()[0],
        (0, 1) => xi.lambda()[1],
        (0, 0) => 0.0,
        _ => return Err(Error::InvalidDiseasePattern { d1, d2 }),
    };
    let (h, _, _) = linear_predictors(xi, t, a);
    Ok(clamp_prob(sigmoid(h + shift)))
}

/// All model-implied probabilities for one `(T, A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectProbs {
    /// `ρₖ = Pr(Dₖ = 1 | T, A)`.
    pub rho: [f64; 3],
    /// Class-specific verification probabilities `(π₁₀, π₀₁, π₀₀)`.
    pub pi_class: [f64; 3],
    /// Marginal `Pr(V = 1 | T, A) = Σ ρₖ πₖ`.
    pub pi: f64,
    /// `ρₖ₍₀₎ = Pr(Dₖ = 1 | V = 0, T, A)`.
    pub rho0: [f64; 3],
    /// `ρₖ₍₁₎ = Pr(Dₖ = 1 | V = 1, T, A)`.
    pub rho1v: [f64; 3],
}

impl SubjectProbs {
    pub fn pi_10(&self) -> f64 {
        self.pi_class[0]
    }

    pub fn pi_01(&self) -> f64 {
        self.pi_class[1]
    }

    pub fn pi_00(&self) -> f64 {
        self.pi_class[2]
    }
}

pub fn subject_probs(xi: &ParamVector, t: f64, a: &[f64]) -> Result<SubjectProbs> {
    let rho = disease_probs(xi, t, a)?;
    let pi_class = [
        verification_prob(xi, 1, 0, t, a)?,
        verification_prob(xi, 0, 1, t, a)?,
        verification_prob(xi, 0, 0, t, a)?,
    ];
    let unverified: [f64; 3] = core::array::from_fn(|k| (1.0 - pi_class[k]) * rho[k]);
    let verified: [f64; 3] = core::array::from_fn(|k| pi_class[k] * rho[k]);
    let z0: f64 = unverified.iter().sum();
    let z1: f64 = verified.iter().sum();
    if !(z0 > UNDERFLOW) || !(z1 > UNDERFLOW) {
        return Err(Error::DegenerateConditional);
    }
    Ok(SubjectProbs {
        rho,
        pi_class,
        pi: z1,
        rho0: unverified.map(|x| x / z0),
        rho1v: verified.map(|x| x / z1),
    })
}

pub fn record_probs(xi: &ParamVector, r: &SubjectRecord) -> Result<SubjectProbs> {
    subject_probs(xi, r.t, &r.a)
}

/// Per-subject log-likelihood contribution and its gradient with respect to
/// the linear predictors `η = (h + λ₁, h + λ₂, h)` and `(f₁, f₂)`.
struct Contribution {
    loglik: f64,
    d_eta: [f64; 3],
    d_f: [f64; 2],
}

fn contribution(xi: &ParamVector, r: &SubjectRecord) -> Contribution {
    let (h, f1, f2) = linear_predictors(xi, r.t, &r.a);
    let lam = xi.lambda();
    let eta = [h + lam[0], h + lam[1], h];
    let lse = logsumexp(&[f1, f2, 0.0]);
    let log_rho = [f1 - lse, f2 - lse, -lse];
    let rho = log_rho.map(|x| x.exp());
    match r.d {
        Some(c) => {
            let k = c.index();
            let q = sigmoid(eta[k]);
            let mut d_eta = [0.0; 3];
            d_eta[k] = 1.0 - q;
            let oh = c.one_hot();
            Contribution {
                loglik: log_rho[k] + log_sigmoid(eta[k]),
                d_eta,
                d_f: [oh[0] - rho[0], oh[1] - rho[1]],
            }
        }
        None => {
            let cell: [f64; 3] = core::array::from_fn(|k| log_rho[k] + log_sigmoid(-eta[k]));
            let log_z = logsumexp(&cell);
            let rho0 = cell.map(|c| (c - log_z).exp());
            let d_eta = core::array::from_fn(|k| -rho0[k] * sigmoid(eta[k]));
            Contribution { loglik: log_z, d_eta, d_f: [rho0[0] - rho[0], rho0[1] - rho[1]] }
        }
    }
}

fn scatter_gradient(xi: &ParamVector, r: &SubjectRecord, c: &Contribution, out: &mut [f64]) {
    out[0] += c.d_eta[0];
    out[1] += c.d_eta[1];
    let s = c.d_eta[0] + c.d_eta[1] + c.d_eta[2];
    let blocks = [(xi.tau_pi_range(), s), (xi.tau_rho_range(1), c.d_f[0]), (xi.tau_rho_range(2), c.d_f[1])];
    for (range, w) in blocks {
        let base = range.start;
        out[base] += w;
        out[base + 1] += w * r.t;
        for (j, x) in r.a.iter().enumerate() {
            out[base + 2 + j] += w * x;
        }
    }
}

/// Observed-data log-likelihood.
pub fn log_likelihood(xi: &ParamVector, data: &Dataset) -> Result<f64> {
    xi.check_p(data.p())?;
    Ok(data.records().iter().map(|r| contribution(xi, r).loglik).sum())
}

/// Log-likelihood and its gradient in one pass. `grad` is overwritten.
pub fn log_likelihood_and_score(xi: &ParamVector, data: &Dataset, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut ll = 0.0;
    for r in data.records() {
        let c = contribution(xi, r);
        ll += c.loglik;
        scatter_gradient(xi, r, &c, grad);
    }
    ll
}

/// Analytic score `∂ℓ/∂ξ`, blocks ordered `(λ₁, λ₂, τ_π, τ_ρ1, τ_ρ2)`.
pub fn score(xi: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    xi.check_p(data.p())?;
    let mut g = vec![0.0; xi.dim()];
    log_likelihood_and_score(xi, data, &mut g);
    Ok(g)
}

/// Per-subject score contributions `𝒮ᵢ(ξ)`, one row per subject.
pub fn subject_scores(xi: &ParamVector, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    xi.check_p(data.p())?;
    Ok(data
        .records()
        .iter()
        .map(|r| {
            let mut g = vec![0.0; xi.dim()];
            scatter_gradient(xi, r, &contribution(xi, r), &mut g);
            g
        })
        .collect())
}

/// Central-difference step used for coordinate `x`.
pub fn information_step(x: f64) -> f64 {
    1e-5f64.max(1e-5 * x.abs())
}

/// Negative Hessian of the log-likelihood, from central differences of the
/// analytic score, symmetrized.
pub fn observed_information(xi: &ParamVector, data: &Dataset) -> Result<DMatrix<f64>> {
    xi.check_p(data.p())?;
    let d = xi.dim();
    let mut hess = DMatrix::<f64>::zeros(d, d);
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let mut x = xi.clone();
    for j in 0..d {
        let x0 = xi.as_slice()[j];
        let h = information_step(x0);
        x.as_mut_slice()[j] = x0 + h;
        log_likelihood_and_score(&x, data, &mut plus);
        x.as_mut_slice()[j] = x0 - h;
        log_likelihood_and_score(&x, data, &mut minus);
        x.as_mut_slice()[j] = x0;
        for i in 0..d {
            hess[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    let sym = (&hess + hess.transpose()) * -0.5;
    Ok(sym)
}
