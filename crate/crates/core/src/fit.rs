//! Maximum likelihood for the joint model and the ignorability test.
//!
//! The fit first solves the MAR-constrained problem (`λ = 0`), whose
//! likelihood separates into a logistic regression of `V` and a multinomial
//! logit of `D` on the verified subjects; those two GLM fits are the warm
//! start. The nonignorable fit then releases `λ` from zero and adds
//! `restarts` Gaussian-perturbed starts; the highest log-likelihood wins.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // needed only when std is not linked
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{principal_submatrix, SymmetricFactor};
use crate::math::{chi2_df2_sf, sigmoid};
use crate::model::{log_likelihood, log_likelihood_and_score, observed_information, PROB_FLOOR};
use crate::optim::{inf_norm, minimize, BfgsConfig};
use crate::params::ParamVector;

/// Information condition number above which the optimum is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Two log-likelihoods closer than this are treated as tied.
const LOGLIK_TIE: f64 = 1e-8;

const LAMBDA_JITTER_SD: f64 = 0.5;
const TAU_JITTER_SD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fix `λ = (0, 0)` (missing at random).
    pub constrain_mar: bool,
    /// Perturbed starts in addition to the MAR warm start.
    pub restarts: usize,
    pub seed: u64,
    /// Convergence threshold on `‖score‖∞ / n`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { constrain_mar: false, restarts: 5, seed: 0, tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub xi_hat: ParamVector,
    pub loglik: f64,
    /// Observed information over all `8 + 3p` coordinates.
    pub info: DMatrix<f64>,
    pub converged: bool,
    /// Number of starting points that were optimized.
    pub restarts_used: usize,
    /// `‖score‖∞ / n` over the free coordinates at `xi_hat`.
    pub grad_norm: f64,
    /// Condition number of the free block of `info`.
    pub condition_number: f64,
    /// Standard errors from the inverse free-block information; 0 for fixed coordinates.
    pub std_errors: Vec<f64>,
    pub constrain_mar: bool,
    /// Every subject was verified, so the verification model has no finite
    /// MLE; `τ_π` is held at the probability ceiling and not estimated.
    pub verification_fixed: bool,
    pub identifiability_warning: Option<String>,
    pub n: usize,
}

impl ModelFit {
    /// Indices of the coordinates that were estimated.
    pub fn free_indices(&self) -> Vec<usize> {
        free_indices(&self.xi_hat, self.constrain_mar, self.verification_fixed)
    }

    /// Free block of the observed information.
    pub fn free_information(&self) -> DMatrix<f64> {
        principal_submatrix(&self.info, &self.free_indices())
    }
}

/// Free coordinates always form a suffix of the flat vector: `λ` first,
/// then `τ_π`.
fn free_indices(xi: &ParamVector, constrain_mar: bool, verification_fixed: bool) -> Vec<usize> {
    let start = match (constrain_mar, verification_fixed) {
        (_, true) => xi.tau_rho_range(1).start,
        (true, false) => 2,
        (false, false) => 0,
    };
    (start..xi.dim()).collect()
}

/// `logit(1 − PROB_FLOOR)`: the verification logit used when everyone is verified.
fn certain_verification_logit() -> f64 {
    ((1.0 - PROB_FLOOR) / PROB_FLOOR).ln()
}

/// Dimension and class-coverage checks shared by all fits.
pub fn check_fit_data(data: &Dataset, constrain_mar: bool) -> Result<()> {
    let dim = ParamVector::dim_for(data.p());
    if data.len() < dim {
        return Err(Error::InsufficientData(format!(
            "{} subjects for {} parameters",
            data.len(),
            dim
        )));
    }
    let counts = data.class_counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InsufficientData(format!("no verified subject in class {}", k + 1)));
    }
    if !constrain_mar && data.n_verified() == data.len() {
        return Err(Error::InsufficientData("no unverified subject; nonignorable parameters are vacuous".into()));
    }
    Ok(())
}

/// Objective `−ℓ/n` restricted to `free`, with the remaining coordinates of
/// `base` held fixed.
struct Objective<'a> {
    data: &'a Dataset,
    free: &'a [usize],
    xi: ParamVector,
    grad: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(data: &'a Dataset, free: &'a [usize], base: &ParamVector) -> Self {
        Objective { data, free, xi: base.clone(), grad: vec![0.0; base.dim()] }
    }

    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        let n = self.data.len() as f64;
        for (&i, &v) in self.free.iter().zip(x) {
            self.xi.as_mut_slice()[i] = v;
        }
        let ll = log_likelihood_and_score(&self.xi, self.data, &mut self.grad);
        for (gi, &i) in g.iter_mut().zip(self.free) {
            *gi = -self.grad[i] / n;
        }
        -ll / n
    }

    fn embed(&self, x: &[f64]) -> ParamVector {
        let mut xi = self.xi.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            xi.as_mut_slice()[i] = v;
        }
        xi
    }
}

struct Candidate {
    xi: ParamVector,
    loglik: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

fn optimize(data: &Dataset, free: &[usize], start: &ParamVector, opts: &FitOptions) -> Candidate {
    let mut obj = Objective::new(data, free, start);
    let x0: Vec<f64> = free.iter().map(|&i| start.as_slice()[i]).collect();
    let cfg = BfgsConfig { tol: opts.tol, max_iter: opts.max_iter, max_step: 5.0 };
    let r = minimize(|x, g| obj.eval(x, g), &x0, cfg);
    let mut cand = Candidate {
        xi: obj.embed(&r.x),
        loglik: -r.f * data.len() as f64,
        grad_norm: inf_norm(&r.grad),
        iterations: r.iterations,
        converged: r.converged,
    };
    if cand.converged {
        newton_polish(data, free, &mut cand);
    }
    cand
}

/// A few Newton steps using the observed information; each step must lower
/// both the objective and the gradient norm to be kept.
fn newton_polish(data: &Dataset, free: &[usize], cand: &mut Candidate) {
    let n = data.len() as f64;
    let mut grad = vec![0.0; cand.xi.dim()];
    for _ in 0..6 {
        if cand.grad_norm < 1e-13 {
            return;
        }
        let Ok(info) = observed_information(&cand.xi, data) else { return };
        let Ok(factor) = SymmetricFactor::new(&principal_submatrix(&info, free)) else { return };
        if !factor.is_positive_definite() {
            return;
        }
        log_likelihood_and_score(&cand.xi, data, &mut grad);
        let g_free: Vec<f64> = free.iter().map(|&i| grad[i]).collect();
        let Ok(step) = factor.solve(&g_free) else { return };
        if inf_norm(&step) > 1.0 {
            return;
        }
        let mut trial = cand.xi.clone();
        for (&i, s) in free.iter().zip(&step) {
            trial.as_mut_slice()[i] += s;
        }
        let ll = log_likelihood_and_score(&trial, data, &mut grad);
        let gn = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max) / n;
        if !(ll >= cand.loglik - 1e-12 * cand.loglik.abs()) || !(gn < cand.grad_norm) {
            return;
        }
        cand.xi = trial;
        cand.loglik = ll;
        cand.grad_norm = gn;
    }
}

/// Newton–Raphson logistic regression of `y` on the rows of `x`.
fn logistic_fit(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = x[0].len();
    let mut beta = vec![0.0; d];
    for _ in 0..50 {
        let mut g = DVector::<f64>::zeros(d);
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (xi, &yi) in x.iter().zip(y) {
            let eta: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            let w = p * (1.0 - p);
            for j in 0..d {
                g[j] += (yi - p) * xi[j];
                for k in 0..d {
                    h[(j, k)] += w * xi[j] * xi[k];
                }
            }
        }
        let Some(step) = regularized_solve(h, g) else { break };
        let size = step.amax();
        let scale = if size > 5.0 { 5.0 / size } else { 1.0 };
        beta.iter_mut().zip(step.iter()).for_each(|(b, s)| *b += scale * s);
        if size < 1e-10 {
            break;
        }
    }
    beta
}

/// Newton–Raphson multinomial logit (class 3 reference); returns
/// `(τ_ρ1, τ_ρ2)` concatenated.
fn multinomial_fit(x: &[Vec<f64>], class: &[usize]) -> Vec<f64> {
    let d = x[0].len();
    let mut beta = vec![0.0; 2 * d];
    for _ in 0..50 {
        let mut g = DVector::<f64>::zeros(2 * d);
        let mut h = DMatrix::<f64>::zeros(2 * d, 2 * d);
        for (xi, &c) in x.iter().zip(class) {
            let f1: f64 = xi.iter().zip(&beta[..d]).map(|(a, b)| a * b).sum();
            let f2: f64 = xi.iter().zip(&beta[d..]).map(|(a, b)| a * b).sum();
            let m = f1.max(f2).max(0.0);
            let (e1, e2, e3) = ((f1 - m).exp(), (f2 - m).exp(), (-m).exp());
            let s = e1 + e2 + e3;
            let rho = [e1 / s, e2 / s];
            for a in 0..2 {
                let resid = (c == a) as u8 as f64 - rho[a];
                for j in 0..d {
                    g[a * d + j] += resid * xi[j];
                }
                for b in 0..2 {
                    let w = rho[a] * ((a == b) as u8 as f64 - rho[b]);
                    for j in 0..d {
                        for k in 0..d {
                            h[(a * d + j, b * d + k)] += w * xi[j] * xi[k];
                        }
                    }
                }
            }
        }
        let Some(step) = regularized_solve(h, g) else { break };
        let size = step.amax();
        let scale = if size > 5.0 { 5.0 / size } else { 1.0 };
        beta.iter_mut().zip(step.iter()).for_each(|(b, s)| *b += scale * s);
        if size < 1e-10 {
            break;
        }
    }
    beta
}

fn regularized_solve(mut h: DMatrix<f64>, g: DVector<f64>) -> Option<DVector<f64>> {
    let d = h.nrows();
    for j in 0..d {
        h[(j, j)] += 1e-10;
    }
    h.cholesky().map(|c| c.solve(&g)).filter(|s| s.iter().all(|x| x.is_finite()))
}

/// MAR warm start: `λ = 0`, `τ_π` from a logistic fit of `V`, `τ_ρ` from a
/// multinomial logit on the verified subjects.
pub fn mar_warm_start(data: &Dataset) -> ParamVector {
    let design: Vec<Vec<f64>> = data
        .records()
        .iter()
        .map(|r| {
            let mut u = vec![0.0; 2 + data.p()];
            r.design_into(&mut u);
            u
        })
        .collect();
    let v: Vec<f64> = data.records().iter().map(|r| r.v() as f64).collect();
    let tau_pi = logistic_fit(&design, &v);
    let (xv, cls): (Vec<Vec<f64>>, Vec<usize>) = data
        .records()
        .iter()
        .zip(&design)
        .filter_map(|(r, u)| r.d.map(|c| (u.clone(), c.index())))
        .unzip();
    let tau_rho = if xv.is_empty() { vec![0.0; 2 * (2 + data.p())] } else { multinomial_fit(&xv, &cls) };
    let b = 2 + data.p();
    ParamVector::from_blocks([0.0, 0.0], &tau_pi, &tau_rho[..b], &tau_rho[b..])
        .unwrap_or_else(|_| ParamVector::zeros(data.p()))
}

fn perturbed_start(base: &ParamVector, seed: u64, restart: usize) -> ParamVector {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let lam = Normal::new(0.0, LAMBDA_JITTER_SD).expect("valid sd");
    let tau = Normal::new(0.0, TAU_JITTER_SD).expect("valid sd");
    let mut xi = base.clone();
    for (i, x) in xi.as_mut_slice().iter_mut().enumerate() {
        *x += if i < 2 { lam.sample(&mut rng) } else { tau.sample(&mut rng) };
    }
    xi
}

/// Fits the joint model by maximum likelihood.
pub fn fit(data: &Dataset, opts: &FitOptions) -> Result<ModelFit> {
    check_fit_data(data, opts.constrain_mar)?;
    let verification_fixed = opts.constrain_mar && data.n_verified() == data.len();
    let mut warm = mar_warm_start(data);
    if verification_fixed {
        let range = warm.tau_pi_range();
        let tau_pi = &mut warm.as_mut_slice()[range];
        tau_pi.iter_mut().for_each(|x| *x = 0.0);
        tau_pi[0] = certain_verification_logit();
    }
    let mar_free = free_indices(&warm, true, verification_fixed);
    let mar = optimize(data, &mar_free, &warm, opts);

    let (best, used) = if opts.constrain_mar {
        (mar, 1)
    } else {
        let free = free_indices(&warm, false, false);
        let mut base = mar.xi.clone();
        base.set_lambda([0.0, 0.0]);
        let mut best: Option<Candidate> = None;
        let mut fallback: Option<Candidate> = None;
        for r in 0..=opts.restarts {
            let start = if r == 0 { base.clone() } else { perturbed_start(&base, opts.seed, r) };
            let cand = optimize(data, &free, &start, opts);
            if cand.converged {
                if best.as_ref().is_none_or(|b| cand.loglik > b.loglik + LOGLIK_TIE) {
                    best = Some(cand);
                }
            } else if fallback.as_ref().is_none_or(|b| cand.grad_norm < b.grad_norm) {
                fallback = Some(cand);
            }
        }
        match best {
            Some(b) => (b, opts.restarts + 1),
            None => {
                let f = fallback.expect("at least one start");
                return Err(Error::NonConvergence { grad_norm: f.grad_norm, iterations: f.iterations });
            }
        }
    };
    if !best.converged {
        return Err(Error::NonConvergence { grad_norm: best.grad_norm, iterations: best.iterations });
    }
    finish(data, best, used, opts.constrain_mar, verification_fixed)
}

fn finish(
    data: &Dataset,
    best: Candidate,
    restarts_used: usize,
    constrain_mar: bool,
    verification_fixed: bool,
) -> Result<ModelFit> {
    let info = observed_information(&best.xi, data)?;
    let free = free_indices(&best.xi, constrain_mar, verification_fixed);
    let factor = SymmetricFactor::new(&principal_submatrix(&info, &free))?;
    let condition = factor.condition_number();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NonIdentifiable { condition });
    }
    let cov = factor.inverse()?;
    let mut std_errors = vec![0.0; best.xi.dim()];
    for (k, &i) in free.iter().enumerate() {
        std_errors[i] = cov[(k, k)].max(0.0).sqrt();
    }
    let identifiability_warning = identifiability_check(&best.xi, &std_errors);
    Ok(ModelFit {
        loglik: log_likelihood(&best.xi, data)?,
        xi_hat: best.xi,
        info,
        converged: true,
        restarts_used,
        grad_norm: best.grad_norm,
        condition_number: condition,
        std_errors,
        constrain_mar,
        verification_fixed,
        identifiability_warning,
        n: data.len(),
    })
}

/// Warns when neither disease logit shows a detectable dependence on `T`,
/// the condition under which the joint model is identified.
fn identifiability_check(xi: &ParamVector, se: &[f64]) -> Option<String> {
    let i1 = xi.tau_rho_range(1).start + 1;
    let i2 = xi.tau_rho_range(2).start + 1;
    let weak = |i: usize| xi.as_slice()[i].abs() < 2.0 * se[i];
    (weak(i1) && weak(i2)).then(|| {
        format!(
            "T-coefficients of both disease logits are within 2 SE of zero ({:.4} ± {:.4}, {:.4} ± {:.4}); \
             identifiability of the nonignorable model is doubtful",
            xi.as_slice()[i1],
            se[i1],
            xi.as_slice()[i2],
            se[i2]
        )
    })
}

/// Likelihood-ratio test of `H₀: λ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub stat: f64,
    pub df: u32,
    pub p_value: f64,
    pub loglik_ni: f64,
    pub loglik_mar: f64,
}

pub fn lrt_from_fits(ni: &ModelFit, mar: &ModelFit) -> LrtResult {
    let raw = 2.0 * (ni.loglik - mar.loglik);
    let stat = raw.max(0.0);
    LrtResult { stat, df: 2, p_value: chi2_df2_sf(stat), loglik_ni: ni.loglik, loglik_mar: mar.loglik }
}

/// Fits both models and compares them.
pub fn lrt_ignorability(data: &Dataset, opts: &FitOptions) -> Result<LrtResult> {
    let ni = fit(data, &FitOptions { constrain_mar: false, ..*opts })?;
    let mar = fit(data, &FitOptions { constrain_mar: true, ..*opts })?;
    Ok(lrt_from_fits(&ni, &mar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DiseaseClass, SubjectRecord};

    fn tiny(n: usize) -> Dataset {
        let recs = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                if i % 4 == 3 {
                    SubjectRecord::unverified(t, vec![0.5 - t])
                } else {
                    SubjectRecord::verified(t, vec![0.5 - t], DiseaseClass::from_index(i % 3))
                }
            })
            .collect();
        Dataset::new(recs, 1).unwrap()
    }

    #[test]
    fn too_few_subjects() {
        assert!(matches!(fit(&tiny(10), &FitOptions::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn requires_unverified_subjects_when_nonignorable() {
        let all = tiny(40).map_records(|r| SubjectRecord { d: Some(r.d.unwrap_or(DiseaseClass::One)), ..r.clone() });
        assert!(matches!(check_fit_data(&all.unwrap(), false), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn equal_likelihoods_give_unit_p_value() {
        let base = ModelFit {
            xi_hat: ParamVector::zeros(0),
            loglik: -10.0,
            info: DMatrix::zeros(8, 8),
            converged: true,
            restarts_used: 1,
            grad_norm: 0.0,
            condition_number: 1.0,
            std_errors: vec![0.0; 8],
            constrain_mar: false,
            verification_fixed: false,
            identifiability_warning: None,
            n: 10,
        };
        let r = lrt_from_fits(&base, &base);
        assert_eq!(r.stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 2);
    }
}
