//! JSON reports written by the `fit` and `estimate` commands. Their schemas
//! are kept under `docs/schema/`.

use serde::{Deserialize, Serialize};
use vusni_core::data::{Dataset, Standardization};
use vusni_core::estimators::{Method, VusEstimate};
use vusni_core::fit::{LrtResult, ModelFit};
use vusni_core::params::{LabeledParams, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `"nonignorable"` or `"mar"` (λ fixed at zero).
    pub model: String,
    pub n: usize,
    pub n_verified: usize,
    pub p: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub condition_number: f64,
    pub xi_hat: LabeledParams,
    /// `xi_hat` in block order `(λ₁, λ₂, τ_π, τ_ρ1, τ_ρ2)`.
    pub xi_flat: Vec<f64>,
    pub std_errors: LabeledParams,
    /// Coordinates held fixed rather than estimated.
    pub fixed: Vec<String>,
    pub identifiability_warning: Option<String>,
    pub standardization: Option<Standardization>,
}

impl FitReport {
    pub fn new(fit: &ModelFit, data: &Dataset, standardization: Option<&Standardization>) -> Self {
        let names = fit.xi_hat.coordinate_names();
        let free = fit.free_indices();
        let se = ParamVector::from_flat(fit.std_errors.clone()).expect("one standard error per coordinate");
        FitReport {
            model: if fit.constrain_mar { "mar" } else { "nonignorable" }.into(),
            n: data.len(),
            n_verified: data.n_verified(),
            p: data.p(),
            converged: fit.converged,
            restarts_used: fit.restarts_used,
            loglik: fit.loglik,
            grad_norm: fit.grad_norm,
            condition_number: fit.condition_number,
            xi_hat: fit.xi_hat.labeled(),
            xi_flat: fit.xi_hat.as_slice().to_vec(),
            std_errors: se.labeled(),
            fixed: names.into_iter().enumerate().filter(|(j, _)| !free.contains(j)).map(|(_, s)| s).collect(),
            identifiability_warning: fit.identifiability_warning.clone(),
            standardization: standardization.cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodError {
    pub method: Method,
    pub error: String,
}

/// Resampling standard error of the nonparametric (verified-only) estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub reps: usize,
    pub seed: u64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub n_verified: usize,
    pub level: f64,
    /// The fit the corrected estimators were computed from, when one was needed.
    pub fit: Option<FitReport>,
    pub estimates: Vec<VusEstimate>,
    /// Methods that failed; the others are still reported.
    pub errors: Vec<MethodError>,
    pub lrt: Option<LrtResult>,
    pub bootstrap: Option<BootstrapReport>,
    pub notes: Vec<String>,
    pub standardization: Option<Standardization>,
}

impl EstimateReport {
    pub fn estimate(&self, method: Method) -> Option<&VusEstimate> {
        self.estimates.iter().find(|e| e.method == method)
    }
}
