//! VUS estimators under verification bias.
//!
//! Each estimator replaces the unknown class indicators `Dₖᵢ` by pseudo
//! labels `D̃ₖᵢ` built from the fitted model and plugs them into the
//! nonparametric ratio of triple sums:
//!
//! | method  | `D̃ₖᵢ`                                   |
//! |---------|-----------------------------------------|
//! | FI      | `ρₖ`                                     |
//! | FI_ALT  | `V ρₖ₍₁₎ + (1 − V) ρₖ₍₀₎`                 |
//! | MSI     | `V Dₖ + (1 − V) ρₖ₍₀₎`                    |
//! | IPW     | `V Dₖ / π_D`                             |
//! | PDR     | `V Dₖ / π_D − ρₖ₍₀₎ (V − π_D) / π_D`       |
//!
//! `π_D = Pr(V = 1 | D, T, A)` is the verification probability of the
//! subject's own class, which is what makes the inverse weighting unbiased
//! when verification depends on the disease.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::ModelFit;
use crate::inference;
use crate::model::{record_probs, SubjectProbs};
use crate::params::ParamVector;
use crate::trisum::{triple_sums, TieGroups};

/// Verification probabilities below this are rejected for IPW and PDR.
pub const MIN_VERIFICATION_PROB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fi,
    FiAlt,
    Msi,
    Ipw,
    Pdr,
    /// Complete-case estimator on the verified subjects; the full-data
    /// estimator when everyone is verified.
    Nonparametric,
}

impl Method {
    /// The four bias-corrected estimators.
    pub const CORRECTED: [Method; 4] = [Method::Fi, Method::Msi, Method::Ipw, Method::Pdr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fi => "fi",
            Method::FiAlt => "fi_alt",
            Method::Msi => "msi",
            Method::Ipw => "ipw",
            Method::Pdr => "pdr",
            Method::Nonparametric => "nonparametric",
        }
    }

    pub fn needs_fit(self) -> bool {
        self != Method::Nonparametric
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fi" => Ok(Method::Fi),
            "fi_alt" | "fi-alt" => Ok(Method::FiAlt),
            "msi" => Ok(Method::Msi),
            "ipw" => Ok(Method::Ipw),
            "pdr" => Ok(Method::Pdr),
            "nonparametric" | "np" => Ok(Method::Nonparametric),
            other => Err(alloc::format!("unknown method `{other}`")),
        }
    }
}

/// Per-subject pseudo disease labels; the rows are the triple-sum weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabels {
    pub method: Method,
    pub dtilde: Vec<[f64; 3]>,
    /// `V / π_D` for IPW, absent otherwise.
    pub ipw_weight: Option<Vec<f64>>,
}

impl PseudoLabels {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.dtilde.iter().map(|row| row[k]).collect()
    }

    pub fn negative_entries(&self) -> usize {
        self.dtilde.iter().flatten().filter(|&&x| x < 0.0).count()
    }

    /// Class-probability estimates `θ̂`.
    pub fn theta_hat(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for row in &self.dtilde {
            for k in 0..3 {
                s[k] += row[k];
            }
        }
        let denom = match (&self.ipw_weight, self.method) {
            (Some(w), _) => w.iter().sum(),
            (None, Method::Nonparametric) => s.iter().sum(),
            (None, _) => self.dtilde.len() as f64,
        };
        s.map(|x| x / denom)
    }
}

/// Fitted probabilities for every subject.
pub fn fitted_probs(data: &Dataset, xi: &ParamVector) -> Result<Vec<SubjectProbs>> {
    xi.check_p(data.p())?;
    data.records().iter().map(|r| record_probs(xi, r)).collect()
}

pub fn pseudo_labels(method: Method, data: &Dataset, fit: &ModelFit) -> Result<PseudoLabels> {
    if method.needs_fit() && !fit.converged {
        return Err(Error::NonConvergence { grad_norm: fit.grad_norm, iterations: 0 });
    }
    let probs = fitted_probs(data, &fit.xi_hat)?;
    pseudo_labels_from_probs(method, data, &probs)
}

/// Pseudo labels from explicitly supplied per-subject probabilities.
pub fn pseudo_labels_from_probs(method: Method, data: &Dataset, probs: &[SubjectProbs]) -> Result<PseudoLabels> {
    if probs.len() != data.len() {
        return Err(Error::LengthMismatch { expected: data.len(), found: probs.len() });
    }
    let mut ipw = (method == Method::Ipw).then(|| Vec::with_capacity(data.len()));
    let mut dtilde = Vec::with_capacity(data.len());
    for (i, (r, pr)) in data.records().iter().zip(probs).enumerate() {
        let row = match (method, r.d) {
            (Method::Fi, _) => pr.rho,
            (Method::FiAlt, Some(_)) => pr.rho1v,
            (Method::FiAlt | Method::Msi | Method::Pdr, None) => pr.rho0,
            (Method::Msi | Method::Nonparametric, Some(c)) => c.one_hot(),
            (Method::Ipw | Method::Nonparametric, None) => [0.0; 3],
            (Method::Ipw, Some(c)) => {
                let q = class_verification_prob(i, pr, c.index())?;
                c.one_hot().map(|x| x / q)
            }
            (Method::Pdr, Some(c)) => {
                let q = class_verification_prob(i, pr, c.index())?;
                let oh = c.one_hot();
                core::array::from_fn(|k| oh[k] / q - pr.rho0[k] * (1.0 - q) / q)
            }
        };
        if let Some(w) = ipw.as_mut() {
            w.push(match r.d {
                Some(c) => 1.0 / class_verification_prob(i, pr, c.index())?,
                None => 0.0,
            });
        }
        dtilde.push(row);
    }
    Ok(PseudoLabels { method, dtilde, ipw_weight: ipw })
}

fn class_verification_prob(index: usize, pr: &SubjectProbs, k: usize) -> Result<f64> {
    let q = pr.pi_class[k];
    if !(q >= MIN_VERIFICATION_PROB) {
        return Err(Error::ExtremeWeight { index, pi: q });
    }
    Ok(q)
}

/// `μ̂` and `θ̂` from pseudo labels.
pub fn point_estimate(labels: &PseudoLabels, groups: &TieGroups) -> Result<(f64, [f64; 3])> {
    let cols = [labels.column(0), labels.column(1), labels.column(2)];
    let s = triple_sums(groups, &cols[0], &cols[1], &cols[2])?;
    if !(s.product > 0.0) {
        return Err(Error::DenominatorUnderflow(s.product));
    }
    Ok((s.ratio(), labels.theta_hat()))
}

pub(crate) fn nonparametric_labels(data: &Dataset) -> Result<PseudoLabels> {
    let counts = data.class_counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(k as u8 + 1));
    }
    let dtilde = data.records().iter().map(|r| r.one_hot()).collect();
    Ok(PseudoLabels { method: Method::Nonparametric, dtilde, ipw_weight: None })
}

/// Nonparametric VUS over the verified subjects.
pub fn vus_nonparametric(data: &Dataset) -> Result<f64> {
    let labels = nonparametric_labels(data)?;
    let groups = TieGroups::new(&data.test_results());
    point_estimate(&labels, &groups).map(|(mu, _)| mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    /// Asymptotic variance `Λ̂`.
    pub lambda_hat: f64,
    /// Condition number of the information used for the score part.
    pub condition_number: Option<f64>,
    pub mean_q: f64,
    pub sd_q: f64,
    pub negative_pdr_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VusEstimate {
    pub method: Method,
    pub mu_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub theta_hat: [f64; 3],
    pub diagnostics: EstimateDiagnostics,
}

/// Point estimate, asymptotic standard error and normal-theory interval.
///
/// `fit` is ignored for [`Method::Nonparametric`].
pub fn vus_estimate(method: Method, data: &Dataset, fit: &ModelFit, level: f64) -> Result<VusEstimate> {
    if method == Method::Nonparametric {
        return vus_estimate_nonparametric(data, level);
    }
    inference::check_level(level)?;
    let labels = pseudo_labels(method, data, fit)?;
    let groups = TieGroups::new(&data.test_results());
    let (mu_hat, theta_hat) = point_estimate(&labels, &groups)?;
    let brk = inference::influence_from_labels(&labels, mu_hat, theta_hat, Some(fit), data, &groups)?;
    Ok(assemble(method, mu_hat, theta_hat, level, &brk, Some(fit.condition_number), labels.negative_entries()))
}

/// Nonparametric estimate with the U-statistic (kernel-only) standard error.
pub fn vus_estimate_nonparametric(data: &Dataset, level: f64) -> Result<VusEstimate> {
    inference::check_level(level)?;
    let labels = nonparametric_labels(data)?;
    let groups = TieGroups::new(&data.test_results());
    let (mu_hat, theta_hat) = point_estimate(&labels, &groups)?;
    let brk = inference::influence_from_labels(&labels, mu_hat, theta_hat, None, data, &groups)?;
    Ok(assemble(Method::Nonparametric, mu_hat, theta_hat, level, &brk, None, 0))
}

fn assemble(
    method: Method,
    mu_hat: f64,
    theta_hat: [f64; 3],
    level: f64,
    brk: &inference::InfluenceBreakdown,
    condition_number: Option<f64>,
    negative: usize,
) -> VusEstimate {
    let se = inference::standard_error(brk.lambda_hat, brk.q.len());
    VusEstimate {
        method,
        mu_hat,
        se,
        ci: inference::confidence_interval(mu_hat, se, level),
        level,
        theta_hat,
        diagnostics: EstimateDiagnostics {
            lambda_hat: brk.lambda_hat,
            condition_number,
            mean_q: brk.mean_q(),
            sd_q: brk.sd_q(),
            negative_pdr_entries: if method == Method::Pdr { negative } else { 0 },
        },
    }
}
