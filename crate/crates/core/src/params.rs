//! The joint-model parameter vector `ξ = (λ₁, λ₂, τ_π, τ_ρ1, τ_ρ2)`.
//!
//! Each `τ` block is `(intercept, T-coefficient, A-coefficients…)`, so the
//! flat vector has `8 + 3p` entries for `p` covariates. The flat order is
//! fixed and used for serialization, gradients and information matrices.

use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LabeledParams", into = "LabeledParams")]
pub struct ParamVector {
    values: Vec<f64>,
    p: usize,
}

/// Labeled JSON form of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau_pi: Vec<f64>,
    pub tau_rho1: Vec<f64>,
    pub tau_rho2: Vec<f64>,
}

impl ParamVector {
    pub fn dim_for(p: usize) -> usize {
        8 + 3 * p
    }

    pub fn zeros(p: usize) -> Self {
        ParamVector { values: alloc::vec![0.0; Self::dim_for(p)], p }
    }

    /// Wraps a flat vector in block order; `p` is inferred from the length.
    pub fn from_flat(values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        if len < 8 || !(len - 8).is_multiple_of(3) {
            return Err(Error::DimensionMismatch { expected: 8, found: len });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParamVector { values, p: (len - 8) / 3 })
    }

    pub fn from_blocks(lambda: [f64; 2], tau_pi: &[f64], tau_rho1: &[f64], tau_rho2: &[f64]) -> Result<Self> {
        let b = tau_pi.len();
        if b < 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: b });
        }
        for block in [tau_rho1, tau_rho2] {
            if block.len() != b {
                return Err(Error::DimensionMismatch { expected: b, found: block.len() });
            }
        }
        let mut v = Vec::with_capacity(2 + 3 * b);
        v.extend_from_slice(&lambda);
        v.extend_from_slice(tau_pi);
        v.extend_from_slice(tau_rho1);
        v.extend_from_slice(tau_rho2);
        Self::from_flat(v)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Length of each `τ` block, `2 + p`.
    pub fn block_len(&self) -> usize {
        2 + self.p
    }

    pub fn lambda(&self) -> [f64; 2] {
        [self.values[0], self.values[1]]
    }

    pub fn tau_pi_range(&self) -> Range<usize> {
        2..2 + self.block_len()
    }

    pub fn tau_rho_range(&self, k: usize) -> Range<usize> {
        debug_assert!(k == 1 || k == 2);
        let b = self.block_len();
        let start = 2 + b * k;
        start..start + b
    }

    pub fn tau_pi(&self) -> &[f64] {
        &self.values[self.tau_pi_range()]
    }

    /// `τ_ρk` for `k ∈ {1, 2}`.
    pub fn tau_rho(&self, k: usize) -> &[f64] {
        &self.values[self.tau_rho_range(k)]
    }

    pub fn set_lambda(&mut self, lambda: [f64; 2]) {
        self.values[0] = lambda[0];
        self.values[1] = lambda[1];
    }

    pub fn check_p(&self, p: usize) -> Result<()> {
        if self.p != p {
            return Err(Error::DimensionMismatch { expected: Self::dim_for(p), found: self.dim() });
        }
        Ok(())
    }

    pub fn labeled(&self) -> LabeledParams {
        LabeledParams {
            lambda1: self.values[0],
            lambda2: self.values[1],
            tau_pi: self.tau_pi().to_vec(),
            tau_rho1: self.tau_rho(1).to_vec(),
            tau_rho2: self.tau_rho(2).to_vec(),
        }
    }

    /// Human-readable coordinate names in flat order, e.g. `tau_rho1[1]`.
    pub fn coordinate_names(&self) -> Vec<alloc::string::String> {
        use alloc::format;
        let b = self.block_len();
        let mut names = alloc::vec![format!("lambda1"), format!("lambda2")];
        for block in ["tau_pi", "tau_rho1", "tau_rho2"] {
            names.extend((0..b).map(|j| format!("{block}[{j}]")));
        }
        names
    }
}

impl TryFrom<LabeledParams> for ParamVector {
    type Error = Error;

    fn try_from(l: LabeledParams) -> Result<Self> {
        ParamVector::from_blocks([l.lambda1, l.lambda2], &l.tau_pi, &l.tau_rho1, &l.tau_rho2)
    }
}

impl From<ParamVector> for LabeledParams {
    fn from(p: ParamVector) -> Self {
        p.labeled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn block_layout() {
        let xi = ParamVector::from_blocks([-2.5, -1.0], &[1.0, 1.2, -1.5], &[4.6, -3.3, -6.4], &[4.0, -1.7, -3.2])
            .unwrap();
        assert_eq!(xi.dim(), 11);
        assert_eq!(xi.p(), 1);
        assert_eq!(xi.lambda(), [-2.5, -1.0]);
        assert_eq!(xi.tau_pi(), &[1.0, 1.2, -1.5]);
        assert_eq!(xi.tau_rho(1), &[4.6, -3.3, -6.4]);
        assert_eq!(xi.tau_rho(2), &[4.0, -1.7, -3.2]);
        assert_eq!(xi.coordinate_names()[5], "tau_rho1[0]");
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(ParamVector::from_flat(vec![0.0; 9]).is_err());
        assert!(ParamVector::from_flat(vec![0.0; 7]).is_err());
        assert!(ParamVector::from_flat(vec![f64::NAN; 8]).is_err());
        assert!(ParamVector::from_blocks([0.0; 2], &[0.0; 3], &[0.0; 2], &[0.0; 3]).is_err());
    }
}
