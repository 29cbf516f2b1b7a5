//! Small dense symmetric solves through an eigendecomposition, which also
//! yields the condition number reported with every fit.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue ratio below which a symmetric matrix is treated as singular.
const SINGULAR_RATIO: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct SymmetricFactor {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl SymmetricFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularInformation);
        }
        Ok(SymmetricFactor { eig: m.clone().symmetric_eigen() })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eig.eigenvalues
    }

    /// `max|eig| / min|eig|`, infinite for an exactly singular matrix.
    pub fn condition_number(&self) -> f64 {
        let abs = self.eig.eigenvalues.iter().map(|x| x.abs());
        let max = abs.clone().fold(0.0, f64::max);
        let min = abs.fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eig.eigenvalues.iter().all(|&x| x > 0.0)
    }

    fn check_invertible(&self) -> Result<()> {
        let c = self.condition_number();
        if !c.is_finite() || c * SINGULAR_RATIO > 1.0 {
            return Err(Error::SingularInformation);
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_invertible()?;
        let q = &self.eig.eigenvectors;
        let mut coef = q.transpose() * DVector::from_column_slice(b);
        for (c, l) in coef.iter_mut().zip(self.eig.eigenvalues.iter()) {
            *c /= l;
        }
        Ok((q * coef).iter().copied().collect())
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.check_invertible()?;
        let q = &self.eig.eigenvectors;
        let d = DMatrix::from_diagonal(&self.eig.eigenvalues.map(|l| 1.0 / l));
        Ok(q * d * q.transpose())
    }
}

/// Principal submatrix on the given indices.
pub fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}
