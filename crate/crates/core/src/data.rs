//! Subject records, the dataset container and standardization.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // needed only when std is not linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered disease class: 1 (e.g. non-diseased), 2 (intermediate), 3 (diseased).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DiseaseClass {
    One,
    Two,
    Three,
}

impl DiseaseClass {
    pub const ALL: [DiseaseClass; 3] = [DiseaseClass::One, DiseaseClass::Two, DiseaseClass::Three];

    /// Zero-based index (0, 1, 2).
    pub fn index(self) -> usize {
        match self {
            DiseaseClass::One => 0,
            DiseaseClass::Two => 1,
            DiseaseClass::Three => 2,
        }
    }

    pub fn from_index(k: usize) -> Self {
        DiseaseClass::ALL[k]
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Indicator triple `(D₁, D₂, D₃)`.
    pub fn one_hot(self) -> [f64; 3] {
        let mut d = [0.0; 3];
        d[self.index()] = 1.0;
        d
    }
}

impl TryFrom<u8> for DiseaseClass {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(DiseaseClass::One),
            2 => Ok(DiseaseClass::Two),
            3 => Ok(DiseaseClass::Three),
            other => Err(Error::InvalidClass(other)),
        }
    }
}

impl From<DiseaseClass> for u8 {
    fn from(c: DiseaseClass) -> u8 {
        c.label()
    }
}

/// One subject: test result, covariates and (when verified) the disease class.
///
/// The verification flag is not stored separately: a subject is verified
/// exactly when its class is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub t: f64,
    pub a: Vec<f64>,
    pub d: Option<DiseaseClass>,
}

impl SubjectRecord {
    /// Builds a record from the raw `(t, a, v, d)` fields, checking that `d`
    /// is present exactly when `v = 1`.
    pub fn new(t: f64, a: Vec<f64>, v: u8, d: Option<u8>) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::NonFinite("test result"));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariate"));
        }
        let d = match (v, d) {
            (1, Some(k)) => Some(DiseaseClass::try_from(k)?),
            (0, None) => None,
            (0 | 1, has) => {
                return Err(Error::VerifiedLabelMismatch { v, has_label: has.is_some() })
            }
            (other, _) => return Err(Error::VerifiedLabelMismatch { v: other, has_label: d.is_some() }),
        };
        Ok(SubjectRecord { t, a, d })
    }

    pub fn verified(t: f64, a: Vec<f64>, d: DiseaseClass) -> Self {
        SubjectRecord { t, a, d: Some(d) }
    }

    pub fn unverified(t: f64, a: Vec<f64>) -> Self {
        SubjectRecord { t, a, d: None }
    }

    pub fn v(&self) -> u8 {
        self.d.is_some() as u8
    }

    pub fn is_verified(&self) -> bool {
        self.d.is_some()
    }

    /// `(D₁, D₂, D₃)` for a verified subject, zeros otherwise.
    pub fn one_hot(&self) -> [f64; 3] {
        self.d.map(DiseaseClass::one_hot).unwrap_or([0.0; 3])
    }

    /// Regressor vector `U = (1, T, Aᵀ)ᵀ` written into `out`.
    pub fn design_into(&self, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = self.t;
        out[2..].copy_from_slice(&self.a);
    }
}

/// Validated collection of subjects sharing covariate dimension `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    p: usize,
}

impl Dataset {
    pub const MIN_RECORDS: usize = 3;

    pub fn new(records: Vec<SubjectRecord>, p: usize) -> Result<Self> {
        if records.len() < Self::MIN_RECORDS {
            return Err(Error::TooFewRecords { min: Self::MIN_RECORDS, found: records.len() });
        }
        for r in &records {
            if r.a.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: r.a.len() });
            }
            if !r.t.is_finite() {
                return Err(Error::NonFinite("test result"));
            }
            if r.a.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("covariate"));
            }
        }
        Ok(Dataset { records, p })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SubjectRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn test_results(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn n_verified(&self) -> usize {
        self.records.iter().filter(|r| r.is_verified()).count()
    }

    /// Verified subjects per class.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for d in self.records.iter().filter_map(|r| r.d) {
            c[d.index()] += 1;
        }
        c
    }

    pub fn all_verified(&self) -> bool {
        self.records.iter().all(SubjectRecord::is_verified)
    }

    /// Copy of the dataset with every record replaced by `f(record)`.
    pub fn map_records(&self, f: impl FnMut(&SubjectRecord) -> SubjectRecord) -> Result<Dataset> {
        Dataset::new(self.records.iter().map(f).collect(), self.p)
    }
}

/// Mean and sample standard deviation used to standardize one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub mean: f64,
    pub sd: f64,
}

impl ColumnTransform {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// The per-column transform applied by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub t: ColumnTransform,
    pub a: Vec<ColumnTransform>,
}

fn column_transform(values: impl Iterator<Item = f64> + Clone, n: usize, name: &str) -> Result<ColumnTransform> {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance(name.into()));
    }
    Ok(ColumnTransform { mean, sd })
}

/// Centers `t` and each covariate column and scales to unit sample standard
/// deviation (divisor `n − 1`).
pub fn standardize(data: &Dataset) -> Result<(Dataset, Standardization)> {
    let n = data.len();
    let t = column_transform(data.records.iter().map(|r| r.t), n, "t")?;
    let a = (0..data.p)
        .map(|j| column_transform(data.records.iter().map(move |r| r.a[j]), n, &format!("a{}", j + 1)))
        .collect::<Result<Vec<_>>>()?;
    let out = data.map_records(|r| SubjectRecord {
        t: t.apply(r.t),
        a: r.a.iter().zip(&a).map(|(&x, tr)| tr.apply(x)).collect(),
        d: r.d,
    })?;
    Ok((out, Standardization { t, a }))
}
