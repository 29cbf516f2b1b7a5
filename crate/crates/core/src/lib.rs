//! Volume under the ROC surface (VUS) for a continuous three-class diagnostic
//! test when disease verification is missing not at random.
//!
//! The disease process is a multinomial logit of the class on `(1, T, A)`;
//! the verification process is a logistic model whose linear predictor also
//! depends on the (possibly unobserved) class through two nonignorability
//! parameters `λ₁, λ₂`. Both are fitted jointly by maximum likelihood
//! ([`fit`]), and the fitted probabilities feed four bias-corrected VUS
//! estimators ([`estimators`]): full imputation (FI), mean-score imputation
//! (MSI), inverse probability weighting (IPW) and pseudo doubly robust (PDR).
//! Asymptotic standard errors come from the influence-function
//! decomposition in [`inference`]. [`simulation`] generates synthetic
//! studies and runs a seeded Monte Carlo harness.
//!
//! The crate is `no_std` (it needs `alloc`); enable the `std` feature to use
//! the platform math library.
//!
//! ```
//! use vusni_core::simulation::{builtin_scenario, generate, Scenario};
//! use vusni_core::fit::{fit, FitOptions};
//! use vusni_core::estimators::{vus_estimate, Method};
//!
//! let spec = builtin_scenario(Scenario::II);
//! let sim = generate(&spec, 400, 11).unwrap();
//! let model = fit(&sim.data, &FitOptions { restarts: 1, ..FitOptions::default() }).unwrap();
//! let est = vus_estimate(Method::Fi, &sim.data, &model, 0.95).unwrap();
//! assert!(est.mu_hat > 0.0 && est.mu_hat < 1.0);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod estimators;
pub mod fit;
pub mod inference;
pub mod linalg;
pub mod math;
pub mod model;
mod optim;
pub mod params;
pub mod simulation;
pub mod trisum;

pub use data::{Dataset, DiseaseClass, SubjectRecord};
pub use error::{Error, Result};
pub use estimators::{Method, VusEstimate};
pub use fit::{FitOptions, LrtResult, ModelFit};
pub use params::ParamVector;
