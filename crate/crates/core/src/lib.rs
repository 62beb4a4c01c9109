//! NB2 negative binomial regression by maximum likelihood.
//!
//! The log-likelihood and its θ-derivatives are evaluated through finite
//! sums instead of gamma, digamma and trigamma differences. The [`identity`]
//! and [`verify`] modules check those rewrites numerically, and the
//! [`fisher`] module computes observed and expected information with an
//! explicit truncation report.

pub mod derivatives;
pub mod error;
pub mod estimator;
pub mod finite_diff;
pub mod fisher;
pub mod identity;
pub mod mixture;
pub mod model;
pub mod special;
pub mod verify;

pub use derivatives::GradHess;
pub use error::{Error, Result};
pub use estimator::{fit, init_params, standard_errors, FitOptions, FitResult, Termination, ThetaScale};
pub use fisher::{information, InfoKind, InfoMatrix, TailConvention, TruncationReport};
pub use identity::{IdentityId, IdentityReport, IdentityTolerances, Verdict};
pub use mixture::{sample_nb, simulate_regression, NbSampler};
pub use model::{loglik, loglik_alpha, nb_pmf, Dataset, Params, TailCutoff, INTERCEPT_NAME};
pub use verify::{VerifyConfig, VerifyReport};

pub use nalgebra::{DMatrix, DVector};
