//! Distribution fitting, goodness of fit and two-sample tests.

pub mod describe;
pub mod family;
pub mod fit;
pub mod gof;
pub mod hypothesis;
pub mod optim;
pub mod special;

use thiserror::Error;

pub use describe::{iqr_bounds, iqr_filter, quantile, summarize, Summary};
pub use family::{nll, sample, Dist, Family, FittedDist};
pub use fit::{fit_mle, fit_mle_with, FitOptions};
pub use gof::{bootstrap_ks, bootstrap_ks_with, ks_statistic, BootstrapOptions, GofResult};
pub use hypothesis::{mannwhitney_u, welch_t, TestReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("data contains non-finite values")]
    NonFiniteData,
    #[error("all observations are identical")]
    DegenerateSample,
    #[error("both samples have zero variance")]
    DegenerateVariance,
    #[error("data outside the distribution support: {0}")]
    SupportViolation(String),
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("{failed} of {replicates} bootstrap refits failed")]
    BootstrapFailures { failed: usize, replicates: usize },
}
