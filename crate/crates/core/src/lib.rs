//! Antitonic score matching for linear regression.
//!
//! Estimates a convex loss from regression residuals by projecting a
//! kernel-smoothed score onto the decreasing functions, then fits the
//! regression coefficients by convex M-estimation with that loss.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod densities;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod monotone;
pub mod quadrature;
pub mod regression;
pub mod score;
pub mod special;

pub use densities::{
    asymptotic_variance, projected_score_closed_form, projected_score_numeric, ClosedFormFamily, ProjectedScore,
    ReferenceDensity,
};
pub use error::{Error, Result};
pub use experiment::{coverage, mse_compare, simulate, Estimator, ExperimentSpec};
pub use inference::{infer, Ellipsoid, InferenceResult};
pub use monotone::{
    lcm, negative_antiderivative, pava_decreasing, ConvexLoss, GridFunction, Loss, MonotoneScore, ScoreMode,
};
pub use regression::{
    alternating_fit, asm_fit, asm_fit_crossfit, fit_pilot, one_step_fit, CrossFit, FitConfig, FitMode, FitResult,
    Folds, Pilot, RegressionData, SolverConfig, Zeta,
};
pub use score::{Bandwidth, KdeModel, Kernel, ScoreConfig, TruncationParams};
