//! Plug-in information estimates, covariances and confidence sets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::monotone::MonotoneScore;
use crate::regression::{FitMode, FitResult, RegressionData, Zeta};
use crate::score::{Bandwidth, KdeModel, Kernel};
use crate::special::{chi_square_quantile, norm_quantile, unit_ball_volume};

/// `n⁻¹ Σ ψ(εᵢ)²`.
pub fn estimate_i_star(score: &MonotoneScore, residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return f64::NAN;
    }
    residuals.iter().map(|&e| score.eval(e).powi(2)).sum::<f64>() / residuals.len() as f64
}

/// Plug-in estimate of `υ = E ζ(ε)² / (E ζ'(ε))²`.
///
/// For the mean this is the mean squared residual. For the `τ`-quantile it
/// is `n⁻¹ Σ ζ(εᵢ)²` over the squared error density at zero, which is taken
/// from `density_at_zero` or else from a Gaussian kernel estimate with
/// Silverman's bandwidth.
pub fn estimate_upsilon(zeta: Zeta, residuals: &[f64], density_at_zero: Option<f64>) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput("no residuals".into()));
    }
    let n = residuals.len() as f64;
    match zeta {
        Zeta::Mean => Ok(residuals.iter().map(|e| e * e).sum::<f64>() / n),
        Zeta::Quantile(_) => {
            let p0 = match density_at_zero {
                Some(p) => p,
                None => KdeModel::new(residuals, Kernel::Gaussian, Bandwidth::Silverman)?.pdf(0.0),
            };
            if !(p0 > 0.0) {
                return Err(Error::DegenerateSample(
                    "estimated error density vanishes at zero".into(),
                ));
            }
            let num = residuals.iter().map(|&e| zeta.eval(e).powi(2)).sum::<f64>() / n;
            Ok(num / (p0 * p0))
        }
    }
}

fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x
}

fn symmetric_inverse(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = m
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidInput(format!("{what} is not positive definite")))?;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `Cov(β̂) ≈ (î XᵀX)⁻¹`, i.e. the inverse of `n Î` with `Î = (î/n) XᵀX`.
pub fn covariance_symmetric(design: &DMatrix<f64>, i_star_hat: f64) -> Result<DMatrix<f64>> {
    if !(i_star_hat > 0.0) {
        return Err(Error::InvalidInput("information estimate must be positive".into()));
    }
    symmetric_inverse(gram(design) * i_star_hat, "the information matrix")
}

/// `Î^ζ = (î/n) XᵀX − (î − 1/υ̂) x̄x̄ᵀ` for a design whose last column is the
/// intercept, with `x̄` the mean row.
pub fn information_intercept(design: &DMatrix<f64>, i_star_hat: f64, upsilon_hat: f64) -> Result<DMatrix<f64>> {
    if !(i_star_hat > 0.0 && upsilon_hat > 0.0) {
        return Err(Error::InvalidInput(
            "information and variance estimates must be positive".into(),
        ));
    }
    let n = design.nrows() as f64;
    let mean = DVector::from_iterator(design.ncols(), design.column_iter().map(|c| c.sum() / n));
    Ok(gram(design) * (i_star_hat / n) - &mean * mean.transpose() * (i_star_hat - 1.0 / upsilon_hat))
}

/// `Cov(β̂) ≈ (Î^ζ)⁻¹ / n`.
pub fn covariance_intercept(design: &DMatrix<f64>, i_star_hat: f64, upsilon_hat: f64) -> Result<DMatrix<f64>> {
    let info = information_intercept(design, i_star_hat, upsilon_hat)?;
    Ok(symmetric_inverse(info, "the information matrix")? / design.nrows() as f64)
}

/// Per-observation slope information `(î/n) Σ (x̃ᵢ − x̄)(x̃ᵢ − x̄)ᵀ`, the
/// Schur complement of the intercept block of `Î^ζ`.
pub fn slope_information(covariates: &DMatrix<f64>, i_star_hat: f64) -> DMatrix<f64> {
    centred_second_moment(covariates) * i_star_hat
}

fn centred_second_moment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
    }
    gram(&c) / n
}

/// Per-observation information `Σ̂ / σ̂²` of least squares slopes, with
/// `σ̂² = RSS/(n − d)`.
pub fn ols_slope_information(covariates: &DMatrix<f64>, residuals: &[f64], d: usize) -> DMatrix<f64> {
    let n = residuals.len();
    let sigma2 = residuals.iter().map(|r| r * r).sum::<f64>() / (n - d) as f64;
    centred_second_moment(covariates) / sigma2
}

/// `β̂ⱼ ± z_{α/2} √cov_jj`.
pub fn confidence_intervals(beta: &[f64], cov: &DMatrix<f64>, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("level {alpha} outside (0, 1)")));
    }
    let z = norm_quantile(1.0 - alpha / 2.0);
    Ok(beta
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let w = z * cov[(j, j)].max(0.0).sqrt();
            (b - w, b + w)
        })
        .collect())
}

/// `{b : (b − c)ᵀ M (b − c) ≤ t}`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub threshold: f64,
}

impl Ellipsoid {
    pub fn contains(&self, b: &[f64]) -> bool {
        let v = DVector::from_iterator(b.len(), b.iter().zip(&self.center).map(|(x, c)| x - c));
        (v.transpose() * &self.matrix * &v)[(0, 0)] <= self.threshold
    }

    /// `V_d t^{d/2} / √det M`.
    pub fn volume(&self) -> f64 {
        let d = self.center.len();
        unit_ball_volume(d) * self.threshold.powf(0.5 * d as f64) / self.matrix.determinant().sqrt()
    }

    /// `log` of [`Ellipsoid::volume`], stable in higher dimension.
    pub fn log_volume(&self) -> f64 {
        let d = self.center.len();
        let logdet = self
            .matrix
            .clone()
            .cholesky()
            .map(|c| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
            .unwrap_or(f64::NAN);
        unit_ball_volume(d).ln() + 0.5 * d as f64 * self.threshold.ln() - 0.5 * logdet
    }
}

/// `{b : n (β̂ − b)ᵀ Î (β̂ − b) ≤ χ²_d(1 − α)}` for a per-observation
/// information matrix `Î`.
pub fn confidence_ellipsoid(beta: &[f64], info: &DMatrix<f64>, n: usize, alpha: f64) -> Result<Ellipsoid> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("level {alpha} outside (0, 1)")));
    }
    let d = beta.len();
    if info.shape() != (d, d) {
        return Err(Error::InvalidInput("information matrix has the wrong shape".into()));
    }
    let matrix = info * n as f64;
    if matrix.clone().cholesky().is_none() {
        return Err(Error::InvalidInput(
            "information matrix is not positive definite".into(),
        ));
    }
    Ok(Ellipsoid {
        center: beta.to_vec(),
        matrix,
        threshold: chi_square_quantile(d as f64, 1.0 - alpha),
    })
}

/// Standard errors, intervals and confidence sets for a fit.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub i_star_hat: f64,
    pub upsilon_hat: Option<f64>,
    pub cov_matrix: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub ellipsoid: Ellipsoid,
    /// Ellipsoid for the slopes alone in intercept mode.
    pub slope_ellipsoid: Option<Ellipsoid>,
}

/// Plug-in inference for a symmetric-mode or intercept-mode fit.
pub fn infer(data: &RegressionData, fit: &FitResult, mode: FitMode, alpha: f64) -> Result<InferenceResult> {
    let i_hat = fit.i_star_hat;
    if !(i_hat > 0.0) {
        return Err(Error::DegenerateSample("fit carries no information estimate".into()));
    }
    let n = data.n();
    let x = data.design();
    let (cov, info, upsilon, slope) = match mode {
        FitMode::Intercept => {
            let ups = fit
                .upsilon_hat
                .ok_or_else(|| Error::InvalidInput("intercept-mode fit carries no variance estimate".into()))?;
            let info = information_intercept(x, i_hat, ups)?;
            let cov = symmetric_inverse(info.clone(), "the information matrix")? / n as f64;
            let d = data.d();
            let covariates = x.columns(0, d - 1).into_owned();
            let s = confidence_ellipsoid(&fit.beta[..d - 1], &slope_information(&covariates, i_hat), n, alpha)?;
            (cov, info, Some(ups), Some(s))
        }
        FitMode::Symmetric | FitMode::Plain => {
            let info = gram(x) * (i_hat / n as f64);
            (covariance_symmetric(x, i_hat)?, info, None, None)
        }
    };
    let std_errors = (0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    Ok(InferenceResult {
        i_star_hat: i_hat,
        upsilon_hat: upsilon,
        intervals: confidence_intervals(&fit.beta, &cov, alpha)?,
        ellipsoid: confidence_ellipsoid(&fit.beta, &info, n, alpha)?,
        slope_ellipsoid: slope,
        std_errors,
        cov_matrix: cov,
    })
}
