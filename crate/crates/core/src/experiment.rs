//! Seeded Monte Carlo comparisons of the estimators.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::densities::{projected_score_closed_form, projected_score_numeric, ClosedFormFamily, ReferenceDensity};
use crate::error::{Error, Result};
use crate::inference::{
    confidence_ellipsoid, confidence_intervals, covariance_intercept, covariance_symmetric, ols_slope_information,
    slope_information,
};
use crate::monotone::{MonotoneScore, SquaredLoss};
use crate::regression::{
    alternating_fit, asm_fit, asm_fit_crossfit, fit_pilot, fit_with_score, one_step_fit, FitConfig, FitMode, FitResult,
    Folds, Pilot, RegressionData,
};
use crate::special::{ks_test, norm_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Oracle,
    Asm,
    Alt,
    OneStep,
    Lad,
    Ols,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Oracle,
        Estimator::Asm,
        Estimator::Alt,
        Estimator::OneStep,
        Estimator::Lad,
        Estimator::Ols,
    ];
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Oracle => "oracle",
            Estimator::Asm => "asm",
            Estimator::Alt => "alt",
            Estimator::OneStep => "1s",
            Estimator::Lad => "lad",
            Estimator::Ols => "ols",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator '{s}'")))
    }
}

/// A simulation design: `yᵢ = x̃ᵢᵀθ₀ + μ₀ + εᵢ` with `x̃ᵢ ~ N(1, I)`, `μ₀ = 2`
/// and `θ₀` uniform on the sphere of radius 3, or without intercept
/// `yᵢ = xᵢᵀβ₀ + εᵢ` with `xᵢ ~ N(0, I)`.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub noise: ReferenceDensity,
    pub n: usize,
    /// Number of coefficients, intercept included.
    pub d: usize,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub fit: FitConfig,
    pub intercept: bool,
    pub redraw_theta: bool,
}

impl ExperimentSpec {
    pub fn new(noise: ReferenceDensity, n: usize, d: usize, reps: usize, seed: u64) -> Self {
        Self {
            noise,
            n,
            d,
            reps,
            seed,
            estimators: Estimator::ALL.to_vec(),
            fit: FitConfig {
                mode: FitMode::Intercept,
                seed,
                ..FitConfig::default()
            },
            intercept: true,
            redraw_theta: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidInput("need at least one replication".into()));
        }
        let min_d = if self.intercept { 2 } else { 1 };
        if self.d < min_d || self.n <= self.d {
            return Err(Error::InvalidInput(format!("need n > d >= {min_d}")));
        }
        if self.fit.mode == FitMode::Intercept && !self.intercept {
            return Err(Error::InvalidInput(
                "intercept mode needs an intercept in the design".into(),
            ));
        }
        self.fit.validate()
    }

    /// Number of leading coefficients whose error is reported.
    pub fn reported(&self) -> usize {
        if self.intercept {
            self.d - 1
        } else {
            self.d
        }
    }
}

/// Random stream `stream` of the generator keyed by `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sphere(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| radius * x / norm).collect();
        }
    }
}

/// True coefficients for replication `rep`.
pub fn true_beta(spec: &ExperimentSpec, rep: usize) -> Vec<f64> {
    let stream = if spec.redraw_theta { 2 * rep as u64 + 2 } else { 0 };
    let mut rng = rng_stream(spec.seed, stream);
    if spec.intercept {
        let mut b = sphere(&mut rng, spec.d - 1, 3.0);
        b.push(2.0);
        b
    } else {
        sphere(&mut rng, spec.d, 3.0)
    }
}

/// A simulated data set and the coefficients that generated it.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: RegressionData,
    pub beta0: Vec<f64>,
}

/// Data for replication `rep`; depends only on `(seed, rep)`.
pub fn simulate(spec: &ExperimentSpec, rep: usize) -> Result<Replicate> {
    let beta0 = true_beta(spec, rep);
    let mut rng = rng_stream(spec.seed, 2 * rep as u64 + 1);
    let (n, d) = (spec.n, spec.d);
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = if spec.intercept {
                if j == d - 1 {
                    1.0
                } else {
                    1.0 + normal(&mut rng)
                }
            } else {
                normal(&mut rng)
            };
        }
    }
    let noise = spec.noise.sample_with(n, &mut rng);
    let y = (0..n)
        .map(|i| (0..d).map(|j| x[(i, j)] * beta0[j]).sum::<f64>() + noise[i])
        .collect();
    Ok(Replicate {
        data: RegressionData::new(x, y)?,
        beta0,
    })
}

/// Score of the optimal convex loss for `noise`; `None` stands for least squares.
pub fn oracle_score(noise: &ReferenceDensity) -> Result<Option<MonotoneScore>> {
    if let ReferenceDensity::Gaussian { .. } = noise {
        return Ok(None);
    }
    if let Some(family) = ClosedFormFamily::of(noise) {
        return Ok(Some(projected_score_closed_form(family)?.score));
    }
    let ps = projected_score_numeric(noise, 8193)?;
    Ok(Some(ps.score.to_piecewise_linear()))
}

/// Shared per-batch state for running estimators.
pub struct Runner {
    pub spec: ExperimentSpec,
    oracle: Option<MonotoneScore>,
}

impl Runner {
    pub fn new(spec: ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let oracle = if spec.estimators.contains(&Estimator::Oracle) {
            oracle_score(&spec.noise)?
        } else {
            None
        };
        Ok(Self { spec, oracle })
    }

    pub fn run(&self, est: Estimator, data: &RegressionData) -> Result<FitResult> {
        let cfg = &self.spec.fit;
        match est {
            Estimator::Oracle => {
                let init = fit_pilot(data, Pilot::Lad)?.beta;
                match &self.oracle {
                    Some(s) => fit_with_score(data, Some(s), &init, &cfg.solver),
                    None => crate::regression::solve_convex_m(data, &SquaredLoss, &init, &cfg.solver),
                }
            }
            Estimator::Asm => match cfg.folds {
                Folds::None => asm_fit(data, cfg),
                Folds::Three => asm_fit_crossfit(data, cfg),
            },
            Estimator::Alt => alternating_fit(data, cfg),
            Estimator::OneStep => one_step_fit(data, cfg),
            Estimator::Lad => fit_pilot(data, Pilot::Lad),
            Estimator::Ols => fit_pilot(data, Pilot::Ols),
        }
    }

    /// `f(rep, replicate)` for every replication, in parallel, in rep order.
    pub fn replicate<T, F>(&self, f: F) -> Vec<Result<T>>
    where
        T: Send,
        F: Fn(usize, &Replicate) -> Result<T> + Sync,
    {
        (0..self.spec.reps)
            .into_par_iter()
            .map(|rep| simulate(&self.spec, rep).and_then(|r| f(rep, &r)))
            .collect()
    }
}

fn squared_error(beta: &[f64], beta0: &[f64], k: usize) -> f64 {
    beta[..k].iter().zip(&beta0[..k]).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Mean squared error of one estimator.
#[derive(Debug, Clone)]
pub struct MseRow {
    pub estimator: Estimator,
    pub mse: f64,
    pub std_error: f64,
    pub successes: usize,
    pub failures: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
}

/// `‖θ̂ − θ₀‖²` averaged over replications, for each estimator.
pub fn mse_compare(spec: &ExperimentSpec) -> Result<Vec<MseRow>> {
    let runner = Runner::new(spec.clone())?;
    let k = spec.reported();
    let per_rep = runner.replicate(|_, r| {
        Ok(spec
            .estimators
            .iter()
            .map(|&e| {
                let t = Instant::now();
                let out = runner.run(e, &r.data).map(|f| squared_error(&f.beta, &r.beta0, k));
                (out.ok().filter(|v| v.is_finite()), t.elapsed().as_secs_f64())
            })
            .collect::<Vec<_>>())
    });
    let per_rep: Vec<Vec<(Option<f64>, f64)>> = per_rep.into_iter().collect::<Result<_>>()?;
    Ok(spec
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &estimator)| {
            let errs: Vec<f64> = per_rep.iter().filter_map(|r| r[j].0).collect();
            let mut times: Vec<f64> = per_rep.iter().map(|r| r[j].1).collect();
            times.sort_by(f64::total_cmp);
            let m = errs.len() as f64;
            let mse = errs.iter().sum::<f64>() / m;
            let var = errs.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            MseRow {
                estimator,
                mse,
                std_error: (var / m).sqrt(),
                successes: errs.len(),
                failures: per_rep.len() - errs.len(),
                mean_seconds: times.iter().sum::<f64>() / times.len() as f64,
                median_seconds: times[times.len() / 2],
            }
        })
        .collect())
}

/// Coverage at one confidence level.
#[derive(Debug, Clone)]
pub struct CoverageLevel {
    pub alpha: f64,
    /// Per reported coefficient.
    pub coordinate: Vec<f64>,
    pub ellipsoid: f64,
    /// Mean ratio of antitonic to least squares ellipsoid volumes.
    pub volume_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub levels: Vec<CoverageLevel>,
    pub i_star_mean: f64,
    /// Root mean squared error of `î` against `target_i_star`.
    pub i_star_rmse: f64,
    pub target_i_star: f64,
    /// Kolmogorov–Smirnov p-values of each coordinate of the standardised
    /// errors `√n Î^{1/2}(β̂ − β₀)` against `N(0, 1)`.
    pub ks_pvalues: Vec<f64>,
    pub successes: usize,
    pub failures: usize,
}

struct RepCoverage {
    covered: Vec<Vec<bool>>,
    ellipsoid: Vec<bool>,
    log_ratio: Vec<f64>,
    standardised: Vec<f64>,
    i_hat: f64,
}

/// Antitonic information of a density: closed form where known, otherwise
/// on a fine quantile grid.
pub fn antitonic_information(noise: &ReferenceDensity) -> Result<f64> {
    match ClosedFormFamily::of(noise) {
        Some(f) => Ok(projected_score_closed_form(f)?.i_star),
        None => Ok(projected_score_numeric(noise, 8193)?.i_star),
    }
}

/// Coverage of intervals and ellipsoids from the antitonic fit (`spec.fit`),
/// with ellipsoid volumes compared against least squares.
pub fn coverage(spec: &ExperimentSpec, alphas: &[f64]) -> Result<CoverageReport> {
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::InvalidInput("levels must lie in (0, 1)".into()));
    }
    let runner = Runner::new(ExperimentSpec {
        estimators: vec![Estimator::Asm],
        ..spec.clone()
    })?;
    let target = antitonic_information(&spec.noise)?;
    let k = spec.reported();
    let intercept_mode = spec.fit.mode == FitMode::Intercept;
    let per_rep = runner.replicate(|_, r| {
        let fit = runner.run(Estimator::Asm, &r.data)?;
        let x = r.data.design();
        let n = r.data.n();
        let i_hat = fit.i_star_hat;
        let covariates = if spec.intercept {
            x.columns(0, spec.d - 1).into_owned()
        } else {
            x.clone()
        };
        let ols = fit_pilot(&r.data, Pilot::Ols)?;
        let (cov, info, ols_info) = if intercept_mode {
            let ups = fit
                .upsilon_hat
                .ok_or_else(|| Error::DegenerateSample("no variance estimate".into()))?;
            (
                covariance_intercept(x, i_hat, ups)?,
                slope_information(&covariates, i_hat),
                ols_slope_information(&covariates, &ols.residuals, spec.d),
            )
        } else {
            let cov = covariance_symmetric(x, i_hat)?;
            let info = (x.transpose() * x) * (i_hat / n as f64);
            let sigma2 = ols.residuals.iter().map(|e| e * e).sum::<f64>() / (n - spec.d) as f64;
            (cov, info, (x.transpose() * x) / (n as f64 * sigma2))
        };
        let (center, ols_center) = if intercept_mode {
            (&fit.beta[..k], &ols.beta[..k])
        } else {
            (&fit.beta[..], &ols.beta[..])
        };
        let truth = if intercept_mode { &r.beta0[..k] } else { &r.beta0[..] };
        let err = DVector::from_iterator(center.len(), center.iter().zip(truth).map(|(a, b)| a - b));
        let mut out = RepCoverage {
            covered: Vec::new(),
            ellipsoid: Vec::new(),
            log_ratio: Vec::new(),
            standardised: (symmetric_sqrt(&info) * err * (n as f64).sqrt())
                .iter()
                .copied()
                .collect(),
            i_hat,
        };
        for &a in alphas {
            let ci = confidence_intervals(&fit.beta, &cov, a)?;
            out.covered
                .push((0..k).map(|j| ci[j].0 <= r.beta0[j] && r.beta0[j] <= ci[j].1).collect());
            let e = confidence_ellipsoid(center, &info, n, a)?;
            let e_ols = confidence_ellipsoid(ols_center, &ols_info, n, a)?;
            out.ellipsoid.push(e.contains(truth));
            out.log_ratio.push(e.log_volume() - e_ols.log_volume());
        }
        Ok(out)
    });
    let ok: Vec<RepCoverage> = per_rep.into_iter().filter_map(|r| r.ok()).collect();
    let m = ok.len();
    if m == 0 {
        return Err(Error::Numeric("every replication failed".into()));
    }
    let levels = alphas
        .iter()
        .enumerate()
        .map(|(l, &alpha)| CoverageLevel {
            alpha,
            coordinate: (0..k)
                .map(|j| ok.iter().filter(|r| r.covered[l][j]).count() as f64 / m as f64)
                .collect(),
            ellipsoid: ok.iter().filter(|r| r.ellipsoid[l]).count() as f64 / m as f64,
            volume_ratio: ok.iter().map(|r| r.log_ratio[l].exp()).sum::<f64>() / m as f64,
        })
        .collect();
    let dims = ok[0].standardised.len();
    let ks_pvalues = (0..dims)
        .map(|j| {
            let z: Vec<f64> = ok.iter().map(|r| r.standardised[j]).collect();
            ks_test(&z, norm_cdf).1
        })
        .collect();
    let i_star_mean = ok.iter().map(|r| r.i_hat).sum::<f64>() / m as f64;
    let i_star_rmse = (ok.iter().map(|r| (r.i_hat - target).powi(2)).sum::<f64>() / m as f64).sqrt();
    Ok(CoverageReport {
        levels,
        i_star_mean,
        i_star_rmse,
        target_i_star: target,
        ks_pvalues,
        successes: m,
        failures: spec.reps - m,
    })
}

fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Empirical covariance of `√n (β̂ − β₀)` for one estimator, with the number
/// of failed replications.
pub fn scaled_error_covariance(spec: &ExperimentSpec, est: Estimator) -> Result<(DMatrix<f64>, usize)> {
    let runner = Runner::new(ExperimentSpec {
        estimators: vec![est],
        ..spec.clone()
    })?;
    let k = spec.reported();
    let root_n = (spec.n as f64).sqrt();
    let errs: Vec<Vec<f64>> = runner
        .replicate(|_, r| {
            let fit = runner.run(est, &r.data)?;
            Ok((0..k)
                .map(|j| root_n * (fit.beta[j] - r.beta0[j]))
                .collect::<Vec<f64>>())
        })
        .into_iter()
        .filter_map(|r| r.ok())
        .collect();
    let m = errs.len();
    if m < 2 {
        return Err(Error::Numeric("too few successful replications".into()));
    }
    let mut mean = vec![0.0; k];
    for e in &errs {
        for j in 0..k {
            mean[j] += e[j] / m as f64;
        }
    }
    let cov = DMatrix::from_fn(k, k, |a, b| {
        errs.iter().map(|e| (e[a] - mean[a]) * (e[b] - mean[b])).sum::<f64>() / (m - 1) as f64
    });
    Ok((cov, spec.reps - m))
}
