//! Convex M-estimation and the estimator pipelines built on it.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inference::estimate_upsilon;
use crate::monotone::{negative_antiderivative, HuberLoss, Loss, MonotoneScore, SquaredLoss};
use crate::score::{antisymmetrize, empirical_score_matching_objective, estimate_score, KdeModel, ScoreConfig};

/// Design matrix and response of a linear model.
#[derive(Debug, Clone)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl RegressionData {
    /// Validates dimensions, finiteness and full column rank.
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if d == 0 || n <= d {
            return Err(Error::InvalidInput(format!("need n > d >= 1, got n = {n}, d = {d}")));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!("{} responses for {n} rows", y.len())));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("data must be finite".into()));
        }
        check_rank(&x)?;
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]), y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn has_intercept_column(&self) -> bool {
        let d = self.d();
        self.x.column(d - 1).iter().all(|&v| v == 1.0)
    }

    /// Rows `idx` as a new data set.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Self::new(x, y)
    }

    /// `y − Xβ`.
    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        residuals(&self.x, &self.y, beta)
    }
}

fn residuals(x: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let fitted = x * DVector::from_column_slice(beta);
    y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
}

fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let r = x.clone().col_piv_qr().r();
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    if top > 0.0 && diag.iter().all(|&v| v > 1e-10 * top) {
        return Ok(());
    }
    // name the first column that lies in the span of the ones before it
    let scale = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for (j, col) in x.column_iter().enumerate() {
        let mut v = col.clone_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient { column: j });
        }
        basis.push(v / norm);
    }
    Err(Error::RankDeficient { column: x.ncols() - 1 })
}

/// How the error distribution is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// Fit all coefficients with the estimated loss, no symmetrisation.
    Plain,
    /// Errors symmetric about zero; the score is antisymmetrised.
    #[default]
    Symmetric,
    /// Last design column is the intercept; slopes are fitted with centred
    /// covariates and the intercept by a centring condition.
    Intercept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Folds {
    #[default]
    None,
    Three,
}

/// Combination of the three cross-fitted estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossFit {
    /// Average of the per-fold minimisers.
    #[default]
    Average,
    /// Minimiser of the pooled empirical risk.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Pilot {
    Ols,
    #[default]
    Lad,
    Huber(f64),
}

/// Centring function for the intercept: mean-zero or `τ`-quantile-zero errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Zeta {
    #[default]
    Mean,
    Quantile(f64),
}

impl Zeta {
    /// `ζ(z)`: `−z` for the mean, `τ − 1{z < 0}` for a quantile.
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Zeta::Mean => -z,
            Zeta::Quantile(tau) => tau - if z < 0.0 { 1.0 } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Always add the identity to the Hessian instead of only when it is
    /// near-singular.
    pub always_ridge: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-9,
            always_ridge: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitConfig {
    pub mode: FitMode,
    pub folds: Folds,
    pub crossfit: CrossFit,
    pub pilot: Pilot,
    pub score: ScoreConfig,
    pub zeta: Zeta,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if let Zeta::Quantile(tau) = self.zeta {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidInput(format!("quantile level {tau} outside (0, 1)")));
            }
        }
        if let Pilot::Huber(k) = self.pilot {
            if !(k > 0.0) {
                return Err(Error::InvalidInput("Huber threshold must be positive".into()));
            }
        }
        if !(self.solver.grad_tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.score.grid_size < 64 {
            return Err(Error::InvalidInput("grid size must be at least 64".into()));
        }
        Ok(())
    }
}

/// Output of a fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Plug-in antitonic information.
    pub i_star_hat: f64,
    pub upsilon_hat: Option<f64>,
    /// `Σ xᵢ ψ(yᵢ − xᵢᵀβ̂)` at the returned coefficients.
    pub score_at_optimum: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Estimated score used for the final fit, if any.
    pub score: Option<MonotoneScore>,
    /// Reason a fit fell back or did not converge.
    pub note: Option<String>,
}

impl FitResult {
    fn from_solution(sol: Solution, residuals: Vec<f64>) -> Self {
        Self {
            beta: sol.beta,
            objective_trace: sol.trace,
            residuals,
            i_star_hat: f64::NAN,
            upsilon_hat: None,
            score_at_optimum: sol.estimating_equation,
            converged: sol.converged,
            iterations: sol.iterations,
            score: None,
            note: None,
        }
    }
}

struct Solution {
    beta: Vec<f64>,
    trace: Vec<f64>,
    estimating_equation: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Value, gradient and Hessian of `β ↦ n⁻¹ Σ ℓᵢ(yᵢ − xᵢᵀβ)`.
fn derivatives<F>(
    x: &DMatrix<f64>,
    r: &[f64],
    eval: &F,
    want_hessian: bool,
) -> (f64, DVector<f64>, DMatrix<f64>, DVector<f64>)
where
    F: Fn(usize, f64) -> (f64, f64, f64),
{
    let (n, d) = x.shape();
    let mut value = 0.0;
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    let mut ee = DVector::zeros(d);
    for i in 0..n {
        let (l, dl, d2l) = eval(i, r[i]);
        value += l;
        for a in 0..d {
            let xa = x[(i, a)];
            ee[a] -= dl * xa;
            if want_hessian && d2l != 0.0 {
                for b in 0..=a {
                    hess[(a, b)] += d2l * xa * x[(i, b)];
                }
            }
        }
    }
    let inv = 1.0 / n as f64;
    grad.copy_from(&(&ee * inv));
    for a in 0..d {
        for b in 0..a {
            hess[(b, a)] = hess[(a, b)];
        }
    }
    (value * inv, grad, hess * inv, ee)
}

fn objective_at<F>(x: &DMatrix<f64>, y: &[f64], beta: &[f64], eval: &F) -> f64
where
    F: Fn(usize, f64) -> (f64, f64, f64),
{
    let r = residuals(x, y, beta);
    r.iter().enumerate().map(|(i, &ri)| eval(i, ri).0).sum::<f64>() / r.len() as f64
}

/// Damped Newton with an identity ridge and Armijo backtracking.
fn minimize<F>(x: &DMatrix<f64>, y: &[f64], eval: F, init: &[f64], cfg: &SolverConfig) -> Result<Solution>
where
    F: Fn(usize, f64) -> (f64, f64, f64),
{
    let d = x.ncols();
    if init.len() != d {
        return Err(Error::InvalidInput(format!(
            "initial value has length {}, expected {d}",
            init.len()
        )));
    }
    let mut beta = DVector::from_column_slice(init);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut ee;
    loop {
        let r = residuals(x, y, beta.as_slice());
        let (value, grad, hess, eq) = derivatives(x, &r, &eval, true);
        ee = eq;
        trace.push(value);
        if grad.norm() <= cfg.grad_tol * (1.0 + beta.norm()) {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;
        let (direction, ridged) = newton_direction(hess, &grad, cfg.always_ridge);
        let slope = grad.dot(&direction);
        if slope >= 0.0 || !slope.is_finite() {
            return Err(stalled(iterations, value, &beta, &trace));
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &beta + &direction * t;
            let f = objective_at(x, y, candidate.as_slice(), &eval);
            if f <= value + 1e-4 * t * slope {
                let (mut best, mut best_f) = (candidate, f);
                // a ridged step is a scaled gradient step and may be far too short
                if ridged && t == 1.0 {
                    for _ in 0..50 {
                        t *= 2.0;
                        let further = &beta + &direction * t;
                        let g = objective_at(x, y, further.as_slice(), &eval);
                        if g >= best_f {
                            break;
                        }
                        best = further;
                        best_f = g;
                    }
                }
                beta = best;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no representable decrease left: the gradient is at rounding level
            if slope.abs() <= 1e-13 * (1.0 + value.abs()) {
                converged = true;
                break;
            }
            return Err(stalled(iterations, value, &beta, &trace));
        }
    }
    Ok(Solution {
        beta: beta.as_slice().to_vec(),
        trace,
        estimating_equation: ee.as_slice().to_vec(),
        converged,
        iterations,
    })
}

fn stalled(iterations: usize, value: f64, beta: &DVector<f64>, trace: &[f64]) -> Error {
    Error::Stalled {
        iterations,
        last_objective: value,
        beta: beta.as_slice().to_vec(),
        trace: trace.to_vec(),
    }
}

fn newton_direction(mut hess: DMatrix<f64>, grad: &DVector<f64>, always_ridge: bool) -> (DVector<f64>, bool) {
    let d = hess.nrows();
    let threshold = 1e-8 * hess.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
    let usable = !always_ridge
        && hess.clone().cholesky().is_some_and(|c| {
            let l = c.l_dirty().diagonal();
            l.iter().all(|v| v * v >= threshold)
        });
    if !usable {
        for a in 0..d {
            hess[(a, a)] += 1.0;
        }
    }
    let direction = match hess.cholesky() {
        Some(c) => -c.solve(grad),
        None => -grad.clone(),
    };
    (direction, !usable)
}

/// Minimises `β ↦ Σ ℓ(yᵢ − xᵢᵀβ)` for a convex loss.
pub fn solve_convex_m(
    data: &RegressionData,
    loss: &dyn Loss,
    init: &[f64],
    solver: &SolverConfig,
) -> Result<FitResult> {
    let sol = minimize(&data.x, &data.y, |_, r| loss.eval3(r), init, solver)?;
    let res = data.residuals(&sol.beta);
    Ok(FitResult::from_solution(sol, res))
}

fn weighted_least_squares(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>) -> Result<DVector<f64>> {
    let (n, d) = x.shape();
    let mut gram = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for i in 0..n {
        let wi = w.map_or(1.0, |w| w[i]);
        for a in 0..d {
            let xa = wi * x[(i, a)];
            rhs[a] += xa * y[i];
            for b in 0..=a {
                gram[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    gram.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Numeric("weighted Gram matrix is not positive definite".into()))
}

fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    // QR is better conditioned than the normal equations
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let r = qr.r();
    r.solve_upper_triangular(&qty)
        .map(|b| b.as_slice().to_vec())
        .ok_or_else(|| Error::Numeric("singular triangular factor".into()))
}

fn lad(x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, usize, bool)> {
    let mut beta = DVector::from_vec(ols(x, y)?);
    for it in 1..=200 {
        let r = residuals(x, y, beta.as_slice());
        let w: Vec<f64> = r.iter().map(|v| 1.0 / v.abs().max(1e-8)).collect();
        let next = weighted_least_squares(x, y, Some(&w))?;
        let change = (&next - &beta).norm();
        beta = next;
        if change <= 1e-10 * (1.0 + beta.norm()) {
            return Ok((beta.as_slice().to_vec(), it, true));
        }
    }
    Ok((beta.as_slice().to_vec(), 200, false))
}

/// Ordinary least squares, least absolute deviations or Huber regression.
pub fn fit_pilot(data: &RegressionData, kind: Pilot) -> Result<FitResult> {
    let (beta, iterations, converged) = match kind {
        Pilot::Ols => (ols(&data.x, &data.y)?, 0, true),
        Pilot::Lad => lad(&data.x, &data.y)?,
        Pilot::Huber(k) => {
            let init = ols(&data.x, &data.y)?;
            let fit = solve_convex_m(data, &HuberLoss { k }, &init, &SolverConfig::default())?;
            return Ok(fit);
        }
    };
    let res = data.residuals(&beta);
    let ee = match kind {
        Pilot::Ols => estimating_equation(&data.x, &res, |r| r),
        _ => estimating_equation(&data.x, &res, |r: f64| r.signum()),
    };
    Ok(FitResult {
        beta,
        objective_trace: Vec::new(),
        residuals: res,
        i_star_hat: f64::NAN,
        upsilon_hat: None,
        score_at_optimum: ee,
        converged,
        iterations,
        score: None,
        note: None,
    })
}

fn estimating_equation<F: Fn(f64) -> f64>(x: &DMatrix<f64>, r: &[f64], psi: F) -> Vec<f64> {
    let mut out = vec![0.0; x.ncols()];
    for (i, &ri) in r.iter().enumerate() {
        let p = psi(ri);
        for (a, o) in out.iter_mut().enumerate() {
            *o += x[(i, a)] * p;
        }
    }
    out
}

/// The intercept from slope-adjusted responses `yᵢ − x̃ᵢᵀθ̂`: their mean, or
/// their lower empirical `τ`-quantile `sorted[⌊τ(n−1)⌋]`.
pub fn fit_intercept(residual_base: &[f64], zeta: Zeta) -> f64 {
    if residual_base.is_empty() {
        return f64::NAN;
    }
    match zeta {
        Zeta::Mean => residual_base.iter().sum::<f64>() / residual_base.len() as f64,
        Zeta::Quantile(tau) => {
            let mut s = residual_base.to_vec();
            s.sort_by(f64::total_cmp);
            s[(tau * (s.len() - 1) as f64).floor() as usize]
        }
    }
}

fn require_intercept(data: &RegressionData) -> Result<()> {
    if data.d() < 2 || !data.has_intercept_column() {
        return Err(Error::InvalidInput(
            "intercept mode needs at least one covariate and a final column of ones".into(),
        ));
    }
    Ok(())
}

/// Covariates without the intercept column.
fn slopes_design(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.columns(0, x.ncols() - 1).into_owned()
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

fn centred(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

fn is_degenerate(score: &MonotoneScore) -> bool {
    score.levels().iter().all(|&l| l == 0.0) && score.left_limit() == 0.0
}

/// Residual scale below which the residuals are treated as an exact fit.
fn exact_fit(res: &[f64], y: &[f64]) -> bool {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    res.iter().all(|r| r.abs() <= 1e-10 * scale)
}

fn mean_square(score: &MonotoneScore, pts: &[f64]) -> f64 {
    pts.iter().map(|&e| score.eval(e).powi(2)).sum::<f64>() / pts.len() as f64
}

fn exact_fit_result(data: &RegressionData, pilot: FitResult, note: &str) -> FitResult {
    let ee = vec![0.0; data.d()];
    FitResult {
        score_at_optimum: ee,
        note: Some(note.into()),
        ..pilot
    }
}

fn fallback(pilot: FitResult, reason: &str) -> FitResult {
    FitResult {
        converged: false,
        note: Some(reason.into()),
        ..pilot
    }
}

/// Antitonic score matching without sample splitting.
///
/// Pilot fit, kernel score estimate from the pilot residuals, antitonic
/// projection, then convex M-estimation with the induced loss.
pub fn asm_fit(data: &RegressionData, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let pilot = fit_pilot(data, cfg.pilot)?;
    match cfg.mode {
        FitMode::Plain | FitMode::Symmetric => {
            let res = pilot.residuals.clone();
            if exact_fit(&res, &data.y) {
                return Ok(exact_fit_result(data, pilot, "pilot fits the data exactly"));
            }
            let (raw, _) = estimate_score(&res, &cfg.score)?;
            let score = if cfg.mode == FitMode::Symmetric {
                antisymmetrize(&raw)?
            } else {
                raw
            };
            if is_degenerate(&score) {
                return Ok(fallback(pilot, "estimated score vanishes; returning the pilot"));
            }
            let loss = negative_antiderivative(&score, 0.0);
            let mut fit = solve_convex_m(data, &loss, &pilot.beta, &cfg.solver)?;
            fit.i_star_hat = mean_square(&score, &res);
            fit.score = Some(score);
            Ok(fit)
        }
        FitMode::Intercept => {
            require_intercept(data)?;
            let xt = slopes_design(&data.x);
            let theta_bar = &pilot.beta[..data.d() - 1];
            let eps = residuals(&xt, &data.y, theta_bar);
            if exact_fit(&pilot.residuals, &data.y) {
                return Ok(exact_fit_result(data, pilot, "pilot fits the data exactly"));
            }
            let (score, _) = estimate_score(&eps, &cfg.score)?;
            if is_degenerate(&score) {
                return Ok(fallback(pilot, "estimated score vanishes; returning the pilot"));
            }
            let mean = column_means(&xt);
            let theta = fit_centred(&xt, &data.y, &mean, theta_bar, &score, &cfg.solver)?;
            let mut fit = finish_intercept(data, &xt, theta, cfg.zeta)?;
            fit.i_star_hat = mean_square(&score, &eps);
            fit.score = Some(score);
            Ok(fit)
        }
    }
}

struct ThetaFit {
    theta: Vec<f64>,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// `argmin_θ Σ ℓ(yᵢ − x̄ᵀθ̄ − (x̃ᵢ − x̄)ᵀθ)`.
fn fit_centred(
    xt: &DMatrix<f64>,
    y: &[f64],
    mean: &DVector<f64>,
    theta_bar: &[f64],
    score: &MonotoneScore,
    solver: &SolverConfig,
) -> Result<ThetaFit> {
    let xc = centred(xt, mean);
    let offset = mean.dot(&DVector::from_column_slice(theta_bar));
    let yc: Vec<f64> = y.iter().map(|v| v - offset).collect();
    let loss = negative_antiderivative(score, 0.0);
    let sol = minimize(&xc, &yc, |_, r| loss.eval3(r), theta_bar, solver)?;
    Ok(ThetaFit {
        theta: sol.beta,
        trace: sol.trace,
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

fn finish_intercept(data: &RegressionData, xt: &DMatrix<f64>, fit: ThetaFit, zeta: Zeta) -> Result<FitResult> {
    let base = residuals(xt, &data.y, &fit.theta);
    let mu = fit_intercept(&base, zeta);
    let mut beta = fit.theta;
    beta.push(mu);
    let res: Vec<f64> = base.iter().map(|b| b - mu).collect();
    let upsilon = estimate_upsilon(zeta, &res, None).ok();
    let ee = estimating_equation(&data.x, &res, |r| zeta.eval(r));
    Ok(FitResult {
        beta,
        objective_trace: fit.trace,
        residuals: res,
        i_star_hat: f64::NAN,
        upsilon_hat: upsilon,
        score_at_optimum: ee,
        converged: fit.converged,
        iterations: fit.iterations,
        score: None,
        note: None,
    })
}

/// Seeded shuffle of `0..n` cut into contiguous folds of sizes
/// `⌊n/k⌋, …, ⌊n/k⌋, rest`.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = n / k;
    (0..k)
        .map(|j| {
            let end = if j + 1 == k { n } else { (j + 1) * size };
            idx[j * size..end].to_vec()
        })
        .collect()
}

/// Three-fold cross-fitted antitonic score matching.
///
/// Fold `j` supplies the pilot, fold `j+1` the score estimate and fold `j+2`
/// the M-estimation step; the three fits are averaged or their risks pooled.
pub fn asm_fit_crossfit(data: &RegressionData, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let (n, d) = (data.n(), data.d());
    if n < 3 * (d + 2) {
        return Err(Error::InvalidInput(format!("cross-fitting needs n >= {}", 3 * (d + 2))));
    }
    let intercept = cfg.mode == FitMode::Intercept;
    if intercept {
        require_intercept(data)?;
    }
    let folds = fold_assignment(n, 3, cfg.seed);
    let p = if intercept { d - 1 } else { d };
    // per fold: design and response of the fitting fold, score, pilot coefficients
    let mut parts = Vec::with_capacity(3);
    let mut info_sum = 0.0;
    for j in 0..3 {
        let pilot_data = data.subset(&folds[j])?;
        let score_data = data.subset(&folds[(j + 1) % 3])?;
        let fit_data = data.subset(&folds[(j + 2) % 3])?;
        let pilot = fit_pilot(&pilot_data, cfg.pilot)?;
        let (score_x, fit_x) = if intercept {
            (slopes_design(&score_data.x), slopes_design(&fit_data.x))
        } else {
            (score_data.x.clone(), fit_data.x.clone())
        };
        let coef = pilot.beta[..p].to_vec();
        let eps = residuals(&score_x, &score_data.y, &coef);
        let (raw, _) = estimate_score(&eps, &cfg.score)?;
        let score = if cfg.mode == FitMode::Symmetric {
            antisymmetrize(&raw)?
        } else {
            raw
        };
        if is_degenerate(&score) {
            return Err(Error::DegenerateSample(format!(
                "estimated score vanishes on fold {}",
                j + 1
            )));
        }
        let check = residuals(&fit_x, &fit_data.y, &coef);
        info_sum += check.iter().map(|&e| score.eval(e).powi(2)).sum::<f64>();
        let (x, y) = if intercept {
            let mean = column_means(&fit_x);
            let offset = mean.dot(&DVector::from_column_slice(&coef));
            (centred(&fit_x, &mean), fit_data.y.iter().map(|v| v - offset).collect())
        } else {
            (fit_x, fit_data.y.clone())
        };
        parts.push((x, y, score, coef));
    }
    let (coef, trace, converged, iterations) = match cfg.crossfit {
        CrossFit::Average => {
            let mut avg = vec![0.0; p];
            let mut trace = Vec::new();
            let mut converged = true;
            let mut iterations = 0;
            for (x, y, score, init) in &parts {
                let loss = negative_antiderivative(score, 0.0);
                let sol = minimize(x, y, |_, r| loss.eval3(r), init, &cfg.solver)?;
                for (a, b) in avg.iter_mut().zip(&sol.beta) {
                    *a += b / 3.0;
                }
                trace.extend(sol.trace);
                converged &= sol.converged;
                iterations += sol.iterations;
            }
            (avg, trace, converged, iterations)
        }
        CrossFit::Pooled => {
            let rows: usize = parts.iter().map(|p| p.0.nrows()).sum();
            let mut x = DMatrix::zeros(rows, p);
            let mut y = Vec::with_capacity(rows);
            let mut which = Vec::with_capacity(rows);
            let mut r0 = 0;
            for (j, (xj, yj, _, _)) in parts.iter().enumerate() {
                x.rows_mut(r0, xj.nrows()).copy_from(xj);
                y.extend_from_slice(yj);
                which.extend(std::iter::repeat_n(j, xj.nrows()));
                r0 += xj.nrows();
            }
            let losses: Vec<_> = parts.iter().map(|p| negative_antiderivative(&p.2, 0.0)).collect();
            let mut init = vec![0.0; p];
            for part in &parts {
                for (a, b) in init.iter_mut().zip(&part.3) {
                    *a += b / 3.0;
                }
            }
            let sol = minimize(&x, &y, |i, r| losses[which[i]].eval3(r), &init, &cfg.solver)?;
            (sol.beta, sol.trace, sol.converged, sol.iterations)
        }
    };
    let i_star_hat = info_sum / n as f64;
    let mut fit = if intercept {
        let xt = slopes_design(&data.x);
        finish_intercept(
            data,
            &xt,
            ThetaFit {
                theta: coef,
                trace,
                converged,
                iterations,
            },
            cfg.zeta,
        )?
    } else {
        let res = data.residuals(&coef);
        let ee = estimating_equation(&data.x, &res, |r| parts[0].2.eval(r));
        FitResult {
            beta: coef,
            objective_trace: trace,
            residuals: res,
            i_star_hat: f64::NAN,
            upsilon_hat: None,
            score_at_optimum: ee,
            converged,
            iterations,
            score: None,
            note: None,
        }
    };
    fit.i_star_hat = i_star_hat;
    Ok(fit)
}

/// Alternates between estimating the score from the current residuals and
/// refitting all coefficients with the induced loss, starting from zero.
///
/// Stops when the empirical score matching objective changes by at most
/// `1e−6 (1 + |D̂|)`, or after 50 rounds. In intercept mode the intercept is
/// finally re-identified by the centring condition.
pub fn alternating_fit(data: &RegressionData, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let intercept = cfg.mode == FitMode::Intercept;
    if intercept {
        require_intercept(data)?;
    }
    let d = data.d();
    let mut beta = vec![0.0; d];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    let mut last_score = None;
    let mut last_residuals = data.y.clone();
    while rounds < 50 {
        let res = data.residuals(&beta);
        if rounds > 0 && exact_fit(&res, &data.y) {
            converged = true;
            last_residuals = res;
            break;
        }
        let (raw, _) = estimate_score(&res, &cfg.score)?;
        let score = if cfg.mode == FitMode::Symmetric {
            antisymmetrize(&raw)?
        } else {
            raw
        };
        let obj = empirical_score_matching_objective(&score, &res);
        let prev = trace.last().copied();
        trace.push(obj);
        last_score = Some(score.clone());
        last_residuals = res;
        if let Some(prev) = prev {
            if (obj - prev).abs() <= 1e-6 * (1.0 + obj.abs()) {
                converged = true;
                break;
            }
        }
        if is_degenerate(&score) {
            break;
        }
        let loss = negative_antiderivative(&score, 0.0);
        beta = minimize(&data.x, &data.y, |_, r| loss.eval3(r), &beta, &cfg.solver)?.beta;
        rounds += 1;
    }
    let i_star_hat = last_score
        .as_ref()
        .map_or(f64::NAN, |s| mean_square(s, &last_residuals));
    let mut fit = if intercept {
        let xt = slopes_design(&data.x);
        finish_intercept(
            data,
            &xt,
            ThetaFit {
                theta: beta[..d - 1].to_vec(),
                trace: Vec::new(),
                converged,
                iterations: rounds,
            },
            cfg.zeta,
        )?
    } else {
        let res = data.residuals(&beta);
        let ee = match &last_score {
            Some(s) => estimating_equation(&data.x, &res, |r| s.eval(r)),
            None => vec![0.0; d],
        };
        FitResult {
            beta,
            objective_trace: Vec::new(),
            residuals: res,
            i_star_hat: f64::NAN,
            upsilon_hat: None,
            score_at_optimum: ee,
            converged,
            iterations: rounds,
            score: None,
            note: None,
        }
    };
    fit.objective_trace = trace;
    fit.i_star_hat = i_star_hat;
    fit.score = last_score;
    if !converged {
        fit.note = Some("score matching objective did not settle within 50 rounds".into());
    }
    Ok(fit)
}

/// Cross-fitted one-step update of the pilot slopes with an unconstrained
/// kernel score `p̂'/p̂`, using two folds of sizes `⌊n/2⌋` and the rest.
pub fn one_step_fit(data: &RegressionData, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let intercept = cfg.mode == FitMode::Intercept;
    if intercept {
        require_intercept(data)?;
    }
    let pilot = fit_pilot(data, cfg.pilot)?;
    let res = pilot.residuals.clone();
    if exact_fit(&res, &data.y) {
        return Ok(exact_fit_result(data, pilot, "pilot fits the data exactly"));
    }
    let x = if intercept {
        slopes_design(&data.x)
    } else {
        data.x.clone()
    };
    let p = x.ncols();
    let folds = fold_assignment(data.n(), 2, cfg.seed);
    let mut psi = vec![0.0; data.n()];
    for j in 0..2 {
        let other: Vec<f64> = folds[1 - j].iter().map(|&i| res[i]).collect();
        let kde = KdeModel::new(&other, cfg.score.kernel, cfg.score.bandwidth)?;
        for &i in &folds[j] {
            let (pd, dp) = (kde.pdf(res[i]), kde.pdf_derivative(res[i]));
            psi[i] = if pd > 0.0 { dp / pd } else { 0.0 };
        }
    }
    let (step, ridged) = one_step_increment(&x, &psi)?;
    let note = ridged.then(|| "singular weighted Gram matrix; added a 1e-8 ridge".to_string());
    let mut beta = pilot.beta.clone();
    for a in 0..p {
        beta[a] -= step[a];
    }
    let residuals = data.residuals(&beta);
    Ok(FitResult {
        beta,
        residuals,
        converged: note.is_none(),
        iterations: 1,
        note,
        ..pilot
    })
}

/// `(Σ ψᵢ² xᵢxᵢᵀ)⁻¹ Σ ψᵢ xᵢ`, with a flag set when a ridge was needed.
fn one_step_increment(x: &DMatrix<f64>, psi: &[f64]) -> Result<(DVector<f64>, bool)> {
    let p = x.ncols();
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for (i, &s) in psi.iter().enumerate() {
        let xi = x.row(i).transpose();
        gram += &xi * xi.transpose() * (s * s);
        rhs += &xi * s;
    }
    if let Some(c) = gram.clone().cholesky() {
        return Ok((c.solve(&rhs), false));
    }
    for a in 0..p {
        gram[(a, a)] += 1e-8;
    }
    let c = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("weighted Gram matrix is singular".into()))?;
    Ok((c.solve(&rhs), true))
}

/// M-estimation with a known score, or least squares when `score` is `None`.
pub fn fit_with_score(
    data: &RegressionData,
    score: Option<&MonotoneScore>,
    init: &[f64],
    solver: &SolverConfig,
) -> Result<FitResult> {
    match score {
        None => solve_convex_m(data, &SquaredLoss, init, solver),
        Some(s) => {
            let loss = negative_antiderivative(s, 0.0);
            let mut fit = solve_convex_m(data, &loss, init, solver)?;
            fit.score = Some(s.clone());
            Ok(fit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::ReferenceDensity;

    fn toy(n: usize, d: usize, noise: &ReferenceDensity, seed: u64, intercept: bool) -> (RegressionData, Vec<f64>) {
        let z = ReferenceDensity::standard_gaussian().sample(n * d, seed);
        let e = noise.sample(n, seed + 1000);
        let beta: Vec<f64> = (0..d).map(|j| 1.0 + j as f64 * 0.5).collect();
        let x = DMatrix::from_fn(n, d, |i, j| if intercept && j == d - 1 { 1.0 } else { z[i * d + j] });
        let y = (0..n)
            .map(|i| (0..d).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + e[i])
            .collect();
        (RegressionData::new(x, y).unwrap(), beta)
    }

    #[test]
    fn rank_deficiency_names_column() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 1.0, 5.0, 6.0, 1.0, 1.0, 2.0]);
        match RegressionData::new(x, vec![0.0; 4]) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn squared_loss_matches_ols() {
        let (data, _) = toy(80, 3, &ReferenceDensity::standard_gaussian(), 5, false);
        let fit = solve_convex_m(&data, &SquaredLoss, &[0.0; 3], &SolverConfig::default()).unwrap();
        let ols = fit_pilot(&data, Pilot::Ols).unwrap();
        for (a, b) in fit.beta.iter().zip(&ols.beta) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn smooth_lad_location() {
        let data = RegressionData::new(DMatrix::from_element(3, 1, 1.0), vec![1.0, 2.0, 100.0]).unwrap();
        let loss = HuberLoss { k: 0.01 };
        let fit = solve_convex_m(&data, &loss, &[0.0], &SolverConfig::default()).unwrap();
        let grid_best = (0..=20_000)
            .map(|i| i as f64 * 0.01 - 50.0)
            .min_by(|a, b| {
                let f = |m: f64| [1.0, 2.0, 100.0].iter().map(|y| loss.value(y - m)).sum::<f64>();
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        assert!((fit.beta[0] - grid_best).abs() < 0.05);
        assert!((fit.beta[0] - 2.0).abs() < 0.05);
    }

    #[test]
    fn pilots_on_noiseless_data() {
        let z = ReferenceDensity::standard_gaussian().sample(60, 2);
        let x = DMatrix::from_fn(20, 3, |i, j| if j == 2 { 1.0 } else { z[3 * i + j] });
        let beta = [0.5, -1.5, 2.0];
        let y: Vec<f64> = (0..20).map(|i| (0..3).map(|j| x[(i, j)] * beta[j]).sum()).collect();
        let data = RegressionData::new(x, y).unwrap();
        for kind in [Pilot::Ols, Pilot::Lad, Pilot::Huber(1.345)] {
            let fit = fit_pilot(&data, kind).unwrap();
            for (a, b) in fit.beta.iter().zip(&beta) {
                assert!((a - b).abs() < 1e-8, "{kind:?}");
            }
        }
    }

    #[test]
    fn lad_location_is_median() {
        let y = vec![3.1, -2.0, 7.5, 0.4, 1.2, 9.9, -0.3];
        let data = RegressionData::new(DMatrix::from_element(7, 1, 1.0), y).unwrap();
        let fit = fit_pilot(&data, Pilot::Lad).unwrap();
        assert!((fit.beta[0] - 1.2).abs() < 1e-6);
    }

    #[test]
    fn intercept_quantiles() {
        assert_eq!(fit_intercept(&[1.0, 2.0, 3.0], Zeta::Mean), 2.0);
        assert_eq!(fit_intercept(&[4.0, 1.0, 3.0, 2.0], Zeta::Quantile(0.5)), 2.0);
    }

    #[test]
    fn folds_have_prescribed_sizes() {
        let f = fold_assignment(10, 3, 1);
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 4]);
        let mut all: Vec<usize> = f.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(f, fold_assignment(10, 3, 1));
    }

    #[test]
    fn asm_recovers_noiseless_coefficients() {
        let z = ReferenceDensity::standard_gaussian().sample(200, 9);
        let x = DMatrix::from_fn(50, 4, |i, j| if j == 3 { 1.0 } else { z[4 * i + j] });
        let beta = [1.0, 2.0, -1.0, 0.5];
        let y: Vec<f64> = (0..50).map(|i| (0..4).map(|j| x[(i, j)] * beta[j]).sum()).collect();
        let data = RegressionData::new(x, y).unwrap();
        for mode in [FitMode::Symmetric, FitMode::Intercept] {
            let cfg = FitConfig {
                mode,
                ..Default::default()
            };
            for fit in [asm_fit(&data, &cfg).unwrap(), alternating_fit(&data, &cfg).unwrap()] {
                for (a, b) in fit.beta.iter().zip(&beta) {
                    assert!((a - b).abs() < 1e-7, "{mode:?}: {:?}", fit.beta);
                }
            }
        }
    }

    #[test]
    fn crossfit_average_is_mean_of_fold_fits() {
        let (data, _) = toy(240, 3, &ReferenceDensity::standard_cauchy(), 4, false);
        let cfg = FitConfig::default();
        let fit = asm_fit_crossfit(&data, &cfg).unwrap();
        let folds = fold_assignment(240, 3, cfg.seed);
        let mut avg = [0.0; 3];
        for j in 0..3 {
            let pilot = fit_pilot(&data.subset(&folds[j]).unwrap(), cfg.pilot).unwrap();
            let sd = data.subset(&folds[(j + 1) % 3]).unwrap();
            let (raw, _) = estimate_score(&sd.residuals(&pilot.beta), &cfg.score).unwrap();
            let score = antisymmetrize(&raw).unwrap();
            let fd = data.subset(&folds[(j + 2) % 3]).unwrap();
            let f = fit_with_score(&fd, Some(&score), &pilot.beta, &cfg.solver).unwrap();
            for (a, b) in avg.iter_mut().zip(&f.beta) {
                *a += b / 3.0;
            }
        }
        assert_eq!(fit.beta, avg.to_vec());
        let pooled = asm_fit_crossfit(
            &data,
            &FitConfig {
                crossfit: CrossFit::Pooled,
                ..cfg
            },
        )
        .unwrap();
        for (a, b) in pooled.beta.iter().zip(&avg) {
            assert!((a - b).abs() < 0.3);
        }
    }

    #[test]
    fn one_step_is_zero_when_the_score_sums_to_zero() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 1 { 1.0 } else { (i % 3) as f64 });
        let psi = [0.5, -1.0, 2.0, -0.5, 1.0, -2.0];
        let (step, ridged) = one_step_increment(&x, &psi).unwrap();
        assert!(!ridged);
        assert!(step.norm() < 1e-14);
        let (data, _) = toy(200, 2, &ReferenceDensity::standard_gaussian(), 7, false);
        let fit = one_step_fit(&data, &FitConfig::default()).unwrap();
        assert!(fit.converged && fit.iterations == 1);
    }
}
