//! Antitonic projection of population scores and related functionals.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{Prop1Constants, ReferenceDensity};
use crate::error::{Error, Result};
use crate::monotone::{lcm, negative_antiderivative, Loss, MonotoneScore, ScoreMode};
use crate::quadrature::{gauss_legendre, integrate_unit};

/// The antitonic projection `ψ₀*` of a density's score and its information.
#[derive(Debug, Clone)]
pub struct ProjectedScore {
    pub score: MonotoneScore,
    /// Antitonic information `i* = ∫(ψ₀*)² dP₀`.
    pub i_star: f64,
    /// Fisher information `i = ∫ψ₀² dP₀` (may be infinite).
    pub fisher_info: f64,
    /// `i*/i`.
    pub are_star: f64,
    /// Supremum of the density.
    pub sup_density: f64,
}

impl ProjectedScore {
    fn new(score: MonotoneScore, i_star: f64, fisher_info: f64, sup_density: f64) -> Self {
        let are_star = if fisher_info.is_finite() {
            i_star / fisher_info
        } else {
            0.0
        };
        Self {
            score,
            i_star,
            fisher_info,
            are_star,
            sup_density,
        }
    }

    /// Lower bound `4‖p₀‖∞² / i` on the efficiency; see [`ProjectedScore::are_star`].
    pub fn are_lower_bound(&self) -> f64 {
        4.0 * self.sup_density * self.sup_density / self.fisher_info
    }
}

/// Projects the score of `density` on a uniform grid of `grid_size` points
/// in the quantile domain.
///
/// `J₀ = p₀∘F₀⁻¹` is evaluated on the grid with `J₀(0) = J₀(1) = 0`, its least
/// concave majorant is taken and `ψ₀*` is the right derivative mapped back
/// through `F₀`. The result is a step score with knots at the interior
/// quantiles.
pub fn projected_score_numeric(density: &ReferenceDensity, grid_size: usize) -> Result<ProjectedScore> {
    if grid_size < 64 {
        return Err(Error::InvalidInput("grid size must be at least 64".into()));
    }
    let m = grid_size;
    let du = 1.0 / (m - 1) as f64;
    let us: Vec<f64> = (0..m).map(|k| k as f64 * du).collect();
    let mut zs = vec![0.0; m];
    let mut js = vec![0.0; m];
    for k in 1..m - 1 {
        let z = density.quantile(us[k]);
        if !z.is_finite() {
            return Err(Error::Domain(format!("quantile failed at u = {}", us[k])));
        }
        let j = density.pdf(z);
        if !j.is_finite() || j < 0.0 {
            return Err(Error::InvalidDensity(format!("density value {j} at z = {z}")));
        }
        zs[k] = z;
        js[k] = j;
    }
    let hull = lcm(&us, &js)?;
    let slopes = &hull.right_derivative;
    let i_star = slopes[..m - 1].iter().map(|s| s * s).sum::<f64>() * du;
    let fisher_info = js
        .windows(2)
        .map(|w| {
            let s = (w[1] - w[0]) / du;
            s * s
        })
        .sum::<f64>()
        * du;
    let mut knots: Vec<f64> = Vec::with_capacity(m);
    let mut levels: Vec<f64> = Vec::with_capacity(m);
    for k in 1..m - 1 {
        if knots.last().is_some_and(|&last| zs[k] <= last) {
            *levels.last_mut().unwrap() = slopes[k];
        } else {
            knots.push(zs[k]);
            levels.push(slopes[k]);
        }
    }
    let score = MonotoneScore::step_with_left_limit(knots, levels, slopes[0])?;
    let sup = js.iter().cloned().fold(0.0, f64::max);
    Ok(ProjectedScore::new(score, i_star, fisher_info, sup))
}

/// Families with an explicit projected score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormFamily {
    Cauchy,
    T2Scaled,
    SymPareto { alpha: f64, sigma: f64 },
    LaplaceMixture { rho: f64, mu: f64 },
    Prop1 { eps: f64 },
}

impl ClosedFormFamily {
    pub fn density(&self) -> Result<ReferenceDensity> {
        Ok(match *self {
            Self::Cauchy => ReferenceDensity::standard_cauchy(),
            Self::T2Scaled => ReferenceDensity::T2Scaled,
            Self::SymPareto { alpha, sigma } => ReferenceDensity::SymPareto { alpha, sigma },
            Self::LaplaceMixture { rho, mu } => ReferenceDensity::LaplaceMixture { rho, mu },
            Self::Prop1 { eps } => ReferenceDensity::prop1(eps)?,
        })
    }

    /// The family of a reference density, if it has a closed form.
    pub fn of(density: &ReferenceDensity) -> Option<Self> {
        match density {
            ReferenceDensity::Cauchy { loc, scale } if *loc == 0.0 && *scale == 1.0 => Some(Self::Cauchy),
            ReferenceDensity::T2Scaled => Some(Self::T2Scaled),
            ReferenceDensity::SymPareto { alpha, sigma } => Some(Self::SymPareto {
                alpha: *alpha,
                sigma: *sigma,
            }),
            ReferenceDensity::LaplaceMixture { rho, mu } => Some(Self::LaplaceMixture { rho: *rho, mu: *mu }),
            ReferenceDensity::Prop1(c) => Some(Self::Prop1 { eps: c.eps }),
            _ => None,
        }
    }
}

/// Constants of the standard Cauchy example.
#[derive(Debug, Clone, Copy)]
pub struct CauchyConstants {
    /// Root of `t = tan(t/2)` in `(2, 3)`.
    pub t0: f64,
    /// Root of `z·arctan(1/z) = 1/2`; equals `cot(t0/2)`.
    pub z0: f64,
    /// `u0 = t0/(2π)`.
    pub u0: f64,
    /// `i* = 1/2 − (2t0 cos 2t0 − sin 2t0)/(4π)`.
    pub i_star: f64,
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn cauchy_constants() -> CauchyConstants {
    let t0 = bisect(|t| (0.5 * t).tan() - t, 2.0, 3.0, 1e-12);
    let z0 = bisect(|z| z * (1.0 / z).atan() - 0.5, 0.1, 1.0, 1e-12);
    let i_star = 0.5 - (2.0 * t0 * (2.0 * t0).cos() - (2.0 * t0).sin()) / (4.0 * PI);
    CauchyConstants {
        t0,
        z0,
        u0: t0 / (2.0 * PI),
        i_star,
    }
}

/// Piecewise-linear rendering of a smooth decreasing score on `[−c, c]`,
/// constant outside.
fn clamped_smooth_score<F: Fn(f64) -> f64>(f: F, c: f64, knots: usize) -> Result<MonotoneScore> {
    let zs: Vec<f64> = (0..knots)
        .map(|i| -c + 2.0 * c * i as f64 / (knots - 1) as f64)
        .collect();
    let mut levels: Vec<f64> = zs.iter().map(|&z| f(z)).collect();
    for i in 1..levels.len() {
        if levels[i] > levels[i - 1] {
            levels[i] = levels[i - 1];
        }
    }
    MonotoneScore::new(zs, levels, ScoreMode::PiecewiseLinear)
}

/// The explicit projected score of a closed-form family.
pub fn projected_score_closed_form(family: ClosedFormFamily) -> Result<ProjectedScore> {
    match family {
        ClosedFormFamily::Cauchy => {
            let c = cauchy_constants();
            let score = clamped_smooth_score(|z| -2.0 * z / (1.0 + z * z), c.z0, 4097)?;
            Ok(ProjectedScore::new(score, c.i_star, 0.5, 1.0 / PI))
        }
        ClosedFormFamily::T2Scaled => {
            let cut = 1.0 / 3f64.sqrt();
            let score = clamped_smooth_score(|z| -3.0 * z / (1.0 + z * z), cut, 4097)?;
            Ok(ProjectedScore::new(score, 93.0 / 80.0, 1.2, 0.5))
        }
        ClosedFormFamily::SymPareto { alpha, sigma } => {
            if !(alpha > 0.0 && sigma > 0.0) {
                return Err(Error::InvalidInput("pareto parameters must be positive".into()));
            }
            let r = alpha / sigma;
            let score = MonotoneScore::step_with_left_limit(vec![0.0], vec![-r], r)?;
            let fisher = alpha * (alpha + 1.0).powi(2) / ((alpha + 2.0) * sigma * sigma);
            Ok(ProjectedScore::new(score, r * r, fisher, 0.5 * r))
        }
        ClosedFormFamily::LaplaceMixture { rho, mu } => {
            if !(0.0..=1.0).contains(&rho) || !(mu > 0.0) {
                return Err(Error::InvalidInput("laplace mixture needs rho in [0,1], mu > 0".into()));
            }
            let d = ReferenceDensity::LaplaceMixture { rho, mu };
            let mid = 2.0 * rho - 1.0;
            let score = MonotoneScore::step_with_left_limit(vec![-mu, mu], vec![mid, -1.0], 1.0)?;
            let inner = d.cdf(mu) - d.cdf(-mu);
            let i_star = d.cdf(-mu) + mid * mid * inner + d.sf(mu);
            let middle_fisher = crate::quadrature::adaptive_simpson(
                |z| {
                    let s = d.score(z);
                    s * s * d.pdf(z)
                },
                -mu,
                mu,
                1e-12,
                1 << 20,
            );
            let fisher = d.cdf(-mu) + d.sf(mu) + middle_fisher;
            let sup = d.pdf(-mu).max(d.pdf(mu));
            Ok(ProjectedScore::new(score, i_star, fisher, sup))
        }
        ClosedFormFamily::Prop1 { eps } => {
            let c = Prop1Constants::new(eps)?;
            let score = MonotoneScore::step_with_left_limit(vec![-1.0, 1.0], vec![0.0, -c.a], c.a)?;
            Ok(ProjectedScore::new(
                score,
                c.a * c.a * eps,
                c.fisher_info(),
                0.5 * eps * c.a,
            ))
        }
    }
}

/// Score of the log-concave maximum likelihood projection of the
/// counterexample density: `a` below `−(1+δ)`, `0` in between, `−a` above.
pub fn prop1_ml_score(c: &Prop1Constants) -> Result<MonotoneScore> {
    let w = 1.0 + c.ml_delta();
    MonotoneScore::step_with_left_limit(vec![-w, w], vec![0.0, -c.a], c.a)
}

/// `(∫ψ dP, ∫ψ² dP)` for a decreasing score under `density`.
pub fn score_moments(score: &MonotoneScore, density: &ReferenceDensity) -> (f64, f64) {
    let k = score.knots();
    let l = score.levels();
    let m = k.len();
    let left = score.left_limit();
    let mass_left = density.cdf(k[0]);
    let mass_right = density.sf(k[m - 1]);
    let mut m1 = left * mass_left + l[m - 1] * mass_right;
    let mut m2 = left * left * mass_left + l[m - 1] * l[m - 1] * mass_right;
    for j in 0..m - 1 {
        let (a, b) = (k[j], k[j + 1]);
        match score.mode() {
            ScoreMode::Step => {
                let mass = interval_mass(density, a, b);
                m1 += l[j] * mass;
                m2 += l[j] * l[j] * mass;
            }
            ScoreMode::PiecewiseLinear => {
                m1 += gauss_legendre(|z| score.eval(z) * density.pdf(z), a, b);
                m2 += gauss_legendre(
                    |z| {
                        let s = score.eval(z);
                        s * s * density.pdf(z)
                    },
                    a,
                    b,
                );
            }
        }
    }
    (m1, m2)
}

fn interval_mass(density: &ReferenceDensity, a: f64, b: f64) -> f64 {
    if a > 0.0 {
        density.sf(a) - density.sf(b)
    } else {
        density.cdf(b) - density.cdf(a)
    }
}

/// `−∫p dψ`, the curvature term of the asymptotic variance.
pub fn score_curvature(score: &MonotoneScore, density: &ReferenceDensity) -> f64 {
    let k = score.knots();
    match score.mode() {
        ScoreMode::Step => -score
            .jumps()
            .iter()
            .zip(k)
            .map(|(j, &z)| j * density.pdf(z))
            .sum::<f64>(),
        ScoreMode::PiecewiseLinear => {
            let l = score.levels();
            -(0..k.len() - 1)
                .map(|j| (l[j + 1] - l[j]) / (k[j + 1] - k[j]) * interval_mass(density, k[j], k[j + 1]))
                .sum::<f64>()
        }
    }
}

/// Asymptotic variance factor `V(ψ) = ∫ψ² dP / (∫p dψ)²` of the M-estimator
/// with score `ψ`.
pub fn asymptotic_variance(score: &MonotoneScore, density: &ReferenceDensity) -> f64 {
    let (_, m2) = score_moments(score, density);
    let c = score_curvature(score, density);
    m2 / (c * c)
}

/// A log-concave density `∝ exp(∫ψ)` for a decreasing score `ψ`.
#[derive(Debug)]
pub struct LogConcaveDensity {
    score: MonotoneScore,
    log_at_knots: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl LogConcaveDensity {
    pub fn new(score: MonotoneScore) -> Result<Self> {
        let left = score.left_limit();
        let right = score.right_limit();
        if !(left > 0.0 && right < 0.0) {
            return Err(Error::InvalidDensity(
                "exp(∫ψ) is integrable only if ψ changes sign from positive to negative".into(),
            ));
        }
        let loss = negative_antiderivative(&score, score.knots()[0]);
        let raw: Vec<f64> = score.knots().iter().map(|&z| -loss.value(z)).collect();
        let top = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_at_knots: Vec<f64> = raw.iter().map(|v| v - top).collect();
        let mut d = Self {
            score,
            log_at_knots,
            cumulative: Vec::new(),
            total: 1.0,
        };
        let k = d.score.knots().to_vec();
        let mut cumulative = vec![d.log_at_knots[0].exp() / left];
        for j in 0..k.len() - 1 {
            let piece = d.partial(j, k[j + 1]);
            cumulative.push(cumulative[j] + piece);
        }
        let last = k.len() - 1;
        d.total = cumulative[last] + d.log_at_knots[last].exp() / (-right);
        d.cumulative = cumulative;
        Ok(d)
    }

    pub fn score(&self) -> &MonotoneScore {
        &self.score
    }

    /// Unnormalised log density relative to its maximum over the knots.
    fn log_unnorm(&self, z: f64) -> f64 {
        let k = self.score.knots();
        let l = self.score.levels();
        let m = k.len();
        if z < k[0] {
            return self.log_at_knots[0] + self.score.left_limit() * (z - k[0]);
        }
        if z >= k[m - 1] {
            return self.log_at_knots[m - 1] + l[m - 1] * (z - k[m - 1]);
        }
        let j = k.partition_point(|&t| t <= z) - 1;
        let dz = z - k[j];
        match self.score.mode() {
            ScoreMode::Step => self.log_at_knots[j] + l[j] * dz,
            ScoreMode::PiecewiseLinear => {
                let psi = self.score.eval(z);
                self.log_at_knots[j] + 0.5 * (l[j] + psi) * dz
            }
        }
    }

    /// Unnormalised mass of `[knots[j], z]` for `z` inside interval `j`.
    fn partial(&self, j: usize, z: f64) -> f64 {
        let k = self.score.knots();
        let a = k[j];
        let dz = z - a;
        if dz <= 0.0 {
            return 0.0;
        }
        match self.score.mode() {
            ScoreMode::Step => {
                let s = self.score.levels()[j];
                let base = self.log_at_knots[j].exp();
                if s.abs() * dz < 1e-12 {
                    base * dz
                } else {
                    base * (s * dz).exp_m1() / s
                }
            }
            ScoreMode::PiecewiseLinear => {
                let panels = 4;
                let h = dz / panels as f64;
                (0..panels)
                    .map(|p| {
                        let lo = a + p as f64 * h;
                        gauss_legendre(|t| self.log_unnorm(t).exp(), lo, lo + h)
                    })
                    .sum()
            }
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.log_unnorm(z).exp() / self.total
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let k = self.score.knots();
        let m = k.len();
        let left = self.score.left_limit();
        let mass = if z < k[0] {
            self.log_unnorm(z).exp() / left
        } else if z >= k[m - 1] {
            let right = self.score.right_limit();
            self.total - self.log_unnorm(z).exp() / (-right)
        } else {
            let j = k.partition_point(|&t| t <= z) - 1;
            self.cumulative[j] + self.partial(j, z)
        };
        (mass / self.total).clamp(0.0, 1.0)
    }

    pub fn sf(&self, z: f64) -> f64 {
        let k = self.score.knots();
        if z >= k[k.len() - 1] {
            return self.log_unnorm(z).exp() / (-self.score.right_limit()) / self.total;
        }
        1.0 - self.cdf(z)
    }
}

/// The log-concave density `p₀* ∝ exp(∫ψ₀*)` closest to `density` in Fisher
/// divergence.
pub fn fisher_divergence_projection(ps: &ProjectedScore) -> Result<ReferenceDensity> {
    Ok(ReferenceDensity::LogConcave(Arc::new(LogConcaveDensity::new(
        ps.score.clone(),
    )?)))
}

/// `p(z)/min(F(z), 1 − F(z))`, with `0/0 = 0`.
pub fn two_sided_hazard(density: &ReferenceDensity, z: f64) -> f64 {
    let p = density.pdf(z);
    let tail = density.cdf(z).min(density.sf(z));
    if p == 0.0 {
        0.0
    } else {
        p / tail
    }
}

/// `∫₀¹ J₀ = ∫p₀²` by Simpson's rule in the quantile domain.
pub fn density_quantile_integral(density: &ReferenceDensity) -> f64 {
    integrate_unit(|u| {
        if u <= 0.0 || u >= 1.0 {
            0.0
        } else {
            density.pdf(density.quantile(u))
        }
    })
}

/// Asymptotic variance factor `1/(12(∫J₀)²)` of composite quantile regression.
pub fn v_cq(density: &ReferenceDensity) -> Result<f64> {
    let s = density_quantile_integral(density);
    if !(s > 0.0) {
        return Err(Error::InvalidDensity("density quantile function vanishes".into()));
    }
    Ok(1.0 / (12.0 * s * s))
}

/// Efficiency of the Huber loss with threshold `k` relative to the optimal
/// convex loss, under standard Cauchy errors.
pub fn huber_relative_efficiency(k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidInput("Huber threshold must be positive".into()));
    }
    let at = k.atan();
    let denom = PI * (PI * k * k + 2.0 * k - 2.0 * (1.0 + k * k) * at) * cauchy_constants().i_star;
    Ok(4.0 * at * at / denom)
}

/// The optimal convex loss `ℓ₀* = −∫ψ₀*`, normalised to vanish at `anchor`.
pub fn optimal_loss(ps: &ProjectedScore, anchor: f64) -> impl Fn(f64) -> f64 + '_ {
    let loss = negative_antiderivative(&ps.score, anchor);
    move |z| loss.value(z)
}
