//! Reference error distributions.
//!
//! Every family exposes its density, distribution function, quantile
//! function, location score `p'/p` and a sampler. Families without a
//! closed-form quantile fall back to a safeguarded Newton/bisection solve.

mod projection;

pub use projection::*;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf, norm_quantile, norm_sf};

/// A univariate error density.
#[derive(Debug, Clone)]
pub enum ReferenceDensity {
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Cauchy {
        loc: f64,
        scale: f64,
    },
    Laplace {
        loc: f64,
        scale: f64,
    },
    Logistic {
        loc: f64,
        scale: f64,
    },
    /// `½(1+z²)^{-3/2}`, a t₂ density rescaled by `1/√2`.
    T2Scaled,
    /// `ασ^α / {2(|z|+σ)^{α+1}}`.
    SymPareto {
        alpha: f64,
        sigma: f64,
    },
    /// `(1−ρ)/2·e^{−|z+μ|} + ρ/2·e^{−|z−μ|}`.
    LaplaceMixture {
        rho: f64,
        mu: f64,
    },
    /// Components `(weight, mean, sd)`.
    GaussianMixture(Vec<(f64, f64, f64)>),
    /// `U[−1, 1] + sd·Z`.
    SmoothedUniform {
        sd: f64,
    },
    /// `Exp(1) − 1 + sd·Z`.
    SmoothedExponential {
        sd: f64,
    },
    /// The counterexample family with parameter `ε`; see [`Prop1Constants`].
    Prop1(Prop1Constants),
    /// `a·p(a z + b)`.
    Affine {
        base: Box<ReferenceDensity>,
        a: f64,
        b: f64,
    },
    /// Weighted mixture of arbitrary densities.
    Mixture(Vec<(f64, ReferenceDensity)>),
    /// Log-concave density `∝ exp(∫ψ)` for a decreasing score `ψ`.
    LogConcave(Arc<LogConcaveDensity>),
}

/// Constants of the density `p(z) = εa e^{−a(|z|−1)}/2` for `|z| ≥ 1` and
/// `εa e^{−b(1−|z|)}/2` for `|z| < 1`, with `a = (1−ε²)/ε²` and `b` solving
/// `1 − ε = εa(1 − e^{−b})/b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Constants {
    pub eps: f64,
    pub a: f64,
    pub b: f64,
}

impl Prop1Constants {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon must lie in (0,1), got {eps}")));
        }
        let a = (1.0 - eps * eps) / (eps * eps);
        // (1 − e^{−b})/b decreases from 1 to 0; solve εa·g(b) = 1 − ε.
        let target = (1.0 - eps) / (eps * a);
        let g = |b: f64| -(-b).exp_m1() / b;
        let (mut lo, mut hi) = (1e-12, 1.0);
        while g(hi) > target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            eps,
            a,
            b: 0.5 * (lo + hi),
        })
    }

    /// Fisher information `b²(1−ε) + a²ε`.
    pub fn fisher_info(&self) -> f64 {
        self.b * self.b * (1.0 - self.eps) + self.a * self.a * self.eps
    }

    /// Half-width offset `δ > 0` of the log-concave maximum likelihood
    /// projection, solving `ε(a(1+δ)+1)e^{−aδ} = 1`.
    pub fn ml_delta(&self) -> f64 {
        let f = |d: f64| self.eps * (self.a * (1.0 + d) + 1.0) * (-self.a * d).exp() - 1.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn gaussian_mixture_from(params: &[f64]) -> Result<ReferenceDensity> {
    if params.is_empty() || !params.len().is_multiple_of(3) {
        return Err(Error::InvalidInput(
            "gaussian_mix expects weight,mean,sd triples".into(),
        ));
    }
    let comps: Vec<(f64, f64, f64)> = params.chunks(3).map(|c| (c[0], c[1], c[2])).collect();
    ReferenceDensity::gaussian_mixture(comps)
}

impl ReferenceDensity {
    pub fn standard_gaussian() -> Self {
        Self::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn standard_cauchy() -> Self {
        Self::Cauchy { loc: 0.0, scale: 1.0 }
    }

    pub fn gaussian_mixture(comps: Vec<(f64, f64, f64)>) -> Result<Self> {
        let total: f64 = comps.iter().map(|c| c.0).sum();
        if comps.iter().any(|c| !(c.0 > 0.0) || !(c.2 > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(
                "mixture weights must be positive and sum to one; sds positive".into(),
            ));
        }
        Ok(Self::GaussianMixture(comps))
    }

    pub fn prop1(eps: f64) -> Result<Self> {
        Ok(Self::Prop1(Prop1Constants::new(eps)?))
    }

    /// The density `a·p(a z + b)`.
    pub fn affine(self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !b.is_finite() {
            return Err(Error::InvalidInput("affine map needs a > 0".into()));
        }
        Ok(Self::Affine {
            base: Box::new(self),
            a,
            b,
        })
    }

    /// Mixture `(1−t)·self + t·other`.
    pub fn mix(self, other: Self, t: f64) -> Self {
        Self::Mixture(vec![(1.0 - t, self), (t, other)])
    }

    /// Whether the density is known to be log-concave.
    pub fn is_log_concave(&self) -> bool {
        match self {
            Self::Gaussian { .. } | Self::Laplace { .. } | Self::Logistic { .. } => true,
            Self::SmoothedUniform { .. } | Self::SmoothedExponential { .. } => true,
            Self::LogConcave(_) => true,
            Self::Affine { base, .. } => base.is_log_concave(),
            _ => false,
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => norm_pdf((z - mean) / sd) / sd,
            Self::Cauchy { loc, scale } => {
                let t = (z - loc) / scale;
                1.0 / (PI * scale * (1.0 + t * t))
            }
            Self::Laplace { loc, scale } => (-((z - loc) / scale).abs()).exp() / (2.0 * scale),
            Self::Logistic { loc, scale } => {
                let e = (-((z - loc) / scale).abs()).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
            Self::T2Scaled => 0.5 * (1.0 + z * z).powf(-1.5),
            Self::SymPareto { alpha, sigma } => {
                alpha * sigma.powf(*alpha) / (2.0 * (z.abs() + sigma).powf(alpha + 1.0))
            }
            Self::LaplaceMixture { rho, mu } => {
                0.5 * (1.0 - rho) * (-(z + mu).abs()).exp() + 0.5 * rho * (-(z - mu).abs()).exp()
            }
            Self::GaussianMixture(c) => c.iter().map(|(w, m, s)| w * norm_pdf((z - m) / s) / s).sum(),
            Self::SmoothedUniform { sd } => {
                let (hi, lo) = ((z + 1.0) / sd, (z - 1.0) / sd);
                let mass = if z > 0.0 {
                    norm_sf(lo) - norm_sf(hi)
                } else {
                    norm_cdf(hi) - norm_cdf(lo)
                };
                0.5 * mass
            }
            Self::SmoothedExponential { sd } => {
                let x = z + 1.0;
                let t = x / sd - sd;
                if t < -38.0 {
                    return 0.0;
                }
                (0.5 * sd * sd - x).exp() * norm_cdf(t)
            }
            Self::Prop1(c) => {
                let az = z.abs();
                if az >= 1.0 {
                    0.5 * c.eps * c.a * (-c.a * (az - 1.0)).exp()
                } else {
                    0.5 * c.eps * c.a * (-c.b * (1.0 - az)).exp()
                }
            }
            Self::Affine { base, a, b } => a * base.pdf(a * z + b),
            Self::Mixture(c) => c.iter().map(|(w, d)| w * d.pdf(z)).sum(),
            Self::LogConcave(d) => d.pdf(z),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => norm_cdf((z - mean) / sd),
            Self::Cauchy { loc, scale } => {
                let t = (z - loc) / scale;
                if t < -1.0 {
                    (-1.0 / t).atan() / PI
                } else {
                    0.5 + t.atan() / PI
                }
            }
            Self::Laplace { loc, scale } => {
                let t = (z - loc) / scale;
                if t < 0.0 {
                    0.5 * t.exp()
                } else {
                    1.0 - 0.5 * (-t).exp()
                }
            }
            Self::Logistic { loc, scale } => 1.0 / (1.0 + (-(z - loc) / scale).exp()),
            Self::T2Scaled => {
                if z < 0.0 {
                    let r = (1.0 + z * z).sqrt();
                    0.5 / (r * (r - z))
                } else {
                    0.5 * (1.0 + z / (1.0 + z * z).sqrt())
                }
            }
            Self::SymPareto { alpha, sigma } => {
                if z < 0.0 {
                    0.5 * (sigma / (sigma - z)).powf(*alpha)
                } else {
                    1.0 - 0.5 * (sigma / (sigma + z)).powf(*alpha)
                }
            }
            Self::LaplaceMixture { rho, mu } => {
                let lap = |t: f64| if t < 0.0 { 0.5 * t.exp() } else { 1.0 - 0.5 * (-t).exp() };
                (1.0 - rho) * lap(z + mu) + rho * lap(z - mu)
            }
            Self::GaussianMixture(c) => c.iter().map(|(w, m, s)| w * norm_cdf((z - m) / s)).sum(),
            Self::SmoothedUniform { sd } => {
                if z > 0.0 {
                    1.0 - smoothed_uniform_lower(-z, *sd)
                } else {
                    smoothed_uniform_lower(z, *sd)
                }
            }
            Self::SmoothedExponential { sd } => {
                let x = z + 1.0;
                norm_cdf(x / sd) - self.pdf(z)
            }
            Self::Prop1(c) => {
                if z > 0.0 {
                    1.0 - prop1_lower(-z, c)
                } else {
                    prop1_lower(z, c)
                }
            }
            Self::Affine { base, a, b } => base.cdf(a * z + b),
            Self::Mixture(c) => c.iter().map(|(w, d)| w * d.cdf(z)).sum(),
            Self::LogConcave(d) => d.cdf(z),
        }
    }

    /// Upper tail `1 − F(z)`, accurate when `F(z)` is close to one.
    pub fn sf(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => norm_sf((z - mean) / sd),
            Self::Cauchy { loc, scale } => {
                let t = (z - loc) / scale;
                if t > 1.0 {
                    (1.0 / t).atan() / PI
                } else {
                    0.5 - t.atan() / PI
                }
            }
            Self::Laplace { loc, scale } => Self::Laplace {
                loc: -loc,
                scale: *scale,
            }
            .cdf(-z),
            Self::Logistic { loc, scale } => 1.0 / (1.0 + ((z - loc) / scale).exp()),
            Self::T2Scaled | Self::SymPareto { .. } | Self::SmoothedUniform { .. } | Self::Prop1(_) => self.cdf(-z),
            Self::LaplaceMixture { rho, mu } => Self::LaplaceMixture {
                rho: 1.0 - rho,
                mu: *mu,
            }
            .cdf(-z),
            Self::GaussianMixture(c) => c.iter().map(|(w, m, s)| w * norm_sf((z - m) / s)).sum(),
            Self::SmoothedExponential { sd } => norm_sf((z + 1.0) / sd) + self.pdf(z),
            Self::Affine { base, a, b } => base.sf(a * z + b),
            Self::Mixture(c) => c.iter().map(|(w, d)| w * d.sf(z)).sum(),
            Self::LogConcave(d) => d.sf(z),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return f64::NAN;
        }
        if u == 0.0 {
            return f64::NEG_INFINITY;
        }
        if u == 1.0 {
            return f64::INFINITY;
        }
        match self {
            Self::Gaussian { mean, sd } => mean + sd * norm_quantile(u),
            Self::Cauchy { loc, scale } => {
                // tan(π(u − ½)) written to keep precision in both tails
                let t = if u < 0.5 {
                    -1.0 / (PI * u).tan()
                } else {
                    1.0 / (PI * (1.0 - u)).tan()
                };
                loc + scale * t
            }
            Self::Laplace { loc, scale } => {
                if u < 0.5 {
                    loc + scale * (2.0 * u).ln()
                } else {
                    loc - scale * (2.0 * (1.0 - u)).ln()
                }
            }
            Self::Logistic { loc, scale } => loc + scale * (u.ln() - (-u).ln_1p()),
            Self::T2Scaled => (2.0 * u - 1.0) / (2.0 * (u * (1.0 - u)).sqrt()),
            Self::SymPareto { alpha, sigma } => {
                if u < 0.5 {
                    -sigma * ((2.0 * u).powf(-1.0 / alpha) - 1.0)
                } else {
                    sigma * ((2.0 * (1.0 - u)).powf(-1.0 / alpha) - 1.0)
                }
            }
            Self::Prop1(c) => {
                if u > 0.5 {
                    -prop1_lower_quantile(1.0 - u, c)
                } else {
                    prop1_lower_quantile(u, c)
                }
            }
            Self::Affine { base, a, b } => (base.quantile(u) - b) / a,
            _ => numeric_quantile(self, u, 1e-13),
        }
    }

    /// Location score `p'/p`, where defined.
    pub fn score(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => -(z - mean) / (sd * sd),
            Self::Cauchy { loc, scale } => {
                let t = (z - loc) / scale;
                -2.0 * t / (scale * (1.0 + t * t))
            }
            Self::Laplace { loc, scale } => -sign0(z - loc) / scale,
            Self::Logistic { loc, scale } => -(0.5 * (z - loc) / scale).tanh() / scale,
            Self::T2Scaled => -3.0 * z / (1.0 + z * z),
            Self::SymPareto { alpha, sigma } => -(alpha + 1.0) * sign0(z) / (z.abs() + sigma),
            Self::LaplaceMixture { rho, mu } => {
                let l = 0.5 * (1.0 - rho) * (-(z + mu).abs()).exp();
                let r = 0.5 * rho * (-(z - mu).abs()).exp();
                (-sign0(z + mu) * l - sign0(z - mu) * r) / (l + r)
            }
            Self::GaussianMixture(c) => {
                let logs: Vec<f64> = c
                    .iter()
                    .map(|(w, m, s)| w.ln() - s.ln() - 0.5 * ((z - m) / s).powi(2))
                    .collect();
                let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut num = 0.0;
                let mut den = 0.0;
                for ((_, m, s), l) in c.iter().zip(&logs) {
                    let w = (l - top).exp();
                    num += w * (-(z - m) / (s * s));
                    den += w;
                }
                num / den
            }
            Self::SmoothedUniform { sd } => {
                let (hi, lo) = ((z + 1.0) / sd, (z - 1.0) / sd);
                let p = 2.0 * self.pdf(z);
                if p <= 0.0 {
                    return if z > 0.0 { -lo / sd } else { -hi / sd };
                }
                (norm_pdf(hi) - norm_pdf(lo)) / (sd * p)
            }
            Self::SmoothedExponential { sd } => {
                let t = (z + 1.0) / sd - sd;
                -1.0 + inverse_mills(t) / sd
            }
            Self::Prop1(c) => {
                if z.abs() > 1.0 {
                    -c.a * sign0(z)
                } else {
                    c.b * sign0(z)
                }
            }
            Self::Affine { base, a, b } => a * base.score(a * z + b),
            Self::Mixture(c) => {
                let den: f64 = c.iter().map(|(w, d)| w * d.pdf(z)).sum();
                let num: f64 = c.iter().map(|(w, d)| w * d.pdf(z) * d.score(z)).sum();
                num / den
            }
            Self::LogConcave(d) => d.score().eval(z),
        }
    }

    /// One draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Self::LaplaceMixture { rho, mu } => {
                let centre = if rng.random::<f64>() < *rho { *mu } else { -mu };
                let e: f64 = Exp1.sample(rng);
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                centre + s * e
            }
            Self::GaussianMixture(c) => {
                let comp = pick(rng, c.iter().map(|x| x.0));
                let (_, m, s) = c[comp];
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            }
            Self::SmoothedUniform { sd } => {
                let u = rng.random::<f64>() * 2.0 - 1.0;
                let z: f64 = StandardNormal.sample(rng);
                u + sd * z
            }
            Self::SmoothedExponential { sd } => {
                let e: f64 = Exp1.sample(rng);
                let z: f64 = StandardNormal.sample(rng);
                e - 1.0 + sd * z
            }
            Self::Affine { base, a, b } => (base.draw(rng) - b) / a,
            Self::Mixture(c) => {
                let comp = pick(rng, c.iter().map(|x| x.0));
                c[comp].1.draw(rng)
            }
            _ => loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break self.quantile(u);
                }
            },
        }
    }

    /// `n` i.i.d. draws from a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `φ(t)/Φ(t)`, stable for very negative `t`.
fn inverse_mills(t: f64) -> f64 {
    if t > -8.0 {
        norm_pdf(t) / norm_cdf(t)
    } else {
        let r = 1.0 / (t * t);
        -t / (1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r)
    }
}

/// `F(z)` for `z ≤ 0` of `U[−1,1] + sd·Z`, via `G(t) = tΦ(t) + φ(t)`.
fn smoothed_uniform_lower(z: f64, sd: f64) -> f64 {
    let g = |t: f64| t * norm_cdf(t) + norm_pdf(t);
    0.5 * sd * (g((z + 1.0) / sd) - g((z - 1.0) / sd))
}

fn prop1_lower(z: f64, c: &Prop1Constants) -> f64 {
    if z <= -1.0 {
        0.5 * c.eps * (c.a * (z + 1.0)).exp()
    } else {
        0.5 * c.eps - 0.5 * c.eps * c.a / c.b * (-c.b * (1.0 + z)).exp_m1()
    }
}

fn prop1_lower_quantile(u: f64, c: &Prop1Constants) -> f64 {
    if u <= 0.5 * c.eps {
        -1.0 + (2.0 * u / c.eps).ln() / c.a
    } else {
        let r = (u - 0.5 * c.eps) * 2.0 * c.b / (c.eps * c.a);
        -1.0 - (-r).ln_1p() / c.b
    }
}

/// Solves `F(z) = u` by bracketing and safeguarded Newton steps; the upper
/// half uses the survival function to keep relative accuracy.
pub fn numeric_quantile(d: &ReferenceDensity, u: f64, tol: f64) -> f64 {
    let upper = u > 0.5;
    let target = if upper { 1.0 - u } else { u };
    // g is increasing in z with root where g = 0.
    let g = |z: f64| {
        if upper {
            target - d.sf(z)
        } else {
            d.cdf(z) - target
        }
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut step = 1.0;
    while g(lo) > 0.0 {
        step *= 2.0;
        lo = -step;
        if step > 1e300 {
            return f64::NAN;
        }
    }
    step = 1.0;
    while g(hi) < 0.0 {
        step *= 2.0;
        hi = step;
        if step > 1e300 {
            return f64::NAN;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..400 {
        let gz = g(z);
        if gz == 0.0 {
            return z;
        }
        if gz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        if hi - lo <= tol * (1.0 + z.abs()) {
            break;
        }
        let p = d.pdf(z);
        let newton = z - gz / p;
        z = if p > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    z
}

impl fmt::Display for ReferenceDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { mean, sd } => write!(f, "gaussian:{mean},{sd}"),
            Self::Cauchy { loc, scale } => write!(f, "cauchy:{loc},{scale}"),
            Self::Laplace { loc, scale } => write!(f, "laplace:{loc},{scale}"),
            Self::Logistic { loc, scale } => write!(f, "logistic:{loc},{scale}"),
            Self::T2Scaled => write!(f, "t2"),
            Self::SymPareto { alpha, sigma } => write!(f, "pareto:{alpha},{sigma}"),
            Self::LaplaceMixture { rho, mu } => write!(f, "laplace_mix:{rho},{mu}"),
            Self::GaussianMixture(c) => {
                let parts: Vec<String> = c.iter().map(|(w, m, s)| format!("{w},{m},{s}")).collect();
                write!(f, "gaussian_mix:{}", parts.join(","))
            }
            Self::SmoothedUniform { sd } => write!(f, "smooth_uniform:{sd}"),
            Self::SmoothedExponential { sd } => write!(f, "smooth_exp:{sd}"),
            Self::Prop1(c) => write!(f, "prop1:{}", c.eps),
            Self::Affine { base, a, b } => write!(f, "affine({base};{a},{b})"),
            Self::Mixture(c) => {
                let parts: Vec<String> = c.iter().map(|(w, d)| format!("{w}*{d}")).collect();
                write!(f, "mixture({})", parts.join("+"))
            }
            Self::LogConcave(_) => write!(f, "log_concave_projection"),
        }
    }
}

impl FromStr for ReferenceDensity {
    type Err = Error;

    /// Parses `name` or `name:p1,p2,...`. Presets: `scale_mix`, `loc_mix`
    /// and `infer_mix` are the Gaussian mixtures used in the experiments.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), a),
            None => (s.trim(), ""),
        };
        let params: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad parameter '{p}' in '{s}'")))
                })
                .collect::<Result<_>>()?
        };
        let get = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        let positive = |v: f64, what: &str| {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::InvalidInput(format!("{what} must be positive in '{s}'")))
            }
        };
        let d = match name {
            "gaussian" | "normal" => Self::Gaussian {
                mean: get(0, 0.0),
                sd: positive(get(1, 1.0), "sd")?,
            },
            "cauchy" => Self::Cauchy {
                loc: get(0, 0.0),
                scale: positive(get(1, 1.0), "scale")?,
            },
            "laplace" => Self::Laplace {
                loc: get(0, 0.0),
                scale: positive(get(1, 1.0), "scale")?,
            },
            "logistic" => Self::Logistic {
                loc: get(0, 0.0),
                scale: positive(get(1, 1.0), "scale")?,
            },
            "t2" => Self::T2Scaled,
            "pareto" => Self::SymPareto {
                alpha: positive(get(0, 3.0), "alpha")?,
                sigma: positive(get(1, 2.0), "sigma")?,
            },
            "laplace_mix" => {
                let rho = get(0, 0.5);
                if !(0.0..=1.0).contains(&rho) {
                    return Err(Error::InvalidInput(format!("rho must lie in [0,1] in '{s}'")));
                }
                Self::LaplaceMixture {
                    rho,
                    mu: positive(get(1, 1.0), "mu")?,
                }
            }
            "gaussian_mix" => gaussian_mixture_from(&params)?,
            "scale_mix" => gaussian_mixture_from(&[0.5, 0.0, 1.0, 0.5, 0.0, 4.0])?,
            "loc_mix" => gaussian_mixture_from(&[0.5, -1.5, 0.1, 0.5, 1.5, 0.1])?,
            "infer_mix" => gaussian_mixture_from(&[2.0 / 3.0, 0.0, 1.0, 1.0 / 3.0, 0.5, 3.0])?,
            "smooth_uniform" => Self::SmoothedUniform {
                sd: positive(get(0, 0.1), "sd")?,
            },
            "smooth_exp" => Self::SmoothedExponential {
                sd: positive(get(0, 3f64.sqrt() / 10.0), "sd")?,
            },
            "prop1" => Self::prop1(get(0, 0.2))?,
            _ => return Err(Error::InvalidInput(format!("unknown density '{name}'"))),
        };
        Ok(d)
    }
}
