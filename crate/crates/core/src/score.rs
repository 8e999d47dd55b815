//! From residuals to an estimated decreasing score.

use crate::error::{Error, Result};
use crate::monotone::{pava_decreasing, MonotoneScore, ScoreMode};
use crate::special::{norm_cdf, norm_pdf};

/// Smoothing kernel of the density estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Gaussian,
    /// Biweight `15/16 (1 − t²)²` on `[−1, 1]`.
    Quartic,
    /// Triweight `35/32 (1 − t²)³` on `[−1, 1]`; twice continuously differentiable.
    Triweight,
}

impl Kernel {
    /// Half-width (in bandwidths) beyond which the kernel is treated as zero.
    fn radius(self) -> f64 {
        match self {
            Kernel::Gaussian => 9.0,
            Kernel::Quartic | Kernel::Triweight => 1.0,
        }
    }

    /// `(K(t), K'(t))`.
    fn density(self, t: f64) -> (f64, f64) {
        match self {
            Kernel::Gaussian => {
                let k = norm_pdf(t);
                (k, -t * k)
            }
            Kernel::Quartic => {
                if t.abs() >= 1.0 {
                    return (0.0, 0.0);
                }
                let s = 1.0 - t * t;
                (15.0 / 16.0 * s * s, -3.75 * t * s)
            }
            Kernel::Triweight => {
                if t.abs() >= 1.0 {
                    return (0.0, 0.0);
                }
                let s = 1.0 - t * t;
                (35.0 / 32.0 * s * s * s, -105.0 / 16.0 * t * s * s)
            }
        }
    }

    fn cdf(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => norm_cdf(t),
            Kernel::Quartic => {
                let t = t.clamp(-1.0, 1.0);
                let t2 = t * t;
                0.5 + 15.0 / 16.0 * t * (1.0 - 2.0 * t2 / 3.0 + t2 * t2 / 5.0)
            }
            Kernel::Triweight => {
                let t = t.clamp(-1.0, 1.0);
                let t2 = t * t;
                0.5 + 35.0 / 32.0 * t * (1.0 - t2 + 0.6 * t2 * t2 - t2 * t2 * t2 / 7.0)
            }
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Kernel::Gaussian),
            "quartic" | "biweight" => Ok(Kernel::Quartic),
            "triweight" => Ok(Kernel::Triweight),
            _ => Err(Error::InvalidInput(format!("unknown kernel '{s}'"))),
        }
    }
}

/// Bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    #[default]
    Silverman,
    Fixed(f64),
}

impl Bandwidth {
    pub fn select(self, data: &[f64]) -> Result<f64> {
        match self {
            Bandwidth::Silverman => silverman_bandwidth(data),
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            Bandwidth::Fixed(h) => Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}"))),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "silverman" {
            return Ok(Bandwidth::Silverman);
        }
        s.parse::<f64>()
            .ok()
            .filter(|h| *h > 0.0 && h.is_finite())
            .map(Bandwidth::Fixed)
            .ok_or_else(|| Error::InvalidInput(format!("bad bandwidth '{s}'")))
    }
}

fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{−1/5}`.
pub fn silverman_bandwidth(data: &[f64]) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidInput("bandwidth needs at least two points".into()));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let sd = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::DegenerateSample("all residuals are identical".into()));
    }
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Kernel density estimate with exact derivative and distribution function.
#[derive(Debug, Clone)]
pub struct KdeModel {
    centers: Vec<f64>,
    h: f64,
    kernel: Kernel,
}

/// Tabulated `(F̃, p̃)` on a lattice covering the support, for fast inversion.
struct CdfTable {
    z: Vec<f64>,
    f: Vec<f64>,
    p: Vec<f64>,
    /// `gap[i]` marks that `z[i]` and `z[i+1]` belong to different segments.
    gap: Vec<bool>,
}

impl KdeModel {
    pub fn new(residuals: &[f64], kernel: Kernel, bandwidth: Bandwidth) -> Result<Self> {
        if residuals.len() < 2 {
            return Err(Error::InvalidInput(
                "density estimation needs at least two residuals".into(),
            ));
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("residuals must be finite".into()));
        }
        let mut centers = residuals.to_vec();
        centers.sort_by(f64::total_cmp);
        if centers[0] == centers[centers.len() - 1] {
            return Err(Error::DegenerateSample("all residuals are identical".into()));
        }
        let h = bandwidth.select(&centers)?;
        Ok(Self { centers, h, kernel })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    fn window(&self, z: f64) -> (usize, usize) {
        let r = self.kernel.radius() * self.h;
        let lo = self.centers.partition_point(|&c| c <= z - r);
        let hi = self.centers.partition_point(|&c| c < z + r);
        (lo, hi)
    }

    /// `(p̃(z), p̃'(z), F̃(z))` in one pass over the kernel window.
    pub fn evaluate(&self, z: f64) -> (f64, f64, f64) {
        let (lo, hi) = self.window(z);
        let (mut p, mut dp, mut f) = (0.0, 0.0, 0.0);
        for &c in &self.centers[lo..hi] {
            let t = (z - c) / self.h;
            let (k, dk) = self.kernel.density(t);
            p += k;
            dp += dk;
            f += self.kernel.cdf(t);
        }
        let n = self.centers.len() as f64;
        (p / (n * self.h), dp / (n * self.h * self.h), (f + lo as f64) / n)
    }

    fn density_pair(&self, z: f64) -> (f64, f64) {
        let (lo, hi) = self.window(z);
        let (mut p, mut dp) = (0.0, 0.0);
        for &c in &self.centers[lo..hi] {
            let (k, dk) = self.kernel.density((z - c) / self.h);
            p += k;
            dp += dk;
        }
        let n = self.centers.len() as f64;
        (p / (n * self.h), dp / (n * self.h * self.h))
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.density_pair(z).0
    }

    pub fn pdf_derivative(&self, z: f64) -> f64 {
        self.density_pair(z).1
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.evaluate(z).2
    }

    /// `F̃⁻¹(u)` by bisection to `1e−10`.
    pub fn quantile(&self, u: f64) -> f64 {
        let r = 10.0 * self.h;
        let lo = self.centers[0] - r;
        let hi = self.centers[self.centers.len() - 1] + r;
        self.bisect_quantile(u, lo, hi)
    }

    fn bisect_quantile(&self, u: f64, mut lo: f64, mut hi: f64) -> f64 {
        while hi - lo > 1e-10 * (1.0 + lo.abs().max(hi.abs())) {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn table(&self) -> CdfTable {
        let step = self.h / 8.0;
        let reach = 8.0 * self.h * self.kernel.radius().min(1.0);
        let mut segments: Vec<(f64, f64)> = Vec::new();
        for &c in &self.centers {
            match segments.last_mut() {
                Some(seg) if c - reach <= seg.1 + step => seg.1 = c + reach,
                _ => segments.push((c - reach, c + reach)),
            }
        }
        let mut t = CdfTable {
            z: Vec::new(),
            f: Vec::new(),
            p: Vec::new(),
            gap: Vec::new(),
        };
        for (a, b) in segments {
            if !t.gap.is_empty() {
                *t.gap.last_mut().unwrap() = true;
            }
            let count = ((b - a) / step).ceil() as usize + 1;
            for i in 0..count {
                let z = a + i as f64 * step;
                let (p, _, f) = self.evaluate(z);
                t.z.push(z);
                t.f.push(f);
                t.p.push(p);
                t.gap.push(false);
            }
        }
        t
    }

    /// Safeguarded Newton iteration for `F̃(z) = u` inside a bracket.
    fn polish(&self, u: f64, mut z: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..60 {
            let (p, _, f) = self.evaluate(z);
            let err = f - u;
            if err.abs() <= 1e-13 || hi - lo <= 1e-14 * (1.0 + z.abs()) {
                break;
            }
            if err < 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            let next = z - err / p;
            z = if p > 0.0 && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
        }
        z
    }

    /// `F̃⁻¹` at many levels: cubic Hermite inversion of a tabulated
    /// distribution function, polished by Newton steps on `F̃`.
    pub fn quantiles(&self, us: &[f64]) -> Vec<f64> {
        let t = self.table();
        let last = t.z.len() - 1;
        us.iter()
            .map(|&u| {
                if u <= t.f[0] || u >= t.f[last] {
                    return self.quantile(u);
                }
                let i = t.f.partition_point(|&f| f <= u) - 1;
                if t.gap[i] {
                    return self.bisect_quantile(u, t.z[i], t.z[i + 1]);
                }
                self.polish(u, invert_hermite(&t, i, u), t.z[i], t.z[i + 1])
            })
            .collect()
    }
}

fn invert_hermite(t: &CdfTable, i: usize, u: f64) -> f64 {
    let (f0, f1) = (t.f[i], t.f[i + 1]);
    let dz = t.z[i + 1] - t.z[i];
    if f1 <= f0 {
        return t.z[i];
    }
    let (m0, m1) = (t.p[i] * dz, t.p[i + 1] * dz);
    let value = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d11 = 3.0 * s2 - 2.0 * s;
        (
            h00 * f0 + h10 * m0 + h01 * f1 + h11 * m1,
            d00 * f0 + d10 * m0 - d00 * f1 + d11 * m1,
        )
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut s = (u - f0) / (f1 - f0);
    for _ in 0..40 {
        let (v, d) = value(s);
        let err = v - u;
        if err.abs() <= 1e-15 * (1.0 + u) {
            break;
        }
        if err < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let next = s - err / d;
        s = if d > 0.0 && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    t.z[i] + s * dz
}

/// Derivative cap `α` and density floor `γ` of the truncated score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for TruncationParams {
    fn default() -> Self {
        Self {
            alpha: f64::INFINITY,
            gamma: f64::MIN_POSITIVE,
        }
    }
}

impl TruncationParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(gamma > 0.0) {
            return Err(Error::InvalidInput("truncation parameters must be positive".into()));
        }
        Ok(Self { alpha, gamma })
    }

    /// `α = log n`, `γ = 1/log n`.
    pub fn theory(n: usize) -> Self {
        let l = (n.max(3) as f64).ln();
        Self {
            alpha: l,
            gamma: 1.0 / l,
        }
    }
}

/// `ψ̃ = p̃'/p̃` on `{|p̃'| ≤ α, p̃ ≥ γ}`, zero elsewhere.
pub fn truncated_score(kde: &KdeModel, trunc: TruncationParams) -> impl Fn(f64) -> f64 + '_ {
    move |z| {
        let (p, dp) = kde.density_pair(z);
        if p >= trunc.gamma && dp.abs() <= trunc.alpha && p > 0.0 {
            dp / p
        } else {
            0.0
        }
    }
}

/// Decreasing score estimate `ψ̂`: the antitonic projection of `ψ̃ ∘ F̃⁻¹`
/// in `L²(du)`, mapped back through `F̃`.
///
/// The unit interval is cut into `grid_size − 1` equal cells. On a cell
/// where `ψ̃` is untruncated its average is the increment of
/// `J̃ = p̃ ∘ F̃⁻¹` over the cell width, otherwise the trapezoid rule is
/// used. The cell averages are projected by weighted PAVA, i.e. the
/// result is the right derivative of the least concave majorant of the
/// accumulated `J̃`. The returned score is piecewise linear with the
/// fitted cell levels at knots `F̃⁻¹` of the cell midpoints.
pub fn projected_score_estimate(kde: &KdeModel, trunc: TruncationParams, grid_size: usize) -> Result<MonotoneScore> {
    if grid_size < 64 {
        return Err(Error::InvalidInput("grid size must be at least 64".into()));
    }
    let cells = grid_size - 1;
    let width = 1.0 / cells as f64;
    // interior edges and midpoints interleaved: m_0, u_1, m_1, ..., u_{c-1}, m_{c-1}
    let us: Vec<f64> = (1..2 * cells).map(|k| k as f64 / (2 * cells) as f64).collect();
    let zs = kde.quantiles(&us);
    if let Some(k) = zs.iter().position(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!("density quantile failed at u = {}", us[k])));
    }
    let untruncated = trunc.alpha == f64::INFINITY && trunc.gamma <= f64::MIN_POSITIVE;
    // (p̃, ψ̃, inside S̃) at each cell edge; the ends of the unit interval
    // carry p̃ = 0 and belong to S̃ only without truncation
    let mut edges = Vec::with_capacity(cells + 1);
    edges.push((0.0, 0.0, untruncated));
    for j in 1..cells {
        let (p, dp) = kde.density_pair(zs[2 * j - 1]);
        let inside = p > 0.0 && p >= trunc.gamma && dp.abs() <= trunc.alpha;
        edges.push((p, if inside { dp / p } else { 0.0 }, inside));
    }
    edges.push((0.0, 0.0, untruncated));
    let averages: Vec<f64> = edges
        .windows(2)
        .map(|w| {
            let ((p0, s0, in0), (p1, s1, in1)) = (w[0], w[1]);
            if in0 && in1 {
                (p1 - p0) / width
            } else {
                0.5 * (s0 + s1)
            }
        })
        .collect();
    let fitted = pava_decreasing(&averages, &vec![1.0; cells])?;
    let mut knots = Vec::with_capacity(cells);
    let mut levels = Vec::with_capacity(cells);
    for (j, v) in fitted.into_iter().enumerate() {
        let z = zs[2 * j];
        if knots.last().is_some_and(|&last| z <= last) {
            continue;
        }
        knots.push(z);
        levels.push(v);
    }
    MonotoneScore::new(knots, levels, ScoreMode::PiecewiseLinear)
}

/// The odd part `(ψ(z) − ψ(−z))/2` of a decreasing score.
pub fn antisymmetrize(score: &MonotoneScore) -> Result<MonotoneScore> {
    let mut knots: Vec<f64> = score.knots().iter().flat_map(|&k| [k, -k]).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let odd = |z: f64| 0.5 * (score.eval(z) - score.eval(-z));
    let mut levels: Vec<f64> = match score.mode() {
        ScoreMode::PiecewiseLinear => knots.iter().map(|&z| odd(z)).collect(),
        ScoreMode::Step => (0..knots.len())
            .map(|j| {
                let mid = match knots.get(j + 1) {
                    Some(next) => 0.5 * (knots[j] + next),
                    None => knots[j] + 1.0,
                };
                odd(mid)
            })
            .collect(),
    };
    for j in 1..levels.len() {
        levels[j] = levels[j].min(levels[j - 1]);
    }
    match score.mode() {
        ScoreMode::PiecewiseLinear => MonotoneScore::new(knots, levels, ScoreMode::PiecewiseLinear),
        ScoreMode::Step => {
            let left = odd(knots[0] - 1.0).max(levels[0]);
            MonotoneScore::step_with_left_limit(knots, levels, left)
        }
    }
}

/// `n⁻¹ Σ {ψ(εᵢ)² + 2ψ'(εᵢ)}`.
pub fn empirical_score_matching_objective(score: &MonotoneScore, residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    residuals
        .iter()
        .map(|&e| {
            let v = score.eval(e);
            v * v + 2.0 * score.slope(e)
        })
        .sum::<f64>()
        / residuals.len() as f64
}

/// Settings for turning residuals into a score estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub truncation: TruncationParams,
    pub grid_size: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth: Bandwidth::Silverman,
            truncation: TruncationParams::default(),
            grid_size: 2049,
        }
    }
}

/// Kernel estimate followed by the antitonic projection.
pub fn estimate_score(residuals: &[f64], cfg: &ScoreConfig) -> Result<(MonotoneScore, KdeModel)> {
    let kde = KdeModel::new(residuals, cfg.kernel, cfg.bandwidth)?;
    let score = projected_score_estimate(&kde, cfg.truncation, cfg.grid_size)?;
    Ok((score, kde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::ReferenceDensity;
    use crate::special::norm_quantile;

    #[test]
    fn kde_examples() {
        let k = KdeModel::new(&[0.0, 1e-4], Kernel::Gaussian, Bandwidth::Fixed(1.0)).unwrap();
        assert!((k.pdf(0.0) - norm_pdf(0.0)).abs() < 1e-4);
        let k = KdeModel::new(&[-1.0, 1.0], Kernel::Gaussian, Bandwidth::Fixed(1.0)).unwrap();
        assert!((k.pdf(0.0) - norm_pdf(1.0)).abs() < 1e-15);
        assert!((k.cdf(1e6) - 1.0).abs() < 1e-12);
        assert!(KdeModel::new(&[2.0, 2.0, 2.0], Kernel::Gaussian, Bandwidth::Silverman).is_err());
    }

    #[test]
    fn kernels_integrate_to_one() {
        for kern in [Kernel::Gaussian, Kernel::Quartic, Kernel::Triweight] {
            let r = kern.radius();
            let mass = crate::quadrature::adaptive_simpson(|t| kern.density(t).0, -r, r, 1e-12, 1 << 16);
            assert!((mass - 1.0).abs() < 1e-9, "{kern:?}");
            assert!((kern.cdf(r) - 1.0).abs() < 1e-12 && kern.cdf(-r).abs() < 1e-12);
            let t = 0.3;
            let num = (kern.cdf(t + 1e-6) - kern.cdf(t - 1e-6)) / 2e-6;
            assert!((num - kern.density(t).0).abs() < 1e-8);
            let num = (kern.density(t + 1e-6).0 - kern.density(t - 1e-6).0) / 2e-6;
            assert!((num - kern.density(t).1).abs() < 1e-7);
        }
    }

    #[test]
    fn fast_quantiles_match_bisection() {
        for kern in [Kernel::Gaussian, Kernel::Triweight] {
            let x = ReferenceDensity::standard_cauchy().sample(400, 3);
            let k = KdeModel::new(&x, kern, Bandwidth::Silverman).unwrap();
            let us: Vec<f64> = (1..500).map(|i| i as f64 / 500.0).collect();
            let fast = k.quantiles(&us);
            for (u, z) in us.iter().zip(&fast) {
                assert!((k.cdf(*z) - u).abs() < 1e-9, "{kern:?} u={u} err={}", k.cdf(*z) - u);
            }
        }
    }

    #[test]
    fn truncation_examples() {
        let k = KdeModel::new(&[-1.0, -0.3, 0.3, 1.0], Kernel::Gaussian, Bandwidth::Fixed(0.5)).unwrap();
        let psi = truncated_score(&k, TruncationParams::new(f64::INFINITY, 1e6).unwrap());
        assert_eq!(psi(0.1), 0.0);
        let psi = truncated_score(&k, TruncationParams::default());
        assert!(psi(0.0).abs() < 1e-10);
        assert!(psi(0.5) < 0.0);
    }

    #[test]
    fn decreasing_input_is_reproduced() {
        // one Gaussian bump: ψ̃ = −z is already decreasing, so every cell
        // keeps its own average (φ(Φ⁻¹(u₁)) − φ(Φ⁻¹(u₀)))/Δu
        let k = KdeModel::new(&[-1e-9, 1e-9], Kernel::Gaussian, Bandwidth::Fixed(1.0)).unwrap();
        let g = 129;
        let s = projected_score_estimate(&k, TruncationParams::default(), g).unwrap();
        assert_eq!(s.knots().len(), g - 1);
        let cells = (g - 1) as f64;
        let phi_at = |u: f64| {
            if u <= 0.0 || u >= 1.0 {
                0.0
            } else {
                norm_pdf(norm_quantile(u))
            }
        };
        for (j, (&z, &l)) in s.knots().iter().zip(s.levels()).enumerate() {
            let (u0, u1) = (j as f64 / cells, (j + 1) as f64 / cells);
            assert!((z - norm_quantile(0.5 * (u0 + u1))).abs() < 1e-8, "knot {j}");
            assert!((l - (phi_at(u1) - phi_at(u0)) * cells).abs() < 1e-10, "level {j}");
        }
    }

    #[test]
    fn small_bandwidth_does_not_alias() {
        // spiky ψ̃ between separated bumps must be averaged, not sampled
        let e = ReferenceDensity::standard_cauchy().sample(20_000, 5);
        let cfg = ScoreConfig {
            bandwidth: Bandwidth::Fixed(0.03),
            ..ScoreConfig::default()
        };
        let (psi, _) = estimate_score(&e, &cfg).unwrap();
        let j = e.iter().map(|z| psi.eval(*z).powi(2)).sum::<f64>() / e.len() as f64;
        assert!((j - 0.4391).abs() < 0.05, "{j}");
    }

    #[test]
    fn antisymmetrize_examples() {
        let c = MonotoneScore::constant(2.0);
        let a = antisymmetrize(&c).unwrap();
        assert!(a.levels().iter().all(|&l| l == 0.0));
        let odd = MonotoneScore::new(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, -1.0], ScoreMode::PiecewiseLinear).unwrap();
        assert_eq!(antisymmetrize(&odd).unwrap(), odd);
        let step = MonotoneScore::step_with_left_limit(vec![-0.7, 1.3], vec![0.2, -1.0], 1.0).unwrap();
        let a = antisymmetrize(&step).unwrap();
        for z in [-3.0, -1.0, -0.5, 0.1, 0.9, 2.0] {
            assert!((a.eval(z) + a.eval(-z)).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn objective_examples() {
        assert_eq!(
            empirical_score_matching_objective(&MonotoneScore::constant(0.0), &[1.0, 2.0]),
            0.0
        );
        let lin = MonotoneScore::new(vec![-50.0, 50.0], vec![50.0, -50.0], ScoreMode::PiecewiseLinear).unwrap();
        let x = ReferenceDensity::standard_gaussian().sample(100_000, 1);
        let d = empirical_score_matching_objective(&lin, &x);
        assert!((d + 1.0).abs() < 0.03, "{d}");
    }

    #[test]
    fn silverman_rule() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let sd = (x.iter().map(|v| (v - 49.5f64).powi(2)).sum::<f64>() / 99.0).sqrt();
        let iqr = 74.25 - 24.75;
        let expect = 0.9 * sd.min(iqr / 1.34) * 100f64.powf(-0.2);
        assert!((silverman_bandwidth(&x).unwrap() - expect).abs() < 1e-12);
    }
}
