//! Shape-constrained primitives: least concave majorants, pool adjacent
//! violators, decreasing score functions and their convex losses.

use crate::error::{invalid, Result};

/// A function given by values at increasing knots, interpolated linearly
/// and extended by constants.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return invalid("grid function needs at least two knots and matching values");
        }
        check_increasing(&knots)?;
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("grid function values must be finite");
        }
        Ok(Self { knots, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let m = k.len();
        if x <= k[0] {
            return self.values[0];
        }
        if x >= k[m - 1] {
            return self.values[m - 1];
        }
        let j = k.partition_point(|&t| t <= x) - 1;
        let w = (x - k[j]) / (k[j + 1] - k[j]);
        self.values[j] + w * (self.values[j + 1] - self.values[j])
    }
}

fn check_increasing(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return invalid("abscissae must be finite");
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("abscissae must be strictly increasing");
    }
    Ok(())
}

/// How a [`MonotoneScore`] is evaluated between knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Right-continuous step function: `levels[j]` on `[knots[j], knots[j+1])`.
    Step,
    /// Linear interpolation of `levels` between knots.
    PiecewiseLinear,
}

/// A non-increasing score function on the real line.
///
/// Outside the knot range the score is constant. In step mode the value
/// below the first knot is `left_limit`, which may exceed `levels[0]`
/// (a jump at the first knot).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneScore {
    knots: Vec<f64>,
    levels: Vec<f64>,
    mode: ScoreMode,
    left_limit: f64,
}

impl MonotoneScore {
    pub fn new(knots: Vec<f64>, levels: Vec<f64>, mode: ScoreMode) -> Result<Self> {
        let left = *levels.first().unwrap_or(&0.0);
        Self::with_left_limit(knots, levels, mode, left)
    }

    /// Step score whose value below the first knot is `left_limit`.
    pub fn step_with_left_limit(knots: Vec<f64>, levels: Vec<f64>, left_limit: f64) -> Result<Self> {
        Self::with_left_limit(knots, levels, ScoreMode::Step, left_limit)
    }

    fn with_left_limit(knots: Vec<f64>, levels: Vec<f64>, mode: ScoreMode, left_limit: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != levels.len() {
            return invalid("score needs at least one knot and one level per knot");
        }
        check_increasing(&knots)?;
        if levels.iter().any(|v| !v.is_finite()) || !left_limit.is_finite() {
            return invalid("score levels must be finite");
        }
        if levels.windows(2).any(|w| w[1] > w[0]) {
            return invalid("score levels must be non-increasing");
        }
        if mode == ScoreMode::PiecewiseLinear && left_limit != levels[0] {
            return invalid("a piecewise-linear score is continuous at its first knot");
        }
        if left_limit < levels[0] {
            return invalid("left limit must not be below the first level");
        }
        Ok(Self {
            knots,
            levels,
            mode,
            left_limit,
        })
    }

    /// The constant function `c`.
    pub fn constant(c: f64) -> Self {
        Self {
            knots: vec![0.0],
            levels: vec![c],
            mode: ScoreMode::Step,
            left_limit: c,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn mode(&self) -> ScoreMode {
        self.mode
    }

    pub fn left_limit(&self) -> f64 {
        self.left_limit
    }

    pub fn right_limit(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    pub fn eval(&self, z: f64) -> f64 {
        let k = &self.knots;
        let m = k.len();
        match self.mode {
            ScoreMode::Step => {
                if z < k[0] {
                    self.left_limit
                } else {
                    self.levels[k.partition_point(|&t| t <= z) - 1]
                }
            }
            ScoreMode::PiecewiseLinear => {
                if z <= k[0] {
                    return self.levels[0];
                }
                if z >= k[m - 1] {
                    return self.levels[m - 1];
                }
                let j = k.partition_point(|&t| t <= z) - 1;
                let w = (z - k[j]) / (k[j + 1] - k[j]);
                self.levels[j] + w * (self.levels[j + 1] - self.levels[j])
            }
        }
    }

    /// Derivative of the score; at a knot the slope of the interval to its
    /// left is used. Zero in step mode and outside the knot range.
    pub fn slope(&self, z: f64) -> f64 {
        if self.mode == ScoreMode::Step {
            return 0.0;
        }
        let j = self.knots.partition_point(|&t| t < z);
        if j == 0 || j == self.knots.len() {
            0.0
        } else {
            self.interval_slope(j - 1)
        }
    }

    fn interval_slope(&self, j: usize) -> f64 {
        (self.levels[j + 1] - self.levels[j]) / (self.knots[j + 1] - self.knots[j])
    }

    /// Jumps of a step score at its knots (all non-positive).
    pub fn jumps(&self) -> Vec<f64> {
        let mut prev = self.left_limit;
        self.levels
            .iter()
            .map(|&l| {
                let j = l - prev;
                prev = l;
                j
            })
            .collect()
    }

    /// Largest absolute change of the score across a knot or interval.
    pub fn max_jump(&self) -> f64 {
        let mut prev = self.left_limit;
        let mut best = 0.0f64;
        for &l in &self.levels {
            best = best.max(prev - l);
            prev = l;
        }
        best
    }

    /// The score `z ↦ a·ψ(a z + b)` for `a > 0`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) {
            return invalid("affine scale must be positive");
        }
        let knots = self.knots.iter().map(|k| (k - b) / a).collect();
        let levels = self.levels.iter().map(|l| a * l).collect();
        Self::with_left_limit(knots, levels, self.mode, a * self.left_limit)
    }

    /// Continuous version of a step score: linear interpolation between the
    /// midpoints of its finite steps.
    pub fn to_piecewise_linear(&self) -> Self {
        if self.mode == ScoreMode::PiecewiseLinear || self.knots.len() < 2 {
            let mut s = self.clone();
            s.mode = ScoreMode::PiecewiseLinear;
            s.left_limit = s.levels[0];
            return s;
        }
        let knots: Vec<f64> = self.knots.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let levels = self.levels[..self.levels.len() - 1].to_vec();
        let (knots, levels) = dedup_knots(knots, levels);
        Self {
            left_limit: levels[0],
            knots,
            levels,
            mode: ScoreMode::PiecewiseLinear,
        }
    }
}

fn dedup_knots(knots: Vec<f64>, levels: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut k = Vec::with_capacity(knots.len());
    let mut l = Vec::with_capacity(levels.len());
    for (x, y) in knots.into_iter().zip(levels) {
        if k.last().is_some_and(|&p: &f64| x <= p) {
            continue;
        }
        k.push(x);
        l.push(y);
    }
    (k, l)
}

/// Least concave majorant of a piecewise-linear function on a grid.
#[derive(Debug, Clone)]
pub struct LcmResult {
    pub majorant: GridFunction,
    /// Slope of the majorant to the right of each knot; the last knot
    /// repeats the final slope.
    pub right_derivative: Vec<f64>,
    pub touch_set: Vec<bool>,
}

/// Least concave majorant of the linear interpolant of `(xs, ys)`, by an
/// upper-hull scan in O(m).
pub fn lcm(xs: &[f64], ys: &[f64]) -> Result<LcmResult> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return invalid("lcm needs at least two points with matching lengths");
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return invalid("lcm input contains NaN");
    }
    check_increasing(xs)?;
    if ys.iter().any(|y| !y.is_finite()) {
        return invalid("lcm ordinates must be finite");
    }
    let hull = upper_hull(xs, ys);
    let m = xs.len();
    let mut values = vec![0.0; m];
    let mut slopes = vec![0.0; m];
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let s = (ys[b] - ys[a]) / (xs[b] - xs[a]);
        values[a] = ys[a];
        for i in a..b {
            slopes[i] = s;
            if i > a {
                values[i] = ys[a] + s * (xs[i] - xs[a]);
            }
        }
    }
    values[m - 1] = ys[m - 1];
    slopes[m - 1] = slopes[m - 2];
    for i in 1..m {
        if slopes[i] > slopes[i - 1] {
            slopes[i] = slopes[i - 1];
        }
    }
    let scale = ys.iter().fold(0.0f64, |a, y| a.max(y.abs())).max(1.0);
    let touch_set = values
        .iter()
        .zip(ys)
        .map(|(v, y)| (v - y).abs() <= 1e-12 * scale)
        .collect();
    Ok(LcmResult {
        majorant: GridFunction {
            knots: xs.to_vec(),
            values,
        },
        right_derivative: slopes,
        touch_set,
    })
}

fn upper_hull(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Weighted least-squares projection of `ys` onto non-increasing sequences.
pub fn pava_decreasing(ys: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if ys.len() != weights.len() {
        return invalid("values and weights differ in length");
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return invalid("weights must be positive and finite");
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return invalid("values must be finite");
    }
    // Each block: (weighted sum, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(weights) {
        blocks.push((w * y, w, 1));
        while blocks.len() >= 2 {
            let (s1, w1, _) = blocks[blocks.len() - 1];
            let (s0, w0, _) = blocks[blocks.len() - 2];
            if s0 / w0 < s1 / w1 {
                let last = blocks.pop().unwrap();
                let prev = blocks.last_mut().unwrap();
                prev.0 += last.0;
                prev.1 += last.1;
                prev.2 += last.2;
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(ys.len());
    for (s, w, len) in blocks {
        out.extend(std::iter::repeat_n(s / w, len));
    }
    Ok(out)
}

/// Antitonic least-squares fit of weighted points `(x, y, w)`, returned as a
/// right-continuous step score with one knot per distinct `x`.
pub fn antitonic_project(points: &[(f64, f64, f64)]) -> Result<MonotoneScore> {
    if points.is_empty() {
        return invalid("antitonic projection of an empty set");
    }
    if points.iter().any(|p| p.0.is_nan()) {
        return invalid("abscissae must not be NaN");
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (x, y, w) in pts {
        if !(w > 0.0) {
            return invalid("weights must be positive");
        }
        if xs.last() == Some(&x) {
            let k = ys.len() - 1;
            let tw = ws[k] + w;
            ys[k] = (ys[k] * ws[k] + y * w) / tw;
            ws[k] = tw;
        } else {
            xs.push(x);
            ys.push(y);
            ws.push(w);
        }
    }
    let fitted = pava_decreasing(&ys, &ws)?;
    MonotoneScore::new(xs, fitted, ScoreMode::Step)
}

/// Value, first and second derivative of a convex loss.
pub trait Loss: Sync {
    fn eval3(&self, z: f64) -> (f64, f64, f64);

    fn value(&self, z: f64) -> f64 {
        self.eval3(z).0
    }

    fn derivative(&self, z: f64) -> f64 {
        self.eval3(z).1
    }

    fn second_derivative(&self, z: f64) -> f64 {
        self.eval3(z).2
    }
}

/// `ℓ(z) = z²/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl Loss for SquaredLoss {
    fn eval3(&self, z: f64) -> (f64, f64, f64) {
        (0.5 * z * z, z, 1.0)
    }
}

/// Huber loss with threshold `k`.
#[derive(Debug, Clone, Copy)]
pub struct HuberLoss {
    pub k: f64,
}

impl Loss for HuberLoss {
    fn eval3(&self, z: f64) -> (f64, f64, f64) {
        let k = self.k;
        if z.abs() <= k {
            (0.5 * z * z, z, 1.0)
        } else {
            (k * z.abs() - 0.5 * k * k, k * z.signum(), 0.0)
        }
    }
}

/// Negative antiderivative `ℓ(z) = −∫_anchor^z ψ` of a decreasing score.
#[derive(Debug, Clone)]
pub struct ConvexLoss {
    score: MonotoneScore,
    cumulative: Vec<f64>,
    offset: f64,
}

/// Builds the convex loss `ℓ` with `ℓ(anchor) = 0` and `ℓ' = −ψ`.
pub fn negative_antiderivative(score: &MonotoneScore, anchor: f64) -> ConvexLoss {
    let k = score.knots();
    let l = score.levels();
    let mut cumulative = vec![0.0; k.len()];
    for j in 1..k.len() {
        let dx = k[j] - k[j - 1];
        let piece = match score.mode() {
            ScoreMode::Step => l[j - 1] * dx,
            ScoreMode::PiecewiseLinear => 0.5 * (l[j - 1] + l[j]) * dx,
        };
        cumulative[j] = cumulative[j - 1] + piece;
    }
    let mut loss = ConvexLoss {
        score: score.clone(),
        cumulative,
        offset: 0.0,
    };
    loss.offset = loss.antiderivative(anchor);
    loss
}

impl ConvexLoss {
    pub fn score(&self) -> &MonotoneScore {
        &self.score
    }

    /// `∫_{k0}^z ψ` together with `ψ(z)` and `ψ'(z)`.
    fn locate(&self, z: f64) -> (f64, f64, f64) {
        let s = &self.score;
        let k = s.knots();
        let l = s.levels();
        let m = k.len();
        if z < k[0] {
            let left = match s.mode() {
                ScoreMode::Step => s.left_limit(),
                ScoreMode::PiecewiseLinear => l[0],
            };
            return (left * (z - k[0]), left, 0.0);
        }
        if z >= k[m - 1] {
            return (self.cumulative[m - 1] + l[m - 1] * (z - k[m - 1]), l[m - 1], 0.0);
        }
        let j = k.partition_point(|&t| t <= z) - 1;
        let dz = z - k[j];
        match s.mode() {
            ScoreMode::Step => (self.cumulative[j] + l[j] * dz, l[j], 0.0),
            ScoreMode::PiecewiseLinear => {
                let slope = (l[j + 1] - l[j]) / (k[j + 1] - k[j]);
                let psi = l[j] + slope * dz;
                (self.cumulative[j] + 0.5 * (l[j] + psi) * dz, psi, slope)
            }
        }
    }

    fn antiderivative(&self, z: f64) -> f64 {
        self.locate(z).0
    }
}

impl Loss for ConvexLoss {
    fn eval3(&self, z: f64) -> (f64, f64, f64) {
        let (a, psi, slope) = self.locate(z);
        (self.offset - a, -psi, -slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcm_small_examples() {
        let r = lcm(&[0.0, 0.5, 1.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.majorant.values(), &[0.0, 1.0, 0.0]);
        assert_eq!(r.right_derivative, vec![2.0, -2.0, -2.0]);
        assert!(r.touch_set.iter().all(|&t| t));
        let r = lcm(&[0.0, 0.5, 1.0], &[0.0, -1.0, 0.0]).unwrap();
        assert_eq!(r.majorant.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(r.right_derivative, vec![0.0, 0.0, 0.0]);
        assert_eq!(r.touch_set, vec![true, false, true]);
    }

    #[test]
    fn lcm_rejects_bad_input() {
        assert!(lcm(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(lcm(&[0.0, 1.0], &[f64::NAN, 2.0]).is_err());
        assert!(lcm(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn pava_examples() {
        let w = [1.0; 3];
        assert_eq!(pava_decreasing(&[3.0, 2.0, 1.0], &w).unwrap(), vec![3.0, 2.0, 1.0]);
        assert_eq!(pava_decreasing(&[1.0, 2.0], &[1.0, 1.0]).unwrap(), vec![1.5, 1.5]);
        assert!(pava_decreasing(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let s = antitonic_project(&[(0.0, 1.0, 1.0), (1.0, 0.0, 1.0)]).unwrap();
        assert_eq!(s.levels(), &[1.0, 0.0]);
        let s = antitonic_project(&[(1.0, 1.0, 1.0), (0.0, 0.0, 1.0)]).unwrap();
        assert_eq!(s.levels(), &[0.5, 0.5]);
        let s = antitonic_project(&[(0.0, 1.0, 1.0), (0.0, 3.0, 3.0)]).unwrap();
        assert_eq!(s.levels(), &[2.5]);
        assert!(antitonic_project(&[]).is_err());
    }

    #[test]
    fn step_score_is_right_continuous() {
        let s = MonotoneScore::step_with_left_limit(vec![-1.0, 1.0], vec![0.0, -2.0], 2.0).unwrap();
        assert_eq!(s.eval(-1.5), 2.0);
        assert_eq!(s.eval(-1.0), 0.0);
        assert_eq!(s.eval(0.99), 0.0);
        assert_eq!(s.eval(1.0), -2.0);
        assert_eq!(s.jumps(), vec![-2.0, -2.0]);
        assert!(MonotoneScore::new(vec![0.0, 1.0], vec![0.0, 1.0], ScoreMode::Step).is_err());
    }

    #[test]
    fn linear_score_slopes_break_ties_leftward() {
        let s = MonotoneScore::new(vec![0.0, 1.0, 3.0], vec![0.0, -1.0, -2.0], ScoreMode::PiecewiseLinear).unwrap();
        assert_eq!(s.slope(1.0), -1.0);
        assert_eq!(s.slope(1.5), -0.5);
        assert_eq!(s.slope(0.0), 0.0);
        assert_eq!(s.slope(3.5), 0.0);
        assert_eq!(s.eval(2.0), -1.5);
    }

    #[test]
    fn antiderivative_of_constant_and_identity() {
        let c = MonotoneScore::constant(0.7);
        let l = negative_antiderivative(&c, 0.0);
        for z in [-3.0, 0.0, 2.5] {
            assert!((l.value(z) + 0.7 * z).abs() < 1e-14);
        }
        let s = MonotoneScore::new(vec![-10.0, 10.0], vec![10.0, -10.0], ScoreMode::PiecewiseLinear).unwrap();
        let l = negative_antiderivative(&s, 0.0);
        for z in [-9.5, -2.0, 0.0, 0.3, 7.0] {
            let (v, d, h) = l.eval3(z);
            assert!((v - 0.5 * z * z).abs() < 1e-12);
            assert!((d - z).abs() < 1e-12);
            assert!((h - 1.0).abs() < 1e-12);
        }
        // linear continuation beyond the knots
        assert!((l.value(12.0) - (50.0 + 10.0 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn huber_matches_pl_antiderivative() {
        let k = 1.3;
        let s = MonotoneScore::new(vec![-k, k], vec![k, -k], ScoreMode::PiecewiseLinear).unwrap();
        let l = negative_antiderivative(&s, 0.0);
        let h = HuberLoss { k };
        for z in [-4.0, -1.3, -0.2, 0.9, 5.0] {
            assert!((l.value(z) - h.value(z)).abs() < 1e-12);
            assert!((l.derivative(z) - h.derivative(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_transform_and_linearisation() {
        let s = MonotoneScore::step_with_left_limit(vec![0.0], vec![-1.0], 1.0).unwrap();
        let t = s.affine(2.0, 1.0).unwrap();
        assert_eq!(t.knots(), &[-0.5]);
        assert_eq!(t.eval(-1.0), 2.0);
        assert_eq!(t.eval(0.0), -2.0);
        let step = MonotoneScore::new(vec![0.0, 1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0, 0.0], ScoreMode::Step).unwrap();
        let pl = step.to_piecewise_linear();
        assert_eq!(pl.knots(), &[0.5, 1.5, 2.5]);
        assert_eq!(pl.eval(1.0), 2.5);
    }
}
