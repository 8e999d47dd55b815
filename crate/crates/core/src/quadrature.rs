//! Quadrature rules used by the density layer.

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Eight-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        s += w * (f(c - r * x) + f(c + r * x));
    }
    s * r
}

/// Composite Simpson rule on `[a, b]` with interval doubling until the
/// relative change drops below `rel_tol` or `max_intervals` is reached.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, max_intervals: usize) -> f64 {
    let mut n = 64usize;
    let mut h = (b - a) / n as f64;
    let ends = f(a) + f(b);
    let mut even = 0.0;
    let mut odd = 0.0;
    for i in 1..n {
        let v = f(a + i as f64 * h);
        if i % 2 == 0 {
            even += v;
        } else {
            odd += v;
        }
    }
    let mut prev = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    while n < max_intervals {
        n *= 2;
        h *= 0.5;
        even += odd;
        odd = 0.0;
        for i in (1..n).step_by(2) {
            odd += f(a + i as f64 * h);
        }
        let cur = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
        if (cur - prev).abs() <= rel_tol * cur.abs().max(f64::MIN_POSITIVE) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// Default Simpson integration of a function on the unit interval.
pub fn integrate_unit<F: Fn(f64) -> f64>(f: F) -> f64 {
    adaptive_simpson(f, 0.0, 1.0, 1e-8, 1 << 20)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = gauss_legendre(|x| x.powi(15) + 3.0 * x * x, -1.0, 2.0);
        let exact = (2f64.powi(16) - 1.0) / 16.0 + (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-10);
        let s = integrate_unit(|u| u * (1.0 - u));
        assert!((s - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_integrand_converges() {
        let s = integrate_unit(|u| (std::f64::consts::PI * u).sin());
        assert!((s - 2.0 / std::f64::consts::PI).abs() < 1e-9);
    }
}
