//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use antitonic::ReferenceDensity;

/// `ŷᵢ = min_{j ≤ i} max_{k ≥ i} avg_w(y_j..y_k)`.
pub fn pava_minmax(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    let m = ys.len();
    let mut sw = vec![0.0; m + 1];
    let mut swy = vec![0.0; m + 1];
    for i in 0..m {
        sw[i + 1] = sw[i] + ws[i];
        swy[i + 1] = swy[i] + ws[i] * ys[i];
    }
    let avg = |j: usize, k: usize| (swy[k + 1] - swy[j]) / (sw[k + 1] - sw[j]);
    // best[j][i] = max_{k ≥ i} avg(j, k), filled right to left
    let mut out = vec![f64::INFINITY; m];
    for j in 0..m {
        let mut best = f64::NEG_INFINITY;
        let mut running = vec![0.0; m];
        for k in (j..m).rev() {
            best = best.max(avg(j, k));
            running[k] = best;
        }
        for i in j..m {
            out[i] = out[i].min(running[i]);
        }
    }
    out
}

/// Upper hull by gift wrapping, then linear interpolation.
pub fn lcm_gift_wrap(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = xs.len();
    let mut hull = vec![0];
    let mut cur = 0;
    while cur < m - 1 {
        let mut next = cur + 1;
        let mut best = (ys[next] - ys[cur]) / (xs[next] - xs[cur]);
        for k in cur + 2..m {
            let s = (ys[k] - ys[cur]) / (xs[k] - xs[cur]);
            if s >= best {
                best = s;
                next = k;
            }
        }
        hull.push(next);
        cur = next;
    }
    let mut out = vec![0.0; m];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            let t = (xs[i] - xs[a]) / (xs[b] - xs[a]);
            out[i] = ys[a] + t * (ys[b] - ys[a]);
        }
    }
    out
}

/// Exhaustive weighted antitonic fit over all contiguous partitions.
pub fn exhaustive_projection(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    let m = ys.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (m - 1)) {
        let mut fit = Vec::with_capacity(m);
        let mut start = 0;
        let mut means = Vec::new();
        for i in 0..m {
            if i == m - 1 || mask & (1 << i) != 0 {
                let (s, w) = (start..=i).fold((0.0, 0.0), |(s, w), k| (s + ws[k] * ys[k], w + ws[k]));
                means.push(s / w);
                fit.extend(std::iter::repeat_n(s / w, i + 1 - start));
                start = i + 1;
            }
        }
        if means.windows(2).any(|p| p[1] > p[0]) {
            continue;
        }
        let sse: f64 = (0..m).map(|k| ws[k] * (ys[k] - fit[k]).powi(2)).sum();
        if sse < best.0 {
            best = (sse, fit);
        }
    }
    best.1
}

/// Every reference family the library ships, with representative parameters.
pub fn reference_densities() -> Vec<ReferenceDensity> {
    [
        "gaussian",
        "cauchy",
        "laplace",
        "logistic",
        "t2",
        "pareto:3,2",
        "laplace_mix:0.3,1.5",
        "scale_mix",
        "loc_mix",
        "infer_mix",
        "smooth_uniform",
        "smooth_exp",
        "prop1:0.2",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect()
}
