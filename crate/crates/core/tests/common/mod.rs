//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::sync::Arc;

use kforge::{FanoPolygon, MetricWeights, SectionBasis, Sym2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Degree-5 seven-point rule on a triangle: barycentric points and weights as
/// fractions of the area.
pub fn radon() -> Vec<([f64; 3], f64)> {
    let s = 15f64.sqrt();
    let (a1, b1, w1) = ((6.0 - s) / 21.0, (9.0 + 2.0 * s) / 21.0, (155.0 - s) / 1200.0);
    let (a2, b2, w2) = ((6.0 + s) / 21.0, (9.0 - 2.0 * s) / 21.0, (155.0 + s) / 1200.0);
    let mut out = vec![([1.0 / 3.0; 3], 9.0 / 40.0)];
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        out.extend([([b, a, a], w), ([a, b, a], w), ([a, a, b], w)]);
    }
    out
}

/// Fan from the centroid, every triangle cut into `n²` similar pieces.
pub fn brute_rule(polygon: &FanoPolygon, n: usize) -> Vec<([f64; 2], f64)> {
    let v: Vec<[f64; 2]> = polygon.vertices().iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
    let k = v.len() as f64;
    let g = [v.iter().map(|p| p[0]).sum::<f64>() / k, v.iter().map(|p| p[1]).sum::<f64>() / k];
    let radon = radon();
    let mut rule = Vec::new();
    let mut push = |p: [[f64; 2]; 3]| {
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0])).abs();
        for &(l, w) in &radon {
            let y = [0, 1].map(|c| l[0] * p[0][c] + l[1] * p[1][c] + l[2] * p[2][c]);
            rule.push((y, w * area));
        }
    };
    for t in 0..v.len() {
        let (a, b) = (v[t], v[(t + 1) % v.len()]);
        let node = |i: usize, j: usize| {
            let (s, r) = (i as f64 / n as f64, j as f64 / n as f64);
            [0, 1].map(|c| g[c] + s * (a[c] - g[c]) + r * (b[c] - g[c]))
        };
        for i in 0..n {
            for j in 0..n - i {
                push([node(i, j), node(i + 1, j), node(i, j + 1)]);
                if i + j + 1 < n {
                    push([node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
                }
            }
        }
    }
    rule
}

/// Gradient and Hessian of `log Z(c)`.
pub fn log_z_derivatives(rule: &[([f64; 2], f64)], c: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (mut z, mut m1, mut m2) = (0.0, [0.0; 2], [[0.0; 2]; 2]);
    for &(y, w) in rule {
        let e = w * (c[0] * y[0] + c[1] * y[1]).exp();
        z += e;
        for i in 0..2 {
            m1[i] += e * y[i];
            for j in 0..2 {
                m2[i][j] += e * y[i] * y[j];
            }
        }
    }
    let g = [m1[0] / z, m1[1] / z];
    let h = [0, 1].map(|i| [0, 1].map(|j| m2[i][j] / z - g[i] * g[j]));
    (g, h)
}

pub fn brute_soliton(polygon: &FanoPolygon) -> [f64; 2] {
    let rule = brute_rule(polygon, 40);
    let mut c = [0.0; 2];
    for _ in 0..50 {
        let (g, h) = log_z_derivatives(&rule, c);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let step = [(h[1][1] * g[0] - h[0][1] * g[1]) / det, (h[0][0] * g[1] - h[1][0] * g[0]) / det];
        c = [c[0] - step[0], c[1] - step[1]];
        if step[0].abs().max(step[1].abs()) < 1e-14 {
            break;
        }
    }
    c
}

/// Orbit weights `exp(U(-spread, spread))`.
pub fn random_weights(basis: Arc<SectionBasis>, rng: &mut ChaCha8Rng, spread: f64) -> MetricWeights {
    let b = (0..basis.n_orbits()).map(|_| rng.random_range(-spread..spread).exp()).collect();
    MetricWeights::from_orbit_weights(basis, b).unwrap()
}

/// Relative Frobenius error of `∇² log det H` against Richardson-extrapolated
/// central differences of `log det H` with step `h`.
pub fn log_det_hessian_error(w: &MetricWeights, x: [f64; 2], h: f64) -> f64 {
    let f = |dx: f64, dy: f64| w.kaehler_data([x[0] + dx, x[1] + dy]).hess.det().ln();
    let f0 = f(0.0, 0.0);
    let second = |h: f64| {
        Sym2::new(
            (f(h, 0.0) - 2.0 * f0 + f(-h, 0.0)) / (h * h),
            (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h),
            (f(0.0, h) - 2.0 * f0 + f(0.0, -h)) / (h * h),
        )
    };
    // The O(h²) terms cancel.
    let fd = (second(h) * 4.0 - second(2.0 * h)) * (1.0 / 3.0);
    let exact = w.hess_log_det(x);
    let diff = exact - fd;
    diff.dot(&diff).sqrt() / exact.dot(&exact).sqrt()
}
