//! Log-sum-exp families `ρ(x) = Σ_m exp(<m, x> - β_m)` and the moments of the
//! tilted distribution `π_m(x) ∝ exp(<m, x> - β_m)`.
//!
//! With `u = (1/r) log ρ` the derivatives of `log ρ` are the cumulants of `π`:
//! gradient = mean, Hessian = covariance, and the third and fourth derivatives
//! are the third and fourth cumulant tensors. Everything here is evaluated
//! after subtracting the largest exponent.

use crate::sym2::Sym2;

/// A point set with log-weights and a scale `r`; `u = (1/r) log ρ`.
#[derive(Clone, Debug)]
pub struct GibbsFamily {
    points: Vec<[f64; 2]>,
    log_b: Vec<f64>,
    rank: f64,
}

/// Potential, gradient and Hessian at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KaehlerData {
    pub log_rho: f64,
    pub u: f64,
    pub grad: [f64; 2],
    pub hess: Sym2,
}

/// Central moments of `π` up to order four at a point.
///
/// Symmetric tensors are stored by the number of indices equal to the second
/// coordinate: `third[k]` is the central moment with `k` indices equal to 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogMoments {
    pub log_rho: f64,
    pub mean: [f64; 2],
    pub cov: Sym2,
    pub third: [f64; 4],
    pub fourth: [f64; 5],
}

impl GibbsFamily {
    /// `log_b[m]` is subtracted from the exponent of point `m`.
    pub fn new(points: Vec<[f64; 2]>, log_b: Vec<f64>, rank: f64) -> Self {
        assert_eq!(points.len(), log_b.len());
        assert!(!points.is_empty());
        Self { points, log_b, rank }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rank(&self) -> f64 {
        self.rank
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Fills `w` with unnormalized shifted weights and returns `(shift, Σ w)`.
    fn shifted(&self, x: [f64; 2], w: &mut [f64]) -> (f64, f64) {
        let mut shift = f64::NEG_INFINITY;
        for ((p, lb), e) in self.points.iter().zip(&self.log_b).zip(w.iter_mut()) {
            *e = p[0] * x[0] + p[1] * x[1] - lb;
            shift = shift.max(*e);
        }
        let mut total = 0.0;
        for e in w.iter_mut() {
            *e = (*e - shift).exp();
            total += *e;
        }
        (shift, total)
    }

    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        let mut w = vec![0.0; self.len()];
        let (shift, total) = self.shifted(x, &mut w);
        shift + total.ln()
    }

    /// Writes `π(x)` into `pi` and returns `log ρ(x)`.
    pub fn probabilities(&self, x: [f64; 2], pi: &mut [f64]) -> f64 {
        let (shift, total) = self.shifted(x, pi);
        let inv = 1.0 / total;
        for p in pi.iter_mut() {
            *p *= inv;
        }
        shift + total.ln()
    }

    pub fn kaehler_data(&self, x: [f64; 2]) -> KaehlerData {
        let mut pi = vec![0.0; self.len()];
        self.kaehler_data_with(x, &mut pi)
    }

    /// As [`kaehler_data`](Self::kaehler_data), reusing a scratch buffer of length `len()`.
    pub fn kaehler_data_with(&self, x: [f64; 2], pi: &mut [f64]) -> KaehlerData {
        let log_rho = self.probabilities(x, pi);
        let (mean, cov) = self.mean_cov(pi);
        let s = 1.0 / self.rank;
        KaehlerData { log_rho, u: log_rho * s, grad: [mean[0] * s, mean[1] * s], hess: cov * s }
    }

    fn mean_cov(&self, pi: &[f64]) -> ([f64; 2], Sym2) {
        let mut mean = [0.0; 2];
        for (p, &q) in self.points.iter().zip(pi) {
            mean[0] += q * p[0];
            mean[1] += q * p[1];
        }
        let mut c = Sym2::default();
        for (p, &q) in self.points.iter().zip(pi) {
            let (d0, d1) = (p[0] - mean[0], p[1] - mean[1]);
            c.xx += q * d0 * d0;
            c.xy += q * d0 * d1;
            c.yy += q * d1 * d1;
        }
        (mean, c)
    }

    pub fn moments(&self, x: [f64; 2]) -> LogMoments {
        let mut pi = vec![0.0; self.len()];
        self.moments_with(x, &mut pi)
    }

    pub fn moments_with(&self, x: [f64; 2], pi: &mut [f64]) -> LogMoments {
        let log_rho = self.probabilities(x, pi);
        let (mean, cov) = self.mean_cov(pi);
        let mut third = [0.0; 4];
        let mut fourth = [0.0; 5];
        for (p, &q) in self.points.iter().zip(pi.iter()) {
            let (a, b) = (p[0] - mean[0], p[1] - mean[1]);
            let (a2, b2) = (a * a, b * b);
            third[0] += q * a2 * a;
            third[1] += q * a2 * b;
            third[2] += q * a * b2;
            third[3] += q * b2 * b;
            fourth[0] += q * a2 * a2;
            fourth[1] += q * a2 * a * b;
            fourth[2] += q * a2 * b2;
            fourth[3] += q * a * b2 * b;
            fourth[4] += q * b2 * b2;
        }
        LogMoments { log_rho, mean, cov, third, fourth }
    }
}

fn entry(c: &Sym2, i: usize, j: usize) -> f64 {
    match i + j {
        0 => c.xx,
        1 => c.xy,
        _ => c.yy,
    }
}

impl LogMoments {
    /// Fourth cumulant `κ_ijkl`.
    pub fn cumulant4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let c = |a, b| entry(&self.cov, a, b);
        self.fourth[i + j + k + l] - c(i, j) * c(k, l) - c(i, k) * c(j, l) - c(i, l) * c(j, k)
    }

    pub fn cumulant3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.third[i + j + k]
    }

    /// Gradient and Hessian of `log det Cov` in `x`.
    ///
    /// `∂_k log det C = tr(C⁻¹ K_k)` and
    /// `∂_k∂_l log det C = tr(C⁻¹ K_kl) - tr(C⁻¹ K_k C⁻¹ K_l)`, where `K_k` and
    /// `K_kl` are slices of the third and fourth cumulants.
    pub fn log_det_derivatives(&self) -> ([f64; 2], Sym2) {
        let ci = self.cov.inverse();
        let inv = |a, b| entry(&ci, a, b);
        // A[k][i][j] = (C⁻¹ K_k)_ij
        let mut a = [[[0.0; 2]; 2]; 2];
        for (k, ak) in a.iter_mut().enumerate() {
            for (i, row) in ak.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (0..2).map(|s| inv(i, s) * self.cumulant3(s, j, k)).sum();
                }
            }
        }
        let grad = [a[0][0][0] + a[0][1][1], a[1][0][0] + a[1][1][1]];
        let mut h = [[0.0; 2]; 2];
        for k in 0..2 {
            for l in k..2 {
                let mut t = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        t += inv(i, j) * self.cumulant4(j, i, k, l);
                        t -= a[k][i][j] * a[l][j][i];
                    }
                }
                h[k][l] = t;
            }
        }
        (grad, Sym2::new(h[0][0], h[0][1], h[1][1]))
    }

    /// `σ = -(1/2) tr(H⁻¹ ∇² log det H)` for `H = Cov / r`; equals 1 exactly
    /// when `det H = exp(-u + affine)`.
    pub fn scalar_curvature(&self, rank: f64) -> f64 {
        let (_, r2) = self.log_det_derivatives();
        -0.5 * rank * self.cov.inverse().dot(&r2)
    }

    pub fn condition(&self) -> f64 {
        self.cov.condition()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family() -> GibbsFamily {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]];
        let lb = vec![0.1, -0.3, 0.2, 0.0, 1.1, 0.7];
        GibbsFamily::new(pts, lb, 2.0)
    }

    #[test]
    fn log_density_matches_direct_sum() {
        let f = family();
        let x = [0.3, -0.7];
        let direct: f64 =
            f.points.iter().zip(&f.log_b).map(|(p, b)| (p[0] * x[0] + p[1] * x[1] - b).exp()).sum();
        assert!((f.log_density(x) - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn far_points_do_not_overflow() {
        let f = family();
        let m = f.moments([800.0, 1.0]);
        assert!(m.log_rho.is_finite());
        assert!((m.mean[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let f = family();
        let x = [0.2, 0.4];
        let e = 1e-5;
        let k = f.kaehler_data(x);
        let up = |d: [f64; 2]| f.kaehler_data([x[0] + d[0], x[1] + d[1]]);
        let gx = (up([e, 0.0]).u - up([-e, 0.0]).u) / (2.0 * e);
        let hxy = (up([0.0, e]).grad[0] - up([0.0, -e]).grad[0]) / (2.0 * e);
        assert!((gx - k.grad[0]).abs() < 1e-9);
        assert!((hxy - k.hess.xy).abs() < 1e-9);
    }

    #[test]
    fn log_det_gradient_matches_finite_differences() {
        let f = family();
        let x = [-0.1, 0.25];
        let (g, _) = f.moments(x).log_det_derivatives();
        let e = 1e-5;
        let ld = |y: [f64; 2]| f.moments(y).cov.det().ln();
        let fd = [
            (ld([x[0] + e, x[1]]) - ld([x[0] - e, x[1]])) / (2.0 * e),
            (ld([x[0], x[1] + e]) - ld([x[0], x[1] - e])) / (2.0 * e),
        ];
        assert!((g[0] - fd[0]).abs() < 1e-8 && (g[1] - fd[1]).abs() < 1e-8);
    }

    #[test]
    fn gaussian_like_cumulants_vanish_for_two_points() {
        // Two points on a line: Bernoulli cumulants are known in closed form.
        let f = GibbsFamily::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![0.0; 3], 1.0);
        let m = f.moments([0.0, 0.0]);
        let p = 1.0 / 3.0;
        assert!((m.cov.xx - p * (1.0 - p)).abs() < 1e-15);
        assert!((m.cumulant3(0, 0, 0) - p * (1.0 - p) * (1.0 - 2.0 * p)).abs() < 1e-15);
        let k4 = p * (1.0 - p) * (1.0 - 6.0 * p * (1.0 - p));
        assert!((m.cumulant4(0, 0, 0, 0) - k4).abs() < 1e-15);
    }
}
