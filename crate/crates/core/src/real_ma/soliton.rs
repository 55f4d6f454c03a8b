//! Coefficients `c` of the soliton vector field: the critical point of the
//! strictly convex `log Z(c)`, `Z(c) = ∫_Δ e^{<c, y>} dy`.

use crate::error::{Error, Result};
use crate::sym2::Sym2;
use crate::toric::FanoPolygon;

const GAUSS_ORDER: usize = 24;
pub const SOLITON_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SolitonData {
    pub c: [f64; 2],
    /// `log(Z(c) / Area)`, absorbed into the per-step normalization of the
    /// real iteration.
    pub c_x: f64,
    /// `Z(c)`, the mass `∫ e^{-w} dx` of every normalized iterate.
    pub partition: f64,
    /// `max_i |∫ y_i e^{<c, y>} dy|` at the returned `c`.
    pub residual: f64,
    pub iterations: usize,
}

/// Nodes and weights of the Gauss-Legendre rule on `[0, 1]`.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    let n = order as f64;
    for k in 0..order {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=order {
                let m = m as f64;
                let p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

/// Quadrature points and weights on Δ: a vertex fan of triangles, each pulled
/// back from the unit square by the collapsed map.
pub fn polygon_rule(polygon: &FanoPolygon, order: usize) -> Vec<([f64; 2], f64)> {
    let gl = gauss_legendre(order);
    let v: Vec<[f64; 2]> = polygon.vertices().iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
    let mut rule = Vec::new();
    for t in 1..v.len() - 1 {
        let (a, b, c) = (v[0], v[t], v[t + 1]);
        let e1 = [b[0] - a[0], b[1] - a[1]];
        let e2 = [c[0] - b[0], c[1] - b[1]];
        let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        for &(s, ws) in &gl {
            for &(t, wt) in &gl {
                let y = [a[0] + s * e1[0] + s * t * e2[0], a[1] + s * e1[1] + s * t * e2[1]];
                rule.push((y, ws * wt * s * jac));
            }
        }
    }
    rule
}

/// `(Z, ∫ y e^{<c,y>}, ∫ y yᵀ e^{<c,y>})`.
fn moments(rule: &[([f64; 2], f64)], c: [f64; 2]) -> (f64, [f64; 2], Sym2) {
    let mut z = 0.0;
    let mut m1 = [0.0; 2];
    let mut m2 = Sym2::default();
    for &(y, w) in rule {
        let e = w * (c[0] * y[0] + c[1] * y[1]).exp();
        z += e;
        m1[0] += e * y[0];
        m1[1] += e * y[1];
        m2.xx += e * y[0] * y[0];
        m2.xy += e * y[0] * y[1];
        m2.yy += e * y[1] * y[1];
    }
    (z, m1, m2)
}

pub fn soliton_coefficients(polygon: &FanoPolygon) -> Result<SolitonData> {
    let rule = polygon_rule(polygon, GAUSS_ORDER);
    let mut c = [0.0; 2];
    for it in 0..60 {
        let (z, m1, m2) = moments(&rule, c);
        let residual = m1[0].abs().max(m1[1].abs());
        if residual < SOLITON_TOL {
            return Ok(SolitonData {
                c,
                c_x: (z / polygon.area()).ln(),
                partition: z,
                residual,
                iterations: it,
            });
        }
        // Newton on log Z: gradient g = m1/z, Hessian = m2/z - g gᵀ.
        let g = [m1[0] / z, m1[1] / z];
        let hess = Sym2::new(m2.xx / z - g[0] * g[0], m2.xy / z - g[0] * g[1], m2.yy / z - g[1] * g[1]);
        if !hess.is_positive_definite() {
            return Err(Error::Newton("soliton Hessian lost definiteness".into()));
        }
        let step = hess.inverse().apply(g);
        let f0 = z.ln();
        let mut alpha = 1.0;
        loop {
            let trial = [c[0] - alpha * step[0], c[1] - alpha * step[1]];
            let (zt, _, _) = moments(&rule, trial);
            if zt.ln() <= f0 + 1e-14 || alpha < 1e-6 {
                c = trial;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::Newton("soliton coefficients did not converge in 60 iterations".into()))
}
