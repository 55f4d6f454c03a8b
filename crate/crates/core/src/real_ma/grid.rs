//! Nodal potentials on the square `[-R, R]²` and their central-difference
//! derivatives.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::pairwise_sum;
use crate::sym2::Sym2;
use crate::toric::FanoPolygon;

pub const DEFAULT_GRID_RADIUS: f64 = 14.0;
pub const DEFAULT_GRID_SPACING: f64 = 0.05;
/// Half-width of the interior region as a fraction of the radius.
pub const INTERIOR_FRACTION: f64 = 0.6;

/// Mixed-derivative variant of the central-difference Hessian.
///
/// `NinePoint` averages both diagonals. The seven-point variants use one
/// diagonal, `w_xy = ±(D_d - D_x - D_y)/2` with `d = (1, ±1)`, and are exact
/// (rank one) on functions of `<e, x>` for `e` along either axis or the other
/// diagonal, which is how potentials look far out along a facet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stencil {
    #[default]
    NinePoint,
    /// Uses the `(1, 1)` diagonal.
    SevenPlus,
    /// Uses the `(1, -1)` diagonal.
    SevenMinus,
}

impl Stencil {
    /// A seven-point variant whose blind diagonal is not an edge direction of Δ.
    pub fn for_polygon(polygon: &FanoPolygon) -> Self {
        let v = polygon.vertices();
        let edges: Vec<[i64; 2]> = (0..v.len()).map(|i| {
            let (p, q) = (v[i], v[(i + 1) % v.len()]);
            [q[0] - p[0], q[1] - p[1]]
        }).collect();
        if !edges.iter().any(|d| d[0] == d[1]) {
            Stencil::SevenPlus
        } else if !edges.iter().any(|d| d[0] == -d[1]) {
            Stencil::SevenMinus
        } else {
            Stencil::NinePoint
        }
    }

    /// Hessian from the nine values `v(di, dj)` around a node.
    pub(crate) fn hessian(self, v: impl Fn(isize, isize) -> f64, h: f64) -> Sym2 {
        let inv = 1.0 / (h * h);
        let c = v(0, 0);
        let dx = v(1, 0) - 2.0 * c + v(-1, 0);
        let dy = v(0, 1) - 2.0 * c + v(0, -1);
        let xy = match self {
            Stencil::NinePoint => 0.25 * (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)),
            Stencil::SevenPlus => 0.5 * (v(1, 1) - 2.0 * c + v(-1, -1) - dx - dy),
            Stencil::SevenMinus => 0.5 * (dx + dy - (v(1, -1) - 2.0 * c + v(-1, 1))),
        };
        Sym2::new(dx * inv, xy * inv, dy * inv)
    }

    /// Derivative of `tr(A D²w)` with respect to the nine nodal values, in
    /// row-major order of the offsets `(-1, -1) .. (1, 1)`.
    pub(crate) fn weights(self, a: &Sym2, h: f64) -> [f64; 9] {
        let inv = 1.0 / (h * h);
        let (xx, yy, m) = (a.xx * inv, a.yy * inv, 2.0 * a.xy * inv);
        // Offsets: 0 (-1,-1), 1 (-1,0), 2 (-1,1), 3 (0,-1), 4 (0,0), 5 (0,1), 6 (1,-1), 7 (1,0), 8 (1,1).
        let mut w = [0.0, xx, 0.0, yy, -2.0 * (xx + yy), yy, 0.0, xx, 0.0];
        let xy: [f64; 9] = match self {
            Stencil::NinePoint => [0.25, 0.0, -0.25, 0.0, 0.0, 0.0, -0.25, 0.0, 0.25],
            Stencil::SevenPlus => [0.5, -0.5, 0.0, -0.5, 1.0, -0.5, 0.0, -0.5, 0.5],
            Stencil::SevenMinus => [0.0, 0.5, -0.5, 0.5, -1.0, 0.5, -0.5, 0.5, 0.0],
        };
        for (wk, c) in w.iter_mut().zip(xy) {
            *wk += m * c;
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    radius: f64,
    spacing: f64,
    stencil: Stencil,
}

impl Grid {
    /// `2R / h` must be an integer; the node count per side is `2R / h + 1`.
    pub fn new(radius: f64, spacing: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid radius {radius} and spacing {spacing} must be positive")));
        }
        let cells = (2.0 * radius / spacing).round();
        if (cells * spacing - 2.0 * radius).abs() > 1e-9 * radius {
            return Err(Error::InvalidConfig(format!("spacing {spacing} does not divide the width {}", 2.0 * radius)));
        }
        if cells < 6.0 {
            return Err(Error::InvalidConfig(format!("grid needs at least 7 nodes per side, got {}", cells + 1.0)));
        }
        Ok(Self { n: cells as usize + 1, radius, spacing, stencil: Stencil::NinePoint })
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    /// Nodes per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.spacing
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(i), self.coord(j)]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Whether node `(i, j)` is at least `margin` nodes away from the edge.
    pub fn has_margin(&self, i: usize, j: usize, margin: usize) -> bool {
        i >= margin && j >= margin && i + margin < self.n && j + margin < self.n
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        self.has_margin(i, j, 1)
    }

    /// Whether node `(i, j)` lies in `|x|_∞ ≤ half_width`.
    pub fn in_box(&self, i: usize, j: usize, half_width: f64) -> bool {
        let [a, b] = self.point(i, j);
        a.abs().max(b.abs()) <= half_width * (1.0 + 1e-12)
    }

    /// Half-width of the default interior region.
    pub fn interior_half_width(&self) -> f64 {
        INTERIOR_FRACTION * self.radius
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).map(move |j| (i, j)))
    }
}

/// Summary of `σ` over a set of nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaSummary {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl SigmaSummary {
    pub fn max_deviation(&self) -> f64 {
        (self.max - 1.0).abs().max((1.0 - self.min).abs())
    }
}

/// The reference potential and its exact-stencil derivatives, computed
/// without the cancellation that plagues differences of large nodal values.
#[derive(Debug, PartialEq)]
pub(crate) struct BaseField {
    w: Vec<f64>,
    grad: Vec<[f64; 2]>,
    hess: Vec<Sym2>,
}

impl BaseField {
    fn new(grid: &Grid, polygon: &FanoPolygon) -> Self {
        let verts: Vec<[f64; 2]> = polygon.boundary_points().iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
        let h = grid.spacing();
        let mut w = Vec::with_capacity(grid.len());
        let mut grad = Vec::with_capacity(grid.len());
        let mut hess = Vec::with_capacity(grid.len());
        let mut a = vec![0.0; verts.len()];
        for (i, j) in grid.nodes() {
            let x = grid.point(i, j);
            let top = verts
                .iter()
                .copied()
                .max_by(|p, q| (p[0] * x[0] + p[1] * x[1]).total_cmp(&(q[0] * x[0] + q[1] * x[1])))
                .unwrap();
            for (ak, p) in a.iter_mut().zip(&verts) {
                *ak = (p[0] - top[0]) * x[0] + (p[1] - top[1]) * x[1];
            }
            // q(d) = log Σ exp(<p - top, x + h d>); w₀ = <top, x + h d> + q(d)
            // and the linear part drops out of every second difference.
            let q = |di: f64, dj: f64| -> f64 {
                verts
                    .iter()
                    .zip(&a)
                    .map(|(p, ak)| (ak + h * ((p[0] - top[0]) * di + (p[1] - top[1]) * dj)).exp())
                    .sum::<f64>()
                    .ln()
            };
            let q0 = q(0.0, 0.0);
            w.push(top[0] * x[0] + top[1] * x[1] + q0);
            let (qe, qw, qn, qs) = (q(1.0, 0.0), q(-1.0, 0.0), q(0.0, 1.0), q(0.0, -1.0));
            grad.push([top[0] + (qe - qw) / (2.0 * h), top[1] + (qn - qs) / (2.0 * h)]);
            hess.push(grid.stencil.hessian(|di, dj| q(di as f64, dj as f64), h));
        }
        Self { w, grad, hess }
    }
}

/// A convex potential sampled at the nodes of a grid, boundary ring included.
///
/// Potentials derived from the reference are stored as `w₀ + Φ`; only `Φ` is
/// differenced numerically.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPotential {
    grid: Grid,
    base: Option<Arc<BaseField>>,
    phi: Vec<f64>,
}

impl GridPotential {
    pub fn new(grid: Grid, w: Vec<f64>) -> Result<Self> {
        if w.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: w.len() });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid potential"));
        }
        Ok(Self { grid, base: None, phi: w })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(|(i, j)| f(grid.point(i, j))).collect())
    }

    /// `w₀ = log Σ_p e^{<p, x>}` over the boundary lattice points of Δ.
    ///
    /// For the hexagon these are exactly the vertices. When an edge carries
    /// interior lattice points the vertex sum decays too fast along that edge
    /// and `w - w₀` would be unbounded for the solution.
    pub fn reference(grid: Grid, polygon: &FanoPolygon) -> Self {
        Self { grid, base: Some(Arc::new(BaseField::new(&grid, polygon))), phi: vec![0.0; grid.len()] }
    }

    /// Adds `f` to the nodal values.
    pub fn perturbed(mut self, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        for (i, j) in self.grid.nodes() {
            self.phi[self.grid.index(i, j)] += f(self.grid.point(i, j));
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid potential"));
        }
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Nodal values `w`.
    pub fn values(&self) -> Vec<f64> {
        match &self.base {
            Some(b) => b.w.iter().zip(&self.phi).map(|(a, p)| a + p).collect(),
            None => self.phi.clone(),
        }
    }

    /// Deviation from the reference, or the values themselves without one.
    pub fn deviation(&self) -> &[f64] {
        &self.phi
    }

    pub(crate) fn deviation_mut(&mut self) -> &mut [f64] {
        &mut self.phi
    }

    fn same_base(&self, other: &Self) -> bool {
        match (&self.base, &other.base) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            (None, None) => true,
            _ => false,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        let k = self.grid.index(i, j);
        self.base.as_ref().map_or(0.0, |b| b.w[k]) + self.phi[k]
    }

    /// 9-point central-difference Hessian at an interior node.
    pub fn hessian(&self, i: usize, j: usize) -> Sym2 {
        let d = hessian_of(&self.phi, &self.grid, i, j);
        match &self.base {
            Some(b) => b.hess[self.grid.index(i, j)] + d,
            None => d,
        }
    }

    /// Central-difference gradient at an interior node.
    pub fn gradient(&self, i: usize, j: usize) -> [f64; 2] {
        let n = self.grid.n;
        let k = i * n + j;
        let h2 = 2.0 * self.grid.spacing;
        let d = [(self.phi[k + n] - self.phi[k - n]) / h2, (self.phi[k + 1] - self.phi[k - 1]) / h2];
        match &self.base {
            Some(b) => [b.grad[k][0] + d[0], b.grad[k][1] + d[1]],
            None => d,
        }
    }

    pub fn is_convex(&self) -> bool {
        let n = self.grid.n;
        (1..n - 1).all(|i| (1..n - 1).all(|j| self.hessian(i, j).is_positive_definite()))
    }

    /// `h² Σ e^{-w}` over all nodes.
    pub fn exp_neg_integral(&self) -> f64 {
        let terms: Vec<f64> = self.values().iter().map(|v| (-v).exp()).collect();
        pairwise_sum(&terms) * self.grid.spacing * self.grid.spacing
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { grid: self.grid, base: self.base.clone(), phi: self.phi.iter().map(|v| v + c).collect() }
    }

    /// `max |w - v|` over the nodes in `|x|_∞ ≤ half_width`.
    pub fn sup_distance(&self, other: &Self, half_width: f64) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidConfig("potentials live on different grids".into()));
        }
        let g = self.grid;
        let exact = self.same_base(other);
        Ok(g.nodes()
            .filter(|&(i, j)| g.in_box(i, j, half_width))
            .map(|(i, j)| {
                let k = g.index(i, j);
                if exact { (self.phi[k] - other.phi[k]).abs() } else { (self.at(i, j) - other.at(i, j)).abs() }
            })
            .fold(0.0, f64::max))
    }

    /// `log det D²w` at interior nodes, NaN on the boundary ring.
    pub fn log_det_field(&self) -> Vec<f64> {
        let g = self.grid;
        g.nodes()
            .map(|(i, j)| if g.is_interior(i, j) { self.hessian(i, j).det().ln() } else { f64::NAN })
            .collect()
    }

    /// `σ = -(1/2) tr(H⁻¹ D² log det H)` with `H = D²w`, at nodes two or more
    /// away from the edge; NaN elsewhere.
    pub fn sigma_field(&self) -> Vec<f64> {
        let g = self.grid;
        let ld = self.log_det_field();
        g.nodes()
            .map(|(i, j)| {
                if !g.has_margin(i, j, 2) {
                    return f64::NAN;
                }
                let d2 = hessian_of(&ld, &g, i, j);
                -0.5 * self.hessian(i, j).inverse().dot(&d2)
            })
            .collect()
    }

    /// Statistics of `σ` over `|x|_∞ ≤ half_width`.
    pub fn sigma_summary(&self, half_width: f64) -> SigmaSummary {
        summarize(&self.grid, &self.sigma_field(), half_width)
    }

    /// `x1,x2,w` rows.
    pub fn to_csv(&self) -> String {
        field_csv(&self.grid, "w", &self.values())
    }
}

pub(crate) fn summarize(grid: &Grid, sigma: &[f64], half_width: f64) -> SigmaSummary {
    let vals: Vec<f64> = grid
        .nodes()
        .filter(|&(i, j)| grid.in_box(i, j, half_width))
        .map(|(i, j)| sigma[grid.index(i, j)])
        .filter(|v| !v.is_nan())
        .collect();
    SigmaSummary {
        avg: pairwise_sum(&vals) / vals.len() as f64,
        min: vals.iter().copied().fold(f64::INFINITY, f64::min),
        max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        nodes: vals.len(),
    }
}

/// `x1,x2,<name>` rows, skipping NaN entries.
pub fn field_csv(grid: &Grid, name: &str, values: &[f64]) -> String {
    let mut s = format!("x1,x2,{name}\n");
    for (i, j) in grid.nodes() {
        let v = values[grid.index(i, j)];
        if !v.is_nan() {
            let [a, b] = grid.point(i, j);
            writeln!(s, "{a:e},{b:e},{v:e}").unwrap();
        }
    }
    s
}

pub(crate) fn hessian_of(w: &[f64], grid: &Grid, i: usize, j: usize) -> Sym2 {
    let k = (i * grid.n + j) as isize;
    let n = grid.n as isize;
    grid.stencil.hessian(|di, dj| w[(k + di * n + dj) as usize], grid.spacing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = Grid::new(DEFAULT_GRID_RADIUS, DEFAULT_GRID_SPACING).unwrap();
        assert_eq!(g.n(), 561);
        assert!((g.coord(560) - 14.0).abs() < 1e-12);
        assert!(Grid::new(1.0, 0.3).is_err());
        assert!(Grid::new(1.0, 0.0).is_err());
    }

    #[test]
    fn quadratic_derivatives_are_exact() {
        let g = Grid::new(2.0, 0.25).unwrap();
        let w = GridPotential::from_fn(g, |x| 1.5 * x[0] * x[0] + 0.5 * x[0] * x[1] + x[1] * x[1] - x[0]).unwrap();
        let hs = w.hessian(5, 9);
        assert!((hs.xx - 3.0).abs() < 1e-12 && (hs.xy - 0.5).abs() < 1e-12 && (hs.yy - 2.0).abs() < 1e-12);
        let [a, b] = g.point(5, 9);
        let grad = w.gradient(5, 9);
        assert!((grad[0] - (3.0 * a + 0.5 * b - 1.0)).abs() < 1e-12);
        assert!(w.is_convex());
    }

    #[test]
    fn split_reference_matches_plain_differences() {
        let g = Grid::new(2.0, 0.1).unwrap();
        let hex = FanoPolygon::hexagon();
        let split = GridPotential::reference(g, &hex);
        let family = hex.reference_family();
        let plain = GridPotential::from_fn(g, |x| family.log_density(x)).unwrap();
        for (i, j) in [(3, 7), (20, 20), (35, 12)] {
            assert!((split.at(i, j) - plain.at(i, j)).abs() < 1e-14);
            let (a, b) = (split.hessian(i, j), plain.hessian(i, j));
            assert!((a.xx - b.xx).abs() < 1e-10 && (a.xy - b.xy).abs() < 1e-10 && (a.yy - b.yy).abs() < 1e-10);
            let (ga, gb) = (split.gradient(i, j), plain.gradient(i, j));
            assert!((ga[0] - gb[0]).abs() < 1e-12 && (ga[1] - gb[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn seven_point_stencil_keeps_the_far_field_convex() {
        let hex = FanoPolygon::hexagon();
        assert_eq!(Stencil::for_polygon(&hex), Stencil::SevenPlus);
        let g = Grid::new(14.0, 0.05).unwrap();
        assert!(!GridPotential::reference(g, &hex).is_convex());
        assert!(GridPotential::reference(g.with_stencil(Stencil::SevenPlus), &hex).is_convex());
    }

    #[test]
    fn stencil_weights_differentiate_the_hessian() {
        let g = Grid::new(1.0, 0.25).unwrap();
        let a = Sym2::new(0.7, -0.2, 1.3);
        for st in [Stencil::NinePoint, Stencil::SevenPlus, Stencil::SevenMinus] {
            let w = st.weights(&a, g.spacing());
            for (slot, (di, dj)) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)].into_iter().enumerate() {
                let hs = st.hessian(|p, q| if (p, q) == (di, dj) { 1.0 } else { 0.0 }, g.spacing());
                assert!((a.dot(&hs) - w[slot]).abs() < 1e-12, "{st:?} slot {slot}");
            }
            let quad = st.hessian(|p, q| { let (x, y) = (p as f64 * 0.25, q as f64 * 0.25); x * x - 3.0 * x * y + 2.0 * y * y }, 0.25);
            assert!((quad.xx - 2.0).abs() < 1e-12 && (quad.xy + 3.0).abs() < 1e-12 && (quad.yy - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_sigma_converges_at_second_order() {
        let hex = FanoPolygon::hexagon();
        let family = hex.reference_family();
        let errors: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let g = Grid::new(3.0, h).unwrap();
                let s = GridPotential::reference(g, &hex).sigma_field();
                [[0.0, 0.0], [0.3, -0.5], [-0.7, 0.2]]
                    .iter()
                    .map(|x| {
                        let (i, j) = (((x[0] + 3.0) / h).round() as usize, ((x[1] + 3.0) / h).round() as usize);
                        (s[g.index(i, j)] - family.moments(g.point(i, j)).scalar_curvature(1.0)).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errors[1] < 1e-2 && errors[0] > 3.0 * errors[1], "{errors:?}");
    }
}
