//! Damped Newton for `det D²w = e^{L(x) - εw - <c, ∇w>}` at the interior
//! nodes, with the boundary ring held fixed.
//!
//! The residual is taken in log form, `log det D²w + εw + <c, ∇w> - L`, which
//! keeps the far nodes (where the density is exponentially small) on the same
//! relative footing as the centre. The sparsity pattern and its symbolic LU
//! are built once per grid and reused by every factorization.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};

use super::grid::{Grid, GridPotential};
use crate::error::{Error, Result};

/// Stencil offsets in the order the Jacobian values are written.
const STENCIL: [(isize, isize); 9] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Sup-norm tolerance on `det D²w - rhs`.
    pub tol: f64,
    pub max_iters: usize,
    /// Hard limit on consecutive rejected trials within one Newton step.
    pub max_rejections: usize,
    /// Treat the drift term explicitly instead of through the Jacobian.
    pub lag_drift: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 40, max_rejections: 40, lag_drift: false }
    }
}

/// Treatment of the outer ring of nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    /// Ring values kept at those of the initial guess.
    #[default]
    Fixed,
    /// The deviation from the reference potential is copied outward onto the
    /// ring (zero normal derivative), the centre deviation is pinned, and the
    /// log right-hand side carries a free constant `κ` that absorbs the
    /// mismatch between the right-hand side mass and the gradient image.
    Free,
}

/// Right-hand side data: `log_base` holds `L` at every node.
#[derive(Clone, Debug)]
pub struct MaEquation {
    log_base: Vec<f64>,
    eps: f64,
    drift: [f64; 2],
}

impl MaEquation {
    pub fn new(grid: &Grid, log_base: Vec<f64>, eps: f64, drift: [f64; 2]) -> Result<Self> {
        if log_base.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: log_base.len() });
        }
        if grid.nodes().any(|(i, j)| grid.is_interior(i, j) && !log_base[grid.index(i, j)].is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidConfig(format!("ε must lie in [0, 1), got {eps}")));
        }
        if !(drift[0].is_finite() && drift[1].is_finite()) {
            return Err(Error::NonFinite("drift"));
        }
        Ok(Self { log_base, eps, drift })
    }

    /// `det D²w = f(x)` for a density that must be positive at interior nodes.
    pub fn from_density(grid: &Grid, density: &[f64]) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: density.len() });
        }
        for (i, j) in grid.nodes().filter(|&(i, j)| grid.is_interior(i, j)) {
            let f = density[grid.index(i, j)];
            if !f.is_finite() {
                return Err(Error::NonFinite("right-hand side"));
            }
            if f <= 0.0 {
                return Err(Error::Negative("right-hand side"));
            }
        }
        Self::new(grid, density.iter().map(|f| f.ln()).collect(), 0.0, [0.0, 0.0])
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn drift(&self) -> [f64; 2] {
        self.drift
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport {
    /// `max |det D²w - rhs|` before each step and at exit.
    pub residuals: Vec<f64>,
    /// Sup norm of the log residual at the same points.
    pub log_residuals: Vec<f64>,
    pub rejections: usize,
    /// Whether the last three residuals contract faster than linearly.
    pub superlinear: bool,
    /// The constant `κ` added to the log right-hand side; zero for a fixed ring.
    pub log_scale: f64,
}

impl NewtonReport {
    pub fn steps(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }
}

/// Newton solver with the sparsity pattern of one grid.
pub struct MaSolver {
    grid: Grid,
    boundary: Boundary,
    pattern: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
}

impl std::fmt::Debug for MaSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaSolver").field("grid", &self.grid).field("boundary", &self.boundary).finish_non_exhaustive()
    }
}

#[derive(Clone, Copy)]
enum Entry {
    Stencil(usize),
    Scale,
    Ring(f64),
    Pin,
}

fn unknowns(grid: &Grid, boundary: Boundary) -> usize {
    match boundary {
        Boundary::Fixed => (grid.n() - 2) * (grid.n() - 2),
        Boundary::Free => grid.len() + 1,
    }
}

fn centre(grid: &Grid) -> usize {
    grid.index(grid.n() / 2, grid.n() / 2)
}

/// The interior neighbour a ring node copies.
fn inward(grid: &Grid, i: usize, j: usize) -> usize {
    let n = grid.n();
    grid.index(i.clamp(1, n - 2), j.clamp(1, n - 2))
}

impl MaSolver {
    pub fn new(grid: Grid) -> Result<Self> {
        Self::with_boundary(grid, Boundary::Fixed)
    }

    pub fn with_boundary(grid: Grid, boundary: Boundary) -> Result<Self> {
        let m = unknowns(&grid, boundary);
        let mut pairs = Vec::with_capacity(10 * m);
        for_each_entry(&grid, boundary, |row, col, _| pairs.push(Pair { row, col }));
        let (pattern, argsort) = SymbolicSparseColMat::try_new_from_indices(m, m, &pairs)
            .map_err(|e| Error::Newton(format!("sparsity pattern: {e:?}")))?;
        let lu = SymbolicLu::try_new(pattern.as_ref()).map_err(|e| Error::Newton(format!("symbolic LU: {e:?}")))?;
        Ok(Self { grid, boundary, pattern, argsort, lu })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Log residual at every node; zero on the boundary ring.
    pub fn residual(&self, eq: &MaEquation, w: &GridPotential) -> Vec<f64> {
        self.evaluate(eq, w, 0.0, None).log
    }

    /// `max |det D²w - rhs|` over interior nodes.
    pub fn absolute_residual(&self, eq: &MaEquation, w: &GridPotential) -> f64 {
        self.evaluate(eq, w, 0.0, None).abs_sup
    }

    fn evaluate(&self, eq: &MaEquation, w: &GridPotential, scale: f64, frozen: Option<&[f64]>) -> Residual {
        let g = &self.grid;
        let n = g.n();
        let mut log = vec![0.0; g.len()];
        let (mut abs_sup, mut abs_sq) = (0.0f64, 0.0);
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let k = i * n + j;
                let det = w.hessian(i, j).det();
                let transport = match frozen {
                    Some(f) => f[k],
                    None => {
                        let d = w.gradient(i, j);
                        eq.drift[0] * d[0] + eq.drift[1] * d[1]
                    }
                };
                if det > 0.0 {
                    let r = det.ln() + eq.eps * w.at(i, j) + transport - eq.log_base[k] - scale;
                    log[k] = r;
                    let a = det * -(-r).exp_m1();
                    abs_sup = abs_sup.max(a.abs());
                    abs_sq += a * a;
                } else {
                    log[k] = f64::INFINITY;
                    abs_sup = f64::INFINITY;
                    abs_sq = f64::INFINITY;
                }
            }
        }
        let m = ((n - 2) * (n - 2)) as f64;
        let mut ring = Vec::new();
        if self.boundary == Boundary::Free {
            let phi = w.deviation();
            ring = vec![0.0; g.len()];
            for (i, j) in g.nodes().filter(|&(i, j)| !g.is_interior(i, j)) {
                let k = g.index(i, j);
                ring[k] = phi[k] - phi[inward(g, i, j)];
                abs_sup = abs_sup.max(ring[k].abs());
            }
        }
        Residual { abs_sup, abs_rms: (abs_sq / m).sqrt(), log_sup: sup_norm(&log), log_rms: rms(&log), log, ring }
    }

    fn transport(&self, drift: [f64; 2], w: &GridPotential) -> Vec<f64> {
        let g = &self.grid;
        let n = g.n();
        let mut out = vec![0.0; g.len()];
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let d = w.gradient(i, j);
                out[i * n + j] = drift[0] * d[0] + drift[1] * d[1];
            }
        }
        out
    }

    fn jacobian(&self, eq: &MaEquation, w: &GridPotential, drift: [f64; 2]) -> Result<(SparseColMat<usize, f64>, Vec<f64>)> {
        let g = &self.grid;
        let (n, h) = (g.n(), g.spacing());
        let mut values = Vec::with_capacity(10 * unknowns(g, self.boundary));
        let mut coeffs = [0.0; 9];
        let mut last = usize::MAX;
        let boundary = self.boundary;
        for_each_entry(g, boundary, |row, _, entry| {
            let v = match entry {
                Entry::Stencil(slot) => {
                    if row != last {
                        last = row;
                        let (i, j) = match boundary {
                            Boundary::Fixed => (row / (n - 2) + 1, row % (n - 2) + 1),
                            Boundary::Free => (row / n, row % n),
                        };
                        coeffs = g.stencil().weights(&w.hessian(i, j).inverse(), h);
                        let (gx, gy) = (drift[0] / (2.0 * h), drift[1] / (2.0 * h));
                        coeffs[1] -= gx;
                        coeffs[7] += gx;
                        coeffs[3] -= gy;
                        coeffs[5] += gy;
                        coeffs[4] += eq.eps;
                    }
                    coeffs[slot]
                }
                Entry::Scale => -1.0,
                Entry::Ring(v) => v,
                Entry::Pin => 1.0,
            };
            values.push(v);
        });
        let mat = SparseColMat::new_from_argsort(self.pattern.clone(), &self.argsort, &values)
            .map_err(|e| Error::Newton(format!("Jacobian assembly: {e:?}")))?;
        Ok((mat, values))
    }

    /// `b - J x` with `J` given by its values in entry order.
    fn linear_residual(&self, values: &[f64], x: &Col<f64>, b: &Col<f64>) -> Col<f64> {
        let mut r = b.clone();
        let mut it = values.iter();
        for_each_entry(&self.grid, self.boundary, |row, col, _| r[row] -= it.next().unwrap() * x[col]);
        r
    }

    /// Solves from `initial`. With a fixed ring the ring values of `initial`
    /// are kept; with a free ring `initial` should already satisfy the ring
    /// condition, which holds for the reference potential.
    ///
    /// Converged means `max |det D²w - rhs|` below `tol` and the log residual
    /// either below `tol` too or no longer halving, which is where rounding in
    /// the far field takes over.
    pub fn solve(&self, eq: &MaEquation, initial: &GridPotential, opts: &NewtonOptions) -> Result<(GridPotential, NewtonReport)> {
        let g = self.grid;
        if *initial.grid() != g {
            return Err(Error::InvalidConfig("initial guess lives on a different grid".into()));
        }
        if eq.log_base.len() != g.len() {
            return Err(Error::LengthMismatch { expected: g.len(), got: eq.log_base.len() });
        }
        if !initial.is_convex() {
            return Err(Error::Newton("initial guess is not discretely convex".into()));
        }
        let n = g.n();
        let m = unknowns(&g, self.boundary);
        let free = self.boundary == Boundary::Free;
        // Node carrying each unknown; `None` for κ.
        let node = |r: usize| match self.boundary {
            Boundary::Fixed => Some((r / (n - 2) + 1) * n + r % (n - 2) + 1),
            Boundary::Free => (r < g.len()).then_some(r),
        };
        let mut w = initial.clone();
        let mut scale = 0.0;
        let lag = opts.lag_drift && eq.drift != [0.0, 0.0];
        let jac_drift = if lag { [0.0, 0.0] } else { eq.drift };
        let mut frozen = None;
        let mut res = self.evaluate(eq, &w, scale, None);
        let mut report =
            NewtonReport { residuals: Vec::new(), log_residuals: Vec::new(), rejections: 0, superlinear: true, log_scale: 0.0 };
        let mut previous_log_rms = f64::INFINITY;
        for it in 0..=opts.max_iters {
            // A lagged drift is refreshed once per Newton step, so the residual
            // tested here is always the exact one.
            if lag {
                frozen = Some(self.transport(eq.drift, &w));
                res = self.evaluate(eq, &w, scale, frozen.as_deref());
            }
            report.residuals.push(res.abs_sup);
            report.log_residuals.push(res.log_sup);
            report.log_scale = scale;
            let polishing = res.abs_sup < opts.tol;
            if polishing && (res.log_sup < opts.tol || res.log_rms > 0.5 * previous_log_rms) {
                report.superlinear = superlinear_tail(&report.residuals);
                return Ok((w, report));
            }
            if it == opts.max_iters {
                break;
            }
            let (jac, values) = self.jacobian(eq, &w, jac_drift)?;
            let lu = Lu::try_new_with_symbolic(self.lu.clone(), jac.as_ref())
                .map_err(|e| Error::Newton(format!("numeric LU: {e:?}")))?;
            // The pin row has zero residual: the centre deviation never moves.
            let rhs = Col::<f64>::from_fn(m, |r| match node(r) {
                Some(k) if free => -res.log[k] - res.ring[k],
                Some(k) => -res.log[k],
                None => 0.0,
            });
            // The far rows carry weights near h⁻² e^{R}; a few rounds of
            // iterative refinement restore the accuracy the pivoting loses.
            let mut delta = lu.solve(&rhs);
            let mut last = f64::INFINITY;
            for _ in 0..4 {
                let r = self.linear_residual(&values, &delta, &rhs);
                let size = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if size == 0.0 || size > 0.5 * last {
                    break;
                }
                last = size;
                delta += lu.solve(&r);
            }
            let mut alpha = 1.0;
            let mut rejected = 0;
            loop {
                let mut trial = w.clone();
                let mut trial_scale = scale;
                {
                    let v = trial.deviation_mut();
                    for r in 0..m {
                        match node(r) {
                            Some(k) => v[k] += alpha * delta[r],
                            None => trial_scale += alpha * delta[r],
                        }
                    }
                }
                if trial.is_convex() {
                    let tres = self.evaluate(eq, &trial, trial_scale, frozen.as_deref());
                    let better = if polishing {
                        tres.abs_sup < opts.tol && tres.log_rms < res.log_rms
                    } else {
                        tres.abs_rms <= (1.0 - 1e-4 * alpha) * res.abs_rms || tres.log_rms <= (1.0 - 1e-4 * alpha) * res.log_rms
                    };
                    if better {
                        previous_log_rms = res.log_rms;
                        w = trial;
                        scale = trial_scale;
                        res = tres;
                        break;
                    }
                }
                if polishing {
                    // Rounding floor reached with the absolute residual already met.
                    report.superlinear = superlinear_tail(&report.residuals);
                    return Ok((w, report));
                }
                report.rejections += 1;
                rejected += 1;
                if rejected >= opts.max_rejections {
                    return Err(Error::Newton(format!(
                        "{rejected} rejected trials (convexity or residual increase) at residual {:.3e}",
                        res.abs_sup
                    )));
                }
                alpha *= 0.5;
            }
        }
        Err(Error::Newton(format!(
            "residual stagnated at {:.3e} after {} iterations",
            report.final_residual(),
            opts.max_iters
        )))
    }
}

struct Residual {
    log: Vec<f64>,
    /// `φ_b - φ_in` on the ring for a free boundary, empty otherwise.
    ring: Vec<f64>,
    abs_sup: f64,
    abs_rms: f64,
    log_sup: f64,
    log_rms: f64,
}

/// Visits the Jacobian entries row by row as `(row, column, entry)`.
fn for_each_entry(grid: &Grid, boundary: Boundary, mut f: impl FnMut(usize, usize, Entry)) {
    let n = grid.n();
    match boundary {
        Boundary::Fixed => {
            let unknown = |i: usize, j: usize| (i - 1) * (n - 2) + (j - 1);
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    for (slot, &(di, dj)) in STENCIL.iter().enumerate() {
                        let (p, q) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                        if grid.is_interior(p, q) {
                            f(unknown(i, j), unknown(p, q), Entry::Stencil(slot));
                        }
                    }
                }
            }
        }
        Boundary::Free => {
            for (i, j) in grid.nodes() {
                let row = grid.index(i, j);
                if grid.is_interior(i, j) {
                    for (slot, &(di, dj)) in STENCIL.iter().enumerate() {
                        let (p, q) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                        f(row, grid.index(p, q), Entry::Stencil(slot));
                    }
                    f(row, grid.len(), Entry::Scale);
                } else {
                    f(row, row, Entry::Ring(1.0));
                    f(row, inward(grid, i, j), Entry::Ring(-1.0));
                }
            }
            f(grid.len(), centre(grid), Entry::Pin);
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Residuals below this are rounding noise and take no part in the ratio test.
const ROUNDING_FLOOR: f64 = 1e-12;

/// Ratio test on the last three residuals above the rounding floor,
/// `e₃/e₂ < e₂/e₁`, with a pass when fewer than three remain.
fn superlinear_tail(r: &[f64]) -> bool {
    let end = r.iter().position(|&e| e < ROUNDING_FLOOR).map_or(r.len(), |p| p + 1);
    let r = &r[..end];
    if r.len() < 3 {
        return true;
    }
    let k = r.len();
    let (e1, e2, e3) = (r[k - 3], r[k - 2], r[k - 1]);
    e3 == 0.0 || e3 / e2 < e2 / e1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toric::FanoPolygon;

    #[test]
    fn exact_input_takes_no_steps() {
        let g = Grid::new(4.0, 0.1).unwrap();
        let w0 = GridPotential::reference(g, &FanoPolygon::hexagon());
        let base: Vec<f64> = w0.log_det_field().iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect();
        let eq = MaEquation::new(&g, base, 0.0, [0.0, 0.0]).unwrap();
        let solver = MaSolver::new(g).unwrap();
        let (w, report) = solver.solve(&eq, &w0, &NewtonOptions::default()).unwrap();
        assert_eq!(report.steps(), 0);
        assert_eq!(w, w0);
    }

    #[test]
    fn free_ring_absorbs_a_constant() {
        let g = Grid::new(4.0, 0.1).unwrap();
        let w0 = GridPotential::reference(g, &FanoPolygon::hexagon());
        let base: Vec<f64> = w0.log_det_field().iter().map(|v| if v.is_nan() { 0.0 } else { v + 0.3 }).collect();
        let eq = MaEquation::new(&g, base, 0.0, [0.0, 0.0]).unwrap();
        let solver = MaSolver::with_boundary(g, Boundary::Free).unwrap();
        let (w, report) = solver.solve(&eq, &w0, &NewtonOptions::default()).unwrap();
        assert!((report.log_scale + 0.3).abs() < 1e-12, "{}", report.log_scale);
        assert!(w.sup_distance(&w0, f64::INFINITY).unwrap() < 1e-12);
        // A fixed ring has no constant to spare and must bend the potential.
        let (bent, _) = MaSolver::new(g).unwrap().solve(&eq, &w0, &NewtonOptions::default()).unwrap();
        assert!(bent.sup_distance(&w0, f64::INFINITY).unwrap() > 1e-3);
    }

    #[test]
    fn negative_density_is_rejected() {
        let g = Grid::new(1.0, 0.25).unwrap();
        let mut f = vec![1.0; g.len()];
        f[g.index(3, 4)] = -0.5;
        assert!(matches!(MaEquation::from_density(&g, &f), Err(Error::Negative(_))));
        f[g.index(3, 4)] = 0.0;
        assert!(matches!(MaEquation::from_density(&g, &f), Err(Error::Negative(_))));
    }

    #[test]
    fn recovers_a_perturbed_solution() {
        let g = Grid::new(3.0, 0.1).unwrap();
        let target = GridPotential::from_fn(g, |x| {
            0.5 * (x[0] * x[0] + x[1] * x[1]) + 0.1 * (x[0] - 0.5 * x[1]).cos() + 0.05 * x[0] * x[1]
        })
        .unwrap();
        let (eps, drift) = (0.3, [0.2, -0.1]);
        let solver = MaSolver::new(g).unwrap();
        // Build L so that `target` solves the full equation.
        let zero = MaEquation::new(&g, vec![0.0; g.len()], eps, drift).unwrap();
        let base = solver.residual(&zero, &target);
        let eq = MaEquation::new(&g, base, eps, drift).unwrap();
        let bump = |x: [f64; 2]| 0.5 * (x[0] * std::f64::consts::PI / 6.0).cos() * (x[1] * std::f64::consts::PI / 6.0).cos();
        let init = target.clone().perturbed(bump).unwrap();
        for lag in [false, true] {
            let opts = NewtonOptions { lag_drift: lag, tol: 1e-11, ..Default::default() };
            let (w, report) = solver.solve(&eq, &init, &opts).unwrap();
            assert!(report.final_residual() < 1e-11);
            let err = w.sup_distance(&target, f64::INFINITY).unwrap();
            assert!(err < 1e-9, "lag {lag}: {err}");
            if !lag {
                assert!(report.superlinear, "{:?}", report.residuals);
            }
        }
    }
}
