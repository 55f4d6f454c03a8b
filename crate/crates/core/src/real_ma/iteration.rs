//! The inverse-Ricci iteration and its Aubin and soliton variants in real
//! coordinates:
//!
//! `det D²w_j = g · exp(-cst - (1-ε) w_{j-1} - ε w_j - <c, ∇w_j>)`
//!
//! with `cst = log(∫ e^{-w_{j-1}} / C₀)` and each solution shifted so that
//! `∫ e^{-w_j} = C₀ = Z(c)`. For the Ricci iteration `g ≡ 1`.

use std::fmt::Write as _;

use faer::prelude::*;

use super::grid::{Grid, GridPotential, SigmaSummary, Stencil, DEFAULT_GRID_RADIUS, DEFAULT_GRID_SPACING};
use super::newton::{Boundary, MaEquation, MaSolver, NewtonOptions};
use super::soliton::{soliton_coefficients, SolitonData};
use crate::error::{Error, Result};
use crate::toric::FanoPolygon;

#[derive(Clone, Debug, PartialEq)]
pub struct RealMaConfig {
    pub radius: f64,
    pub spacing: f64,
    pub eps: f64,
    pub steps: usize,
    pub newton: NewtonOptions,
    /// Soliton coefficients; computed from the polygon when absent.
    pub drift: Option<[f64; 2]>,
    /// Half-width of the region used for σ statistics; `0.6 R` when absent.
    pub interior: Option<f64>,
    /// Hessian stencil; chosen from the polygon's edge directions when absent.
    pub stencil: Option<Stencil>,
    pub boundary: Boundary,
    pub keep_history: bool,
}

impl Default for RealMaConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_GRID_RADIUS,
            spacing: DEFAULT_GRID_SPACING,
            eps: 0.0,
            steps: 30,
            newton: NewtonOptions::default(),
            drift: None,
            interior: None,
            stencil: None,
            boundary: Boundary::Free,
            keep_history: false,
        }
    }
}

impl RealMaConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.radius, self.spacing)
    }

    pub fn interior_half_width(&self) -> f64 {
        self.interior.unwrap_or(0.6 * self.radius)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::InvalidConfig(format!("ε must lie in [0, 1), got {}", self.eps)));
        }
        if !(self.newton.tol > 0.0) {
            return Err(Error::InvalidConfig("Newton tolerance must be positive".into()));
        }
        if let Some(h) = self.interior {
            if !(h > 0.0 && h < self.radius) {
                return Err(Error::InvalidConfig(format!("interior half-width {h} outside (0, R)")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealMaStep {
    pub step: usize,
    /// `max |w_j - w_{j-1}|` over all nodes.
    pub increment: f64,
    pub sigma: SigmaSummary,
    pub newton_steps: usize,
    pub newton_residual: f64,
    pub superlinear: bool,
    pub cst: f64,
    /// `κ` from a free-boundary solve: the right-hand side actually solved is
    /// `e^κ` times the nominal one.
    pub scale: f64,
    /// Constant added after the solve to restore the mass.
    pub shift: f64,
    /// `∫ e^{-w_j}` after the shift.
    pub mass: f64,
    /// Largest violation of the facet inequalities by `∇w_j`.
    pub gradient_excess: f64,
    /// Best fit of the increment by a constant plus an infinitesimal
    /// translation, over the interior region.
    pub translation: TranslationFit,
}

/// `w_j - w_{j-1} ≈ constant + <shift, ∇w_j>` in the least-squares sense.
///
/// Translations `w(x) ↦ w(x + a)` map solutions to solutions, so a truncated
/// domain without the central symmetry lets the iterates slide; `residual` is
/// the sup-norm increment with that motion removed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TranslationFit {
    pub shift: [f64; 2],
    pub constant: f64,
    pub residual: f64,
}

pub fn translation_fit(prev: &GridPotential, next: &GridPotential, half_width: f64) -> Result<TranslationFit> {
    let g = *next.grid();
    if *prev.grid() != g {
        return Err(Error::InvalidConfig("potentials live on different grids".into()));
    }
    let (a, b) = (prev.values(), next.values());
    let rows: Vec<([f64; 3], f64)> = g
        .nodes()
        .filter(|&(i, j)| g.is_interior(i, j) && g.in_box(i, j, half_width))
        .map(|(i, j)| {
            let d = next.gradient(i, j);
            ([1.0, d[0], d[1]], b[g.index(i, j)] - a[g.index(i, j)])
        })
        .collect();
    let mut normal = Mat::<f64>::zeros(3, 3);
    let mut rhs = Col::<f64>::zeros(3);
    for (f, d) in &rows {
        for s in 0..3 {
            rhs[s] += f[s] * d;
            for t in 0..3 {
                normal[(s, t)] += f[s] * f[t];
            }
        }
    }
    let sol = normal.partial_piv_lu().solve(&rhs);
    if !(0..3).all(|k| sol[k].is_finite()) {
        return Ok(TranslationFit { residual: rows.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max), ..Default::default() });
    }
    let residual = rows.iter().map(|(f, d)| (d - sol[0] - sol[1] * f[1] - sol[2] * f[2]).abs()).fold(0.0, f64::max);
    Ok(TranslationFit { shift: [sol[1], sol[2]], constant: sol[0], residual })
}

#[derive(Clone, Debug)]
pub struct RealMaRun {
    pub config: RealMaConfig,
    pub soliton: Option<SolitonData>,
    pub target_mass: f64,
    pub steps: Vec<RealMaStep>,
    pub initial: GridPotential,
    pub potential: GridPotential,
    pub history: Vec<GridPotential>,
    pub warnings: Vec<String>,
}

pub const REAL_MA_HEADER: &str =
    "step,increment,sigma_avg,sigma_min,sigma_max,newton_steps,newton_residual,cst,scale,shift,mass,gradient_excess,drift_x1,drift_x2,reduced_increment";

impl RealMaRun {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REAL_MA_HEADER}\n");
        for r in &self.steps {
            writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.step,
                r.increment,
                r.sigma.avg,
                r.sigma.min,
                r.sigma.max,
                r.newton_steps,
                r.newton_residual,
                r.cst,
                r.scale,
                r.shift,
                r.mass,
                r.gradient_excess,
                r.translation.shift[0],
                r.translation.shift[1],
                r.translation.residual
            )
            .unwrap();
        }
        s
    }

    pub fn last(&self) -> Option<&RealMaStep> {
        self.steps.last()
    }

    /// Whether the increments never grow over the last two thirds of the run.
    pub fn increments_settle(&self) -> bool {
        let inc: Vec<f64> = self.steps.iter().map(|s| s.increment).collect();
        let start = inc.len() / 3;
        inc[start..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) || w[1] < 1e-12)
    }
}

/// `log g` for which `w` is an exact fixed point of the iteration.
pub fn fixed_point_base(w: &GridPotential, drift: [f64; 2]) -> Vec<f64> {
    let g = *w.grid();
    let ld = w.log_det_field();
    g.nodes()
        .map(|(i, j)| {
            if !g.is_interior(i, j) {
                return 0.0;
            }
            let grad = w.gradient(i, j);
            ld[g.index(i, j)] + w.at(i, j) + drift[0] * grad[0] + drift[1] * grad[1]
        })
        .collect()
}

/// Ricci iteration from the reference potential with `g ≡ 1`.
pub fn ricci_iteration_real(polygon: &FanoPolygon, config: &RealMaConfig) -> Result<RealMaRun> {
    config.validate()?;
    let grid = config.grid()?.with_stencil(config.stencil.unwrap_or_else(|| Stencil::for_polygon(polygon)));
    let soliton = soliton_coefficients(polygon)?;
    let drift = config.drift.unwrap_or(soliton.c);
    let initial = GridPotential::reference(grid, polygon);
    let mut run = iterate(initial, vec![0.0; grid.len()], Some(polygon), drift, soliton.partition, config)?;
    run.soliton = Some(soliton);
    Ok(run)
}

/// The iteration for an arbitrary `log g`, starting from `initial` rescaled to
/// mass `target_mass`.
pub fn iterate(
    initial: GridPotential,
    log_g: Vec<f64>,
    polygon: Option<&FanoPolygon>,
    drift: [f64; 2],
    target_mass: f64,
    config: &RealMaConfig,
) -> Result<RealMaRun> {
    config.validate()?;
    let grid = *initial.grid();
    if grid.with_stencil(Stencil::NinePoint) != config.grid()? || config.stencil.is_some_and(|s| s != grid.stencil()) {
        return Err(Error::InvalidConfig("initial potential does not live on the configured grid".into()));
    }
    if log_g.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: log_g.len() });
    }
    if !(target_mass > 0.0 && target_mass.is_finite()) {
        return Err(Error::InvalidConfig(format!("target mass {target_mass} must be positive")));
    }
    let solver = MaSolver::with_boundary(grid, config.boundary)?;
    let half = config.interior_half_width();
    let eps = config.eps;
    let mut warnings = Vec::new();

    let mut w = initial.shifted((initial.exp_neg_integral() / target_mass).ln());
    let start = w.clone();
    let mut history = Vec::new();
    if config.keep_history {
        history.push(w.clone());
    }
    let mut steps = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let wrap = |e: Error| Error::RicciStep { step, source: Box::new(e) };
        let cst = (w.exp_neg_integral() / target_mass).ln();
        let base: Vec<f64> = log_g.iter().zip(&w.values()).map(|(lg, wp)| lg - cst - (1.0 - eps) * wp).collect();
        let eq = MaEquation::new(&grid, base, eps, drift).map_err(wrap)?;
        let (next, report) = solver.solve(&eq, &w, &config.newton).map_err(wrap)?;
        if !report.superlinear {
            warnings.push(format!("step {step}: Newton tail not superlinear {:?}", report.residuals));
        }
        let shift = (next.exp_neg_integral() / target_mass).ln();
        let next = next.shifted(shift);
        let increment = next.sup_distance(&w, f64::INFINITY)?;
        let sigma = next.sigma_summary(half);
        let gradient_excess = polygon.map_or(0.0, |p| gradient_excess(&next, p));
        let translation = translation_fit(&w, &next, half)?;
        steps.push(RealMaStep {
            step,
            increment,
            sigma,
            newton_steps: report.steps(),
            newton_residual: report.final_residual(),
            superlinear: report.superlinear,
            cst,
            scale: report.log_scale,
            shift,
            mass: next.exp_neg_integral(),
            gradient_excess,
            translation,
        });
        w = next;
        if config.keep_history {
            history.push(w.clone());
        }
    }
    Ok(RealMaRun {
        config: config.clone(),
        soliton: None,
        target_mass,
        steps,
        initial: start,
        potential: w,
        history,
        warnings,
    })
}

/// `max(0, -min_i (<∇w, v_i> + 1))` over interior nodes.
pub fn gradient_excess(w: &GridPotential, polygon: &FanoPolygon) -> f64 {
    let g = w.grid();
    g.nodes()
        .filter(|&(i, j)| g.is_interior(i, j))
        .map(|(i, j)| -polygon.facet_slack(w.gradient(i, j)))
        .fold(0.0, f64::max)
}
