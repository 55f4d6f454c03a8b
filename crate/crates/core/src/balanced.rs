//! Fixed-point iterations on orbit weights: the ν-balanced map `T`, the
//! canonically balanced map `T̃`, the frozen-density outer/inner scheme and the
//! one-rung Bergman-expansion refinements.
//!
//! Every map has the form `b'_m = b_m ∫ π_m(x) g(x) dx` followed by
//! normalization, where `π_m = e^{<m,x>} / (b_m ρ)` and `g` is the scheme's
//! density:
//!
//! | scheme             | `g`                        |
//! |--------------------|----------------------------|
//! | balanced           | `det ∇²u_b`                |
//! | canonical          | `ρ_b^{-1/r}`               |
//! | ricci_outer (inner)| `ρ_{k-1}^{-1/r}` (frozen)  |
//! | refined_balanced   | `τ det ∇²u_b`              |
//! | refined_canonical  | `τ^{1+1/r} ρ_b^{-1/r}`     |

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::bergman::{curvature, MetricWeights, DEFAULT_CONDITION_BOUND};
use crate::energy::{Functionals, PotentialPair, PotentialSamples};
use crate::error::{Error, Result};
use crate::quadrature::SampleCloud;
use crate::sym2::Sym2;
use crate::toric::{FanoPolygon, SectionBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Balanced,
    Canonical,
    RicciOuter,
    RefinedBalanced,
    RefinedCanonical,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::Balanced, Scheme::Canonical, Scheme::RicciOuter, Scheme::RefinedBalanced, Scheme::RefinedCanonical];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Balanced => "balanced",
            Scheme::Canonical => "canonical",
            Scheme::RicciOuter => "ricci_outer",
            Scheme::RefinedBalanced => "refined_balanced",
            Scheme::RefinedCanonical => "refined_canonical",
        }
    }

    fn is_refined(self) -> bool {
        matches!(self, Scheme::RefinedBalanced | Scheme::RefinedCanonical)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationConfig {
    pub scheme: Scheme,
    pub rank: u32,
    pub max_iters: usize,
    /// Stop once the relative sup-norm step falls below this; 0 never stops early.
    pub tol: f64,
    pub inner_iters: usize,
    pub inner_tol: f64,
    /// Refinement rungs: the refined schemes start this many ranks lower.
    pub rungs: u32,
    /// Iterations of the base run and of every intermediate rung.
    pub base_iters: usize,
    pub condition_bound: f64,
    /// Allowed relative defect of `∫ det ∇²u` against the area of Δ.
    pub volume_tol: f64,
    pub symmetry_tol: f64,
    pub record_functionals: bool,
    pub record_timing: bool,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Canonical,
            rank: 4,
            max_iters: 15,
            tol: 1e-8,
            inner_iters: 30,
            inner_tol: 1e-9,
            rungs: 1,
            base_iters: 15,
            condition_bound: DEFAULT_CONDITION_BOUND,
            volume_tol: 5e-3,
            symmetry_tol: 1e-9,
            record_functionals: true,
            record_timing: true,
        }
    }
}

impl IterationConfig {
    pub fn new(scheme: Scheme, rank: u32, max_iters: usize) -> Self {
        Self { scheme, rank, max_iters, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.rank == 0 {
            return bad("rank must be at least 1");
        }
        if !(self.tol >= 0.0) || !(self.inner_tol > 0.0) {
            return bad("tolerances must be nonnegative");
        }
        if self.inner_iters == 0 {
            return bad("inner iteration count must be at least 1");
        }
        if self.scheme.is_refined() && (self.rungs == 0 || self.rungs >= self.rank) {
            return bad("refined schemes need 1 <= rungs < rank");
        }
        Ok(())
    }
}

/// Unweighted statistics of σ over the unflagged points of the sample region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaStats {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    /// Average weighted by `det ∇²u`; equals 1 up to quadrature error.
    pub volume_avg: f64,
    pub flagged: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Relative sup-norm change from the previous weights; NaN at step 0.
    pub residual: f64,
    pub sigma: SigmaStats,
    pub volume: f64,
    pub functionals: Functionals,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct IterationTrace {
    pub config: IterationConfig,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<MetricWeights>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

pub const TRACE_HEADER: &str = "step,residual,sigma_avg,sigma_min,sigma_max,I,J,F1,E0,wall_ms";

impl IterationTrace {
    pub fn last(&self) -> &StepRecord {
        self.steps.last().expect("trace always holds the initial state")
    }

    pub fn final_weights(&self) -> &MetricWeights {
        self.snapshots.last().expect("trace always holds the initial state")
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRACE_HEADER}\n");
        for r in &self.steps {
            let f = &r.functionals;
            writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.step, r.residual, r.sigma.avg, r.sigma.min, r.sigma.max, f.i, f.j, f.f1, f.e0, r.wall_ms
            )
            .unwrap();
        }
        s
    }
}

/// Per-point quantities of one metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEval {
    pub log_rho: f64,
    pub u: f64,
    pub grad: [f64; 2],
    pub hess: Sym2,
    pub sigma: f64,
    pub condition: f64,
}

/// The scheme density `g` of one sweep.
#[derive(Clone, Copy, Debug)]
pub enum Density<'a> {
    /// `τ det ∇²u_b`, with `τ ≡ 1` when absent.
    Volume(Option<&'a [f64]>),
    /// `τ^{1+1/r} ρ_b^{-1/r}`.
    Canonical(Option<&'a [f64]>),
    /// A fixed per-point density.
    Frozen(&'a [f64]),
}

impl Density<'_> {
    fn at(&self, k: usize, log_rho: f64, det: f64, rank: f64) -> f64 {
        match *self {
            Density::Volume(tau) => det * tau.map_or(1.0, |t| t[k]),
            Density::Canonical(tau) => {
                (-log_rho / rank).exp() * tau.map_or(1.0, |t| t[k].powf(1.0 + 1.0 / rank))
            }
            Density::Frozen(g) => g[k],
        }
    }
}

/// Result of one pass over the cloud.
#[derive(Clone, Debug)]
pub struct Sweep {
    /// `∫ π_m g dx` per lattice point, when a density was given.
    pub integrals: Option<Vec<f64>>,
    pub points: Vec<PointEval>,
}

impl Sweep {
    pub fn volume(&self, cloud: &SampleCloud) -> f64 {
        cloud.sum_fn(|k| self.points[k].hess.det())
    }

    pub fn sigma_stats(&self, cloud: &SampleCloud, bound: f64) -> SigmaStats {
        let region = |k: usize| cloud.in_sample_region(k);
        let good = |p: &PointEval| p.condition <= bound && p.sigma.is_finite();
        let ok = |k: usize| region(k) && good(&self.points[k]);
        let (mut n, mut min, mut max) = (0usize, f64::INFINITY, f64::NEG_INFINITY);
        for p in (0..self.points.len()).filter(|&k| ok(k)).map(|k| &self.points[k]) {
            n += 1;
            min = min.min(p.sigma);
            max = max.max(p.sigma);
        }
        let exec = cloud.execution();
        let len = self.points.len();
        let total = exec.sum(len, |k| if ok(k) { self.points[k].sigma } else { 0.0 });
        // The volume average runs over the whole cloud: it is an integral.
        let num = exec.sum(len, |k| {
            let p = &self.points[k];
            if good(p) {
                p.sigma * p.hess.det()
            } else {
                0.0
            }
        });
        let den = exec.sum(len, |k| if good(&self.points[k]) { self.points[k].hess.det() } else { 0.0 });
        let flagged = (0..len).filter(|&k| region(k) && !good(&self.points[k])).count();
        SigmaStats { avg: total / n as f64, min, max, volume_avg: num / den, flagged }
    }

    pub fn potential_samples(&self, cloud: &SampleCloud) -> PotentialSamples {
        PotentialSamples::new(
            self.points.iter().map(|p| p.u).collect(),
            self.points.iter().map(|p| p.grad).collect(),
            self.points.iter().map(|p| p.hess).collect(),
            cloud,
        )
    }
}

/// Evaluates the metric at every cloud point and, if `density` is given,
/// accumulates `∫ π_m g dx` for every lattice point `m`.
pub fn sweep(weights: &MetricWeights, cloud: &SampleCloud, density: Option<Density<'_>>, with_sigma: bool) -> Sweep {
    let family = weights.family();
    let n = family.len();
    let rank = family.rank();
    let width = if density.is_some() { n } else { 0 };
    let parts = cloud.execution().map_chunks(cloud.len(), |range| {
        let mut pi = vec![0.0; n];
        let mut acc = vec![0.0; width];
        let mut pts = Vec::with_capacity(range.len());
        for k in range {
            let x = cloud.points()[k];
            let (eval, det) = if with_sigma {
                let m = family.moments_with(x, &mut pi);
                let c = curvature(&m, rank);
                let s = 1.0 / rank;
                let hess = m.cov * s;
                let e = PointEval {
                    log_rho: m.log_rho,
                    u: m.log_rho * s,
                    grad: [m.mean[0] * s, m.mean[1] * s],
                    hess,
                    sigma: c.sigma,
                    condition: c.condition,
                };
                (e, hess.det())
            } else {
                let kd = family.kaehler_data_with(x, &mut pi);
                let e = PointEval {
                    log_rho: kd.log_rho,
                    u: kd.u,
                    grad: kd.grad,
                    hess: kd.hess,
                    sigma: f64::NAN,
                    condition: kd.hess.condition(),
                };
                (e, kd.hess.det())
            };
            if let Some(d) = &density {
                let g = d.at(k, eval.log_rho, det, rank);
                for (a, p) in acc.iter_mut().zip(&pi) {
                    *a += g * p;
                }
            }
            pts.push(eval);
        }
        (pts, acc)
    });
    let mut points = Vec::with_capacity(cloud.len());
    let mut accs = Vec::with_capacity(parts.len());
    for (p, a) in parts {
        points.extend(p);
        accs.push(a);
    }
    let integrals = density.map(|_| {
        let mut v = crate::exec::pairwise_sum_vectors(accs, width);
        for x in v.iter_mut() {
            *x *= cloud.weight();
        }
        v
    });
    Sweep { integrals, points }
}

/// Rescales so the geometric mean of the per-point weights is 1.
pub fn normalize(weights: &MetricWeights) -> MetricWeights {
    weights.normalized()
}

/// `b'_m = b_m ∫ π_m g dx`, averaged over orbits after checking that orbit-mates agree.
fn apply_integrals(weights: &MetricWeights, integrals: &[f64], symmetry_tol: f64) -> Result<MetricWeights> {
    if integrals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("update integrand"));
    }
    if integrals.iter().all(|&v| v <= 0.0) {
        return Err(Error::ZeroMass);
    }
    let per_point: Vec<f64> = weights.point_weights().iter().zip(integrals).map(|(b, i)| b * i).collect();
    Ok(MetricWeights::from_point_weights(weights.basis().clone(), &per_point, symmetry_tol)?.normalized())
}

/// One ν-balanced step for a fixed per-point density `ν` on the cloud.
pub fn t_nu_step(weights: &MetricWeights, cloud: &SampleCloud, nu: &[f64]) -> Result<MetricWeights> {
    if nu.len() != cloud.len() {
        return Err(Error::LengthMismatch { expected: cloud.len(), got: nu.len() });
    }
    if nu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nu"));
    }
    if nu.iter().any(|&v| v < 0.0) {
        return Err(Error::Negative("nu"));
    }
    if nu.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMass);
    }
    let s = sweep(weights, cloud, Some(Density::Frozen(nu)), false);
    apply_integrals(weights, s.integrals.as_deref().unwrap(), IterationConfig::default().symmetry_tol)
}

/// One step of `T̃`, the canonically balanced map.
pub fn t_canonical_step(weights: &MetricWeights, cloud: &SampleCloud) -> Result<MetricWeights> {
    let s = sweep(weights, cloud, Some(Density::Canonical(None)), false);
    apply_integrals(weights, s.integrals.as_deref().unwrap(), IterationConfig::default().symmetry_tol)
}

/// One step of the volume-balanced map with `ν = det ∇²u_b dx`.
pub fn t_balanced_step(weights: &MetricWeights, cloud: &SampleCloud) -> Result<MetricWeights> {
    let s = sweep(weights, cloud, Some(Density::Volume(None)), false);
    apply_integrals(weights, s.integrals.as_deref().unwrap(), IterationConfig::default().symmetry_tol)
}

/// Target density for rank `r + 1` from σ of converged rank-`r` weights:
/// `τ ∝ N_{r+1} + (r/2)(1 - σ)`, scaled so `∫ τ det ∇²u_r dx = N_{r+1}`.
///
/// Non-finite σ (flagged points) counts as 1.
pub fn refined_target(
    weights_r: &MetricWeights,
    polygon: &FanoPolygon,
    cloud: &SampleCloud,
    sigma: &[f64],
) -> Result<Vec<f64>> {
    if sigma.len() != cloud.len() {
        return Err(Error::LengthMismatch { expected: cloud.len(), got: sigma.len() });
    }
    if let Some(&s) = sigma.iter().find(|s| s.abs() > 10.0) {
        return Err(Error::SigmaOutOfRange(s));
    }
    let r = weights_r.rank() as f64;
    let next = polygon.lattice_points(weights_r.rank() + 1).len() as f64;
    let raw: Vec<f64> = sigma.iter().map(|&s| next + 0.5 * r * (1.0 - if s.is_finite() { s } else { 1.0 })).collect();
    if raw.iter().any(|&t| t <= 0.0) {
        return Err(Error::Negative("refined target"));
    }
    let family = weights_r.family();
    let mass = cloud.sum_fn(|k| raw[k] * family.kaehler_data(cloud.points()[k]).hess.det());
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(raw.iter().map(|t| t * next / mass).collect())
}

struct Recorder<'a> {
    cloud: &'a SampleCloud,
    config: &'a IterationConfig,
    reference: Option<PotentialSamples>,
    trace: IterationTrace,
    clock: Instant,
}

impl<'a> Recorder<'a> {
    fn new(cloud: &'a SampleCloud, config: &'a IterationConfig) -> Self {
        Self {
            cloud,
            config,
            reference: None,
            trace: IterationTrace {
                config: config.clone(),
                steps: Vec::new(),
                snapshots: Vec::new(),
                converged: false,
                warnings: Vec::new(),
            },
            clock: Instant::now(),
        }
    }

    /// Records the state `weights` whose full sweep is `sw`.
    fn record(&mut self, weights: &MetricWeights, sw: &Sweep, residual: f64) -> Result<()> {
        let volume = sw.volume(self.cloud);
        let defect = (volume - self.cloud.area()).abs() / self.cloud.area();
        if !(defect <= self.config.volume_tol) {
            return Err(Error::CloudInadequate { defect, tolerance: self.config.volume_tol });
        }
        let functionals = if self.config.record_functionals {
            let samples = sw.potential_samples(self.cloud);
            match &self.reference {
                None => {
                    self.reference = Some(samples);
                    Functionals::default()
                }
                Some(r) => PotentialPair::new(self.cloud, r, &samples)?.all()?,
            }
        } else {
            Functionals::default()
        };
        let wall_ms = if self.config.record_timing {
            let ms = self.clock.elapsed().as_secs_f64() * 1e3;
            self.clock = Instant::now();
            (ms * 1e3).round() / 1e3
        } else {
            0.0
        };
        self.trace.steps.push(StepRecord {
            step: self.trace.steps.len(),
            residual,
            sigma: sw.sigma_stats(self.cloud, self.config.condition_bound),
            volume,
            functionals,
            wall_ms,
        });
        self.trace.snapshots.push(weights.clone());
        Ok(())
    }

    fn done(&mut self, residual: f64) -> bool {
        if residual < self.config.tol {
            self.trace.converged = true;
        }
        self.trace.converged
    }
}

/// Iterates a single-density scheme (`balanced`, `canonical` or their refined
/// forms with target `tau`) from `start`.
fn run_simple(
    start: MetricWeights,
    cloud: &SampleCloud,
    config: &IterationConfig,
    volume_like: bool,
    tau: Option<&[f64]>,
    iters: usize,
) -> Result<IterationTrace> {
    let mut rec = Recorder::new(cloud, config);
    let density = if volume_like { Density::Volume(tau) } else { Density::Canonical(tau) };
    let mut weights = start.normalized();
    let mut sw = sweep(&weights, cloud, Some(density), true);
    rec.record(&weights, &sw, f64::NAN)?;
    for _ in 0..iters {
        let next = apply_integrals(&weights, sw.integrals.as_deref().unwrap(), config.symmetry_tol)?;
        let residual = next.relative_distance(&weights);
        weights = next;
        sw = sweep(&weights, cloud, Some(density), true);
        rec.record(&weights, &sw, residual)?;
        if rec.done(residual) {
            break;
        }
    }
    Ok(rec.trace)
}

/// Outer loop over frozen densities `ρ_{k-1}^{-1/r}`; each outer step runs the
/// ν-balanced inner iteration for that density to its fixed point.
pub fn ricci_outer_scheme(
    weights0: &MetricWeights,
    cloud: &SampleCloud,
    config: &IterationConfig,
) -> Result<IterationTrace> {
    config.validate()?;
    let mut rec = Recorder::new(cloud, config);
    let rank = weights0.rank() as f64;
    let mut outer = weights0.normalized();
    let mut sw = sweep(&outer, cloud, None, true);
    rec.record(&outer, &sw, f64::NAN)?;
    for step in 1..=config.max_iters {
        let frozen: Vec<f64> = sw.points.iter().map(|p| (-p.log_rho / rank).exp()).collect();
        let mut inner = outer.clone();
        let mut settled = false;
        for _ in 0..config.inner_iters {
            let s = sweep(&inner, cloud, Some(Density::Frozen(&frozen)), false);
            let next = apply_integrals(&inner, s.integrals.as_deref().unwrap(), config.symmetry_tol)
                .map_err(|e| Error::RicciStep { step, source: Box::new(e) })?;
            let change = next.relative_distance(&inner);
            inner = next;
            if change < config.inner_tol {
                settled = true;
                break;
            }
        }
        if !settled && config.inner_iters > 1 {
            rec.trace.warnings.push(format!(
                "outer step {step}: inner iteration did not reach {:e} in {} steps",
                config.inner_tol, config.inner_iters
            ));
        }
        let residual = inner.relative_distance(&outer);
        outer = inner;
        sw = sweep(&outer, cloud, None, true);
        rec.record(&outer, &sw, residual)?;
        if rec.done(residual) {
            break;
        }
    }
    Ok(rec.trace)
}

/// Runs the configured scheme from uniform weights.
pub fn run_iteration(config: &IterationConfig, polygon: &FanoPolygon, cloud: &SampleCloud) -> Result<IterationTrace> {
    config.validate()?;
    let basis = |r: u32| SectionBasis::new(polygon, r).map(Arc::new);
    match config.scheme {
        Scheme::Balanced | Scheme::Canonical => {
            let start = MetricWeights::uniform(basis(config.rank)?);
            run_simple(start, cloud, config, config.scheme == Scheme::Balanced, None, config.max_iters)
        }
        Scheme::RicciOuter => ricci_outer_scheme(&MetricWeights::uniform(basis(config.rank)?), cloud, config),
        Scheme::RefinedBalanced | Scheme::RefinedCanonical => {
            let volume_like = config.scheme == Scheme::RefinedBalanced;
            let mut rank = config.rank - config.rungs;
            let mut notes = Vec::new();
            let mut current =
                run_simple(MetricWeights::uniform(basis(rank)?), cloud, config, volume_like, None, config.base_iters)?;
            loop {
                let w = current.final_weights().clone();
                let sw = sweep(&w, cloud, None, true);
                let sigma: Vec<f64> = sw
                    .points
                    .iter()
                    .map(|p| if p.condition <= config.condition_bound { p.sigma } else { f64::NAN })
                    .collect();
                let tau = refined_target(&w, polygon, cloud, &sigma)?;
                notes.push(format!(
                    "rank {rank}: {} steps, sigma avg {:.4}",
                    current.steps.len() - 1,
                    current.last().sigma.avg
                ));
                rank += 1;
                let iters = if rank == config.rank { config.max_iters } else { config.base_iters };
                current =
                    run_simple(MetricWeights::uniform(basis(rank)?), cloud, config, volume_like, Some(&tau), iters)?;
                if rank == config.rank {
                    break;
                }
            }
            current.warnings.extend(notes);
            Ok(current)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(r: u32) -> (FanoPolygon, SampleCloud, Arc<SectionBasis>) {
        let hex = FanoPolygon::hexagon();
        let cloud = SampleCloud::build(&hex, 0.2, 12.0).unwrap();
        let basis = Arc::new(SectionBasis::new(&hex, r).unwrap());
        (hex, cloud, basis)
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("bogus".parse::<Scheme>().is_err());
    }

    #[test]
    fn steps_preserve_positivity_and_normalization() {
        let (_, cloud, basis) = setup(3);
        let w = MetricWeights::uniform(basis);
        for next in [t_canonical_step(&w, &cloud).unwrap(), t_balanced_step(&w, &cloud).unwrap()] {
            assert!(next.orbit_weights().iter().all(|&b| b > 0.0));
            let logs: f64 = next.point_weights().iter().map(|b| b.ln()).sum();
            assert!(logs.abs() < 1e-10);
        }
    }

    #[test]
    fn sigma_is_invariant_under_normalization() {
        let (_, _, basis) = setup(2);
        let b: Vec<f64> = (0..basis.n_orbits()).map(|i| 1.0 + 0.3 * i as f64).collect();
        let w = MetricWeights::from_orbit_weights(basis, b.iter().map(|v| v * 7.0).collect()).unwrap();
        let n = normalize(&w);
        for x in [[0.1, 0.2], [-1.0, 3.0]] {
            let (a, c) = (w.normalized_scalar_curvature(x).sigma, n.normalized_scalar_curvature(x).sigma);
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_density_with_one_inner_step_is_canonical() {
        let (hex, cloud, basis) = setup(3);
        let mut cfg = IterationConfig::new(Scheme::RicciOuter, 3, 3);
        cfg.inner_iters = 1;
        cfg.tol = 0.0;
        cfg.record_functionals = false;
        let w0 = MetricWeights::uniform(basis);
        let outer = ricci_outer_scheme(&w0, &cloud, &cfg).unwrap();
        cfg.scheme = Scheme::Canonical;
        let can = run_iteration(&cfg, &hex, &cloud).unwrap();
        for (a, b) in outer.snapshots.iter().zip(&can.snapshots) {
            assert!(a.relative_distance(b) < 1e-13);
        }
    }

    #[test]
    fn zero_tolerance_runs_the_full_budget() {
        let (hex, cloud, _) = setup(2);
        let mut cfg = IterationConfig::new(Scheme::Canonical, 2, 4);
        cfg.tol = 0.0;
        let trace = run_iteration(&cfg, &hex, &cloud).unwrap();
        assert_eq!(trace.steps.len(), 5);
        assert!(trace.steps[0].residual.is_nan());
        assert!(!trace.converged);
    }

    #[test]
    fn constant_sigma_gives_constant_target() {
        let (hex, cloud, basis) = setup(3);
        let w = MetricWeights::uniform(basis);
        let tau = refined_target(&w, &hex, &cloud, &vec![1.0; cloud.len()]).unwrap();
        let expect = 61.0 / 3.0;
        // The target is normalized against the discrete volume, which is within the cloud defect of 3.
        assert!(tau.iter().all(|t| (t - expect).abs() < 1e-3 * expect));
        assert!(matches!(
            refined_target(&w, &hex, &cloud, &vec![11.0; cloud.len()]),
            Err(Error::SigmaOutOfRange(_))
        ));
    }

    #[test]
    fn nu_step_rejects_bad_densities() {
        let (_, cloud, basis) = setup(1);
        let w = MetricWeights::uniform(basis);
        assert!(matches!(t_nu_step(&w, &cloud, &vec![0.0; cloud.len()]), Err(Error::ZeroMass)));
        assert!(matches!(t_nu_step(&w, &cloud, &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn csv_has_the_documented_header() {
        let (hex, cloud, _) = setup(1);
        let mut cfg = IterationConfig::new(Scheme::Balanced, 1, 0);
        cfg.record_timing = false;
        let trace = run_iteration(&cfg, &hex, &cloud).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        assert!(lines.next().unwrap().starts_with("0,NaN,"));
        assert!(lines.next().is_none());
    }
}
