//! Uniform sample clouds in log coordinates.
//!
//! The cloud is the set of grid points `x ∈ hℤ²` with `max_p <p, x> ≤ R`,
//! where `p` runs over the vertices of Δ. That region is the `R`-dilate of the
//! ray polygon, so it is mapped onto itself by every symmetry `x ↦ Aᵀx` and the
//! point set is exactly invariant. Every point carries the cell weight `h²`.
//!
//! Integrals use the whole cloud. Pointwise statistics use the smaller sample
//! region `max_p <p, x> ≤ R_s`, since far points carry no measure worth
//! reporting but would dominate unweighted averages.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::toric::FanoPolygon;

/// Default relative tolerance of the volume certificate.
pub const DEFAULT_CERTIFICATE_TOL: f64 = 2e-3;
pub const DEFAULT_RESOLUTION: f64 = 0.08;
/// Truncation radius of the integrals; `e^{-18}` keeps tail masses near 1e-8.
pub const DEFAULT_RADIUS: f64 = 18.0;
/// Radius of the region over which pointwise statistics are reported.
pub const DEFAULT_SAMPLE_RADIUS: f64 = 12.0;

#[derive(Clone, Debug)]
pub struct SampleCloud {
    points: Vec<[f64; 2]>,
    index: Vec<[i32; 2]>,
    lookup: Vec<u32>,
    lo: [i32; 2],
    dims: [usize; 2],
    support: Vec<f64>,
    spacing: f64,
    radius: f64,
    sample_radius: f64,
    area: f64,
    defect: f64,
    exec: Execution,
}

/// A quadrature value with the full-versus-half-resolution discrepancy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

const ABSENT: u32 = u32::MAX;

impl SampleCloud {
    pub fn build(polygon: &FanoPolygon, resolution: f64, radius: f64) -> Result<Self> {
        Self::build_with_tolerance(polygon, resolution, radius, DEFAULT_CERTIFICATE_TOL)
    }

    pub fn build_with_tolerance(
        polygon: &FanoPolygon,
        resolution: f64,
        radius: f64,
        tolerance: f64,
    ) -> Result<Self> {
        let cloud = Self::build_uncertified(polygon, resolution, radius)?;
        if !(cloud.defect <= tolerance) {
            return Err(Error::CloudInadequate { defect: cloud.defect, tolerance });
        }
        Ok(cloud)
    }

    /// Builds the cloud and computes its certificate without enforcing it.
    pub fn build_uncertified(polygon: &FanoPolygon, resolution: f64, radius: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid resolution must be positive, got {resolution}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid radius must be positive, got {radius}")));
        }
        let mut reach = [0i64; 2];
        for v in polygon.rays() {
            reach[0] = reach[0].max(v[0].abs());
            reach[1] = reach[1].max(v[1].abs());
        }
        let half = [
            (radius * reach[0] as f64 / resolution).floor() as i32,
            (radius * reach[1] as f64 / resolution).floor() as i32,
        ];
        let lo = [-half[0], -half[1]];
        let dims = [(2 * half[0] + 1) as usize, (2 * half[1] + 1) as usize];
        let mut lookup = vec![ABSENT; dims[0] * dims[1]];
        let mut points = Vec::new();
        let mut index = Vec::new();
        let mut support = Vec::new();
        // A few ulps of slack so that boundary points related by symmetry are
        // kept or dropped together.
        let cut = radius * (1.0 + 1e-12);
        for i in lo[0]..=half[0] {
            for j in lo[1]..=half[1] {
                let x = [i as f64 * resolution, j as f64 * resolution];
                let h = polygon.support(x);
                if h <= cut {
                    lookup[(i - lo[0]) as usize * dims[1] + (j - lo[1]) as usize] = points.len() as u32;
                    points.push(x);
                    index.push([i, j]);
                    support.push(h);
                }
            }
        }
        let mut cloud = Self {
            points,
            index,
            lookup,
            lo,
            dims,
            support,
            spacing: resolution,
            radius,
            sample_radius: radius.min(DEFAULT_SAMPLE_RADIUS),
            area: polygon.area(),
            defect: f64::NAN,
            exec: Execution::default(),
        };
        let reference = polygon.reference_family();
        let volume = cloud.exec.sum(cloud.len(), |k| reference.kaehler_data(cloud.points[k]).hess.det());
        cloud.defect = (volume * cloud.weight() - cloud.area).abs() / cloud.area;
        Ok(cloud)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Sets the radius of the statistics region, clamped to the cloud radius.
    pub fn with_sample_radius(mut self, radius: f64) -> Self {
        self.sample_radius = radius.min(self.radius);
        self
    }

    pub fn sample_radius(&self) -> f64 {
        self.sample_radius
    }

    /// Whether point `k` lies in the statistics region.
    pub fn in_sample_region(&self, k: usize) -> bool {
        self.support[k] <= self.sample_radius * (1.0 + 1e-12)
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn grid_index(&self, k: usize) -> [i32; 2] {
        self.index[k]
    }

    /// Position of grid node `(i, j)` in the cloud, if present.
    pub fn find(&self, i: i32, j: i32) -> Option<usize> {
        let (a, b) = (i - self.lo[0], j - self.lo[1]);
        if a < 0 || b < 0 || a as usize >= self.dims[0] || b as usize >= self.dims[1] {
            return None;
        }
        match self.lookup[a as usize * self.dims[1] + b as usize] {
            ABSENT => None,
            k => Some(k as usize),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Cell weight `κ = h²`, the same at every point.
    pub fn weight(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Area of Δ, the volume every moment-map pushforward must reproduce.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Relative defect of `Σ κ det ∇²w₀` against the area of Δ.
    pub fn defect(&self) -> f64 {
        self.defect
    }

    /// `Σ κ f g`, with the discrepancy against the even-index subgrid.
    pub fn integrate(&self, f: &[f64], density: &[f64]) -> Result<Integral> {
        for (name, v) in [("integrand", f), ("density", density)] {
            if v.len() != self.len() {
                return Err(Error::LengthMismatch { expected: self.len(), got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        if density.iter().any(|&d| d < 0.0) {
            return Err(Error::Negative("density"));
        }
        Ok(self.integrate_fn(|k| f[k] * density[k]))
    }

    /// Integral of a per-point function, with the subgrid error estimate.
    pub fn integrate_fn<F>(&self, f: F) -> Integral
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let sums = self.exec.sum_vectors(self.len(), 2, |range, acc| {
            for k in range {
                let v = f(k);
                acc[0] += v;
                let [i, j] = self.index[k];
                if i % 2 == 0 && j % 2 == 0 {
                    acc[1] += v;
                }
            }
        });
        let value = sums[0] * self.weight();
        let coarse = sums[1] * 4.0 * self.weight();
        Integral { value, error: (value - coarse).abs() }
    }

    /// `Σ κ f(k)` without the error estimate.
    pub fn sum_fn<F>(&self, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.exec.sum(self.len(), f) * self.weight()
    }
}
