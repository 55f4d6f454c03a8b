//! Torus-invariant algebraic metrics given by one positive weight per
//! symmetry orbit of sections.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::moments::{GibbsFamily, KaehlerData, LogMoments};
use crate::quadrature::SampleCloud;
use crate::sym2::Sym2;
use crate::toric::{FanoPolygon, SectionBasis};

/// Points whose metric Hessian is worse conditioned than this are flagged.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e10;

/// Diagonal Gram entries `b_m`, constant on orbits.
#[derive(Clone, Debug)]
pub struct MetricWeights {
    basis: Arc<SectionBasis>,
    b: Vec<f64>,
}

/// Normalized scalar curvature at a point with its conditioning diagnostic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curvature {
    pub sigma: f64,
    pub condition: f64,
}

impl Curvature {
    pub fn is_flagged(&self, bound: f64) -> bool {
        !(self.condition <= bound) || !self.sigma.is_finite()
    }
}

impl MetricWeights {
    pub fn uniform(basis: Arc<SectionBasis>) -> Self {
        let b = vec![1.0; basis.n_orbits()];
        Self { basis, b }
    }

    pub fn from_orbit_weights(basis: Arc<SectionBasis>, b: Vec<f64>) -> Result<Self> {
        if b.len() != basis.n_orbits() {
            return Err(Error::LengthMismatch { expected: basis.n_orbits(), got: b.len() });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if b.iter().any(|&v| v <= 0.0) {
            return Err(Error::Negative("weights"));
        }
        Ok(Self { basis, b })
    }

    /// Builds weights from per-point values, which must be constant on orbits.
    pub fn from_point_weights(basis: Arc<SectionBasis>, per_point: &[f64], tolerance: f64) -> Result<Self> {
        if per_point.len() != basis.len() {
            return Err(Error::LengthMismatch { expected: basis.len(), got: per_point.len() });
        }
        let mut b = Vec::with_capacity(basis.n_orbits());
        let mut spread: f64 = 0.0;
        for orbit in basis.orbits() {
            let vals: Vec<f64> = orbit.iter().map(|&i| per_point[i]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            for v in &vals {
                spread = spread.max((v - mean).abs() / mean.abs());
            }
            b.push(mean);
        }
        if spread > tolerance {
            return Err(Error::SymmetryBroken(spread));
        }
        Self::from_orbit_weights(basis, b)
    }

    pub fn basis(&self) -> &Arc<SectionBasis> {
        &self.basis
    }

    pub fn rank(&self) -> u32 {
        self.basis.rank()
    }

    pub fn orbit_weights(&self) -> &[f64] {
        &self.b
    }

    pub fn point_weights(&self) -> Vec<f64> {
        (0..self.basis.len()).map(|i| self.b[self.basis.orbit_of(i)]).collect()
    }

    /// The log-sum-exp family realizing `ρ = Σ e^{<m,x>} / b_m`.
    pub fn family(&self) -> GibbsFamily {
        let pts = self.basis.points().iter().map(|m| [m[0] as f64, m[1] as f64]).collect();
        let log_b = (0..self.basis.len()).map(|i| self.b[self.basis.orbit_of(i)].ln()).collect();
        GibbsFamily::new(pts, log_b, self.rank() as f64)
    }

    /// Rescales so the geometric mean of the per-point weights is 1.
    pub fn normalized(&self) -> Self {
        let n = self.basis.len() as f64;
        let mean_log: f64 = self
            .basis
            .orbits()
            .iter()
            .zip(&self.b)
            .map(|(o, b)| o.len() as f64 * b.ln())
            .sum::<f64>()
            / n;
        let s = (-mean_log).exp();
        Self { basis: self.basis.clone(), b: self.b.iter().map(|v| v * s).collect() }
    }

    pub fn bergman_density(&self, x: [f64; 2]) -> LogMoments {
        self.family().moments(x)
    }

    pub fn kaehler_data(&self, x: [f64; 2]) -> KaehlerData {
        self.family().kaehler_data(x)
    }

    /// Analytic `∇² log det ∇²u`.
    pub fn hess_log_det(&self, x: [f64; 2]) -> Sym2 {
        self.family().moments(x).log_det_derivatives().1
    }

    pub fn normalized_scalar_curvature(&self, x: [f64; 2]) -> Curvature {
        curvature(&self.family().moments(x), self.rank() as f64)
    }

    /// Largest relative difference between two weight vectors on the same basis.
    pub fn relative_distance(&self, other: &Self) -> f64 {
        let num = self.b.iter().zip(&other.b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let den = self.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        num / den
    }

    /// One line per orbit: representative lattice point and weight.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (id, b) in self.b.iter().enumerate() {
            let m = self.basis.representative(id);
            writeln!(s, "{} {} {:e}", m[0], m[1], b).unwrap();
        }
        s
    }

    pub fn parse(basis: Arc<SectionBasis>, text: &str) -> Result<Self> {
        let mut b = vec![f64::NAN; basis.n_orbits()];
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: k + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err(format!("expected `m1 m2 weight`, found {} fields", f.len())));
            }
            let m1: i64 = f[0].parse().map_err(|_| err(format!("`{}` is not an integer", f[0])))?;
            let m2: i64 = f[1].parse().map_err(|_| err(format!("`{}` is not an integer", f[1])))?;
            let w: f64 = f[2].parse().map_err(|_| err(format!("`{}` is not a number", f[2])))?;
            let id = basis
                .orbit_containing([m1, m2])
                .ok_or_else(|| err(format!("({m1}, {m2}) is not a section of rank {}", basis.rank())))?;
            b[id] = w;
        }
        if let Some(id) = b.iter().position(|v| v.is_nan()) {
            let m = basis.representative(id);
            return Err(Error::Parse { line: 0, msg: format!("no weight for orbit of ({}, {})", m[0], m[1]) });
        }
        Self::from_orbit_weights(basis, b)
    }
}

pub fn curvature(m: &LogMoments, rank: f64) -> Curvature {
    Curvature { sigma: m.scalar_curvature(rank), condition: m.condition() }
}

/// `h = -log det ∇²w₀ - w₀ + c` with `(1/V) ∫ e^h det ∇²w₀ dx = 1`.
#[derive(Clone, Debug)]
pub struct RicciDeviation {
    reference: GibbsFamily,
    constant: f64,
}

impl RicciDeviation {
    pub fn new(polygon: &FanoPolygon, cloud: &SampleCloud) -> Result<Self> {
        let reference = polygon.reference_family();
        let z = cloud.sum_fn(|k| (-reference.log_density(cloud.points()[k])).exp());
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::ZeroMass);
        }
        Ok(Self { reference, constant: (cloud.area() / z).ln() })
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        let k = self.reference.kaehler_data(x);
        -k.hess.det().ln() - k.u + self.constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex_basis(r: u32) -> Arc<SectionBasis> {
        Arc::new(SectionBasis::new(&FanoPolygon::hexagon(), r).unwrap())
    }

    #[test]
    fn uniform_rank_one_density_at_origin() {
        let w = MetricWeights::uniform(hex_basis(1));
        let m = w.bergman_density([0.0, 0.0]);
        assert!((m.log_rho - 7f64.ln()).abs() < 1e-15);
        assert!(m.mean[0].abs() < 1e-15 && m.mean[1].abs() < 1e-15);
    }

    #[test]
    fn heavy_origin_weight_recovers_reference() {
        let basis = hex_basis(1);
        let origin = basis.orbit_containing([0, 0]).unwrap();
        let mut b = vec![1.0; basis.n_orbits()];
        b[origin] = 1e300;
        let w = MetricWeights::from_orbit_weights(basis, b).unwrap();
        let hex = FanoPolygon::hexagon();
        for x in [[0.3, -0.2], [2.0, 1.0], [-4.0, 0.5]] {
            let (w0, _, _) = hex.reference_potential(x);
            assert!((w.kaehler_data(x).u - w0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_is_idempotent_and_flattens_constants() {
        let basis = hex_basis(2);
        let n = basis.n_orbits();
        let w = MetricWeights::from_orbit_weights(basis.clone(), vec![3.7; n]).unwrap().normalized();
        assert!(w.orbit_weights().iter().all(|v| (v - 1.0).abs() < 1e-14));
        let v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let a = MetricWeights::from_orbit_weights(basis, v).unwrap().normalized();
        let b = a.normalized();
        assert!(a.relative_distance(&b) < 1e-15);
    }

    #[test]
    fn weights_file_round_trips() {
        let basis = hex_basis(3);
        let n = basis.n_orbits();
        let v: Vec<f64> = (0..n).map(|i| (0.37 * i as f64).exp() / 3.0).collect();
        let w = MetricWeights::from_orbit_weights(basis.clone(), v).unwrap();
        let back = MetricWeights::parse(basis, &w.to_text()).unwrap();
        assert_eq!(w.orbit_weights(), back.orbit_weights());
    }

    #[test]
    fn weights_file_errors() {
        let basis = hex_basis(1);
        assert!(matches!(MetricWeights::parse(basis.clone(), "0 0 1.0\n5 5 1.0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(MetricWeights::parse(basis.clone(), "0 0 1.0\n"), Err(Error::Parse { .. })));
        assert!(matches!(MetricWeights::parse(basis, "0 0 -1\n1 0 1\n"), Err(Error::Negative(_))));
    }

    #[test]
    fn rejects_non_orbit_constant_point_weights() {
        let basis = hex_basis(1);
        let mut v = vec![1.0; basis.len()];
        let big = basis.orbits().iter().find(|o| o.len() > 1).unwrap();
        v[big[0]] = 2.0;
        assert!(matches!(MetricWeights::from_point_weights(basis, &v, 1e-12), Err(Error::SymmetryBroken(_))));
    }

    #[test]
    fn ricci_deviation_normalization() {
        let hex = FanoPolygon::hexagon();
        let cloud = SampleCloud::build(&hex, 0.1, 12.0).unwrap();
        let h = RicciDeviation::new(&hex, &cloud).unwrap();
        let reference = hex.reference_family();
        let total = cloud.sum_fn(|k| {
            let x = cloud.points()[k];
            h.value(x).exp() * reference.kaehler_data(x).hess.det()
        });
        assert!((total / 3.0 - 1.0).abs() < 1e-3);
        let (w0, _, hess) = hex.reference_potential([0.0, 0.0]);
        assert!((h.value([0.0, 0.0]) - (-hess.det().ln() - w0 + h.constant())).abs() < 1e-14);
    }
}
