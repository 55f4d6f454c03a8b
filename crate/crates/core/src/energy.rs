//! Aubin's `I` and `J`, the `F` functionals and the Mabuchi K-energy between
//! two torus-invariant metrics sampled on a common cloud.
//!
//! With `φ = u₁ - u₀`, `D = det ∇²u` and `M = D(∇²u₀, ∇²u₁)` the mixed
//! discriminant (so that `det(H₀ + tH₁) = D₀ + 2tM + t²D₁`), the volume forms
//! `ω₀², ω₀∧ω₁, ω₁²` become `D₀, M, D₁` and in dimension two
//!
//! * `I = (1/V) ∫ φ (D₀ - D₁)`
//! * `J = (1/V) ∫ φ D₀ - (1/3V) ∫ φ (D₀ + M + D₁)`
//!
//! Integrating by parts gives the gradient forms
//! `I = (1/2V) ∫ ∇φᵀ (adj H₀ + adj H₁) ∇φ` and
//! `J = (1/6V) ∫ ∇φᵀ (2 adj H₀ + adj H₁) ∇φ`.

use std::fmt::Write as _;

use crate::bergman::MetricWeights;
use crate::error::{Error, Result};
use crate::moments::GibbsFamily;
use crate::quadrature::SampleCloud;
use crate::sym2::Sym2;

/// Potential, gradient and Hessian of one metric at every cloud point.
///
/// `scale` rescales `det H` so that its discrete integral is exactly the
/// area of Δ; this keeps the functionals exactly invariant under constant
/// shifts of the potential instead of only up to the cloud's volume defect.
#[derive(Clone, Debug)]
pub struct PotentialSamples {
    pub u: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<Sym2>,
    pub scale: f64,
}

impl PotentialSamples {
    pub fn from_family(family: &GibbsFamily, cloud: &SampleCloud) -> Self {
        let chunks = cloud.execution().map_chunks(cloud.len(), |range| {
            let mut pi = vec![0.0; family.len()];
            range.map(|k| family.kaehler_data_with(cloud.points()[k], &mut pi)).collect::<Vec<_>>()
        });
        let n = cloud.len();
        let (mut u, mut grad, mut hess) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for k in chunks.into_iter().flatten() {
            u.push(k.u);
            grad.push(k.grad);
            hess.push(k.hess);
        }
        Self::new(u, grad, hess, cloud)
    }

    pub fn new(u: Vec<f64>, grad: Vec<[f64; 2]>, hess: Vec<Sym2>, cloud: &SampleCloud) -> Self {
        let mass = cloud.sum_fn(|k| hess.get(k).map_or(0.0, Sym2::det));
        let scale = if mass > 0.0 { cloud.area() / mass } else { f64::NAN };
        Self { u, grad, hess, scale }
    }

    pub fn from_weights(weights: &MetricWeights, cloud: &SampleCloud) -> Self {
        Self::from_family(&weights.family(), cloud)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Monge-Ampère density `det H`, rescaled to total mass `Area(Δ)`.
    pub fn det(&self, k: usize) -> f64 {
        self.hess[k].det() * self.scale
    }

    /// Adds a constant to the potential.
    pub fn shifted(&self, c: f64) -> Self {
        Self { u: self.u.iter().map(|v| v + c).collect(), ..self.clone() }
    }

    fn validate(&self, cloud: &SampleCloud) -> Result<()> {
        for len in [self.u.len(), self.grad.len(), self.hess.len()] {
            if len != cloud.len() {
                return Err(Error::LengthMismatch { expected: cloud.len(), got: len });
            }
        }
        if self.u.iter().any(|v| !v.is_finite()) || !self.scale.is_finite() {
            return Err(Error::NonFinite("potential"));
        }
        if self.hess.iter().any(|h| !h.is_positive_definite()) {
            return Err(Error::InvalidConfig("potential Hessian is not positive definite".into()));
        }
        Ok(())
    }
}

/// A reference metric `u₀` and a comparison metric `u₁` on the same cloud.
#[derive(Clone, Copy, Debug)]
pub struct PotentialPair<'a> {
    pub cloud: &'a SampleCloud,
    pub reference: &'a PotentialSamples,
    pub other: &'a PotentialSamples,
    mixed_scale: f64,
}

/// The four functionals reported per iteration step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Functionals {
    pub i: f64,
    pub j: f64,
    pub f1: f64,
    pub e0: f64,
}

impl<'a> PotentialPair<'a> {
    pub fn new(cloud: &'a SampleCloud, reference: &'a PotentialSamples, other: &'a PotentialSamples) -> Result<Self> {
        reference.validate(cloud)?;
        other.validate(cloud)?;
        let mass = cloud.sum_fn(|k| reference.hess[k].mixed_discriminant(&other.hess[k]));
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::NonFinite("mixed discriminant mass"));
        }
        Ok(Self { cloud, reference, other, mixed_scale: cloud.area() / mass })
    }

    fn volume(&self) -> f64 {
        self.cloud.area()
    }

    fn phi(&self, k: usize) -> f64 {
        self.other.u[k] - self.reference.u[k]
    }

    fn dphi(&self, k: usize) -> [f64; 2] {
        let (a, b) = (self.other.grad[k], self.reference.grad[k]);
        [a[0] - b[0], a[1] - b[1]]
    }

    /// Mixed discriminant density, rescaled to total mass `Area(Δ)` like the
    /// two determinants.
    fn mixed(&self, k: usize) -> f64 {
        self.reference.hess[k].mixed_discriminant(&self.other.hess[k]) * self.mixed_scale
    }

    fn mean<F: Fn(usize) -> f64 + Sync + Send>(&self, f: F) -> f64 {
        self.cloud.sum_fn(f) / self.volume()
    }

    pub fn functional_i(&self) -> f64 {
        self.mean(|k| self.phi(k) * (self.reference.det(k) - self.other.det(k)))
    }

    pub fn functional_i_gradient(&self) -> f64 {
        self.mean(|k| {
            let s = self.reference.hess[k].adj() * self.reference.scale + self.other.hess[k].adj() * self.other.scale;
            0.5 * s.quad(self.dphi(k))
        })
    }

    pub fn functional_j(&self) -> f64 {
        self.mean(|k| {
            let (d0, d1) = (self.reference.det(k), self.other.det(k));
            self.phi(k) * (d0 - (d0 + self.mixed(k) + d1) / 3.0)
        })
    }

    pub fn functional_j_gradient(&self) -> f64 {
        self.mean(|k| {
            let s = self.reference.hess[k].adj() * (2.0 * self.reference.scale)
                + self.other.hess[k].adj() * self.other.scale;
            s.quad(self.dphi(k)) / 6.0
        })
    }

    /// `I - J`.
    pub fn aubin_gap(&self) -> f64 {
        self.mean(|k| {
            let (d0, d1) = (self.reference.det(k), self.other.det(k));
            self.phi(k) * (d0 + self.mixed(k) - 2.0 * d1) / 3.0
        })
    }

    /// Ricci deviation of the reference metric, `h = -log D₀ - u₀ + c`.
    pub fn ricci_deviation(&self) -> Result<Vec<f64>> {
        let z = self.cloud.sum_fn(|k| (-self.reference.u[k]).exp());
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::ZeroMass);
        }
        let c = (self.volume() / z).ln();
        Ok((0..self.cloud.len()).map(|k| -self.reference.det(k).ln() - self.reference.u[k] + c).collect())
    }

    /// `F⁰ = -(I - J) - (1/V) ∫ φ D₁`.
    pub fn f_zero(&self) -> f64 {
        -self.aubin_gap() - self.mean(|k| self.phi(k) * self.other.det(k))
    }

    /// `(F⁰, F_μ)`; `F_μ = F⁰ - μ log((1/V) ∫ e^{h - μφ} D₀)` for `μ = ±1` and
    /// `F₀ = F⁰ + (1/V) ∫ φ e^h D₀`.
    pub fn f_functionals(&self, mu: i32, h: &[f64]) -> Result<(f64, f64)> {
        if h.len() != self.cloud.len() {
            return Err(Error::LengthMismatch { expected: self.cloud.len(), got: h.len() });
        }
        let f0 = self.f_zero();
        let fmu = match mu {
            0 => f0 + self.mean(|k| self.phi(k) * h[k].exp() * self.reference.det(k)),
            1 | -1 => {
                let m = mu as f64;
                let avg = self.mean(|k| (h[k] - m * self.phi(k)).exp() * self.reference.det(k));
                if !(avg > 0.0 && avg.is_finite()) {
                    return Err(Error::NonFinite("F functional exponential integrand"));
                }
                f0 - m * avg.ln()
            }
            _ => return Err(Error::InvalidConfig(format!("mu must be -1, 0 or 1, got {mu}"))),
        };
        Ok((f0, fmu))
    }

    /// `E₀ = (1/V)∫ log(D₁/D₀) D₁ - μ(I - J) + (1/V)∫ h (D₀ - D₁)`.
    pub fn mabuchi_e0(&self, mu: i32, h: &[f64]) -> Result<f64> {
        if h.len() != self.cloud.len() {
            return Err(Error::LengthMismatch { expected: self.cloud.len(), got: h.len() });
        }
        let entropy = self.mean(|k| {
            let (d0, d1) = (self.reference.det(k), self.other.det(k));
            (d1 / d0).ln() * d1 + h[k] * (d0 - d1)
        });
        Ok(entropy - mu as f64 * self.aubin_gap())
    }

    /// `I`, `J`, `F₁` and `E₀` with `μ = 1` and `h` from the reference metric.
    pub fn all(&self) -> Result<Functionals> {
        let h = self.ricci_deviation()?;
        Ok(Functionals {
            i: self.functional_i(),
            j: self.functional_j(),
            f1: self.f_functionals(1, &h)?.1,
            e0: self.mabuchi_e0(1, &h)?,
        })
    }
}

/// One violation found by [`monotonicity_audit`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub functional: &'static str,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub rows: Vec<(usize, Functionals)>,
    pub violations: Vec<Violation>,
    pub worst: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// One row per step and a trailing summary line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,I,J,I_minus_J,F1,E0\n");
        for (step, f) in &self.rows {
            writeln!(s, "{step},{:e},{:e},{:e},{:e},{:e}", f.i, f.j, f.i - f.j, f.f1, f.e0).unwrap();
        }
        writeln!(
            s,
            "# {} violations={} worst={:e}",
            if self.passed() { "pass" } else { "fail" },
            self.violations.len(),
            self.worst
        )
        .unwrap();
        s
    }
}

/// Recomputes the functionals of every snapshot against the first one and
/// checks that `E₀` is nonincreasing, `F₁ ≤ 0` past the first step and
/// `I - J ≥ 0`, each up to `slack`.
pub fn monotonicity_audit(snapshots: &[MetricWeights], cloud: &SampleCloud, slack: f64) -> Result<AuditReport> {
    let Some(first) = snapshots.first() else {
        return Err(Error::MissingSnapshots);
    };
    let reference = PotentialSamples::from_weights(first, cloud);
    let mut report = AuditReport::default();
    let flag = |report: &mut AuditReport, step, functional, magnitude: f64| {
        if magnitude > slack {
            report.violations.push(Violation { step, functional, magnitude });
        }
        report.worst = report.worst.max(magnitude);
    };
    let mut last_e0 = 0.0;
    for (step, w) in snapshots.iter().enumerate() {
        let other = PotentialSamples::from_weights(w, cloud);
        let f = PotentialPair::new(cloud, &reference, &other)?.all()?;
        if step > 0 {
            flag(&mut report, step, "E0", f.e0 - last_e0);
            if step > 1 {
                flag(&mut report, step, "F1", f.f1);
            }
            flag(&mut report, step, "I-J", f.j - f.i);
        }
        last_e0 = f.e0;
        report.rows.push((step, f));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toric::{FanoPolygon, SectionBasis};
    use std::sync::Arc;

    fn setup() -> (SampleCloud, Arc<SectionBasis>) {
        let hex = FanoPolygon::hexagon();
        let cloud = SampleCloud::build(&hex, 0.1, 12.0).unwrap();
        (cloud, Arc::new(SectionBasis::new(&hex, 2).unwrap()))
    }

    fn weights(basis: &Arc<SectionBasis>, seed: f64) -> MetricWeights {
        let b = (0..basis.n_orbits()).map(|i| (seed * (i as f64 + 1.0)).sin().exp()).collect();
        MetricWeights::from_orbit_weights(basis.clone(), b).unwrap()
    }

    #[test]
    fn diagonal_pair_vanishes() {
        let (cloud, basis) = setup();
        let s = PotentialSamples::from_weights(&weights(&basis, 0.3), &cloud);
        let pair = PotentialPair::new(&cloud, &s, &s).unwrap();
        let h = pair.ricci_deviation().unwrap();
        assert_eq!(pair.functional_i(), 0.0);
        assert_eq!(pair.functional_j(), 0.0);
        assert!(pair.mabuchi_e0(1, &h).unwrap().abs() < 1e-14);
        let (f0, f1) = pair.f_functionals(1, &h).unwrap();
        assert_eq!(f0, 0.0);
        assert!(f1.abs() < 1e-12);
    }

    #[test]
    fn constant_shift() {
        let (cloud, basis) = setup();
        let s = PotentialSamples::from_weights(&weights(&basis, 0.3), &cloud);
        let t = s.shifted(0.7);
        let pair = PotentialPair::new(&cloud, &s, &t).unwrap();
        let h = pair.ricci_deviation().unwrap();
        let (f0, f1) = pair.f_functionals(1, &h).unwrap();
        assert!((f0 + 0.7).abs() < 1e-12, "{f0}");
        assert!(f1.abs() < 1e-12);
        assert!(pair.functional_i().abs() < 1e-12);
        assert!(pair.mabuchi_e0(1, &h).unwrap().abs() < 1e-12);
    }

    #[test]
    fn potential_and_gradient_forms_agree() {
        let (cloud, basis) = setup();
        let a = PotentialSamples::from_weights(&weights(&basis, 0.3), &cloud);
        let b = PotentialSamples::from_weights(&weights(&basis, 1.1), &cloud);
        let pair = PotentialPair::new(&cloud, &a, &b).unwrap();
        let (i, ig) = (pair.functional_i(), pair.functional_i_gradient());
        let (j, jg) = (pair.functional_j(), pair.functional_j_gradient());
        assert!(i > 0.0 && j > 0.0);
        assert!((i - ig).abs() < 1e-3 * i, "{i} {ig}");
        assert!((j - jg).abs() < 1e-3 * j, "{j} {jg}");
        assert!(j <= i && i <= 3.0 * j);
    }

    #[test]
    fn audit_edge_cases() {
        let (cloud, basis) = setup();
        let snaps: Vec<_> = [0.0, 0.5, 1.0].iter().map(|&s| weights(&basis, 0.3 + s)).collect();
        let single = monotonicity_audit(&snaps[..1], &cloud, 1e-4).unwrap();
        assert!(single.passed());
        assert!(matches!(monotonicity_audit(&[], &cloud, 1e-4), Err(Error::MissingSnapshots)));
        let csv = single.to_csv();
        assert!(csv.starts_with("step,I,J,I_minus_J,F1,E0\n0,"));
    }
}
