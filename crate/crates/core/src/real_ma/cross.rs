//! Comparison of a grid potential with the potential of an algebraic metric.

use super::grid::GridPotential;
use crate::bergman::MetricWeights;
use crate::error::{Error, Result};
use crate::toric::FanoPolygon;

pub const CROSS_TOL: f64 = 2e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossReport {
    /// `max |w - u - a|` with `a` the midrange of `w - u`.
    pub sup: f64,
    /// Root mean square of `w - u - ā` with `ā` the mean of `w - u`.
    pub l2: f64,
    pub constant: f64,
    pub nodes: usize,
    pub tolerance: f64,
}

impl CrossReport {
    pub fn passed(&self) -> bool {
        self.sup <= self.tolerance
    }
}

/// Compares on the nodes with `|x|_∞ ≤ half_width`.
pub fn cross_validate(
    polygon: &FanoPolygon,
    grid_limit: &GridPotential,
    weights: &MetricWeights,
    half_width: f64,
) -> Result<CrossReport> {
    if weights.basis().points() != polygon.lattice_points(weights.rank()).as_slice() {
        return Err(Error::PolygonMismatch);
    }
    let g = grid_limit.grid();
    let family = weights.family();
    let d: Vec<f64> = g
        .nodes()
        .filter(|&(i, j)| g.in_box(i, j, half_width))
        .map(|(i, j)| grid_limit.at(i, j) - family.log_density(g.point(i, j)) / family.rank())
        .collect();
    if d.is_empty() {
        return Err(Error::InvalidConfig(format!("no grid nodes within half-width {half_width}")));
    }
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = crate::exec::pairwise_sum(&d) / d.len() as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<f64>>();
    Ok(CrossReport {
        sup: 0.5 * (hi - lo),
        l2: (crate::exec::pairwise_sum(&var) / d.len() as f64).sqrt(),
        constant: 0.5 * (hi + lo),
        nodes: d.len(),
        tolerance: CROSS_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real_ma::grid::Grid;
    use crate::toric::SectionBasis;
    use std::sync::Arc;

    #[test]
    fn identical_potentials_agree() {
        let hex = FanoPolygon::hexagon();
        let w = MetricWeights::uniform(Arc::new(SectionBasis::new(&hex, 2).unwrap()));
        let g = Grid::new(4.0, 0.1).unwrap();
        let fam = w.family();
        let pot = GridPotential::from_fn(g, |x| fam.log_density(x) / 2.0 + 0.7).unwrap();
        let r = cross_validate(&hex, &pot, &w, 2.4).unwrap();
        assert!(r.sup < 1e-13 && r.l2 < 1e-13);
        assert!((r.constant - 0.7).abs() < 1e-13);
    }

    #[test]
    fn polygon_mismatch_is_an_error() {
        let w = MetricWeights::uniform(Arc::new(SectionBasis::new(&FanoPolygon::projective_plane(), 2).unwrap()));
        let g = Grid::new(4.0, 0.1).unwrap();
        let pot = GridPotential::reference(g, &FanoPolygon::hexagon());
        assert!(matches!(cross_validate(&FanoPolygon::hexagon(), &pot, &w, 2.0), Err(Error::PolygonMismatch)));
    }
}
