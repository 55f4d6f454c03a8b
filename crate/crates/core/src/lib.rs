//! Numerical Kähler-Einstein metrics on toric Fano surfaces.
//!
//! Metrics are torus-invariant and live in real log coordinates `x ∈ ℝ²`: an
//! algebraic metric of rank `r` has potential `u = (1/r) log Σ_m e^{<m,x>}/b_m`
//! over the lattice points `m` of `rΔ`, and a Kähler-Einstein potential solves
//! `det ∇²u = e^{-u + affine}`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod balanced;
pub mod bergman;
pub mod energy;
pub mod error;
pub mod exec;
pub mod heatmap;
pub mod moments;
pub mod quadrature;
pub mod real_ma;
pub mod sym2;
pub mod toric;

pub use balanced::{IterationConfig, IterationTrace, Scheme};
pub use bergman::{Curvature, MetricWeights, RicciDeviation};
pub use error::{Error, Result};
pub use exec::Execution;
pub use moments::{GibbsFamily, KaehlerData, LogMoments};
pub use quadrature::{Integral, SampleCloud};
pub use sym2::Sym2;
pub use toric::{FanoPolygon, IntMat2, SectionBasis};
