//! Real Monge-Ampère equations on a truncated square grid.

pub mod cross;
pub mod grid;
pub mod iteration;
pub mod newton;
pub mod soliton;

pub use cross::{cross_validate, CrossReport};
pub use grid::{Grid, GridPotential, SigmaSummary, Stencil};
pub use iteration::{fixed_point_base, iterate, translation_fit, ricci_iteration_real, RealMaConfig, RealMaRun, RealMaStep, TranslationFit, REAL_MA_HEADER};
pub use newton::{Boundary, MaEquation, MaSolver, NewtonOptions, NewtonReport};
pub use soliton::{soliton_coefficients, SolitonData};
