//! Scalar-curvature pictures over the moment polygon.
//!
//! Each sample cell `x + [-h/2, h/2]²` is pushed forward by the moment map
//! `∇u`, which to first order sends it to the parallelogram spanned by the
//! columns of `(h/2) ∇²u` around `∇u(x)`, and painted with the colour of σ.

use crate::balanced::Sweep;
use crate::quadrature::SampleCloud;
use crate::real_ma::GridPotential;
use crate::sym2::Sym2;
use crate::toric::FanoPolygon;

pub const SIZE: usize = 512;
pub const CLAMP: [f64; 2] = [0.5, 1.5];
const UNCOVERED: [u8; 3] = [150, 150, 150];
const OUTSIDE: [u8; 3] = [0, 0, 0];
/// Neighbouring cell images only meet to first order; a small overlap closes the seams.
const OVERLAP: f64 = 1.1;

/// Image of one sample cell under the moment map.
#[derive(Clone, Copy, Debug)]
pub struct Cell {
    pub centre: [f64; 2],
    /// `h/2 · ∇²u`.
    pub half_axes: Sym2,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub size: usize,
    pub pixels: Vec<[u8; 3]>,
}

/// Diverging blue-white-red map centred at 1 on `CLAMP`.
pub fn colour(sigma: f64) -> [u8; 3] {
    let t = ((sigma - CLAMP[0]) / (CLAMP[1] - CLAMP[0])).clamp(0.0, 1.0);
    let ramp = |s: f64| (255.0 * s).round() as u8;
    if t < 0.5 {
        let s = 2.0 * t;
        [ramp(s), ramp(s), 255]
    } else {
        let s = 2.0 * (1.0 - t);
        [255, ramp(s), ramp(s)]
    }
}

impl Heatmap {
    /// Paints `cells` into a square frame around Δ. Pixels outside Δ are
    /// black; pixels inside Δ that no cell reaches are grey.
    pub fn render(polygon: &FanoPolygon, cells: &[Cell], size: usize) -> Self {
        let (lo, scale) = frame(polygon, size);
        let to_world =
            |px: usize, py: usize| [lo[0] + (px as f64 + 0.5) / scale, lo[1] + ((size - 1 - py) as f64 + 0.5) / scale];
        let mut pixels: Vec<[u8; 3]> = (0..size * size)
            .map(|k| if polygon.facet_slack(to_world(k % size, k / size)) > 0.0 { UNCOVERED } else { OUTSIDE })
            .collect();
        for c in cells.iter().filter(|c| c.value.is_finite()) {
            let a = c.half_axes;
            let det = a.det();
            if !(det > 0.0) {
                continue;
            }
            let inv = a.inverse();
            let reach = [OVERLAP * (a.xx.abs() + a.xy.abs()), OVERLAP * (a.xy.abs() + a.yy.abs())];
            let px = |v: f64, o: f64| ((v - o) * scale).floor();
            let span = |a: f64, b: f64| {
                let last = size as f64 - 1.0;
                (a.max(0.0) as usize)..=(b.min(last).max(0.0) as usize)
            };
            let cols = span(px(c.centre[0] - reach[0], lo[0]), px(c.centre[0] + reach[0], lo[0]));
            let rows = span(px(c.centre[1] - reach[1], lo[1]), px(c.centre[1] + reach[1], lo[1]));
            let rgb = colour(c.value);
            let mut painted = false;
            for gy in rows {
                for gx in cols.clone() {
                    let py = size - 1 - gy;
                    let w = to_world(gx, py);
                    let s = inv.apply([w[0] - c.centre[0], w[1] - c.centre[1]]);
                    if s[0].abs() <= OVERLAP && s[1].abs() <= OVERLAP {
                        pixels[py * size + gx] = rgb;
                        painted = true;
                    }
                }
            }
            // Cells smaller than a pixel still mark the pixel they land in.
            if !painted {
                let (gx, gy) = (px(c.centre[0], lo[0]), px(c.centre[1], lo[1]));
                if (0.0..size as f64).contains(&gx) && (0.0..size as f64).contains(&gy) {
                    pixels[(size - 1 - gy as usize) * size + gx as usize] = rgb;
                }
            }
        }
        Self { size, pixels }
    }

    /// σ of an algebraic metric on the sample region of its cloud.
    pub fn from_sweep(polygon: &FanoPolygon, cloud: &SampleCloud, sweep: &Sweep, condition_bound: f64) -> Self {
        let half = 0.5 * cloud.spacing();
        let cells: Vec<Cell> = sweep
            .points
            .iter()
            .enumerate()
            .filter(|&(k, p)| cloud.in_sample_region(k) && p.condition <= condition_bound)
            .map(|(_, p)| Cell { centre: p.grad, half_axes: p.hess * half, value: p.sigma })
            .collect();
        Self::render(polygon, &cells, SIZE)
    }

    /// σ of a grid potential on the nodes where it is defined.
    pub fn from_grid(polygon: &FanoPolygon, w: &GridPotential, sigma: &[f64]) -> Self {
        let g = w.grid();
        let half = 0.5 * g.spacing();
        let cells: Vec<Cell> = g
            .nodes()
            .filter(|&(i, j)| g.has_margin(i, j, 2))
            .map(|(i, j)| Cell {
                centre: w.gradient(i, j),
                half_axes: w.hessian(i, j) * half,
                value: sigma[g.index(i, j)],
            })
            .collect();
        Self::render(polygon, &cells, SIZE)
    }

    /// Binary portable pixmap.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.size, self.size).into_bytes();
        out.reserve(3 * self.pixels.len());
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Lower-left corner and pixels per unit of a square frame holding Δ with a
/// small margin.
fn frame(polygon: &FanoPolygon, size: usize) -> ([f64; 2], f64) {
    let vs = polygon.vertices();
    let ext = |c: usize| {
        let lo = vs.iter().map(|v| v[c] as f64).fold(f64::INFINITY, f64::min);
        let hi = vs.iter().map(|v| v[c] as f64).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let ((x0, x1), (y0, y1)) = (ext(0), ext(1));
    let span = (x1 - x0).max(y1 - y0) * 1.04;
    let centre = [0.5 * (x0 + x1), 0.5 * (y0 + y1)];
    ([centre[0] - 0.5 * span, centre[1] - 0.5 * span], size as f64 / span)
}
