//! Reflexive lattice polygons, their anticanonical section bases and the
//! reference potential `w0 = log Σ_vertices exp<p, x>`.
//!
//! Lattice points `m` of the moment polygon index sections; a point `x` of the
//! real log-coordinate plane pairs with them through `<m, x>`. A symmetry `A`
//! acts on lattice points by `m ↦ A m` and on log coordinates by `x ↦ Aᵀ x`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::moments::GibbsFamily;
use crate::sym2::Sym2;

pub type Lattice = [i64; 2];

/// Integer 2×2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntMat2(pub [[i64; 2]; 2]);

impl IntMat2 {
    pub const IDENTITY: IntMat2 = IntMat2([[1, 0], [0, 1]]);

    pub fn det(&self) -> i64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    pub fn apply(&self, m: Lattice) -> Lattice {
        let [[a, b], [c, d]] = self.0;
        [a * m[0] + b * m[1], c * m[0] + d * m[1]]
    }

    /// Action on log coordinates, `x ↦ Aᵀ x`.
    pub fn apply_dual(&self, x: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.0;
        [a as f64 * x[0] + c as f64 * x[1], b as f64 * x[0] + d as f64 * x[1]]
    }

    pub fn compose(&self, other: &IntMat2) -> IntMat2 {
        let [[a, b], [c, d]] = self.0;
        let [[e, f], [g, h]] = other.0;
        IntMat2([[a * e + b * g, a * f + b * h], [c * e + d * g, c * f + d * h]])
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn cross(a: Lattice, b: Lattice) -> i64 {
    a[0] * b[1] - a[1] * b[0]
}

fn pair(m: Lattice, x: [f64; 2]) -> f64 {
    m[0] as f64 * x[0] + m[1] as f64 * x[1]
}

/// A reflexive polygon `Δ = {y : <y, v_i> ≥ -1}` given by its fan rays `v_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FanoPolygon {
    rays: Vec<Lattice>,
    vertices: Vec<Lattice>,
    symmetries: Vec<IntMat2>,
}

impl FanoPolygon {
    pub fn from_rays(rays: &[Lattice]) -> Result<Self> {
        if rays.len() < 3 {
            return Err(Error::TooFewRays(rays.len()));
        }
        for &[a, b] in rays {
            if gcd(a, b) != 1 {
                return Err(Error::NonPrimitiveRay(a, b));
            }
        }
        let n = rays.len();
        // Consecutive rays must turn left by less than π, and wind exactly once.
        let mut winding = 0.0;
        for i in 0..n {
            let (a, b) = (rays[i], rays[(i + 1) % n]);
            let c = cross(a, b);
            let d = a[0] * b[0] + a[1] * b[1];
            if c < 0 || (c == 0 && d > 0) {
                return Err(Error::NotCounterClockwise);
            }
            if c == 0 {
                return Err(Error::NotSpanning);
            }
            winding += (c as f64).atan2(d as f64);
        }
        if (winding - std::f64::consts::TAU).abs() > 1e-9 {
            return Err(if winding < std::f64::consts::TAU {
                Error::NotSpanning
            } else {
                Error::NotCounterClockwise
            });
        }
        let mut vertices = Vec::with_capacity(n);
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, b) = (rays[i], rays[j]);
            let d = cross(a, b);
            let (nx, ny) = (a[1] - b[1], b[0] - a[0]);
            if nx % d != 0 || ny % d != 0 {
                return Err(Error::NonReflexive(i, j));
            }
            vertices.push([nx / d, ny / d]);
        }
        for (k, &v) in rays.iter().enumerate() {
            if vertices.iter().any(|&p| p[0] * v[0] + p[1] * v[1] < -1) {
                return Err(Error::RedundantRay(k));
            }
        }
        // A ray is a genuine facet only if its two adjacent vertices differ.
        for i in 0..n {
            if vertices[i] == vertices[(i + n - 1) % n] {
                return Err(Error::RedundantRay(i));
            }
        }
        let symmetries = symmetry_group(&vertices);
        Ok(Self { rays: rays.to_vec(), vertices, symmetries })
    }

    pub fn hexagon() -> Self {
        Self::from_rays(&[[1, 0], [1, 1], [0, 1], [-1, 0], [-1, -1], [0, -1]]).unwrap()
    }

    pub fn projective_plane() -> Self {
        Self::from_rays(&[[1, 0], [0, 1], [-1, -1]]).unwrap()
    }

    /// ℙ² blown up at one point.
    pub fn one_point_blowup() -> Self {
        Self::from_rays(&[[1, 0], [0, 1], [-1, -1], [0, -1]]).unwrap()
    }

    /// Parses one ray per line (two integers); `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rays = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("expected two integers, found {} fields", fields.len()),
                });
            }
            let mut ray = [0i64; 2];
            for (slot, f) in ray.iter_mut().zip(&fields) {
                *slot = f.parse().map_err(|_| Error::Parse {
                    line: k + 1,
                    msg: format!("`{f}` is not an integer"),
                })?;
            }
            rays.push(ray);
        }
        Self::from_rays(&rays)
    }

    pub fn rays(&self) -> &[Lattice] {
        &self.rays
    }

    /// Vertices of Δ in counterclockwise order; vertex `i` lies on facets `i` and `i + 1`.
    pub fn vertices(&self) -> &[Lattice] {
        &self.vertices
    }

    pub fn symmetries(&self) -> &[IntMat2] {
        &self.symmetries
    }

    pub fn twice_area(&self) -> i64 {
        let n = self.vertices.len();
        (0..n).map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n])).sum()
    }

    pub fn area(&self) -> f64 {
        self.twice_area() as f64 / 2.0
    }

    /// `true` when `y` satisfies every facet inequality strictly.
    pub fn contains_strictly(&self, y: [f64; 2]) -> bool {
        self.facet_slack(y) > 0.0
    }

    /// `min_i <y, v_i> + 1`; positive inside Δ.
    pub fn facet_slack(&self, y: [f64; 2]) -> f64 {
        self.rays.iter().map(|&v| pair(v, y) + 1.0).fold(f64::INFINITY, f64::min)
    }

    /// Support function `max_p <p, x>` over the vertices.
    pub fn support(&self, x: [f64; 2]) -> f64 {
        self.vertices.iter().map(|&p| pair(p, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lattice points of the dilate `rΔ`, lexicographically sorted.
    pub fn lattice_points(&self, r: u32) -> Vec<Lattice> {
        let r = r as i64;
        let (lo, hi) = self.vertices.iter().fold(([i64::MAX; 2], [i64::MIN; 2]), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        });
        let mut pts = Vec::new();
        for a in r * lo[0]..=r * hi[0] {
            for b in r * lo[1]..=r * hi[1] {
                if self.rays.iter().all(|v| a * v[0] + b * v[1] >= -r) {
                    pts.push([a, b]);
                }
            }
        }
        pts
    }

    /// Lattice points on the boundary of Δ, vertices included.
    pub fn boundary_points(&self) -> Vec<Lattice> {
        self.lattice_points(1).into_iter().filter(|m| self.rays.iter().any(|v| m[0] * v[0] + m[1] * v[1] == -1)).collect()
    }

    /// `w0 = log Σ_vertices exp<p, x>` as a log-sum-exp family.
    pub fn reference_family(&self) -> GibbsFamily {
        GibbsFamily::new(
            self.vertices.iter().map(|p| [p[0] as f64, p[1] as f64]).collect(),
            vec![0.0; self.vertices.len()],
            1.0,
        )
    }

    /// Value, gradient and Hessian of the reference potential at `x`.
    pub fn reference_potential(&self, x: [f64; 2]) -> (f64, [f64; 2], Sym2) {
        let k = self.reference_family().kaehler_data(x);
        (k.u, k.grad, k.hess)
    }
}

impl fmt::Display for FanoPolygon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.rays {
            writeln!(f, "{} {}", v[0], v[1])?;
        }
        Ok(())
    }
}

fn symmetry_group(vertices: &[Lattice]) -> Vec<IntMat2> {
    let mut sorted = vertices.to_vec();
    sorted.sort();
    let preserves = |a: &IntMat2| {
        let mut img: Vec<Lattice> = vertices.iter().map(|&p| a.apply(p)).collect();
        img.sort();
        img == sorted
    };
    let entries = [-1i64, 0, 1];
    let mut group = Vec::new();
    for &a in &entries {
        for &b in &entries {
            for &c in &entries {
                for &d in &entries {
                    let m = IntMat2([[a, b], [c, d]]);
                    if m.det().abs() == 1 && preserves(&m) {
                        group.push(m);
                    }
                }
            }
        }
    }
    // Close under composition; products of symmetries are symmetries.
    loop {
        let mut added = false;
        let snapshot = group.clone();
        for a in &snapshot {
            for b in &snapshot {
                let c = a.compose(b);
                if !group.contains(&c) {
                    group.push(c);
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }
    group.sort();
    group
}

/// Lattice points of `rΔ` with their partition into symmetry orbits.
#[derive(Clone, Debug)]
pub struct SectionBasis {
    rank: u32,
    points: Vec<Lattice>,
    orbit_of: Vec<usize>,
    orbits: Vec<Vec<usize>>,
}

impl SectionBasis {
    pub fn new(polygon: &FanoPolygon, rank: u32) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidConfig("rank must be at least 1".into()));
        }
        let points = polygon.lattice_points(rank);
        let index: HashMap<Lattice, usize> = points.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let mut orbit_of = vec![usize::MAX; points.len()];
        let mut orbits = Vec::new();
        // Points are sorted, so the first unvisited point is its orbit's minimum.
        for i in 0..points.len() {
            if orbit_of[i] != usize::MAX {
                continue;
            }
            let id = orbits.len();
            let mut members: Vec<usize> = polygon
                .symmetries()
                .iter()
                .map(|a| index[&a.apply(points[i])])
                .collect();
            members.sort_unstable();
            members.dedup();
            for &j in &members {
                orbit_of[j] = id;
            }
            orbits.push(members);
        }
        Ok(Self { rank, points, orbit_of, orbits })
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Lattice] {
        &self.points
    }

    pub fn orbit_of(&self, point: usize) -> usize {
        self.orbit_of[point]
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }

    pub fn n_orbits(&self) -> usize {
        self.orbits.len()
    }

    /// Lexicographically smallest member of an orbit.
    pub fn representative(&self, orbit: usize) -> Lattice {
        self.points[self.orbits[orbit][0]]
    }

    pub fn orbit_containing(&self, m: Lattice) -> Option<usize> {
        self.points.binary_search(&m).ok().map(|i| self.orbit_of[i])
    }
}
