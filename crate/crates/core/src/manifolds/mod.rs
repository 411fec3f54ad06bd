//! Compact model manifolds: the circle, flat tori, the unit 2-sphere and
//! triangle meshes. Each model knows its geodesic distance, volumes of
//! geodesic balls, quadrature rules and how to draw uniform points.

mod mesh;
mod quadrature;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seeded_rng;

pub use mesh::TriMesh;
pub use quadrature::gauss_legendre;

/// Small 3-vector helpers shared with the mesh eigensolver.
pub(crate) mod geom {
    pub(crate) use super::mesh::{cross, dot, norm};
}

const SPHERE_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Circle,
    FlatTorus,
    Sphere2,
    Mesh,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Circle => "circle",
            ModelKind::FlatTorus => "flat torus",
            ModelKind::Sphere2 => "sphere",
            ModelKind::Mesh => "mesh",
        }
    }
}

/// A point of a model manifold.
///
/// Circle points are arclength in `[0, L)`, torus points have one coordinate
/// per axis in `[0, L_i)`, sphere points are unit 3-vectors and mesh points
/// are vertex indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Point {
    Circle(f64),
    Torus(Vec<f64>),
    Sphere([f64; 3]),
    Vertex(usize),
}

impl Point {
    /// Sphere point from an arbitrary nonzero 3-vector (renormalized).
    pub fn sphere(x: f64, y: f64, z: f64) -> Point {
        Point::Sphere(mesh::normalize([x, y, z]))
    }

    /// Sphere point from colatitude `theta` and longitude `phi`.
    pub fn sphere_angles(theta: f64, phi: f64) -> Point {
        let s = theta.sin();
        Point::sphere(s * phi.cos(), s * phi.sin(), theta.cos())
    }

    pub(crate) fn coords(&self) -> &[f64] {
        match self {
            Point::Circle(s) => std::slice::from_ref(s),
            Point::Torus(v) => v,
            Point::Sphere(v) => v,
            Point::Vertex(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Geometry {
    Circle { length: f64 },
    FlatTorus { lengths: Vec<f64> },
    Sphere2,
    Mesh(Arc<TriMesh>),
}

/// Empirical constants of the ball-volume comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallConstants {
    /// Lower constant: `|B(x, ρ)| ≥ a1 ρ^d` on the sampled grid.
    pub a1: f64,
    /// Upper constant: `|B(x, ρ)| ≤ a2 ρ^d` on the sampled grid.
    pub a2: f64,
    /// Doubling constant: `|B(x, λ)| ≤ (λ/σ)^d c |B(x, σ)|` for sampled `σ < λ`.
    pub c: f64,
    /// Cover multiplicity bound `12^d c a2 / a1`.
    pub n_m: f64,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    geometry: Geometry,
    volume: f64,
    injectivity_radius: f64,
    diameter: f64,
}

impl ManifoldModel {
    pub fn circle(length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid(format!("circle length must be positive, got {length}")));
        }
        Ok(ManifoldModel {
            geometry: Geometry::Circle { length },
            volume: length,
            injectivity_radius: length / 2.0,
            diameter: length / 2.0,
        })
    }

    pub fn flat_torus(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() || lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("torus side lengths must be positive and nonempty"));
        }
        let volume = lengths.iter().product();
        let inj = lengths.iter().copied().fold(f64::INFINITY, f64::min) / 2.0;
        let diameter = lengths.iter().map(|l| l * l / 4.0).sum::<f64>().sqrt();
        Ok(ManifoldModel {
            geometry: Geometry::FlatTorus { lengths },
            volume,
            injectivity_radius: inj,
            diameter,
        })
    }

    pub fn sphere() -> Self {
        ManifoldModel {
            geometry: Geometry::Sphere2,
            volume: 4.0 * PI,
            injectivity_radius: PI,
            diameter: PI,
        }
    }

    /// Wraps a triangle mesh. The injectivity radius of a mesh is not
    /// intrinsic; it is `min(diameter / 4, override)`.
    pub fn mesh(mesh: TriMesh, injectivity_override: Option<f64>) -> Result<Self> {
        let diameter = mesh.diameter_estimate();
        let mut inj = diameter / 4.0;
        if let Some(r) = injectivity_override {
            if !(r > 0.0) {
                return Err(Error::invalid("injectivity radius override must be positive"));
            }
            inj = inj.min(r);
        }
        Ok(ManifoldModel {
            volume: mesh.total_area(),
            geometry: Geometry::Mesh(Arc::new(mesh)),
            injectivity_radius: inj,
            diameter,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.geometry {
            Geometry::Circle { .. } => ModelKind::Circle,
            Geometry::FlatTorus { .. } => ModelKind::FlatTorus,
            Geometry::Sphere2 => ModelKind::Sphere2,
            Geometry::Mesh(_) => ModelKind::Mesh,
        }
    }

    pub fn dimension(&self) -> usize {
        match &self.geometry {
            Geometry::Circle { .. } => 1,
            Geometry::FlatTorus { lengths } => lengths.len(),
            Geometry::Sphere2 | Geometry::Mesh(_) => 2,
        }
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn injectivity_radius(&self) -> f64 {
        self.injectivity_radius
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn circle_length(&self) -> Option<f64> {
        match self.geometry {
            Geometry::Circle { length } => Some(length),
            _ => None,
        }
    }

    pub fn torus_lengths(&self) -> Option<&[f64]> {
        match &self.geometry {
            Geometry::FlatTorus { lengths } => Some(lengths),
            _ => None,
        }
    }

    pub fn trimesh(&self) -> Option<&TriMesh> {
        match &self.geometry {
            Geometry::Mesh(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self.geometry, Geometry::Mesh(_))
    }

    /// Short human-readable identifier used in reports.
    pub fn label(&self) -> String {
        match &self.geometry {
            Geometry::Circle { length } => format!("circle(L={length})"),
            Geometry::FlatTorus { lengths } => {
                let ls: Vec<String> = lengths.iter().map(|l| l.to_string()).collect();
                format!("flat_torus({})", ls.join("x"))
            }
            Geometry::Sphere2 => "sphere2".to_string(),
            Geometry::Mesh(m) => {
                format!("mesh({} vertices, {} triangles)", m.vertex_count(), m.triangles().len())
            }
        }
    }

    /// Tolerance used when verifying packings.
    pub fn packing_tolerance(&self) -> f64 {
        match &self.geometry {
            Geometry::Mesh(m) => m.max_edge_length(),
            _ => 1e-9 * self.diameter,
        }
    }

    pub fn validate_point(&self, x: &Point) -> Result<()> {
        let ok = match (&self.geometry, x) {
            (Geometry::Circle { length }, Point::Circle(s)) => s.is_finite() && *s >= 0.0 && s < length,
            (Geometry::FlatTorus { lengths }, Point::Torus(v)) => {
                v.len() == lengths.len() && v.iter().zip(lengths).all(|(c, l)| c.is_finite() && *c >= 0.0 && c < l)
            }
            (Geometry::Sphere2, Point::Sphere(v)) => {
                v.iter().all(|c| c.is_finite()) && (mesh::norm(*v) - 1.0).abs() <= SPHERE_NORM_TOL
            }
            (Geometry::Mesh(m), Point::Vertex(i)) => *i < m.vertex_count(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{x:?} is not a point of the {}",
                self.kind().name()
            )))
        }
    }

    /// Geodesic distance; graph shortest path on meshes.
    pub fn geodesic_distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        Ok(self.dist(x, y))
    }

    /// Unchecked distance between two points already known to be valid.
    pub(crate) fn dist(&self, x: &Point, y: &Point) -> f64 {
        match (&self.geometry, x, y) {
            (Geometry::Circle { length }, Point::Circle(a), Point::Circle(b)) => periodic_gap(a - b, *length),
            (Geometry::FlatTorus { lengths }, Point::Torus(a), Point::Torus(b)) => a
                .iter()
                .zip(b)
                .zip(lengths)
                .map(|((p, q), l)| periodic_gap(p - q, *l).powi(2))
                .sum::<f64>()
                .sqrt(),
            (Geometry::Sphere2, Point::Sphere(a), Point::Sphere(b)) => sphere_angle(*a, *b),
            (Geometry::Mesh(m), Point::Vertex(a), Point::Vertex(b)) => m.path_distance(*a, *b),
            _ => f64::NAN,
        }
    }

    /// Volume of the closed geodesic ball `B(x, rho)`.
    pub fn ball_volume(&self, x: &Point, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::invalid(format!("ball radius must be positive, got {rho}")));
        }
        self.validate_point(x)?;
        Ok(match &self.geometry {
            Geometry::Circle { length } => (2.0 * rho).min(*length),
            Geometry::FlatTorus { lengths } => torus_ball_volume(lengths, rho),
            Geometry::Sphere2 => 2.0 * PI * (1.0 - rho.min(PI).cos()),
            Geometry::Mesh(m) => {
                let Point::Vertex(v) = x else { unreachable!() };
                let mass = m.lumped_mass();
                let mut total = 0.0;
                let mut scratch = vec![f64::INFINITY; m.vertex_count()];
                m.dijkstra_visit(&[*v], rho, &mut scratch, |w, _| total += mass[w]);
                total
            }
        })
    }

    /// Fits the ball-volume constants over a grid of radii. Analytic models
    /// are homogeneous so one center suffices; meshes use 32 seeded vertices.
    pub fn ball_constants(&self, rho_grid: &[f64]) -> Result<BallConstants> {
        if rho_grid.is_empty() {
            return Err(Error::invalid("empty radius grid"));
        }
        if let Some(r) = rho_grid.iter().find(|r| !(**r > 0.0 && **r < self.injectivity_radius)) {
            return Err(Error::invalid(format!(
                "radius {r} outside (0, injectivity radius {})",
                self.injectivity_radius
            )));
        }
        let centers = match &self.geometry {
            Geometry::Mesh(_) => self.candidate_pool(32, 0)?,
            _ => vec![self.base_point()],
        };
        let d = self.dimension() as i32;
        let mut grid = rho_grid.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let (mut a1, mut a2, mut c) = (f64::INFINITY, 0.0f64, 1.0f64);
        for x in &centers {
            let vols: Vec<f64> = grid.iter().map(|r| self.ball_volume(x, *r)).collect::<Result<_>>()?;
            for (r, v) in grid.iter().zip(&vols) {
                let ratio = v / r.powi(d);
                a1 = a1.min(ratio);
                a2 = a2.max(ratio);
            }
            for i in 0..grid.len() {
                for j in (i + 1)..grid.len() {
                    let (sigma, lambda) = (grid[i], grid[j]);
                    let needed = vols[j] / ((lambda / sigma).powi(d) * vols[i]);
                    c = c.max(needed);
                }
            }
        }
        if !(a1 > 0.0) {
            return Err(Error::invalid(
                "ball volume vanished on the grid (radius below mesh resolution)",
            ));
        }
        let n_m = 12f64.powi(d) * c * a2 / a1;
        Ok(BallConstants { a1, a2, c, n_m })
    }

    /// A canonical point of the model (origin, north pole, vertex 0).
    pub fn base_point(&self) -> Point {
        match &self.geometry {
            Geometry::Circle { .. } => Point::Circle(0.0),
            Geometry::FlatTorus { lengths } => Point::Torus(vec![0.0; lengths.len()]),
            Geometry::Sphere2 => Point::Sphere([0.0, 0.0, 1.0]),
            Geometry::Mesh(_) => Point::Vertex(0),
        }
    }

    /// Circle: equispaced trapezoid. Torus: tensor trapezoid. Sphere:
    /// Gauss–Legendre in `cos θ` times a `2·resolution` trapezoid in `φ`.
    /// Mesh: vertices with lumped masses.
    pub fn quadrature(&self, resolution: usize) -> Result<QuadratureRule> {
        if resolution == 0 {
            return Err(Error::invalid("quadrature resolution must be >= 1"));
        }
        Ok(match &self.geometry {
            Geometry::Circle { length } => {
                let h = length / resolution as f64;
                QuadratureRule {
                    nodes: (0..resolution).map(|i| Point::Circle(i as f64 * h)).collect(),
                    weights: vec![h; resolution],
                }
            }
            Geometry::FlatTorus { lengths } => {
                let d = lengths.len();
                let total = resolution.pow(d as u32);
                let w: f64 = lengths.iter().map(|l| l / resolution as f64).product();
                let nodes = (0..total)
                    .map(|mut flat| {
                        let mut c = vec![0.0; d];
                        for k in (0..d).rev() {
                            c[k] = (flat % resolution) as f64 * lengths[k] / resolution as f64;
                            flat /= resolution;
                        }
                        Point::Torus(c)
                    })
                    .collect();
                QuadratureRule {
                    nodes,
                    weights: vec![w; total],
                }
            }
            Geometry::Sphere2 => {
                let (zs, wz) = gauss_legendre(resolution);
                let nphi = 2 * resolution;
                let wphi = 2.0 * PI / nphi as f64;
                let mut nodes = Vec::with_capacity(resolution * nphi);
                let mut weights = Vec::with_capacity(resolution * nphi);
                for (z, w) in zs.iter().zip(&wz) {
                    let s = (1.0 - z * z).max(0.0).sqrt();
                    for j in 0..nphi {
                        let phi = j as f64 * wphi;
                        nodes.push(Point::sphere(s * phi.cos(), s * phi.sin(), *z));
                        weights.push(w * wphi);
                    }
                }
                QuadratureRule { nodes, weights }
            }
            Geometry::Mesh(m) => QuadratureRule {
                nodes: (0..m.vertex_count()).map(Point::Vertex).collect(),
                weights: m.lumped_mass().to_vec(),
            },
        })
    }

    /// `n` points uniform with respect to the Riemannian measure,
    /// deterministic in `seed`. Meshes return all vertices once `n` reaches
    /// the vertex count, otherwise a mass-weighted subsample.
    pub fn candidate_pool(&self, n: usize, seed: u64) -> Result<Vec<Point>> {
        if n == 0 {
            return Err(Error::invalid("candidate pool size must be >= 1"));
        }
        let mut rng = seeded_rng(seed);
        Ok(match &self.geometry {
            Geometry::Circle { length } => (0..n).map(|_| Point::Circle(rng.random_range(0.0..*length))).collect(),
            Geometry::FlatTorus { lengths } => (0..n)
                .map(|_| Point::Torus(lengths.iter().map(|l| rng.random_range(0.0..*l)).collect()))
                .collect(),
            Geometry::Sphere2 => (0..n)
                .map(|_| loop {
                    let v: [f64; 3] = [
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    ];
                    if mesh::norm(v) > 1e-8 {
                        break Point::Sphere(mesh::normalize(v));
                    }
                })
                .collect(),
            Geometry::Mesh(m) => {
                let nv = m.vertex_count();
                if n >= nv {
                    (0..nv).map(Point::Vertex).collect()
                } else {
                    let mass = m.lumped_mass();
                    let idx: Vec<usize> = (0..nv).collect();
                    let mut chosen: Vec<usize> = idx
                        .choose_multiple_weighted(&mut rng, n, |v| mass[*v])
                        .map_err(|e| Error::invalid(format!("weighted sampling failed: {e}")))?
                        .copied()
                        .collect();
                    chosen.sort_unstable();
                    chosen.into_iter().map(Point::Vertex).collect()
                }
            }
        })
    }
}

/// Length of the shorter way around a circle of circumference `length`.
fn periodic_gap(delta: f64, length: f64) -> f64 {
    let d = delta.abs() % length;
    d.min(length - d)
}

fn sphere_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    mesh::norm(mesh::cross(a, b)).atan2(mesh::dot(a, b))
}

fn unit_ball_volume(d: usize) -> f64 {
    // V_d = π^{d/2} / Γ(d/2 + 1) via V_d = V_{d-2} · 2π / d
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Volume of `{y : |x - y|_min-image ≤ rho}` in the periodic box.
fn torus_ball_volume(lengths: &[f64], rho: f64) -> f64 {
    let d = lengths.len();
    if rho <= 0.0 {
        return 0.0;
    }
    let half_diag2: f64 = lengths.iter().map(|l| l * l / 4.0).sum();
    if rho * rho >= half_diag2 {
        return lengths.iter().product();
    }
    if lengths.iter().all(|l| rho <= l / 2.0) {
        return unit_ball_volume(d) * rho.powi(d as i32);
    }
    match d {
        1 => (2.0 * rho).min(lengths[0]),
        2 => {
            let (l1, l2) = (lengths[0], lengths[1]);
            let a = rho.min(l1 / 2.0);
            let x_cap = if rho > l2 / 2.0 {
                (rho * rho - l2 * l2 / 4.0).sqrt()
            } else {
                0.0
            };
            let xs = x_cap.min(a);
            let f = |x: f64| x * (rho * rho - x * x).max(0.0).sqrt() + rho * rho * (x / rho).clamp(-1.0, 1.0).asin();
            2.0 * (l2 * xs + f(a) - f(xs))
        }
        _ => {
            // slice along the first axis
            let a = rho.min(lengths[0] / 2.0);
            let (gx, gw) = gauss_legendre(8);
            let panels = 256;
            let h = 2.0 * a / panels as f64;
            let mut total = 0.0;
            for p in 0..panels {
                let mid = -a + (p as f64 + 0.5) * h;
                for (x, w) in gx.iter().zip(&gw) {
                    let t = mid + 0.5 * h * x;
                    let r = (rho * rho - t * t).max(0.0).sqrt();
                    total += 0.5 * h * w * torus_ball_volume(&lengths[1..], r);
                }
            }
            total
        }
    }
}
