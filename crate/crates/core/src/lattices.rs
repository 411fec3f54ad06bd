//! Metric `ρ`-lattices built by greedy maximal packing.
//!
//! A lattice here follows the normative contract: points pairwise at
//! distance `≥ ρ` (so the balls `B(x_j, ρ/2)` are disjoint) and, by
//! maximality, the balls `B(x_j, ρ)` cover the test set. The
//! `(ρ/4-disjoint, ρ/2-cover)` variant is the same construction at `ρ/2`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifolds::{ManifoldModel, ModelKind, Point};
use crate::{derive_seed, seeded_rng};

/// Relative slack (of the diameter) below `ρ` at which a candidate still
/// counts as separated.
const ACCEPT_RTOL: f64 = 1e-12;

/// Greedy sweep order over the candidate pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatticeOrder {
    /// Seed-shuffled pool order.
    #[default]
    Shuffled,
    /// Farthest-point sampling started from the seed-chosen pool point.
    FarthestPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeDiagnostics {
    pub packing_ok: bool,
    /// Smallest pairwise distance (`inf` for a single point).
    pub min_separation: f64,
    /// Largest distance from a test point to its nearest lattice point.
    pub covering_radius: f64,
    /// Largest number of lattice points within `ρ` of a test point.
    pub multiplicity: usize,
    pub candidate_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Lattice {
    manifold: ManifoldModel,
    rho: f64,
    points: Vec<Point>,
    order: LatticeOrder,
    diagnostics: LatticeDiagnostics,
}

#[derive(Serialize)]
struct LatticeExport<'a> {
    rho: f64,
    points: &'a [Point],
    diagnostics: &'a LatticeDiagnostics,
    seed: u64,
    order: LatticeOrder,
}

impl Lattice {
    /// Greedy maximal `ρ`-packing over a seed-shuffled pool; diagnostics use
    /// the pool as the test set.
    pub fn build(m: &ManifoldModel, rho: f64, pool: &[Point], seed: u64) -> Result<Self> {
        Self::build_ordered(m, rho, pool, seed, LatticeOrder::Shuffled)
    }

    pub fn build_ordered(m: &ManifoldModel, rho: f64, pool: &[Point], seed: u64, order: LatticeOrder) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::invalid(format!("lattice density must be positive, got {rho}")));
        }
        if pool.is_empty() {
            return Err(Error::invalid("empty candidate pool"));
        }
        for p in pool {
            m.validate_point(p)?;
        }
        let mut sweep: Vec<usize> = (0..pool.len()).collect();
        sweep.shuffle(&mut seeded_rng(seed));
        // distances that equal ρ up to roundoff are admitted
        let admit = rho - ACCEPT_RTOL * m.diameter();
        let chosen = match (m.kind(), order) {
            (ModelKind::Mesh, LatticeOrder::Shuffled) => mesh_greedy(m, admit, pool, &sweep),
            (ModelKind::Mesh, LatticeOrder::FarthestPoint) => mesh_fps(m, admit, pool, sweep[0]),
            (_, LatticeOrder::Shuffled) => analytic_greedy(m, admit, pool, &sweep),
            (_, LatticeOrder::FarthestPoint) => analytic_fps(m, admit, pool, sweep[0]),
        };
        let points: Vec<Point> = chosen.into_iter().map(|i| pool[i].clone()).collect();
        let mut lat = Lattice {
            manifold: m.clone(),
            rho,
            points,
            order,
            diagnostics: placeholder_diagnostics(seed, pool.len()),
        };
        let mut diag = lat.diagnostics(pool)?;
        diag.seed = seed;
        diag.candidate_count = pool.len();
        lat.diagnostics = diag;
        Ok(lat)
    }

    /// Wraps a given point set, with diagnostics against `test_points`.
    pub fn from_points(m: &ManifoldModel, rho: f64, points: Vec<Point>, test_points: &[Point]) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::invalid(format!("lattice density must be positive, got {rho}")));
        }
        if points.is_empty() {
            return Err(Error::invalid("a lattice needs at least one point"));
        }
        for p in &points {
            m.validate_point(p)?;
        }
        let mut lat = Lattice {
            manifold: m.clone(),
            rho,
            points,
            order: LatticeOrder::Shuffled,
            diagnostics: placeholder_diagnostics(0, 0),
        };
        lat.diagnostics = lat.diagnostics(test_points)?;
        Ok(lat)
    }

    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn order(&self) -> LatticeOrder {
        self.order
    }

    /// Diagnostics recorded at construction.
    pub fn stored_diagnostics(&self) -> &LatticeDiagnostics {
        &self.diagnostics
    }

    /// Recomputes packing, covering radius and cover multiplicity against
    /// the given test points.
    pub fn diagnostics(&self, test_points: &[Point]) -> Result<LatticeDiagnostics> {
        if test_points.is_empty() {
            return Err(Error::invalid("no test points for lattice diagnostics"));
        }
        for t in test_points {
            self.manifold.validate_point(t)?;
        }
        let m = &self.manifold;
        let (min_sep, covering, multiplicity) = if m.kind() == ModelKind::Mesh {
            mesh_diagnostics(m, self.rho, &self.points, test_points)
        } else {
            analytic_diagnostics(m, self.rho, &self.points, test_points)
        };
        Ok(LatticeDiagnostics {
            packing_ok: min_sep >= self.rho - m.packing_tolerance(),
            min_separation: min_sep,
            covering_radius: covering,
            multiplicity,
            candidate_count: self.diagnostics.candidate_count,
            test_count: test_points.len(),
            seed: self.diagnostics.seed,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(LatticeExport {
            rho: self.rho,
            points: &self.points,
            diagnostics: &self.diagnostics,
            seed: self.diagnostics.seed,
            order: self.order,
        })
        .expect("lattice serializes")
    }

    /// One point per line; columns depend on the model.
    pub fn to_csv(&self) -> String {
        let header = match self.manifold.kind() {
            ModelKind::Circle => "s".to_string(),
            ModelKind::FlatTorus => (1..=self.manifold.dimension())
                .map(|i| format!("x{i}"))
                .collect::<Vec<_>>()
                .join(","),
            ModelKind::Sphere2 => "x,y,z".to_string(),
            ModelKind::Mesh => "vertex".to_string(),
        };
        let mut out = header + "\n";
        for p in &self.points {
            let row = match p {
                Point::Vertex(v) => v.to_string(),
                _ => p.coords().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            };
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

fn placeholder_diagnostics(seed: u64, candidates: usize) -> LatticeDiagnostics {
    LatticeDiagnostics {
        packing_ok: false,
        min_separation: 0.0,
        covering_radius: f64::INFINITY,
        multiplicity: 0,
        candidate_count: candidates,
        test_count: 0,
        seed,
    }
}

/// Default candidate pool size `max(10⁴, 50 (diameter/ρ)^d)`.
pub fn default_pool_size(m: &ManifoldModel, rho: f64) -> usize {
    let d = m.dimension() as i32;
    let scaled = 50.0 * (m.diameter() / rho).powi(d);
    (scaled.min(5e7) as usize).max(10_000)
}

/// Observed extremes of lattice cardinality over seeded constructions.
///
/// `min_card` upper-bounds the infimum over all `ρ`-lattices and `max_card`
/// lower-bounds the supremum; neither is certified.
#[derive(Debug, Clone)]
pub struct LatticeExtremes {
    pub min_card: usize,
    pub max_card: usize,
    /// Cardinalities of the shuffled trials, then the farthest-point run.
    pub cardinalities: Vec<usize>,
    pub min_lattice: Lattice,
    pub max_lattice: Lattice,
}

/// Builds `trials` shuffled lattices (each on its own seeded pool) plus one
/// farthest-point lattice and reports the smallest and largest.
pub fn lattice_extremes(m: &ManifoldModel, rho: f64, trials: usize, base_seed: u64) -> Result<LatticeExtremes> {
    if trials == 0 {
        return Err(Error::invalid("lattice_extremes needs at least one trial"));
    }
    let pool_size = default_pool_size(m, rho);
    let mut runs: Vec<(usize, LatticeOrder)> = (0..trials).map(|t| (t, LatticeOrder::Shuffled)).collect();
    runs.push((trials, LatticeOrder::FarthestPoint));
    let lattices: Vec<Lattice> = runs
        .par_iter()
        .map(|&(t, order)| {
            let seed = derive_seed(base_seed, t as u64);
            let pool = m.candidate_pool(pool_size, seed)?;
            Lattice::build_ordered(m, rho, &pool, seed, order)
        })
        .collect::<Result<_>>()?;
    let cardinalities: Vec<usize> = lattices.iter().map(Lattice::len).collect();
    // first occurrence wins on ties so the choice is schedule independent
    let argmin = (0..lattices.len()).min_by_key(|&i| (cardinalities[i], i)).unwrap();
    let argmax = (0..lattices.len())
        .max_by_key(|&i| (cardinalities[i], std::cmp::Reverse(i)))
        .unwrap();
    Ok(LatticeExtremes {
        min_card: cardinalities[argmin],
        max_card: cardinalities[argmax],
        min_lattice: lattices[argmin].clone(),
        max_lattice: lattices[argmax].clone(),
        cardinalities,
    })
}

/// Spatial hash over an embedding of the analytic models in which geodesic
/// balls map to boxes: arclength (circle), periodic coordinates (torus) or
/// the unit sphere in R³ (chord metric).
struct GridIndex {
    dims: usize,
    width: [f64; 3],
    /// Cell count per periodic axis, 0 for the bounded sphere axes.
    periodic_cells: [i64; 3],
    sphere: bool,
    map: HashMap<u64, Vec<u32>>,
    brute: Option<Vec<u32>>,
}

impl GridIndex {
    fn new(m: &ManifoldModel, cell: f64) -> Self {
        let mut idx = GridIndex {
            dims: 0,
            width: [1.0; 3],
            periodic_cells: [0; 3],
            sphere: false,
            map: HashMap::new(),
            brute: None,
        };
        let periodic = |l: f64| {
            let n = ((l / cell).floor() as i64).clamp(1, 1 << 20);
            (l / n as f64, n)
        };
        match m.kind() {
            ModelKind::Circle => {
                idx.dims = 1;
                let (w, n) = periodic(m.circle_length().unwrap());
                idx.width[0] = w;
                idx.periodic_cells[0] = n;
            }
            ModelKind::FlatTorus => {
                let lengths = m.torus_lengths().unwrap();
                if lengths.len() > 3 {
                    idx.brute = Some(Vec::new());
                } else {
                    idx.dims = lengths.len();
                    for (k, l) in lengths.iter().enumerate() {
                        let (w, n) = periodic(*l);
                        idx.width[k] = w;
                        idx.periodic_cells[k] = n;
                    }
                }
            }
            ModelKind::Sphere2 => {
                idx.dims = 3;
                idx.sphere = true;
                let w = cell.clamp(2.0 / (1 << 19) as f64, 2.0);
                idx.width = [w; 3];
            }
            ModelKind::Mesh => unreachable!("meshes use graph searches"),
        }
        idx
    }

    fn cell_of(&self, c: &[f64], k: usize) -> i64 {
        if self.sphere {
            ((c[k] + 1.0) / self.width[k]).floor() as i64
        } else {
            ((c[k] / self.width[k]).floor() as i64).rem_euclid(self.periodic_cells[k])
        }
    }

    fn key(cells: &[i64]) -> u64 {
        cells
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, c)| acc | ((*c as u64 & 0x1F_FFFF) << (21 * k)))
    }

    fn insert(&mut self, id: u32, p: &Point) {
        if let Some(all) = self.brute.as_mut() {
            all.push(id);
            return;
        }
        let c = p.coords();
        let cells: Vec<i64> = (0..self.dims).map(|k| self.cell_of(c, k)).collect();
        self.map.entry(Self::key(&cells)).or_default().push(id);
    }

    /// Calls `f` with every stored id that may lie within geodesic distance
    /// `r` of `p` (a superset).
    fn for_each_candidate(&self, p: &Point, r: f64, mut f: impl FnMut(u32)) {
        if let Some(all) = &self.brute {
            all.iter().for_each(|i| f(*i));
            return;
        }
        let c = p.coords();
        let reach = if self.sphere {
            2.0 * (r.min(std::f64::consts::PI) / 2.0).sin()
        } else {
            r
        };
        let mut ranges = [(0i64, 0i64); 3];
        let mut total: f64 = 1.0;
        for k in 0..self.dims {
            let (lo, hi) = if self.sphere {
                let lo = ((c[k] - reach + 1.0) / self.width[k]).floor() as i64;
                let hi = ((c[k] + reach + 1.0) / self.width[k]).floor() as i64;
                (lo.max(0), hi.min((2.0 / self.width[k]).floor() as i64))
            } else {
                let lo = ((c[k] - reach) / self.width[k]).floor() as i64;
                let hi = ((c[k] + reach) / self.width[k]).floor() as i64;
                if hi - lo + 1 >= self.periodic_cells[k] {
                    (0, self.periodic_cells[k] - 1)
                } else {
                    (lo, hi)
                }
            };
            ranges[k] = (lo, hi);
            total *= (hi - lo + 1) as f64;
        }
        if total > self.map.len() as f64 {
            for ids in self.map.values() {
                ids.iter().for_each(|i| f(*i));
            }
            return;
        }
        let mut cur = [0i64; 3];
        self.visit_cells(&ranges, 0, &mut cur, &mut f);
    }

    fn visit_cells(&self, ranges: &[(i64, i64); 3], k: usize, cur: &mut [i64; 3], f: &mut impl FnMut(u32)) {
        if k == self.dims {
            if let Some(ids) = self.map.get(&Self::key(&cur[..self.dims])) {
                ids.iter().for_each(|i| f(*i));
            }
            return;
        }
        for c in ranges[k].0..=ranges[k].1 {
            cur[k] = if self.sphere {
                c
            } else {
                c.rem_euclid(self.periodic_cells[k])
            };
            self.visit_cells(ranges, k + 1, cur, f);
        }
    }
}

fn analytic_greedy(m: &ManifoldModel, rho: f64, pool: &[Point], sweep: &[usize]) -> Vec<usize> {
    let mut index = GridIndex::new(m, rho);
    let mut chosen: Vec<usize> = Vec::new();
    for &i in sweep {
        let p = &pool[i];
        let mut blocked = false;
        index.for_each_candidate(p, rho, |j| {
            if !blocked && m.dist(p, &pool[chosen[j as usize]]) < rho {
                blocked = true;
            }
        });
        if !blocked {
            index.insert(chosen.len() as u32, p);
            chosen.push(i);
        }
    }
    chosen
}

#[derive(PartialEq)]
struct Farthest(f64, usize);

impl Eq for Farthest {}

impl Ord for Farthest {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Farthest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Farthest-point sampling until the farthest remaining pool point is
/// closer than `rho`; the result is a maximal `rho`-packing of the pool.
fn analytic_fps(m: &ManifoldModel, rho: f64, pool: &[Point], start: usize) -> Vec<usize> {
    let mut index = GridIndex::new(m, rho);
    for (i, p) in pool.iter().enumerate() {
        index.insert(i as u32, p);
    }
    let mut nearest = vec![f64::INFINITY; pool.len()];
    let mut heap = BinaryHeap::new();
    let mut chosen = Vec::new();
    let mut next = Some(start);
    while let Some(c) = next {
        chosen.push(c);
        let reach = heap
            .peek()
            .map(|f: &Farthest| f.0)
            .unwrap_or(f64::INFINITY)
            .min(m.diameter() * 1.000001);
        let p = &pool[c];
        nearest[c] = 0.0;
        index.for_each_candidate(p, reach, |j| {
            let j = j as usize;
            let d = m.dist(p, &pool[j]);
            if d < nearest[j] {
                nearest[j] = d;
                heap.push(Farthest(d, j));
            }
        });
        next = None;
        while let Some(Farthest(d, j)) = heap.pop() {
            if d != nearest[j] {
                continue;
            }
            if d >= rho {
                next = Some(j);
            }
            break;
        }
    }
    chosen
}

fn mesh_greedy(m: &ManifoldModel, rho: f64, pool: &[Point], sweep: &[usize]) -> Vec<usize> {
    let mesh = m.trimesh().unwrap();
    let mut blocked = vec![false; mesh.vertex_count()];
    let mut scratch = vec![f64::INFINITY; mesh.vertex_count()];
    let mut chosen = Vec::new();
    for &i in sweep {
        let Point::Vertex(v) = pool[i] else { unreachable!() };
        if blocked[v] {
            continue;
        }
        chosen.push(i);
        mesh.dijkstra_visit(&[v], rho, &mut scratch, |w, d| {
            if d < rho {
                blocked[w] = true;
            }
        });
    }
    chosen
}

fn mesh_fps(m: &ManifoldModel, rho: f64, pool: &[Point], start: usize) -> Vec<usize> {
    let mesh = m.trimesh().unwrap();
    let vertex_of = |i: usize| match pool[i] {
        Point::Vertex(v) => v,
        _ => unreachable!(),
    };
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    let mut chosen = vec![start];
    mesh.relax_from(vertex_of(start), &mut dist);
    loop {
        // pool order breaks ties deterministically
        let (best, d) =
            (0..pool.len())
                .map(|i| (i, dist[vertex_of(i)]))
                .fold(
                    (usize::MAX, f64::NEG_INFINITY),
                    |acc, x| if x.1 > acc.1 { x } else { acc },
                );
        if best == usize::MAX || d < rho {
            break;
        }
        chosen.push(best);
        mesh.relax_from(vertex_of(best), &mut dist);
    }
    chosen
}

/// `(min separation, covering radius, multiplicity)` on analytic models.
fn analytic_diagnostics(m: &ManifoldModel, rho: f64, points: &[Point], tests: &[Point]) -> (f64, f64, usize) {
    let mut index = GridIndex::new(m, rho);
    for (i, p) in points.iter().enumerate() {
        index.insert(i as u32, p);
    }
    let nearest = |x: &Point, skip: Option<usize>| -> f64 {
        let mut r = rho;
        loop {
            let mut best = f64::INFINITY;
            index.for_each_candidate(x, r, |j| {
                if Some(j as usize) != skip {
                    best = best.min(m.dist(x, &points[j as usize]));
                }
            });
            if best <= r || r > 2.0 * m.diameter() {
                return best;
            }
            r *= 2.0;
        }
    };
    let min_sep = if points.len() < 2 {
        f64::INFINITY
    } else {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| nearest(p, Some(i)))
            .reduce(|| f64::INFINITY, f64::min)
    };
    let (covering, multiplicity) = tests
        .par_iter()
        .map(|t| {
            let mut count = 0usize;
            index.for_each_candidate(t, rho, |j| {
                if m.dist(t, &points[j as usize]) <= rho {
                    count += 1;
                }
            });
            (nearest(t, None), count)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    (min_sep, covering, multiplicity)
}

fn mesh_diagnostics(m: &ManifoldModel, rho: f64, points: &[Point], tests: &[Point]) -> (f64, f64, usize) {
    let mesh = m.trimesh().unwrap();
    let nv = mesh.vertex_count();
    let verts: Vec<usize> = points
        .iter()
        .map(|p| match p {
            Point::Vertex(v) => *v,
            _ => unreachable!(),
        })
        .collect();
    let mut is_site = vec![false; nv];
    verts.iter().for_each(|v| is_site[*v] = true);

    let nearest = mesh.dijkstra(&verts, f64::INFINITY);
    let mut count = vec![0usize; nv];
    let mut min_sep = f64::INFINITY;
    let mut scratch = vec![f64::INFINITY; nv];
    for &v in &verts {
        mesh.dijkstra_visit(&[v], 2.0 * rho, &mut scratch, |w, d| {
            if d <= rho {
                count[w] += 1;
            }
            if w != v && is_site[w] {
                min_sep = min_sep.min(d);
            }
        });
    }
    if min_sep.is_infinite() && verts.len() > 1 {
        // no other site within 2ρ of any site
        min_sep = 2.0 * rho;
    }
    let mut covering = 0.0f64;
    let mut multiplicity = 0usize;
    for t in tests {
        let Point::Vertex(v) = t else { unreachable!() };
        covering = covering.max(nearest[*v]);
        multiplicity = multiplicity.max(count[*v]);
    }
    (min_sep, covering, multiplicity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::TriMesh;
    use std::f64::consts::PI;

    fn equispaced_circle(n: usize) -> Vec<Point> {
        (0..n).map(|i| Point::Circle(2.0 * PI * i as f64 / n as f64)).collect()
    }

    /// Brute-force oracle: separation up to the packing tolerance, and no
    /// pool point left that the greedy rule would still admit.
    fn brute_check(m: &ManifoldModel, lat: &Lattice, pool: &[Point]) {
        let pts = lat.points();
        let admit = lat.rho() - ACCEPT_RTOL * m.diameter();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                assert!(m.dist(&pts[i], &pts[j]) >= lat.rho() - m.packing_tolerance());
            }
        }
        for p in pool {
            let near = pts.iter().any(|q| m.dist(p, q) < admit);
            assert!(near, "pool point {p:?} could still be added");
        }
    }

    #[test]
    fn circle_quarter_lattices() {
        let m = ManifoldModel::circle(2.0 * PI).unwrap();
        let pool = equispaced_circle(1000);
        let mut seen = Vec::new();
        for seed in 0..10 {
            for order in [LatticeOrder::Shuffled, LatticeOrder::FarthestPoint] {
                let lat = Lattice::build_ordered(&m, PI / 2.0, &pool, seed, order).unwrap();
                brute_check(&m, &lat, &pool);
                let d = lat.stored_diagnostics();
                assert!(d.packing_ok);
                assert!(d.covering_radius <= PI / 2.0);
                // three sites with every gap below π are already maximal
                assert!(lat.len() == 3 || lat.len() == 4);
                if order == LatticeOrder::FarthestPoint {
                    assert_eq!(lat.len(), 4, "seed {seed}");
                }
                seen.push(lat.len());
            }
        }
        assert!(seen.contains(&4));
    }

    #[test]
    fn sphere_antipodal_lattice() {
        let m = ManifoldModel::sphere();
        let pool = m.candidate_pool(2000, 5).unwrap();
        for seed in 0..5 {
            let lat = Lattice::build(&m, PI, &pool, seed).unwrap();
            assert!(!lat.is_empty() && lat.len() <= 2);
            brute_check(&m, &lat, &pool);
        }
        // an exactly antipodal pair is admissible
        let pair = vec![Point::Sphere([0.0, 0.0, 1.0]), Point::Sphere([0.0, 0.0, -1.0])];
        let lat = Lattice::build(&m, PI, &pair, 0).unwrap();
        assert_eq!(lat.len(), 2);
    }

    #[test]
    fn oversized_rho_gives_single_point() {
        let m = ManifoldModel::circle(2.0 * PI).unwrap();
        let pool = m.candidate_pool(500, 2).unwrap();
        let lat = Lattice::build(&m, 10.0, &pool, 1).unwrap();
        assert_eq!(lat.len(), 1);
        let d = lat.stored_diagnostics();
        assert!(d.covering_radius <= m.diameter());
        assert_eq!(d.multiplicity, 1);
        assert!(Lattice::build(&m, 1.0, &[], 1).is_err());
    }

    #[test]
    fn circle_multiplicity_two() {
        let m = ManifoldModel::circle(2.0 * PI).unwrap();
        let lat = Lattice::from_points(&m, PI / 2.0, equispaced_circle(4), &equispaced_circle(4)).unwrap();
        // generic test points see exactly two sites; the sites themselves see three
        let generic: Vec<Point> = (0..997)
            .map(|i| Point::Circle(2.0 * PI * (i as f64 + 0.37) / 997.0))
            .collect();
        let d = lat.diagnostics(&generic).unwrap();
        assert_eq!(d.multiplicity, 2);
        assert!(d.multiplicity as f64 <= 12.0);
        let d = lat.diagnostics(&equispaced_circle(4)).unwrap();
        assert_eq!(d.multiplicity, 3);
        assert!(lat.diagnostics(&[]).is_err());
    }

    #[test]
    fn sphere_lattice_covers_at_rho() {
        let m = ManifoldModel::sphere();
        // maximality covers the pool, so the pool is the test set
        let tests = m.candidate_pool(20_000, 17).unwrap();
        let lat = Lattice::build(&m, 0.3, &tests, 17).unwrap();
        let d = lat.diagnostics(&tests).unwrap();
        assert!(d.packing_ok);
        assert!(d.covering_radius <= 0.3, "covering {}", d.covering_radius);
        // brute-force oracle for the covering radius and multiplicity
        let (mut cov, mut mult) = (0.0f64, 0usize);
        for t in &tests {
            let ds: Vec<f64> = lat.points().iter().map(|p| m.dist(t, p)).collect();
            cov = cov.max(ds.iter().copied().fold(f64::INFINITY, f64::min));
            mult = mult.max(ds.iter().filter(|x| **x <= 0.3).count());
        }
        assert_eq!(cov, d.covering_radius);
        assert_eq!(mult, d.multiplicity);
    }

    #[test]
    fn grid_index_agrees_with_brute_force_on_torus() {
        let m = ManifoldModel::flat_torus(vec![1.0, 0.7, 0.4]).unwrap();
        let pool = m.candidate_pool(3000, 4).unwrap();
        let lat = Lattice::build(&m, 0.15, &pool, 4).unwrap();
        brute_check(&m, &lat, &pool);
        let fps = Lattice::build_ordered(&m, 0.15, &pool, 4, LatticeOrder::FarthestPoint).unwrap();
        brute_check(&m, &fps, &pool);
    }

    #[test]
    fn extremes_examples() {
        let m = ManifoldModel::circle(2.0 * PI).unwrap();
        let e = lattice_extremes(&m, PI / 2.0, 10, 3).unwrap();
        // maximal π/2-packings of the circle have three or four points
        assert!(e.min_card >= 3 && e.max_card <= 4, "{:?}", e.cardinalities);
        let e = lattice_extremes(&m, 0.1, 10, 3).unwrap();
        assert!(e.min_card >= 32 && e.max_card <= 62, "{} {}", e.min_card, e.max_card);
        let e = lattice_extremes(&m, 0.3, 1, 3).unwrap();
        assert_eq!(e.cardinalities.len(), 2);
        assert!(lattice_extremes(&m, 0.3, 0, 3).is_err());
    }

    #[test]
    fn determinism() {
        let m = ManifoldModel::sphere();
        let pool = m.candidate_pool(5000, 8).unwrap();
        let a = Lattice::build(&m, 0.2, &pool, 12).unwrap();
        let b = Lattice::build(&m, 0.2, &pool, 12).unwrap();
        assert_eq!(a.points(), b.points());
        let e1 = lattice_extremes(&m, 0.3, 4, 1).unwrap();
        let e2 = lattice_extremes(&m, 0.3, 4, 1).unwrap();
        assert_eq!(e1.cardinalities, e2.cardinalities);
    }

    #[test]
    fn mesh_lattices() {
        let m = ManifoldModel::mesh(TriMesh::icosphere(3), None).unwrap();
        let pool = m.candidate_pool(usize::MAX, 0).unwrap();
        for order in [LatticeOrder::Shuffled, LatticeOrder::FarthestPoint] {
            let lat = Lattice::build_ordered(&m, 0.4, &pool, 6, order).unwrap();
            let d = lat.stored_diagnostics();
            assert!(d.packing_ok);
            assert!(d.covering_radius < 0.4);
            for (i, p) in lat.points().iter().enumerate() {
                for q in &lat.points()[i + 1..] {
                    assert!(m.dist(p, q) >= 0.4);
                }
            }
        }
    }

    #[test]
    fn export_formats() {
        let m = ManifoldModel::circle(2.0 * PI).unwrap();
        let lat =
            Lattice::build_ordered(&m, PI / 2.0, &equispaced_circle(100), 1, LatticeOrder::FarthestPoint).unwrap();
        let j = lat.to_json();
        for key in ["rho", "points", "diagnostics", "seed"] {
            assert!(j.get(key).is_some());
        }
        assert_eq!(j["points"].as_array().unwrap().len(), 4);
        let csv = lat.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next(), Some("s"));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn greedy_lattice_invariants(seed in 0u64..10_000, frac in 0.15f64..1.0, model in 0usize..3) {
            let m = match model {
                0 => ManifoldModel::circle(2.0 * PI).unwrap(),
                1 => ManifoldModel::flat_torus(vec![1.0, 1.5]).unwrap(),
                _ => ManifoldModel::sphere(),
            };
            let rho = frac * m.injectivity_radius() / 6.0;
            let pool = m.candidate_pool(3000, seed).unwrap();
            let lat = Lattice::build(&m, rho, &pool, seed).unwrap();
            brute_check(&m, &lat, &pool);
            let d = lat.stored_diagnostics();
            proptest::prop_assert!(d.packing_ok);
            proptest::prop_assert!(d.covering_radius <= rho);

            let k = m.ball_constants(&[rho / 2.0, rho, 1.5 * rho, 3.0 * rho]).unwrap();
            proptest::prop_assert!(d.multiplicity as f64 <= k.n_m);
            let dim = m.dimension() as i32;
            let lower = k.a1 * m.volume() / (k.a2 * (3.0 * rho).powi(dim));
            let upper = k.a2 * m.volume() / (k.a1 * (rho / 2.0).powi(dim));
            proptest::prop_assert!(lower <= lat.len() as f64 && lat.len() as f64 <= upper);

            let again = Lattice::build(&m, rho, &pool, seed).unwrap();
            proptest::prop_assert_eq!(again.points(), lat.points());
        }
    }
}
