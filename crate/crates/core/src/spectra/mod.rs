//! Laplace–Beltrami eigenpairs: closed forms on the circle, flat tori and
//! the unit sphere; cotangent finite elements on triangle meshes.
//!
//! A band `[0, ω]` is always closed: an eigenvalue equal to `ω` belongs to
//! the band, so `N_ω` counts it.

mod harmonics;
mod mesh_eigen;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::{ManifoldModel, ModelKind, Point};
use crate::seeded_rng;

pub use harmonics::{real_harmonics, sh_degree_order};
pub use mesh_eigen::{cotangent_stiffness, MeshSolver, SparseSym, DENSE_VERTEX_LIMIT};

/// Relative slack when comparing eigenvalues against a band edge, so that
/// `(2πk/L)²` computed in floating point still counts as `≤ ω` when equal.
const BAND_EDGE_SLACK: f64 = 1e-12;

/// Relative gap below which eigenvalues are reported as one multiplicity group.
pub const MULTIPLICITY_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MeshDiscrete,
}

#[derive(Debug, Clone)]
enum Eigenfunctions {
    /// Signed modes: `0` constant, `+k` cosine, `-k` sine.
    Circle {
        length: f64,
        modes: Vec<i64>,
    },
    Torus {
        lengths: Vec<f64>,
        modes: Vec<Vec<i64>>,
    },
    /// Flat spherical-harmonic ordering up to `(lmax + 1)²`.
    Sphere,
    Mesh {
        vectors: Vec<Vec<f64>>,
    },
}

/// Ordered eigenvalues with evaluable orthonormal eigenfunctions. Every
/// eigenvalue `≤ lambda_max` is present with full multiplicity (for mesh
/// bases this holds only up to discretization; see [`SpectralBasis::truncated`]).
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    manifold: ManifoldModel,
    eigenvalues: Vec<f64>,
    lambda_max: f64,
    truncated: bool,
    provenance: Provenance,
    functions: Eigenfunctions,
    solve: Option<SolveStats>,
}

/// How a mesh basis was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    /// The solver actually used (never `Auto`).
    pub solver: MeshSolver,
    pub iterations: usize,
}

/// Serialized form of a basis. Analytic eigenfunctions are re-evaluated on
/// load; mesh bases carry their vertex-sampled eigenvectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisExport {
    pub manifold: String,
    pub lambda_max: f64,
    pub eigenvalues: Vec<f64>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

impl SpectralBasis {
    /// All eigenpairs with `λ ≤ lambda_max` on an analytic model.
    pub fn analytic(m: &ManifoldModel, lambda_max: f64) -> Result<Self> {
        if !(lambda_max >= 0.0) || !lambda_max.is_finite() {
            return Err(Error::invalid(format!(
                "lambda_max must be finite and >= 0, got {lambda_max}"
            )));
        }
        let edge = lambda_max * (1.0 + BAND_EDGE_SLACK);
        let (eigenvalues, functions) = match m.kind() {
            ModelKind::Circle => {
                let length = m.circle_length().unwrap();
                let w = 2.0 * PI / length;
                let mut modes = vec![0i64];
                let mut eig = vec![0.0];
                let mut k = 1i64;
                loop {
                    let lam = (w * k as f64).powi(2);
                    if lam > edge {
                        break;
                    }
                    modes.extend([k, -k]);
                    eig.extend([lam, lam]);
                    k += 1;
                }
                (eig, Eigenfunctions::Circle { length, modes })
            }
            ModelKind::FlatTorus => {
                let lengths = m.torus_lengths().unwrap().to_vec();
                let mut modes = Vec::new();
                let mut current = Vec::with_capacity(lengths.len());
                enumerate_torus_modes(&lengths, edge, 0.0, &mut current, &mut modes);
                let value = |k: &Vec<i64>| torus_eigenvalue(&lengths, k);
                let mut entries: Vec<(f64, Vec<i64>)> = modes.into_iter().map(|k| (value(&k), k)).collect();
                entries.sort_by(|a, b| {
                    a.0.total_cmp(&b.0)
                        .then_with(|| torus_mode_key(&a.1).cmp(&torus_mode_key(&b.1)))
                });
                let eig = entries.iter().map(|e| e.0).collect();
                let modes = entries.into_iter().map(|e| e.1).collect();
                (eig, Eigenfunctions::Torus { lengths, modes })
            }
            ModelKind::Sphere2 => {
                let mut eig = Vec::new();
                let mut l = 0usize;
                while ((l * (l + 1)) as f64) <= edge {
                    eig.extend(std::iter::repeat_n((l * (l + 1)) as f64, 2 * l + 1));
                    l += 1;
                }
                (eig, Eigenfunctions::Sphere)
            }
            ModelKind::Mesh => return Err(Error::UnsupportedModel("mesh")),
        };
        Ok(SpectralBasis {
            manifold: m.clone(),
            eigenvalues,
            lambda_max,
            truncated: false,
            provenance: Provenance::Analytic,
            functions,
            solve: None,
        })
    }

    /// The `k` smallest eigenpairs of the cotangent Laplacian with lumped
    /// mass. `lambda_max` is the largest computed eigenvalue and the basis
    /// is flagged truncated.
    pub fn mesh(m: &ManifoldModel, k: usize, solver: MeshSolver) -> Result<Self> {
        let mesh = m.trimesh().ok_or(Error::UnsupportedModel("analytic"))?;
        let out = mesh_eigen::solve(mesh, k, solver)?;
        Ok(SpectralBasis {
            manifold: m.clone(),
            lambda_max: *out.eigenvalues.last().unwrap(),
            eigenvalues: out.eigenvalues,
            truncated: true,
            provenance: Provenance::MeshDiscrete,
            functions: Eigenfunctions::Mesh { vectors: out.vectors },
            solve: Some(SolveStats {
                solver: out.solver,
                iterations: out.iterations,
            }),
        })
    }

    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// True when completeness up to `lambda_max` is only approximate.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Solver statistics of a freshly computed mesh basis.
    pub fn solve_stats(&self) -> Option<SolveStats> {
        self.solve
    }

    /// `N_ω`: eigenvalues `≤ ω` with multiplicity. Fails above `lambda_max`.
    pub fn count_eigenvalues(&self, omega: f64) -> Result<usize> {
        self.check_band(omega)?;
        Ok(self.band_len(omega))
    }

    pub(crate) fn check_band(&self, omega: f64) -> Result<()> {
        if !(omega >= 0.0) {
            return Err(Error::invalid(format!("band limit must be >= 0, got {omega}")));
        }
        if omega > self.lambda_max * (1.0 + BAND_EDGE_SLACK) {
            return Err(Error::OutOfBand {
                omega,
                lambda_max: self.lambda_max,
            });
        }
        Ok(())
    }

    pub(crate) fn band_len(&self, omega: f64) -> usize {
        let edge = omega * (1.0 + BAND_EDGE_SLACK);
        self.eigenvalues.partition_point(|l| *l <= edge)
    }

    /// Eigenvalue groups `(value, multiplicity)` within [`MULTIPLICITY_RTOL`].
    pub fn multiplicities(&self) -> Vec<(f64, usize)> {
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &l in &self.eigenvalues {
            match groups.last_mut() {
                Some((v, c))
                    if (l - *v).abs() <= MULTIPLICITY_RTOL * v.abs().max(1e-300) || (l == 0.0 && *v == 0.0) =>
                {
                    *c += 1
                }
                _ => groups.push((l, 1)),
            }
        }
        groups
    }

    /// `u_l(x)`.
    pub fn eval(&self, l: usize, x: &Point) -> Result<f64> {
        if l >= self.len() {
            return Err(Error::invalid(format!(
                "eigenfunction index {l} beyond basis size {}",
                self.len()
            )));
        }
        self.manifold.validate_point(x)?;
        Ok(self.eval_unchecked(l, x))
    }

    fn eval_unchecked(&self, l: usize, x: &Point) -> f64 {
        match (&self.functions, x) {
            (Eigenfunctions::Circle { length, modes }, Point::Circle(s)) => fourier_mode(modes[l], *s, *length),
            (Eigenfunctions::Torus { lengths, modes }, Point::Torus(c)) => modes[l]
                .iter()
                .zip(c)
                .zip(lengths)
                .map(|((k, x), len)| fourier_mode(*k, *x, *len))
                .product(),
            (Eigenfunctions::Sphere, Point::Sphere(v)) => {
                let (deg, _) = sh_degree_order(l);
                let mut out = vec![0.0; (deg + 1) * (deg + 1)];
                real_harmonics(deg, *v, &mut out);
                out[l]
            }
            (Eigenfunctions::Mesh { vectors }, Point::Vertex(i)) => vectors[l][*i],
            _ => f64::NAN,
        }
    }

    /// Writes `u_0(x), …, u_{n-1}(x)` into `out[..n]`.
    pub fn eval_first(&self, n: usize, x: &Point, out: &mut [f64]) -> Result<()> {
        if n > self.len() {
            return Err(Error::invalid(format!(
                "requested {n} eigenfunctions of a basis of size {}",
                self.len()
            )));
        }
        self.manifold.validate_point(x)?;
        self.eval_first_unchecked(n, x, out);
        Ok(())
    }

    pub(crate) fn eval_first_unchecked(&self, n: usize, x: &Point, out: &mut [f64]) {
        match (&self.functions, x) {
            (Eigenfunctions::Sphere, Point::Sphere(v)) => {
                if n == 0 {
                    return;
                }
                let (deg, _) = sh_degree_order(n - 1);
                let full = (deg + 1) * (deg + 1);
                if out.len() >= full {
                    real_harmonics(deg, *v, &mut out[..full]);
                } else {
                    let mut tmp = vec![0.0; full];
                    real_harmonics(deg, *v, &mut tmp);
                    out[..n].copy_from_slice(&tmp[..n]);
                }
            }
            _ => {
                for (l, o) in out[..n].iter_mut().enumerate() {
                    *o = self.eval_unchecked(l, x);
                }
            }
        }
    }

    pub fn export(&self) -> BasisExport {
        BasisExport {
            manifold: self.manifold.label(),
            lambda_max: self.lambda_max,
            eigenvalues: self.eigenvalues.clone(),
            provenance: self.provenance,
            eigenvectors: match &self.functions {
                Eigenfunctions::Mesh { vectors } => Some(vectors.clone()),
                _ => None,
            },
        }
    }

    /// Rebuilds a basis from its export on the given manifold.
    pub fn from_export(m: &ManifoldModel, e: &BasisExport) -> Result<Self> {
        match (e.provenance, m.is_analytic()) {
            (Provenance::Analytic, true) => {
                let b = SpectralBasis::analytic(m, e.lambda_max)?;
                if b.eigenvalues.len() != e.eigenvalues.len() {
                    return Err(Error::invalid("exported eigenvalues do not match the manifold"));
                }
                Ok(b)
            }
            (Provenance::MeshDiscrete, false) => {
                let vectors = e
                    .eigenvectors
                    .clone()
                    .ok_or_else(|| Error::invalid("mesh basis export lacks eigenvectors"))?;
                let nv = m.trimesh().unwrap().vertex_count();
                if vectors.len() != e.eigenvalues.len() || vectors.iter().any(|v| v.len() != nv) {
                    return Err(Error::invalid("eigenvector arrays do not match the mesh"));
                }
                Ok(SpectralBasis {
                    manifold: m.clone(),
                    eigenvalues: e.eigenvalues.clone(),
                    lambda_max: e.lambda_max,
                    truncated: true,
                    provenance: Provenance::MeshDiscrete,
                    functions: Eigenfunctions::Mesh { vectors },
                    solve: None,
                })
            }
            _ => Err(Error::invalid("export provenance does not match the manifold kind")),
        }
    }

    /// Bandlimited function from coefficients on the band `[0, ω]`.
    pub fn function(&self, omega: f64, coeffs: Vec<f64>) -> Result<BandlimitedFunction<'_>> {
        self.check_band(omega)?;
        let n = self.band_len(omega);
        if coeffs.len() != n {
            return Err(Error::invalid(format!(
                "{} coefficients for a band of dimension {n}",
                coeffs.len()
            )));
        }
        Ok(BandlimitedFunction {
            basis: self,
            omega,
            coeffs,
        })
    }

    /// I.i.d. standard normal coefficients on the band, normalized to unit
    /// spectral norm.
    pub fn random_bandlimited(&self, omega: f64, seed: u64) -> Result<BandlimitedFunction<'_>> {
        self.check_band(omega)?;
        let n = self.band_len(omega);
        let mut rng = seeded_rng(seed);
        let mut coeffs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            coeffs[0] = 1.0;
        } else {
            coeffs.iter_mut().for_each(|c| *c /= norm);
        }
        Ok(BandlimitedFunction {
            basis: self,
            omega,
            coeffs,
        })
    }
}

/// `f = Σ c_l u_l` over the band `λ_l ≤ ω`.
#[derive(Debug, Clone)]
pub struct BandlimitedFunction<'a> {
    basis: &'a SpectralBasis,
    omega: f64,
    coeffs: Vec<f64>,
}

impl<'a> BandlimitedFunction<'a> {
    pub fn basis(&self) -> &'a SpectralBasis {
        self.basis
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `L²` norm, computed spectrally.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        self.basis.manifold.validate_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &Point) -> f64 {
        let mut u = vec![0.0; self.coeffs.len()];
        self.basis.eval_first_unchecked(self.coeffs.len(), x, &mut u);
        u.iter().zip(&self.coeffs).map(|(u, c)| u * c).sum()
    }

    /// `‖Δ^{s/2} f‖` computed spectrally (`s` may be fractional).
    pub fn sobolev_seminorm(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.basis.eigenvalues())
            .map(|(c, l)| if *l == 0.0 { 0.0 } else { l.powf(s) * c * c })
            .sum::<f64>()
            .sqrt()
    }

    /// `‖Δ^k f‖ / ‖f‖`; bounded by `ω^k` on the band.
    pub fn bernstein_ratio(&self, k: u32) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("Bernstein exponent must be >= 1"));
        }
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::invalid("Bernstein ratio of the zero function"));
        }
        Ok(self.sobolev_seminorm(2.0 * k as f64) / n)
    }
}

/// 1-D orthonormal Fourier mode on `[0, L)`: `1/√L`, `√(2/L) cos`, `√(2/L) sin`.
fn fourier_mode(k: i64, x: f64, length: f64) -> f64 {
    let w = 2.0 * PI / length;
    match k {
        0 => 1.0 / length.sqrt(),
        k if k > 0 => (2.0 / length).sqrt() * (w * k as f64 * x).cos(),
        k => (2.0 / length).sqrt() * (w * (-k) as f64 * x).sin(),
    }
}

fn torus_eigenvalue(lengths: &[f64], k: &[i64]) -> f64 {
    k.iter()
        .zip(lengths)
        .map(|(k, l)| (2.0 * PI / l * k.unsigned_abs() as f64).powi(2))
        .sum()
}

/// Sort key so that equal eigenvalues are ordered deterministically.
fn torus_mode_key(k: &[i64]) -> Vec<(u64, bool)> {
    k.iter().map(|k| (k.unsigned_abs(), *k < 0)).collect()
}

fn enumerate_torus_modes(lengths: &[f64], edge: f64, partial: f64, current: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    let axis = current.len();
    if axis == lengths.len() {
        out.push(current.clone());
        return;
    }
    let w = 2.0 * PI / lengths[axis];
    let mut k = 0i64;
    loop {
        let lam = partial + (w * k as f64).powi(2);
        if lam > edge {
            break;
        }
        let signs: &[i64] = if k == 0 { &[1] } else { &[1, -1] };
        for s in signs {
            current.push(s * k);
            enumerate_torus_modes(lengths, edge, lam, current, out);
            current.pop();
        }
        k += 1;
    }
}
