//! Generalized eigenproblem `S v = λ D v` for the cotangent Laplacian of a
//! triangle mesh, `S` the stiffness matrix and `D` the lumped mass.
//!
//! Both solvers work with the symmetric standard form
//! `A = D^{-1/2} S D^{-1/2}`, whose kernel is spanned by `z = D^{1/2} 1`.
//! The sparse solver is shift-invert block Lanczos: the operator
//! `(A + δ I)^{-1}` is applied through a skyline Cholesky factor of
//! `S + δ D` in reverse Cuthill–McKee order, `z` is deflated from every
//! Krylov block, and Ritz pairs are accepted on their residuals.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifolds::{geom, TriMesh};
use crate::seeded_rng;

/// Which eigensolver backs [`crate::SpectralBasis::mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSolver {
    /// Dense below [`DENSE_VERTEX_LIMIT`] vertices, Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

pub const DENSE_VERTEX_LIMIT: usize = 800;

const BLOCK_SIZE: usize = 8;
const RESIDUAL_TOL: f64 = 1e-10;
const MAX_KRYLOV_DIM: usize = 1200;
const START_SEED: u64 = 0x5eed_1a2c;

/// Symmetric sparse matrix in CSR form with the diagonal included.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseSym {
    fn from_mesh_pattern(mesh: &TriMesh) -> Self {
        let n = mesh.vertex_count();
        let mut row_start = vec![0usize];
        let mut cols = Vec::new();
        for v in 0..n {
            let mut row: Vec<usize> = mesh.neighbors(v).to_vec();
            row.push(v);
            row.sort_unstable();
            cols.extend(row);
            row_start.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        SparseSym {
            n,
            row_start,
            cols,
            vals,
        }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let row = &self.cols[self.row_start[i]..self.row_start[i + 1]];
        self.row_start[i] + row.binary_search(&j).expect("entry in sparsity pattern")
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.vals[s] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for s in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[s] * x[self.cols[s]];
            }
            y[i] = acc;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_start[i]..self.row_start[i + 1]];
        row.binary_search(&j)
            .map(|p| self.vals[self.row_start[i] + p])
            .unwrap_or(0.0)
    }
}

/// Cotangent stiffness matrix: `S_ij = -(cot α_ij + cot β_ij)/2` off the
/// diagonal and zero row sums.
pub fn cotangent_stiffness(mesh: &TriMesh) -> SparseSym {
    let mut s = SparseSym::from_mesh_pattern(mesh);
    for tri in mesh.triangles() {
        for k in 0..3 {
            let (i, j, o) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let a = mesh.edge_vector(o, i);
            let b = mesh.edge_vector(o, j);
            let cross = geom::cross(a, b);
            let cot = geom::dot(a, b) / geom::norm(cross);
            let w = 0.5 * cot;
            s.add(i, j, -w);
            s.add(j, i, -w);
            s.add(i, i, w);
            s.add(j, j, w);
        }
    }
    s
}

pub struct MeshEigen {
    pub eigenvalues: Vec<f64>,
    /// D-orthonormal eigenvectors, one `Vec` per eigenpair.
    pub vectors: Vec<Vec<f64>>,
    pub solver: MeshSolver,
    pub iterations: usize,
}

pub fn solve(mesh: &TriMesh, k: usize, solver: MeshSolver) -> Result<MeshEigen> {
    let n = mesh.vertex_count();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("requested {k} eigenpairs of a {n}-vertex mesh")));
    }
    let stiffness = cotangent_stiffness(mesh);
    let mass = mesh.lumped_mass();
    let solver = match solver {
        MeshSolver::Auto if n < DENSE_VERTEX_LIMIT => MeshSolver::Dense,
        MeshSolver::Auto => MeshSolver::Lanczos,
        s => s,
    };
    let mut out = match solver {
        MeshSolver::Dense => dense(&stiffness, mass, k),
        _ => lanczos(&stiffness, mass, k)?,
    };
    for v in out.eigenvalues.iter_mut() {
        // the constant mode comes out at roundoff level
        if v.abs() <= 1e-9 {
            *v = 0.0;
        }
    }
    if let Some(bad) = out.eigenvalues.iter().find(|v| **v < 0.0) {
        return Err(Error::NumericalFailure(format!(
            "negative eigenvalue {bad:e} from the mesh Laplacian"
        )));
    }
    for v in out.vectors.iter_mut() {
        fix_sign(v);
    }
    Ok(out)
}

/// Makes the entry of largest magnitude positive (lowest index on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dense(s: &SparseSym, mass: &[f64], k: usize) -> MeshEigen {
    let n = s.n;
    let isq: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for p in s.row_start[i]..s.row_start[i + 1] {
            let j = s.cols[p];
            a[(i, j)] = s.vals[p] * isq[i] * isq[j];
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..k]
        .iter()
        .map(|&c| (0..n).map(|r| eig.eigenvectors[(r, c)] * isq[r]).collect())
        .collect();
    MeshEigen {
        eigenvalues,
        vectors,
        solver: MeshSolver::Dense,
        iterations: 1,
    }
}

/// Envelope (skyline) Cholesky factor of a symmetric positive definite
/// matrix stored row-wise from the first nonzero column to the diagonal.
struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

impl Skyline {
    fn factor(n: usize, entry: impl Fn(usize, usize) -> f64, first: Vec<usize>) -> Result<Self> {
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut vals = vec![0.0; start[n]];
        for i in 0..n {
            for j in first[i]..=i {
                vals[start[i] + j - first[i]] = entry(i, j);
            }
        }
        let mut f = Skyline { first, start, vals };
        for i in 0..n {
            let fi = f.first[i];
            for j in fi..i {
                let fj = f.first[j];
                let lo = fi.max(fj);
                let mut acc = f.vals[f.start[i] + j - fi];
                let (ri, rj) = (f.start[i] + lo - fi, f.start[j] + lo - fj);
                for t in 0..(j - lo) {
                    acc -= f.vals[ri + t] * f.vals[rj + t];
                }
                let djj = f.vals[f.start[j] + j - fj];
                f.vals[f.start[i] + j - fi] = acc / djj;
            }
            let row = &f.vals[f.start[i]..f.start[i] + i - fi];
            let diag = f.vals[f.start[i] + i - fi] - row.iter().map(|x| x * x).sum::<f64>();
            if !(diag > 0.0) {
                return Err(Error::NumericalFailure(format!(
                    "Cholesky pivot {diag:e} at row {i}: shifted stiffness is not positive definite"
                )));
            }
            f.vals[f.start[i] + i - fi] = diag.sqrt();
        }
        Ok(f)
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            let mut acc = x[i];
            for (t, l) in row[..i - fi].iter().enumerate() {
                acc -= l * x[fi + t];
            }
            x[i] = acc / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (t, l) in row[..i - fi].iter().enumerate() {
                x[fi + t] -= l * xi;
            }
        }
    }
}

/// Reverse Cuthill–McKee ordering: `perm[new] = old`.
fn reverse_cuthill_mckee(s: &SparseSym) -> Vec<usize> {
    let n = s.n;
    let degree: Vec<usize> = (0..n).map(|i| s.row_start[i + 1] - s.row_start[i] - 1).collect();
    let bfs = |root: usize| -> Vec<usize> {
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        seen[root] = true;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = s.cols[s.row_start[v]..s.row_start[v + 1]]
                .iter()
                .copied()
                .filter(|&w| !seen[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                seen[w] = true;
                order.push(w);
            }
        }
        order
    };
    // pseudo-peripheral start: the last vertex of a BFS from a min-degree vertex
    let root = (0..n).min_by_key(|&i| (degree[i], i)).unwrap_or(0);
    let far = *bfs(root).last().unwrap();
    let mut order = bfs(far);
    order.reverse();
    order
}

fn lanczos(s: &SparseSym, mass: &[f64], k: usize) -> Result<MeshEigen> {
    let n = s.n;
    let sq: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let total: f64 = mass.iter().sum();
    let z: Vec<f64> = sq.iter().map(|x| x / total.sqrt()).collect();
    let const_vec: Vec<f64> = vec![1.0 / total.sqrt(); n];
    if k == 1 {
        return Ok(MeshEigen {
            eigenvalues: vec![0.0],
            vectors: vec![const_vec],
            solver: MeshSolver::Lanczos,
            iterations: 0,
        });
    }

    // shift scale from the mean diagonal of A
    let trace: f64 = (0..n).map(|i| s.get(i, i) / mass[i]).sum();
    let delta = 1e-6 * trace / n as f64;

    let perm = reverse_cuthill_mckee(s);
    let mut inv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let first: Vec<usize> = (0..n)
        .map(|i| {
            let old = perm[i];
            s.cols[s.row_start[old]..s.row_start[old + 1]]
                .iter()
                .map(|&c| inv[c])
                .min()
                .unwrap()
                .min(i)
        })
        .collect();
    let chol = Skyline::factor(
        n,
        |i, j| {
            let (oi, oj) = (perm[i], perm[j]);
            s.get(oi, oj) + if oi == oj { delta * mass[oi] } else { 0.0 }
        },
        first,
    )?;

    // y = (A + δ)^{-1} x = D^{1/2} (S + δD)^{-1} D^{1/2} x, then deflate z
    let mut buf = vec![0.0; n];
    let mut apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            buf[inv[i]] = sq[i] * x[i];
        }
        chol.solve_in_place(&mut buf);
        for i in 0..n {
            y[i] = sq[i] * buf[inv[i]];
        }
        deflate(y, &z);
    };

    let wanted = k - 1;
    let mut rng = seeded_rng(START_SEED);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut block: Vec<Vec<f64>> = (0..BLOCK_SIZE)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let cap = MAX_KRYLOV_DIM.min(n - 1);
    let mut steps = 0;
    let mut worst_residual = f64::INFINITY;

    loop {
        // orthonormalize the new block against z, the basis and itself
        let mut accepted = Vec::new();
        for mut v in block.drain(..) {
            for _ in 0..2 {
                deflate(&mut v, &z);
                for q in basis.iter().chain(accepted.iter()) {
                    let c = dotv(&v, q);
                    axpy(-c, q, &mut v);
                }
            }
            let nv = dotv(&v, &v).sqrt();
            if nv > 1e-10 && basis.len() + accepted.len() < cap {
                v.iter_mut().for_each(|x| *x /= nv);
                accepted.push(v);
            }
        }
        if accepted.is_empty() {
            break;
        }
        steps += 1;
        let mut next = Vec::with_capacity(accepted.len());
        for q in accepted {
            let mut w = vec![0.0; n];
            apply(&q, &mut w);
            basis.push(q);
            next.push(w.clone());
            images.push(w);
        }

        if basis.len() >= wanted {
            let m = basis.len();
            let mut h = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v = 0.5 * (dotv(&basis[i], &images[j]) + dotv(&basis[j], &images[i]));
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            let mut ritz = Vec::with_capacity(wanted);
            worst_residual = 0.0f64;
            for &c in &order[..wanted] {
                let theta = eig.eigenvalues[c];
                let coef = eig.eigenvectors.column(c);
                let mut y = vec![0.0; n];
                let mut r = vec![0.0; n];
                for j in 0..m {
                    axpy(coef[j], &basis[j], &mut y);
                    axpy(coef[j], &images[j], &mut r);
                }
                axpy(-theta, &y, &mut r);
                let res = dotv(&r, &r).sqrt() / theta.abs();
                worst_residual = worst_residual.max(res);
                ritz.push((theta, y));
            }
            if worst_residual <= RESIDUAL_TOL || m >= cap {
                if worst_residual > RESIDUAL_TOL.sqrt() {
                    return Err(Error::NumericalFailure(format!(
                        "block Lanczos did not converge: {steps} block steps, Krylov dimension {m}, \
                         worst relative Ritz residual {worst_residual:e}"
                    )));
                }
                let mut eigenvalues = vec![0.0];
                let mut vectors = vec![const_vec];
                for (theta, y) in ritz {
                    eigenvalues.push(1.0 / theta - delta);
                    vectors.push(y.iter().zip(&sq).map(|(v, s)| v / s).collect());
                }
                return Ok(MeshEigen {
                    eigenvalues,
                    vectors,
                    solver: MeshSolver::Lanczos,
                    iterations: steps,
                });
            }
        }
        block = next;
    }
    Err(Error::NumericalFailure(format!(
        "block Lanczos broke down after {steps} block steps (Krylov dimension {}), worst residual {worst_residual:e}",
        basis.len()
    )))
}

fn deflate(v: &mut [f64], z: &[f64]) {
    let c = dotv(v, z);
    axpy(-c, z, v);
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
