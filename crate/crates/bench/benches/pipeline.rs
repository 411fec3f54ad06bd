use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use weylsampl::kernels::heat_trace;
use weylsampl::lattices::default_pool_size;
use weylsampl::spectra::MeshSolver;
use weylsampl::weyl::{geometric_grid, weyl_scan, ScanMode};
use weylsampl::{Lattice, LatticeOrder, ManifoldModel, SamplingOperator, SpectralBasis, TriMesh};
use weylsampl_bench::{circle, lattice, sphere_basis};

fn mesh_eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("mesh_eigen");
    g.sample_size(10);
    for (subdiv, solver) in [(3, MeshSolver::Dense), (4, MeshSolver::Lanczos)] {
        let m = ManifoldModel::mesh(TriMesh::icosphere(subdiv), None).unwrap();
        g.bench_with_input(BenchmarkId::new("icosphere_k16", subdiv), &m, |b, m| {
            b.iter(|| SpectralBasis::mesh(m, 16, solver).unwrap())
        });
    }
    g.finish();
}

fn lattices(c: &mut Criterion) {
    let mut g = c.benchmark_group("lattice");
    g.sample_size(10);
    let m = ManifoldModel::sphere();
    let pool = m.candidate_pool(default_pool_size(&m, 0.1), 1).unwrap();
    for order in [LatticeOrder::Shuffled, LatticeOrder::FarthestPoint] {
        g.bench_function(format!("sphere_rho0.1_{order:?}"), |b| {
            b.iter(|| Lattice::build_ordered(&m, 0.1, &pool, 1, order).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("sampling_operator");
    g.sample_size(10);
    let b = sphere_basis(110.0);
    let lat = lattice(b.manifold(), 0.5 / 110f64.sqrt(), 2);
    g.bench_function("sphere_omega110", |bench| {
        bench.iter(|| SamplingOperator::new(&b, 110.0, &lat).unwrap())
    });
    g.finish();
}

fn heat(c: &mut Criterion) {
    let b = sphere_basis(1806.0);
    let q = b.manifold().quadrature(48).unwrap();
    c.bench_function("heat_trace_sphere", |bench| {
        bench.iter(|| heat_trace(&b, 0.1, &q).unwrap())
    });
}

fn scan(c: &mut Criterion) {
    let mut g = c.benchmark_group("weyl_scan");
    g.sample_size(10);
    let b = SpectralBasis::analytic(&circle(), 1600.0).unwrap();
    let grid = geometric_grid(100.0, 1600.0, 3).unwrap();
    g.bench_function("circle_3rows", |bench| {
        bench.iter(|| weyl_scan(&b, &grid, 0.5, 4, 1, ScanMode::Full).unwrap())
    });
    g.finish();
}

criterion_group!(benches, mesh_eigen, lattices, sampling, heat, scan);
criterion_main!(benches);
