//! Fixtures shared by the benchmarks and the end-to-end pipeline tests.

use std::f64::consts::PI;

use weylsampl::lattices::default_pool_size;
use weylsampl::{Lattice, ManifoldModel, SpectralBasis};

pub fn circle() -> ManifoldModel {
    ManifoldModel::circle(2.0 * PI).expect("valid circle")
}

/// Greedy lattice at `rho` over the default pool.
pub fn lattice(m: &ManifoldModel, rho: f64, seed: u64) -> Lattice {
    let pool = m.candidate_pool(default_pool_size(m, rho), seed).expect("pool");
    Lattice::build(m, rho, &pool, seed).expect("lattice")
}

pub fn sphere_basis(lambda_max: f64) -> SpectralBasis {
    SpectralBasis::analytic(&ManifoldModel::sphere(), lambda_max).expect("sphere basis")
}
