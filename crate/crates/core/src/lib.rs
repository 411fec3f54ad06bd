//! Bandlimited sampling, metric lattices and eigenvalue counting on compact
//! Riemannian manifolds.
//!
//! The crate compares the number `N_ω` of Laplace–Beltrami eigenvalues in
//! `[0, ω]` with the cardinalities of metric `ρ`-lattices at densities
//! `ρ = ω^{-1/2}` and `ρ = γ ω^{-1/2}`, and checks the supporting
//! inequalities numerically: Plancherel–Polya frame bounds, a Poincaré-type
//! estimate, heat-kernel Gaussian bounds and the spectral function.
//!
//! Randomness is always explicit: every randomized operation takes a `u64`
//! seed and draws from ChaCha8 (a counter-based stream cipher generator), so
//! results are reproducible bit for bit.

pub mod error;
pub mod kernels;
pub mod lattices;
pub mod linalg;
pub mod manifolds;
pub mod sampling;
pub mod spectra;
pub mod weyl;

pub use error::{Error, Result};
pub use kernels::{HeatDiagnostics, SpectralMultiplier};
pub use lattices::{Lattice, LatticeDiagnostics, LatticeOrder};
pub use manifolds::{BallConstants, ManifoldModel, ModelKind, Point, QuadratureRule, TriMesh};
pub use sampling::{FrameReport, SamplingOperator};
pub use spectra::{BandlimitedFunction, Provenance, SpectralBasis};
pub use weyl::{WeylRow, WeylScanReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
