//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weylsampl::kernels::{
    counting_identity_check, gaussian_bound_fit, heat_trace, kernel_monotonicity_check, spectral_function,
    RadiusConvention, SpectralMultiplier, TailCertificate,
};
use weylsampl::lattices::{default_pool_size, Lattice, LatticeOrder};
use weylsampl::sampling::SamplingOperator;
use weylsampl::spectra::MeshSolver;
use weylsampl::weyl::{default_gamma, geometric_grid, weyl_asymptotic_check, weyl_scan, ScanMode, WeylScanReport};
use weylsampl::{derive_seed, ManifoldModel, Point, SpectralBasis, TriMesh};

/// Collects violated conditions instead of stopping at the first.
#[derive(Default)]
struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn ensure(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn within(&mut self, elapsed: Duration, limit: Duration) {
        self.ensure(elapsed <= limit, format!("runtime {elapsed:.1?} exceeds {limit:?}"));
    }
}

fn circle() -> ManifoldModel {
    ManifoldModel::circle(2.0 * PI).unwrap()
}

fn circle_points(n: usize) -> Vec<Point> {
    (0..n).map(|i| Point::Circle(2.0 * PI * i as f64 / n as f64)).collect()
}

fn criterion_1(c: &mut Check) {
    let start = Instant::now();
    let b = SpectralBasis::analytic(&circle(), 1e4).unwrap();
    for w in [1.0f64, 10.0, 100.0, 1e4] {
        let expect = 1 + 2 * w.sqrt().floor() as usize;
        let got = b.count_eigenvalues(w).unwrap();
        c.ensure(got == expect, format!("circle N({w}) = {got}, expected {expect}"));
    }
    let s = SpectralBasis::analytic(&ManifoldModel::sphere(), 9900.0).unwrap();
    for w in [2.0f64, 12.0, 110.0, 9900.0] {
        let l = ((-1.0 + (1.0 + 4.0 * w).sqrt()) / 2.0).floor() as usize;
        let expect = (l + 1) * (l + 1);
        let got = s.count_eigenvalues(w).unwrap();
        c.ensure(got == expect, format!("sphere N({w}) = {got}, expected {expect}"));
    }
    c.within(start.elapsed(), Duration::from_secs(1));
}

fn check_scan(c: &mut Check, name: &str, r: &WeylScanReport) {
    let ratios: Vec<f64> = r.rows.iter().filter_map(|row| row.ratio_lower).collect();
    c.ensure(
        ratios.len() == r.rows.len(),
        format!("{name}: {} of {} rows scanned", ratios.len(), r.rows.len()),
    );
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
    c.ensure(
        lo >= 0.1 && hi <= 10.0,
        format!("{name}: ratio_lower range [{lo:.4}, {hi:.4}] leaves [0.1, 10]"),
    );
    c.ensure(hi / lo <= 4.0, format!("{name}: ratio_lower spread {:.3} > 4", hi / lo));
    for row in &r.rows {
        c.ensure(
            row.upper_ok == Some(true),
            format!("{name}: upper bound fails at omega = {}", row.omega),
        );
        c.ensure(
            row.rank_certified == Some(true),
            format!("{name}: rank certificate fails at omega = {}", row.omega),
        );
    }
    c.note(format!(
        "{name}: gamma {:.4}, ratio_lower in [{lo:.4}, {hi:.4}], {} rows",
        r.gamma,
        r.rows.len()
    ));
}

fn criterion_2(c: &mut Check) {
    let start = Instant::now();
    let trials = 8;
    let cb = SpectralBasis::analytic(&circle(), 1e4).unwrap();
    let grid = geometric_grid(100.0, 1e4, 17).unwrap();
    let gamma = default_gamma(&cb, &grid, trials, 21).unwrap();
    let r = weyl_scan(&cb, &grid, gamma, trials, 21, ScanMode::Full).unwrap();
    check_scan(c, "circle", &r);

    let sb = SpectralBasis::analytic(&ManifoldModel::sphere(), 600.0).unwrap();
    let grid = geometric_grid(6.0, 600.0, 17).unwrap();
    let gamma = default_gamma(&sb, &grid, trials, 22).unwrap();
    let r = weyl_scan(&sb, &grid, gamma, trials, 22, ScanMode::Full).unwrap();
    check_scan(c, "sphere", &r);
    c.within(start.elapsed(), Duration::from_secs(300));
}

fn criterion_3(c: &mut Check) {
    let cb = SpectralBasis::analytic(&circle(), 1e4).unwrap();
    let r = weyl_scan(
        &cb,
        &geometric_grid(100.0, 1e4, 17).unwrap(),
        0.5,
        1,
        0,
        ScanMode::CountsOnly,
    )
    .unwrap();
    let a = weyl_asymptotic_check(&r).unwrap();
    let rel = (a.ratio_tail * PI - 1.0).abs();
    c.ensure(
        rel <= 0.01,
        format!("circle weyl_ratio {} off 1/pi by {rel:.4}", a.ratio_tail),
    );
    c.note(format!("circle {:.5} (rel {rel:.2e})", a.ratio_tail));

    let sb = SpectralBasis::analytic(&ManifoldModel::sphere(), 9900.0).unwrap();
    let r = weyl_scan(
        &sb,
        &geometric_grid(99.0, 9900.0, 17).unwrap(),
        0.5,
        1,
        0,
        ScanMode::CountsOnly,
    )
    .unwrap();
    let a = weyl_asymptotic_check(&r).unwrap();
    let rel = (a.ratio_tail * 4.0 * PI - 1.0).abs();
    c.ensure(
        rel <= 0.02,
        format!("sphere weyl_ratio {} off 1/(4pi) by {rel:.4}", a.ratio_tail),
    );
    c.note(format!("sphere {:.5} (rel {rel:.2e})", a.ratio_tail));
}

fn criterion_4(c: &mut Check) {
    let m = circle();
    let b = SpectralBasis::analytic(&m, 100.0).unwrap();
    let pts = circle_points(5);
    let lat = Lattice::from_points(&m, 2.0 * PI / 5.0, pts.clone(), &pts).unwrap();
    let op = SamplingOperator::new(&b, 4.0, &lat).unwrap();
    let cond = op.report().cond;
    c.ensure((cond - 1.0).abs() <= 1e-10, format!("condition number {cond}"));
    let pp = op.pp_constant(100, 4).unwrap();
    c.ensure((pp.exact - 1.0).abs() <= 1e-10, format!("exact C1 = {}", pp.exact));
    c.ensure(
        pp.empirical <= pp.exact * (1.0 + 1e-12),
        "random C1 exceeds the exact extremal value",
    );

    let pts = circle_points(64);
    let lat = Lattice::from_points(&m, 2.0 * PI / 64.0, pts.clone(), &pts).unwrap();
    let op = SamplingOperator::new(&b, 100.0, &lat).unwrap();
    let mut worst = 0.0f64;
    for t in 0..100 {
        let f = b.random_bandlimited(100.0, derive_seed(40, t)).unwrap();
        let samples: Vec<f64> = pts.iter().map(|x| f.eval(x).unwrap()).collect();
        let g = op.reconstruct(&samples).unwrap();
        let err = f
            .coeffs()
            .iter()
            .zip(g.coeffs())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err / f.norm());
    }
    c.ensure(worst <= 1e-8, format!("worst relative reconstruction error {worst:e}"));
    c.note(format!(
        "cond {cond:.3e}, C1 {:.12}, worst reconstruction {worst:.2e}",
        pp.exact
    ));
}

fn criterion_5(c: &mut Check) {
    let cb = SpectralBasis::analytic(&circle(), 100.0).unwrap();
    let q = cb.manifold().quadrature(256).unwrap();
    let r = counting_identity_check(&cb, &q, 100.0).unwrap();
    c.ensure(r <= 1e-8 * 21.0, format!("circle residual {r:e}"));
    let sb = SpectralBasis::analytic(&ManifoldModel::sphere(), 12.0).unwrap();
    let q = sb.manifold().quadrature(16).unwrap();
    let s = counting_identity_check(&sb, &q, 12.0).unwrap();
    c.ensure(s <= 1e-8 * 16.0, format!("sphere residual {s:e}"));
    c.note(format!("residuals circle {r:.1e}, sphere {s:.1e}"));
}

/// Nonnegative multiplier `Σ a_i e^{-b_i x²}` with a decay certificate.
fn gaussian_mixture(weights: Vec<(f64, f64)>) -> SpectralMultiplier {
    let eps = 1e-16;
    let total: f64 = weights.iter().map(|w| w.0).sum();
    let slowest = weights.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let above = ((total / eps).ln() / slowest).sqrt();
    SpectralMultiplier::new("mixture", TailCertificate::Decay { above, eps }, move |x| {
        weights.iter().map(|(a, b)| a * (-b * x * x).exp()).sum()
    })
}

fn criterion_6(c: &mut Check) {
    let cb = SpectralBasis::analytic(&circle(), 4000.0).unwrap();
    let q = cb.manifold().quadrature(256).unwrap();
    let tr = heat_trace(&cb, 1.0, &q).unwrap();
    c.ensure(
        (tr.spectral - 1.7724368).abs() <= 1e-6,
        format!("circle heat trace {:.7} vs 1.7724368", tr.spectral),
    );
    let sb = SpectralBasis::analytic(&ManifoldModel::sphere(), 1806.0).unwrap();
    let q = sb.manifold().quadrature(48).unwrap();
    let ts = heat_trace(&sb, 1.0, &q).unwrap();
    c.ensure(
        (ts.spectral - 1.418503).abs() <= 1e-5,
        format!("sphere heat trace {:.7} vs 1.418503", ts.spectral),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let random_pairs = |m: &ManifoldModel, seed: u64| -> Vec<(Point, Point)> {
        let a = m.candidate_pool(200, seed).unwrap();
        let b = m.candidate_pool(200, seed + 1).unwrap();
        let mut pairs: Vec<(Point, Point)> = a.iter().cloned().zip(b).collect();
        pairs.extend(a.into_iter().take(20).map(|x| (x.clone(), x)));
        pairs
    };
    for (name, basis) in [("circle", &cb), ("sphere", &sb)] {
        let pairs = random_pairs(basis.manifold(), 60);
        match gaussian_bound_fit(basis, &[0.02, 0.1], &pairs) {
            Ok(fit) => {
                c.ensure(fit.ok, format!("{name}: gaussian fit infeasible {fit:?}"));
                c.note(format!(
                    "{name} fit C1 {:.3} c1 {:.3} C2 {:.3} c2 {:.3}",
                    fit.big_c1, fit.c1, fit.big_c2, fit.c2
                ));
            }
            Err(e) => c.ensure(false, format!("{name}: gaussian fit error {e}")),
        }
    }

    let pts = cb.manifold().candidate_pool(8, 61).unwrap();
    let mut violations = 0;
    let mut errors = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..4);
        let base: Vec<(f64, f64)> = (0..k)
            .map(|_| (rng.random_range(0.0..2.0), rng.random_range(0.5..3.0)))
            .collect();
        let mut dominating = base.clone();
        dominating.push((rng.random_range(0.0..1.0), rng.random_range(0.5..3.0)));
        let t = rng.random_range(0.2..1.5);
        let f1 = gaussian_mixture(base);
        let f2 = gaussian_mixture(dominating);
        match kernel_monotonicity_check(&cb, &f1, &f2, t, &pts) {
            Ok(true) => {}
            Ok(false) => violations += 1,
            Err(_) => errors += 1,
        }
    }
    c.ensure(
        violations == 0,
        format!("{violations} of 1000 multiplier pairs violate kernel monotonicity"),
    );
    c.ensure(
        errors == 0,
        format!("{errors} of 1000 multiplier pairs could not be evaluated"),
    );
    c.note(format!("traces circle {:.7}, sphere {:.7}", tr.spectral, ts.spectral));
}

fn criterion_7(c: &mut Check) {
    for (name, m, lmax, s_grid) in [
        ("circle", circle(), 400.0, geometric_grid(40.0, 400.0, 9).unwrap()),
        (
            "sphere",
            ManifoldModel::sphere(),
            120.0,
            geometric_grid(12.0, 120.0, 9).unwrap(),
        ),
    ] {
        let b = SpectralBasis::analytic(&m, lmax).unwrap();
        let xs = m.candidate_pool(50, 70).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &s in &s_grid {
            let r = RadiusConvention::InverseSqrt.radius(s);
            for x in &xs {
                let v = spectral_function(&b, s, x).unwrap() * m.ball_volume(x, r).unwrap();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        c.ensure(hi / lo <= 4.0, format!("{name}: e(s;x)|B| spans [{lo:.4}, {hi:.4}]"));
        c.note(format!("{name} [{lo:.4}, {hi:.4}]"));
    }
}

fn criterion_8(c: &mut Check) {
    let start = Instant::now();
    let mut max_errs = Vec::new();
    for subdiv in [3, 4] {
        let m = ManifoldModel::mesh(TriMesh::icosphere(subdiv), None).unwrap();
        let b = SpectralBasis::mesh(&m, 16, MeshSolver::Auto).unwrap();
        let mut worst = 0.0f64;
        for (i, got) in b.eigenvalues().iter().enumerate() {
            let l = (i as f64).sqrt().floor();
            let exact = l * (l + 1.0);
            let err = if exact == 0.0 {
                got.abs()
            } else {
                (got - exact).abs() / exact
            };
            worst = worst.max(err);
        }
        if subdiv == 4 {
            c.ensure(worst <= 0.03, format!("subdiv 4 max relative error {worst:.4}"));
        }
        max_errs.push(worst);
    }
    c.ensure(
        max_errs[1] < max_errs[0],
        format!("refinement does not reduce the error: {max_errs:?}"),
    );
    c.note(format!(
        "max relative error subdiv 3 {:.3e}, subdiv 4 {:.3e}",
        max_errs[0], max_errs[1]
    ));
    c.within(start.elapsed(), Duration::from_secs(120));
}

fn criterion_9(c: &mut Check) {
    let models = [
        circle(),
        ManifoldModel::flat_torus(vec![1.0, 1.5]).unwrap(),
        ManifoldModel::flat_torus(vec![1.0, 1.0, 1.0]).unwrap(),
        ManifoldModel::sphere(),
        ManifoldModel::mesh(TriMesh::icosphere(5), None).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut worst_mult = 0.0f64;
    for build in 0..50 {
        let m = &models[build % models.len()];
        let upper = m.injectivity_radius() / 6.0;
        let lower = if m.trimesh().is_some() {
            1.5 * m.packing_tolerance()
        } else {
            upper / 8.0
        };
        let rho = rng.random_range(lower..upper);
        let seed = rng.random::<u64>();
        let order = if build % 7 == 3 {
            LatticeOrder::FarthestPoint
        } else {
            LatticeOrder::Shuffled
        };
        let pool = m.candidate_pool(default_pool_size(m, rho), seed).unwrap();
        let lat = Lattice::build_ordered(m, rho, &pool, seed, order).unwrap();
        let d = lat.stored_diagnostics();
        let k = m.ball_constants(&[rho / 2.0, rho, 1.5 * rho]).unwrap();
        let ok = d.packing_ok && d.covering_radius <= rho && (d.multiplicity as f64) <= k.n_m;
        if !ok {
            violations += 1;
            c.ensure(false, format!("{} rho {rho:.4}: {d:?} vs N_M {:.1}", m.label(), k.n_m));
        }
        worst_mult = worst_mult.max(d.multiplicity as f64 / k.n_m);
    }
    c.ensure(violations == 0, format!("{violations} violations"));
    c.note(format!("largest multiplicity / N_M = {worst_mult:.3}"));
}

type Criterion = (&'static str, fn(&mut Check));

fn main() {
    let criteria: [Criterion; 9] = [
        ("exact counting oracles", criterion_1),
        ("weak Weyl double inequality", criterion_2),
        ("classical Weyl cross-check", criterion_3),
        ("Plancherel-Polya and reconstruction", criterion_4),
        ("counting identity", criterion_5),
        ("heat diagnostics", criterion_6),
        ("spectral-function bounds", criterion_7),
        ("mesh pipeline", criterion_8),
        ("lattice invariants", criterion_9),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut check = Check::default();
        if let Err(p) = catch_unwind(AssertUnwindSafe(|| run(&mut check))) {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            check.failures.push(format!("panicked: {msg}"));
        }
        let status = if check.failures.is_empty() { "PASS" } else { "FAIL" };
        let detail = if check.failures.is_empty() {
            check.notes.join("; ")
        } else {
            check.failures.join("; ")
        };
        println!("criterion {n} {status} {name} ({:.1?}): {detail}", start.elapsed());
        if !check.failures.is_empty() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
