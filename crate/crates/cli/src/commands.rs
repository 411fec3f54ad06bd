use serde_json::{json, Value};

use weylsampl::kernels::{gaussian_bound_fit, heat_t_min};
use weylsampl::lattices::default_pool_size;
use weylsampl::sampling::{find_gamma, DEFAULT_TAU};
use weylsampl::weyl::{default_gamma, default_grid_points, geometric_grid, ScanMode};
use weylsampl::{derive_seed, HeatDiagnostics, Lattice, ManifoldModel, ModelKind, SamplingOperator, SpectralBasis};

use crate::config::RunConfig;
use crate::output::{cell, Output};
use crate::CliError;

const DEFAULT_MESH_K: usize = 32;
const DEFAULT_HEAT_TIMES: [f64; 3] = [0.02, 0.1, 1.0];

fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

fn required<T: Copy>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Invalid(format!("--{flag} is required")))
}

/// Analytic bases use `lambda_max` (or the command's default); mesh bases
/// compute `k` eigenpairs.
fn basis(cfg: &RunConfig, m: &ManifoldModel, default_lambda: Option<f64>) -> Result<SpectralBasis, CliError> {
    if m.is_analytic() {
        let lambda = cfg
            .lambda_max
            .or(default_lambda)
            .ok_or_else(|| CliError::Invalid("--lambda-max is required".into()))?;
        Ok(SpectralBasis::analytic(m, lambda)?)
    } else {
        Ok(SpectralBasis::mesh(
            m,
            cfg.k.unwrap_or(DEFAULT_MESH_K),
            cfg.mesh_solver(),
        )?)
    }
}

fn eigenvalue_csv(eigs: &[f64]) -> String {
    let mut csv = String::from("index,eigenvalue\n");
    for (i, l) in eigs.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    csv
}

fn with_manifold(mut v: Value, m: &ManifoldModel) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("manifold".into(), json!(m.label()));
    }
    v
}

fn lattice_warnings(m: &ManifoldModel, rho: f64) -> Vec<String> {
    let mut w = Vec::new();
    if rho > m.diameter() {
        w.push(format!(
            "rho = {rho} exceeds the diameter {}; the lattice is a single point",
            m.diameter()
        ));
    }
    let guard = m.injectivity_radius() / 6.0;
    if rho >= guard {
        w.push(format!(
            "rho = {rho} is not below injectivity_radius/6 = {guard}; ball-volume bounds do not apply"
        ));
    }
    w
}

fn build_lattice(cfg: &RunConfig, m: &ManifoldModel, rho: f64) -> Result<Lattice, CliError> {
    let seed = cfg.seed();
    let n = cfg.pool.unwrap_or_else(|| default_pool_size(m, rho));
    let pool = m.candidate_pool(n, derive_seed(seed, 0))?;
    Ok(Lattice::build_ordered(m, rho, &pool, seed, cfg.lattice_order())?)
}

pub fn spectrum(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = cfg.manifold()?;
    let b = basis(cfg, &m, None)?;
    Ok(Output {
        json: serde_json::to_value(b.export()).expect("basis serializes"),
        csv: eigenvalue_csv(b.eigenvalues()),
    })
}

pub fn mesh_eig(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = cfg.manifold()?;
    let Some(mesh) = m.trimesh() else {
        return Err(CliError::Invalid("mesh-eig needs --manifold mesh".into()));
    };
    let k = cfg.k.unwrap_or(16);
    let b = SpectralBasis::mesh(&m, k, cfg.mesh_solver())?;
    let stats = b.solve_stats().expect("mesh bases record solver stats");
    let json = json!({
        "manifold": m.label(),
        "vertex_count": mesh.vertex_count(),
        "k": k,
        "solver": stats.solver,
        "iterations": stats.iterations,
        "eigenvalues": b.eigenvalues(),
    });
    Ok(Output {
        json,
        csv: eigenvalue_csv(b.eigenvalues()),
    })
}

pub fn lattice(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = cfg.manifold()?;
    let rho = required(cfg.rho, "rho")?;
    let warnings = lattice_warnings(&m, rho);
    for w in &warnings {
        warn(w);
    }
    let lat = build_lattice(cfg, &m, rho)?;
    let mut json = with_manifold(lat.to_json(), &m);
    json["warnings"] = json!(warnings);
    Ok(Output {
        json,
        csv: lat.to_csv(),
    })
}

pub fn sample(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = cfg.manifold()?;
    let omega = required(cfg.omega, "omega")?;
    let b = basis(cfg, &m, Some(omega))?;
    let rho = match (cfg.rho, omega > 0.0) {
        (Some(r), _) => r,
        (None, true) => cfg.gamma.unwrap_or(0.5) / omega.sqrt(),
        (None, false) => return Err(CliError::Invalid("--rho is required when omega = 0".into())),
    };
    for w in lattice_warnings(&m, rho) {
        warn(w);
    }
    let lat = build_lattice(cfg, &m, rho)?;
    let op = SamplingOperator::new(&b, omega, &lat)?;
    let r = op.report().clone();
    let (pp, recon) = if op.is_sampling_set() {
        let pp = op.pp_constant(cfg.trials(), derive_seed(cfg.seed(), 1))?;
        let f = b.random_bandlimited(omega, derive_seed(cfg.seed(), 2))?;
        let samples = op.apply(f.coeffs())?;
        let g = op.reconstruct(&samples)?;
        let err = f
            .coeffs()
            .iter()
            .zip(g.coeffs())
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            .sqrt();
        (Some(pp), Some(err / f.norm()))
    } else {
        warn("the lattice is not a sampling set for this band");
        (None, None)
    };
    let json = json!({
        "manifold": m.label(),
        "report": r,
        "sampling_set": op.is_sampling_set(),
        "pp_constant": pp,
        "reconstruction_error": recon,
        "seed": cfg.seed(),
    });
    let csv = format!(
        "omega,rho,n_points,n_band,sigma_min,sigma_max,B_lower,B_upper,cond\n{},{},{},{},{},{},{},{},{}\n",
        r.omega, r.rho, r.n_points, r.n_band, r.sigma_min, r.sigma_max, r.b_lower, r.b_upper, r.cond
    );
    Ok(Output { json, csv })
}

/// Smallest doubling of `64 / t` whose truncation time reaches `t`.
fn heat_lambda(m: &ManifoldModel, t: f64) -> Result<f64, CliError> {
    let mut lambda = 64.0 / t;
    loop {
        let b = SpectralBasis::analytic(m, lambda)?;
        if heat_t_min(&b) <= t {
            return Ok(lambda);
        }
        lambda *= 2.0;
    }
}

fn default_quadrature(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Circle => 256,
        ModelKind::FlatTorus => 32,
        ModelKind::Sphere2 => 48,
        ModelKind::Mesh => 1,
    }
}

pub fn heat(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = cfg.manifold()?;
    let times = cfg.t.clone().unwrap_or_else(|| DEFAULT_HEAT_TIMES.to_vec());
    let t_lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let default_lambda = match (m.is_analytic(), cfg.lambda_max) {
        (true, None) => Some(heat_lambda(&m, t_lo)?),
        _ => None,
    };
    let b = basis(cfg, &m, default_lambda)?;
    let seed = cfg.seed();
    let points = m.candidate_pool(cfg.test_points.unwrap_or(8), derive_seed(seed, 0))?;
    let quad = m.quadrature(cfg.quadrature.unwrap_or_else(|| default_quadrature(m.kind())))?;
    let mut diag = HeatDiagnostics::compute(&b, &times, &points, &quad)?;

    let short: Vec<f64> = times.iter().copied().filter(|t| *t < 1.0).collect();
    if !short.is_empty() {
        let a = m.candidate_pool(100, derive_seed(seed, 1))?;
        let c = m.candidate_pool(100, derive_seed(seed, 2))?;
        let mut pairs: Vec<_> = a.iter().cloned().zip(c).collect();
        pairs.extend(a.into_iter().take(10).map(|x| (x.clone(), x)));
        match gaussian_bound_fit(&b, &short, &pairs) {
            Ok(fit) => diag.fit = Some(fit),
            Err(e) => warn(format!("gaussian bound fit skipped: {e}")),
        }
    }
    if !diag.traces_monotone() {
        warn("heat traces are not decreasing in t");
    }
    let mut json = with_manifold(serde_json::to_value(&diag).expect("heat diagnostics serialize"), &m);
    json["lambda_max"] = json!(b.lambda_max());
    json["seed"] = json!(seed);
    Ok(Output {
        json,
        csv: diag.to_csv(),
    })
}

pub fn weyl_scan(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = cfg.manifold()?;
    let lo = required(cfg.omega_min, "omega-min")?;
    let hi = required(cfg.omega_max, "omega-max")?;
    let n = cfg.points.unwrap_or_else(|| default_grid_points(lo, hi));
    let grid = geometric_grid(lo, hi, n)?;
    let b = basis(cfg, &m, Some(hi))?;
    let (mode, gamma) = if cfg.counts_only {
        (ScanMode::CountsOnly, cfg.gamma.unwrap_or(0.5))
    } else {
        let g = match cfg.gamma {
            Some(g) => g,
            None => default_gamma(&b, &grid, cfg.trials(), cfg.seed())?,
        };
        (ScanMode::Full, g)
    };
    let report = weylsampl::weyl::weyl_scan(&b, &grid, gamma, cfg.trials(), cfg.seed(), mode)?;
    for row in &report.rows {
        if let Some(reason) = &row.skipped {
            warn(format!("omega = {}: {reason}", row.omega));
        }
    }
    Ok(Output {
        json: serde_json::to_value(&report).expect("weyl report serializes"),
        csv: report.to_csv(),
    })
}

pub fn gamma(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = cfg.manifold()?;
    let omega = required(cfg.omega, "omega")?;
    let b = basis(cfg, &m, Some(omega))?;
    let g = find_gamma(&b, omega, cfg.trials(), cfg.seed(), cfg.tau.unwrap_or(DEFAULT_TAU))?;
    let mut csv = String::from("gamma,rho,min_cardinality,worst_ratio,pass\n");
    for p in &g.probes {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.gamma,
            cell(Some(p.rho).filter(|r| r.is_finite())),
            p.min_cardinality,
            p.worst_ratio,
            p.pass
        ));
    }
    Ok(Output {
        json: with_manifold(serde_json::to_value(&g).expect("gamma search serializes"), &m),
        csv,
    })
}
