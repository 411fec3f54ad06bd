use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use weylsampl::lattices::LatticeOrder;
use weylsampl::spectra::MeshSolver;
use weylsampl::{ManifoldModel, TriMesh};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Circle,
    Torus,
    Sphere,
    Mesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderArg {
    Shuffled,
    Fps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverArg {
    Auto,
    Dense,
    Lanczos,
}

/// Settings shared by every subcommand. The same struct is the flag set and
/// the JSON config file schema; flags win over file values.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Manifold model.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldKind>,

    /// Circle length (default 2π).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,

    /// Torus side lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,

    /// Triangle mesh in ASCII OFF format.
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,

    /// Use a generated icosphere with this many subdivisions as the mesh.
    #[arg(long, value_name = "N")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub icosphere: Option<u32>,

    /// Upper bound on the mesh injectivity radius.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub injectivity: Option<f64>,

    /// Eigenvalue threshold of an analytic basis.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,

    /// Number of mesh eigenpairs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,

    /// Mesh eigensolver.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverArg>,

    /// Band limit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,

    /// Number of geometric grid points between omega-min and omega-max.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,

    /// Lattice scale factor: rho = gamma / sqrt(omega).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,

    /// Randomized repetitions (lattice seeds, random functions).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Lattice separation.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,

    /// Greedy sweep order.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderArg>,

    /// Candidate pool size (default scales with (diameter/rho)^d).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool: Option<usize>,

    /// Sampling threshold on B_lower / B_upper for the gamma search.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,

    /// Heat times, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,

    /// Number of random evaluation points for heat diagnostics.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_points: Option<usize>,

    /// Quadrature resolution for traces.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<usize>,

    /// Weyl scan: eigenvalue counts only, no lattices.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub counts_only: bool,

    /// Output format (default: from the output extension, else json).
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    /// Output file (default: standard output).
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Worker threads (falls back to WEYLSAMPL_THREADS).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f),)* counts_only: $top.counts_only || $base.counts_only }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
    }

    /// `top` overrides `self` field by field.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top; manifold, length, lengths, mesh, icosphere, injectivity, lambda_max, k, solver,
            omega, omega_min, omega_max, points, gamma, trials, seed, rho, order, pool, tau, t, test_points,
            quadrature, format, out, threads)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        fn positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
            match v {
                Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::Invalid(format!(
                    "{name} must be positive and finite, got {x}"
                ))),
                _ => Ok(()),
            }
        }
        for (name, v) in [
            ("length", self.length),
            ("injectivity", self.injectivity),
            ("lambda-max", self.lambda_max),
            ("omega-max", self.omega_max),
            ("gamma", self.gamma),
            ("rho", self.rho),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [("omega", self.omega), ("omega-min", self.omega_min)] {
            if let Some(x) = v {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(CliError::Invalid(format!("{name} must be nonnegative, got {x}")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.omega_min, self.omega_max) {
            if lo > hi {
                return Err(CliError::Invalid(format!("omega-min {lo} exceeds omega-max {hi}")));
            }
        }
        if let Some(g) = self.gamma {
            if g > 1.0 {
                return Err(CliError::Invalid(format!("gamma must lie in (0, 1], got {g}")));
            }
        }
        if let Some(tau) = self.tau {
            if !(0.0..1.0).contains(&tau) {
                return Err(CliError::Invalid(format!("tau must lie in [0, 1), got {tau}")));
            }
        }
        for (name, v) in [
            ("k", self.k),
            ("points", self.points),
            ("trials", self.trials),
            ("pool", self.pool),
            ("test-points", self.test_points),
            ("quadrature", self.quadrature),
            ("threads", self.threads),
        ] {
            if v == Some(0) {
                return Err(CliError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if let Some(ls) = &self.lengths {
            if ls.is_empty() || ls.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(CliError::Invalid("torus lengths must be positive".into()));
            }
        }
        if let Some(ts) = &self.t {
            if ts.is_empty() || ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(CliError::Invalid("heat times must be positive".into()));
            }
        }
        if self.mesh.is_some() && self.icosphere.is_some() {
            return Err(CliError::Invalid("give either --mesh or --icosphere, not both".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(8)
    }

    /// Output format: explicit flag, else the output extension, else JSON.
    pub fn format(&self) -> Format {
        self.format
            .unwrap_or_else(|| match self.out.as_ref().and_then(|p| p.extension()) {
                Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
                _ => Format::Json,
            })
    }

    pub fn lattice_order(&self) -> LatticeOrder {
        match self.order {
            Some(OrderArg::Fps) => LatticeOrder::FarthestPoint,
            _ => LatticeOrder::Shuffled,
        }
    }

    pub fn mesh_solver(&self) -> MeshSolver {
        match self.solver {
            Some(SolverArg::Dense) => MeshSolver::Dense,
            Some(SolverArg::Lanczos) => MeshSolver::Lanczos,
            _ => MeshSolver::Auto,
        }
    }

    /// SHA-256 over the settings that influence results, with the command
    /// name. Output path, format and thread count are excluded.
    pub fn hash(&self, command: &str) -> String {
        let mut c = self.clone();
        c.out = None;
        c.format = None;
        c.threads = None;
        c.seed = Some(self.seed());
        let payload = serde_json::json!({ "command": command, "config": c });
        let digest = Sha256::digest(payload.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn manifold(&self) -> Result<ManifoldModel, CliError> {
        let kind = self
            .manifold
            .ok_or_else(|| CliError::Invalid("--manifold is required".into()))?;
        Ok(match kind {
            ManifoldKind::Circle => ManifoldModel::circle(self.length.unwrap_or(2.0 * PI))?,
            ManifoldKind::Torus => {
                let lengths = self
                    .lengths
                    .clone()
                    .ok_or_else(|| CliError::Invalid("torus needs --lengths".into()))?;
                ManifoldModel::flat_torus(lengths)?
            }
            ManifoldKind::Sphere => ManifoldModel::sphere(),
            ManifoldKind::Mesh => {
                let mesh = match (&self.mesh, self.icosphere) {
                    (Some(path), _) => {
                        let file = std::fs::File::open(path)
                            .map_err(|e| CliError::Invalid(format!("cannot open mesh {}: {e}", path.display())))?;
                        TriMesh::read_off(std::io::BufReader::new(file))?
                    }
                    (None, Some(n)) => TriMesh::icosphere(n),
                    (None, None) => return Err(CliError::Invalid("mesh needs --mesh or --icosphere".into())),
                };
                ManifoldModel::mesh(mesh, self.injectivity)?
            }
        })
    }
}

/// Thread count from the flag, else `WEYLSAMPL_THREADS`.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Invalid(format!(
                "WEYLSAMPL_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}
