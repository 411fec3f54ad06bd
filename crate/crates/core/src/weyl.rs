//! Eigenvalue counts against lattice cardinalities over a band sweep.
//!
//! For each `ω` the scan records `N_ω`, the observed extremes of greedy
//! lattice cardinalities at `ρ = ω^{-1/2}` and the smallest one at
//! `ρ = γω^{-1/2}`. Observed extremes over seeded constructions stand in
//! for the infimum and supremum over all lattices: the largest observed
//! cardinality bounds the supremum from below and the smallest observed one
//! bounds the infimum from above.

use serde::Serialize;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::lattices::lattice_extremes;
use crate::sampling::{find_gamma, FrameReport, SamplingOperator, DEFAULT_TAU, GAMMA_GRID};
use crate::spectra::SpectralBasis;

/// Default sampling of geometric grids.
pub const POINTS_PER_DECADE: usize = 8;

/// Default number of seeded lattice constructions per density.
pub const DEFAULT_TRIALS: usize = 8;

/// Whether a scan builds lattices or only counts eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    #[default]
    Full,
    CountsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylRow {
    pub omega: f64,
    pub n_omega: usize,
    pub card_min_rho: Option<usize>,
    pub card_max_rho: Option<usize>,
    pub card_min_gamma: Option<usize>,
    /// `N_ω / card_max_rho`.
    pub ratio_lower: Option<f64>,
    /// `N_ω ≤ card_min_gamma`.
    pub upper_ok: Option<bool>,
    /// `N_ω / (Vol ω^{d/2})`.
    pub weyl_ratio: f64,
    /// Frame bounds of the smallest lattice at `γω^{-1/2}`.
    pub certificate: Option<FrameReport>,
    /// The smallest `γ` lattice samples the band and has at least `N_ω` points.
    pub rank_certified: Option<bool>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylSummary {
    /// Smallest `ratio_lower` over the scanned rows.
    pub a_empirical: Option<f64>,
    pub all_upper_ok: bool,
    pub all_rank_certified: bool,
    /// True when no row carried lattice data, so the flags hold vacuously.
    pub vacuous: bool,
    pub rows_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylScanReport {
    pub manifold: String,
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
    pub mode: ScanMode,
    pub rows: Vec<WeylRow>,
    pub summary: WeylSummary,
}

/// `n` geometrically spaced values from `min` to `max` inclusive.
pub fn geometric_grid(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if !(min > 0.0) || !(max >= min) || !max.is_finite() {
        return Err(Error::invalid(format!("invalid grid range [{min}, {max}]")));
    }
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![min]),
        _ => {
            let ratio = (max / min).ln() / (n - 1) as f64;
            let mut g: Vec<f64> = (0..n).map(|i| min * (ratio * i as f64).exp()).collect();
            g[n - 1] = max;
            Ok(g)
        }
    }
}

/// Grid point count for [`POINTS_PER_DECADE`] spacing over `[min, max]`.
pub fn default_grid_points(min: f64, max: f64) -> usize {
    ((max / min).log10() * POINTS_PER_DECADE as f64).round() as usize + 1
}

/// The scan's default `γ`: the empirical γ at the grid median, kept inside
/// `(0, 1)`.
pub fn default_gamma(b: &SpectralBasis, omega_grid: &[f64], trials: usize, seed: u64) -> Result<f64> {
    if omega_grid.is_empty() {
        return Err(Error::invalid("empty band grid"));
    }
    let mut sorted = omega_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let g = find_gamma(b, median, trials, seed, DEFAULT_TAU)?.gamma;
    Ok(g.min((GAMMA_GRID - 1) as f64 / GAMMA_GRID as f64))
}

fn row_guard(b: &SpectralBasis, omega: f64) -> Option<String> {
    let m = b.manifold();
    if omega <= 0.0 {
        return Some("omega must be positive to set a lattice density".into());
    }
    let rho = omega.powf(-0.5);
    let guard = m.injectivity_radius() / 6.0;
    if rho >= guard {
        return Some(format!("rho = {rho} is not below injectivity_radius/6 = {guard}"));
    }
    None
}

pub fn weyl_scan(
    b: &SpectralBasis,
    omega_grid: &[f64],
    gamma: f64,
    trials: usize,
    seed: u64,
    mode: ScanMode,
) -> Result<WeylScanReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if trials == 0 {
        return Err(Error::invalid("weyl_scan needs at least one trial"));
    }
    let mut grid = omega_grid.to_vec();
    if grid.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("non-finite band in grid"));
    }
    grid.sort_by(f64::total_cmp);
    for &w in &grid {
        b.check_band(w)?;
    }
    let m = b.manifold();
    let d = m.dimension() as i32;
    let mut rows = Vec::with_capacity(grid.len());
    for &omega in &grid {
        let n_omega = b.band_len(omega);
        let weyl_ratio = n_omega as f64 / (m.volume() * omega.sqrt().powi(d));
        let mut row = WeylRow {
            omega,
            n_omega,
            card_min_rho: None,
            card_max_rho: None,
            card_min_gamma: None,
            ratio_lower: None,
            upper_ok: None,
            weyl_ratio,
            certificate: None,
            rank_certified: None,
            skipped: None,
        };
        if mode == ScanMode::CountsOnly {
            rows.push(row);
            continue;
        }
        if let Some(reason) = row_guard(b, omega) {
            row.skipped = Some(reason);
            rows.push(row);
            continue;
        }
        let row_seed = derive_seed(seed, omega.to_bits());
        let rho = omega.powf(-0.5);
        let at_rho = lattice_extremes(m, rho, trials, derive_seed(row_seed, 0))?;
        let at_gamma = lattice_extremes(m, gamma * rho, trials, derive_seed(row_seed, 1))?;
        let op = SamplingOperator::new(b, omega, &at_gamma.min_lattice)?;
        let report = op.report().clone();
        row.card_min_rho = Some(at_rho.min_card);
        row.card_max_rho = Some(at_rho.max_card);
        row.card_min_gamma = Some(at_gamma.min_card);
        row.ratio_lower = Some(n_omega as f64 / at_rho.max_card as f64);
        row.upper_ok = Some(n_omega <= at_gamma.min_card);
        row.rank_certified = Some(report.b_lower >= DEFAULT_TAU * report.b_upper && report.n_points >= n_omega);
        row.certificate = Some(report);
        rows.push(row);
    }
    let scanned: Vec<&WeylRow> = rows.iter().filter(|r| r.upper_ok.is_some()).collect();
    let summary = WeylSummary {
        a_empirical: scanned.iter().filter_map(|r| r.ratio_lower).reduce(f64::min),
        all_upper_ok: scanned.iter().all(|r| r.upper_ok == Some(true)),
        all_rank_certified: scanned.iter().all(|r| r.rank_certified == Some(true)),
        vacuous: scanned.is_empty(),
        rows_skipped: rows.iter().filter(|r| r.skipped.is_some()).count(),
    };
    Ok(WeylScanReport {
        manifold: m.label(),
        gamma,
        trials,
        seed,
        mode,
        rows,
        summary,
    })
}

/// Tail of the classical Weyl ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCheck {
    /// `weyl_ratio` of the last row.
    pub ratio_tail: f64,
    /// `(max − min)/max` of `weyl_ratio` over the top half of the rows.
    pub spread: f64,
    /// `spread ≤ 0.1`.
    pub stable: bool,
}

pub fn weyl_asymptotic_check(report: &WeylScanReport) -> Result<AsymptoticCheck> {
    let n = report.rows.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "asymptotic check needs at least 3 rows, got {n}"
        )));
    }
    let top = &report.rows[n / 2..];
    let max = top.iter().map(|r| r.weyl_ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = top.iter().map(|r| r.weyl_ratio).fold(f64::INFINITY, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    Ok(AsymptoticCheck {
        ratio_tail: report.rows[n - 1].weyl_ratio,
        spread,
        stable: spread <= 0.1,
    })
}

/// Least-squares log–log slopes of `N_ω` and of the largest cardinality at
/// `ρ = ω^{-1/2}` against `ω`, over rows with lattice data.
pub fn loglog_slopes(report: &WeylScanReport) -> Result<(f64, f64)> {
    let rows: Vec<&WeylRow> = report.rows.iter().filter(|r| r.card_max_rho.is_some()).collect();
    if rows.len() < 2 {
        return Err(Error::invalid("slopes need at least two scanned rows"));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.omega.ln()).collect();
    let slope = |y: Vec<f64>| {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        sxy / sxx
    };
    let s_n = slope(rows.iter().map(|r| (r.n_omega as f64).ln()).collect());
    let s_card = slope(rows.iter().map(|r| (r.card_max_rho.unwrap() as f64).ln()).collect());
    Ok((s_n, s_card))
}

impl WeylScanReport {
    pub const CSV_HEADER: &'static str =
        "omega,n_omega,card_min_rho,card_max_rho,card_min_gamma,ratio_lower,upper_ok,weyl_ratio";

    /// Plot-ready CSV; fields a row does not carry are left empty.
    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.omega,
                r.n_omega,
                opt(r.card_min_rho),
                opt(r.card_max_rho),
                opt(r.card_min_gamma),
                opt(r.ratio_lower),
                opt(r.upper_ok),
                r.weyl_ratio
            ));
        }
        out
    }
}
