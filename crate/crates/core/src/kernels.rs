//! Spectral functional calculus on a truncated basis: kernels
//! `K_t^F(x,y) = Σ_l F(t√λ_l) u_l(x) u_l(y)`, the heat kernel
//! `p_t(x,y) = Σ_l e^{-tλ_l} u_l(x) u_l(y)` and the spectral function
//! `e(s;x) = Σ_{λ_l ≤ s} u_l(x)²`.
//!
//! Every sum runs over ascending `l` so results are bit-stable. Sums that
//! would need eigenvalues above `lambda_max` are refused.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifolds::{Point, QuadratureRule};
use crate::spectra::SpectralBasis;

/// Relative tail allowance behind `t_min`: `e^{-t λ_max} N_{λ_max} ≤ 1e-12`.
pub const HEAT_TAIL: f64 = 1e-12;

/// Closed ties for indicator multipliers.
const INDICATOR_SLACK: f64 = 1e-12;

/// What a multiplier promises beyond the evaluated band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailCertificate {
    /// `F(λ) = 0` for `λ > bound`.
    Support(f64),
    /// `F(λ) ≤ eps` for `λ > above`.
    Decay { above: f64, eps: f64 },
}

/// A nonnegative function `F` on `[0, ∞)` with a tail certificate.
#[derive(Clone)]
pub struct SpectralMultiplier {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    tail: TailCertificate,
    label: String,
}

impl fmt::Debug for SpectralMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralMultiplier")
            .field("label", &self.label)
            .field("tail", &self.tail)
            .finish()
    }
}

impl SpectralMultiplier {
    pub fn new(
        label: impl Into<String>,
        tail: TailCertificate,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SpectralMultiplier {
            f: Arc::new(f),
            tail,
            label: label.into(),
        }
    }

    /// `χ_{[0,s]}`, with `λ = s` included.
    pub fn indicator(s: f64) -> Self {
        let edge = s * (1.0 + INDICATOR_SLACK);
        Self::new(format!("indicator[0,{s}]"), TailCertificate::Support(edge), move |x| {
            if x <= edge {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `F(λ) = e^{-λ²}`, so that `K_t^F = p_{t²}`.
    pub fn gaussian() -> Self {
        Self::scaled_gaussian(1.0, 1.0)
    }

    /// `F(λ) = a·e^{-λ²/w²}`.
    pub fn scaled_gaussian(a: f64, w: f64) -> Self {
        let eps = 1e-300_f64.max(HEAT_TAIL * 1e-4);
        let above = w * (a.max(eps) / eps).ln().max(0.0).sqrt();
        Self::new(
            format!("{a}*exp(-x^2/{w}^2)"),
            TailCertificate::Decay { above, eps },
            move |x| a * (-(x / w).powi(2)).exp(),
        )
    }

    pub fn zero() -> Self {
        Self::new("zero", TailCertificate::Support(0.0), |_| 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn tail(&self) -> TailCertificate {
        self.tail
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// A truncated kernel value together with the bound on what was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Crude bound on `Σ_{λ_l > λ_max} u_l(x)²`-weighted tails: `ε N_{λ_max}/Vol`.
fn tail_estimate(b: &SpectralBasis, eps: f64) -> f64 {
    eps * b.len() as f64 / b.manifold().volume()
}

/// `K_t^F(x,x)`.
pub fn kernel_diag(b: &SpectralBasis, f: &SpectralMultiplier, t: f64, x: &Point) -> Result<KernelValue> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("kernel scale must be positive, got {t}")));
    }
    b.manifold().validate_point(x)?;
    let edge = t * b.lambda_max().sqrt();
    let eps = match f.tail() {
        TailCertificate::Support(s) if edge >= s => 0.0,
        TailCertificate::Decay { above, eps } if edge >= above => eps,
        _ => {
            return Err(Error::TruncationUnsafe(format!(
                "multiplier {} is not certified beyond t*sqrt(lambda_max) = {edge}",
                f.label()
            )))
        }
    };
    let u = eval_all(b, x);
    let value = u
        .iter()
        .zip(b.eigenvalues())
        .map(|(u, l)| f.eval(t * l.sqrt()) * u * u)
        .sum();
    Ok(KernelValue {
        value,
        tail_bound: tail_estimate(b, eps),
    })
}

fn eval_all(b: &SpectralBasis, x: &Point) -> Vec<f64> {
    let mut u = vec![0.0; b.len()];
    b.eval_first_unchecked(b.len(), x, &mut u);
    u
}

/// Smallest heat time whose truncation at `lambda_max` is certified.
pub fn heat_t_min(b: &SpectralBasis) -> f64 {
    if b.lambda_max() <= 0.0 {
        return 0.0;
    }
    (b.len() as f64 / HEAT_TAIL).ln() / b.lambda_max()
}

fn check_heat_time(b: &SpectralBasis, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("heat time must be positive, got {t}")));
    }
    let t_min = heat_t_min(b);
    if t < t_min {
        return Err(Error::TruncationUnsafe(format!(
            "heat time {t} is below t_min = {t_min} for lambda_max = {}",
            b.lambda_max()
        )));
    }
    Ok(())
}

/// `p_t(x,x)`.
pub fn heat_diag(b: &SpectralBasis, t: f64, x: &Point) -> Result<f64> {
    check_heat_time(b, t)?;
    b.manifold().validate_point(x)?;
    Ok(heat_diag_unchecked(b, t, &eval_all(b, x)))
}

fn heat_diag_unchecked(b: &SpectralBasis, t: f64, u: &[f64]) -> f64 {
    u.iter().zip(b.eigenvalues()).map(|(u, l)| (-t * l).exp() * u * u).sum()
}

/// `Σ_l e^{-tλ_l²} u_l(x)²`, the squared-eigenvalue form of the diagonal sum.
pub fn heat_diag_squared(b: &SpectralBasis, t: f64, x: &Point) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("heat time must be positive, got {t}")));
    }
    let lmax = b.lambda_max();
    if (-t * lmax * lmax).exp() * b.len() as f64 > HEAT_TAIL {
        return Err(Error::TruncationUnsafe(format!(
            "time {t} too small for the squared form at lambda_max = {lmax}"
        )));
    }
    b.manifold().validate_point(x)?;
    let u = eval_all(b, x);
    Ok(u.iter()
        .zip(b.eigenvalues())
        .map(|(u, l)| (-t * l * l).exp() * u * u)
        .sum())
}

/// `p_t(x,y)` with its crude tail bound.
pub fn heat_kernel(b: &SpectralBasis, t: f64, x: &Point, y: &Point) -> Result<KernelValue> {
    check_heat_time(b, t)?;
    b.manifold().validate_point(x)?;
    b.manifold().validate_point(y)?;
    let (ux, uy) = (eval_all(b, x), eval_all(b, y));
    Ok(KernelValue {
        value: heat_pair(b, t, &ux, &uy),
        tail_bound: heat_tail_bound(b, t),
    })
}

fn heat_pair(b: &SpectralBasis, t: f64, ux: &[f64], uy: &[f64]) -> f64 {
    ux.iter()
        .zip(uy)
        .zip(b.eigenvalues())
        .map(|((a, c), l)| (-t * l).exp() * a * c)
        .sum()
}

fn heat_tail_bound(b: &SpectralBasis, t: f64) -> f64 {
    tail_estimate(b, (-t * b.lambda_max()).exp())
}

/// Heat trace two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatTrace {
    /// `Σ_l e^{-tλ_l}`.
    pub spectral: f64,
    /// `∫ p_t(x,x) dx` by the quadrature rule.
    pub quadrature: f64,
}

pub fn heat_trace(b: &SpectralBasis, t: f64, quad: &QuadratureRule) -> Result<HeatTrace> {
    check_heat_time(b, t)?;
    let spectral = heat_trace_spectral(b, t);
    let quadrature = integrate(b, quad, |u| heat_diag_unchecked(b, t, u))?;
    Ok(HeatTrace { spectral, quadrature })
}

/// `Σ_l e^{-tλ_l}` without a quadrature check.
pub fn heat_trace_spectral(b: &SpectralBasis, t: f64) -> f64 {
    b.eigenvalues().iter().map(|l| (-t * l).exp()).sum()
}

/// `Σ_j w_j g(u(x_j))` with per-node evaluation in parallel and a fixed
/// summation order.
fn integrate(b: &SpectralBasis, quad: &QuadratureRule, g: impl Fn(&[f64]) -> f64 + Sync) -> Result<f64> {
    for x in &quad.nodes {
        b.manifold().validate_point(x)?;
    }
    let values: Vec<f64> = quad.nodes.par_iter().map(|x| g(&eval_all(b, x))).collect();
    Ok(values.iter().zip(&quad.weights).map(|(v, w)| v * w).sum())
}

/// `e(s;x) = Σ_{λ_l ≤ s} u_l(x)²`.
pub fn spectral_function(b: &SpectralBasis, s: f64, x: &Point) -> Result<f64> {
    b.check_band(s)?;
    b.manifold().validate_point(x)?;
    let n = b.band_len(s);
    let mut u = vec![0.0; n];
    b.eval_first_unchecked(n, x, &mut u);
    Ok(u.iter().map(|u| u * u).sum())
}

/// Ball radius attached to a spectral threshold `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusConvention {
    /// `s^{-1/2}`, the scaling that matches `N_s ~ s^{d/2}`.
    #[default]
    InverseSqrt,
    /// `s^{-1}`.
    Inverse,
}

impl RadiusConvention {
    pub fn radius(self, s: f64) -> f64 {
        match self {
            RadiusConvention::InverseSqrt => s.powf(-0.5),
            RadiusConvention::Inverse => 1.0 / s,
        }
    }
}

/// Default lower end of admissible spectral thresholds.
pub const DEFAULT_S_FLOOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralBoundRow {
    pub s: f64,
    pub x_id: usize,
    pub spectral_function: f64,
    pub ball_volume: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralBounds {
    pub a1: f64,
    pub a2: f64,
    pub convention: RadiusConvention,
    pub rows: Vec<SpectralBoundRow>,
}

/// Extremes of `e(s;x)·|B(x, r(s))|` over the grid.
pub fn spectral_function_bounds(
    b: &SpectralBasis,
    s_grid: &[f64],
    points: &[Point],
    s_floor: f64,
    convention: RadiusConvention,
) -> Result<SpectralBounds> {
    if s_grid.is_empty() || points.is_empty() {
        return Err(Error::invalid(
            "spectral function bounds need a nonempty grid and point set",
        ));
    }
    for &s in s_grid {
        if !(s >= s_floor) {
            return Err(Error::invalid(format!("threshold {s} is below the floor {s_floor}")));
        }
        b.check_band(s)?;
    }
    let m = b.manifold();
    let mut rows = Vec::with_capacity(s_grid.len() * points.len());
    for &s in s_grid {
        let r = convention.radius(s);
        let per_point = points
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let e = spectral_function(b, s, x)?;
                let v = m.ball_volume(x, r)?;
                Ok(SpectralBoundRow {
                    s,
                    x_id: i,
                    spectral_function: e,
                    ball_volume: v,
                    product: e * v,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(per_point);
    }
    let a1 = rows.iter().map(|r| r.product).fold(f64::INFINITY, f64::min);
    let a2 = rows.iter().map(|r| r.product).fold(0.0, f64::max);
    Ok(SpectralBounds {
        a1,
        a2,
        convention,
        rows,
    })
}

/// Checks `K_t^{F1}(x,x) ≤ K_t^{F2}(x,x) + 1e-12` at every point, after
/// confirming `F1 ≤ F2` at every `t√λ_l`.
pub fn kernel_monotonicity_check(
    b: &SpectralBasis,
    f1: &SpectralMultiplier,
    f2: &SpectralMultiplier,
    t: f64,
    points: &[Point],
) -> Result<bool> {
    for l in b.eigenvalues() {
        let x = t * l.sqrt();
        let (a, c) = (f1.eval(x), f2.eval(x));
        if a < 0.0 || a > c + 1e-12 * c.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "multipliers are not ordered at {x}: F1 = {a}, F2 = {c}"
            )));
        }
    }
    for x in points {
        let k1 = kernel_diag(b, f1, t, x)?.value;
        let k2 = kernel_diag(b, f2, t, x)?.value;
        if k1 > k2 + 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fitted constants of the two-sided Gaussian estimate
/// `C1 t^{-d/2} e^{-c1 r²/t} ≤ p_t(x,y) ≤ C2 t^{-d/2} e^{-c2 r²/t}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianFit {
    #[serde(rename = "C1")]
    pub big_c1: f64,
    pub c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
    pub c2: f64,
    pub ok: bool,
    /// Data points kept after the truncation filter.
    pub used: usize,
    pub discarded: usize,
}

/// Grid for the exponents `c`: `0.05, 0.10, …, 2.0`.
pub fn gaussian_c_grid() -> Vec<f64> {
    (1..=40).map(|i| 0.05 * i as f64).collect()
}

/// Fits the Gaussian sandwich on `(t, pair)` data, keeping only values above
/// ten times their tail bound.
///
/// For each `c` the best constants are `C2(c) = max_i r_i(c)` and
/// `C1(c) = min_i r_i(c)` with `r_i(c) = p_i t_i^{d/2} e^{c r_i²/t_i}`; both
/// grow with `c`. The fit takes `c2` as the largest exponent whose `C2` stays
/// within twice the smallest one, and `c1` as the smallest exponent whose
/// `C1` reaches half the largest one, each refined by bisection between grid
/// neighbours.
pub fn gaussian_bound_fit(b: &SpectralBasis, t_grid: &[f64], pairs: &[(Point, Point)]) -> Result<GaussianFit> {
    if t_grid.is_empty() || pairs.is_empty() {
        return Err(Error::invalid("gaussian fit needs times and point pairs"));
    }
    for &t in t_grid {
        check_heat_time(b, t)?;
        if t >= 1.0 {
            return Err(Error::invalid(format!("gaussian fit times must be < 1, got {t}")));
        }
    }
    let m = b.manifold();
    let d = m.dimension() as i32;
    let evals: Vec<(Vec<f64>, Vec<f64>, f64)> = pairs
        .par_iter()
        .map(|(x, y)| {
            m.validate_point(x)?;
            m.validate_point(y)?;
            Ok((eval_all(b, x), eval_all(b, y), m.dist(x, y)))
        })
        .collect::<Result<_>>()?;
    // (p t^{d/2}, r²/t)
    let mut data = Vec::new();
    let mut discarded = 0;
    for &t in t_grid {
        let tail = heat_tail_bound(b, t);
        for (ux, uy, r) in &evals {
            let p = heat_pair(b, t, ux, uy);
            if p > 10.0 * tail {
                data.push((p * t.sqrt().powi(d), r * r / t));
            } else {
                discarded += 1;
            }
        }
    }
    if data.is_empty() {
        return Err(Error::FitFailure(
            "no (t, pair) value exceeds ten times its truncation bound".into(),
        ));
    }
    let ratio = |c: f64, (q, s): (f64, f64)| q * (c * s).exp();
    let upper = |c: f64| data.iter().map(|&v| ratio(c, v)).fold(0.0, f64::max);
    let lower = |c: f64| data.iter().map(|&v| ratio(c, v)).fold(f64::INFINITY, f64::min);
    let grid = gaussian_c_grid();
    let (c_lo, c_hi) = (grid[0], *grid.last().unwrap());

    let upper_target = 2.0 * upper(c_lo);
    let k2 = grid.iter().rposition(|&c| upper(c) <= upper_target).unwrap();
    let c2 = if k2 + 1 < grid.len() {
        refine(grid[k2], grid[k2 + 1], |c| upper(c) <= upper_target)
    } else {
        c_hi
    };
    let lower_target = 0.5 * lower(c_hi);
    let k1 = grid.iter().position(|&c| lower(c) >= lower_target).unwrap();
    let c1 = if k1 > 0 {
        refine(grid[k1], grid[k1 - 1], |c| lower(c) >= lower_target)
    } else {
        c_lo
    };
    let (big_c1, big_c2) = (lower(c1), upper(c2));
    let bracketed = data
        .iter()
        .all(|&(q, s)| big_c1 * (-c1 * s).exp() <= q * (1.0 + 1e-12) && q <= big_c2 * (-c2 * s).exp() * (1.0 + 1e-12));
    let ok = big_c1 > 0.0 && big_c2.is_finite() && bracketed;
    Ok(GaussianFit {
        big_c1,
        c1,
        big_c2,
        c2,
        ok,
        used: data.len(),
        discarded,
    })
}

/// Moves from `good` toward `bad` while `pred` holds; returns the last good
/// point after 50 halvings.
fn refine(mut good: f64, mut bad: f64, pred: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..50 {
        let mid = 0.5 * (good + bad);
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// `|∫ e(ω;x) dx − N_ω|` by the quadrature rule.
pub fn counting_identity_check(b: &SpectralBasis, quad: &QuadratureRule, omega: f64) -> Result<f64> {
    b.check_band(omega)?;
    let n = b.band_len(omega);
    let integral = integrate(b, quad, |u| u[..n].iter().map(|v| v * v).sum())?;
    Ok((integral - n as f64).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatRow {
    pub t: f64,
    pub x_id: usize,
    pub p_diag: f64,
    pub trace_spectral: f64,
    pub trace_quadrature: f64,
}

/// Heat-kernel diagnostics over a time grid and a point set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatDiagnostics {
    pub t_grid: Vec<f64>,
    pub t_min: f64,
    pub traces: Vec<HeatTrace>,
    /// Truncation bound per time.
    pub tail_bounds: Vec<f64>,
    pub rows: Vec<HeatRow>,
    pub fit: Option<GaussianFit>,
}

impl HeatDiagnostics {
    pub fn compute(b: &SpectralBasis, t_grid: &[f64], points: &[Point], quad: &QuadratureRule) -> Result<Self> {
        if t_grid.is_empty() || points.is_empty() {
            return Err(Error::invalid("heat diagnostics need times and points"));
        }
        let mut traces = Vec::with_capacity(t_grid.len());
        let mut rows = Vec::new();
        for &t in t_grid {
            let trace = heat_trace(b, t, quad)?;
            for (i, x) in points.iter().enumerate() {
                rows.push(HeatRow {
                    t,
                    x_id: i,
                    p_diag: heat_diag(b, t, x)?,
                    trace_spectral: trace.spectral,
                    trace_quadrature: trace.quadrature,
                });
            }
            traces.push(trace);
        }
        Ok(HeatDiagnostics {
            t_grid: t_grid.to_vec(),
            t_min: heat_t_min(b),
            traces,
            tail_bounds: t_grid.iter().map(|t| heat_tail_bound(b, *t)).collect(),
            rows,
            fit: None,
        })
    }

    /// Traces positive and strictly decreasing along an increasing time grid.
    pub fn traces_monotone(&self) -> bool {
        let mut order: Vec<usize> = (0..self.t_grid.len()).collect();
        order.sort_by(|&i, &j| self.t_grid[i].total_cmp(&self.t_grid[j]));
        self.traces.iter().all(|t| t.spectral > 0.0)
            && order.windows(2).all(|w| {
                self.t_grid[w[0]] == self.t_grid[w[1]] || self.traces[w[1]].spectral <= self.traces[w[0]].spectral
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x_id,p_diag,trace_spectral,trace_quadrature\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.t, r.x_id, r.p_diag, r.trace_spectral, r.trace_quadrature
            ));
        }
        out
    }
}
