//! Real orthonormal spherical harmonics on the unit sphere.
//!
//! Ordering: index `l² + l + m` for `m = -l..=l`. With `P̄_l^m` the fully
//! normalized associated Legendre functions (no Condon–Shortley phase),
//!
//! ```text
//! Y_l0        = P̄_l^0(cos θ)
//! Y_lm  (m>0) = √2 P̄_l^m(cos θ) cos(m φ)
//! Y_l,-m(m>0) = √2 P̄_l^m(cos θ) sin(m φ)
//! ```
//!
//! `P̄` is computed by the standard stable recurrences
//!
//! ```text
//! P̄_0^0     = 1/√(4π)
//! P̄_m^m     = √((2m+1)/(2m)) sin θ P̄_{m-1}^{m-1}
//! P̄_{m+1}^m = √(2m+3) cos θ P̄_m^m
//! P̄_l^m     = a_lm (cos θ P̄_{l-1}^m − b_lm P̄_{l-2}^m),
//!   a_lm = √((4l²−1)/(l²−m²)),  b_lm = √(((l−1)²−m²)/(4(l−1)²−1))
//! ```

use std::f64::consts::{PI, SQRT_2};

/// `(l, m)` of a flat index.
pub fn sh_degree_order(index: usize) -> (usize, i64) {
    let l = (index as f64).sqrt() as usize;
    // guard against rounding in the square root
    let l = if (l + 1) * (l + 1) <= index {
        l + 1
    } else if l * l > index {
        l - 1
    } else {
        l
    };
    (l, index as i64 - (l * l + l) as i64)
}

/// Writes `Y_lm(x)` for all `l ≤ lmax` into `out[..(lmax+1)²]`.
pub fn real_harmonics(lmax: usize, x: [f64; 3], out: &mut [f64]) {
    let n = (lmax + 1) * (lmax + 1);
    assert!(out.len() >= n);
    let cos_t = x[2].clamp(-1.0, 1.0);
    let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let sin_t = rho;
    let (c1, s1) = if rho > 0.0 {
        (x[0] / rho, x[1] / rho)
    } else {
        (1.0, 0.0)
    };

    // cos(mφ), sin(mφ)
    let mut cm = vec![1.0; lmax + 1];
    let mut sm = vec![0.0; lmax + 1];
    for m in 1..=lmax {
        cm[m] = c1 * cm[m - 1] - s1 * sm[m - 1];
        sm[m] = s1 * cm[m - 1] + c1 * sm[m - 1];
    }

    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_t;
        }
        let mut write = |l: usize, p: f64| {
            let base = l * l + l;
            if m == 0 {
                out[base] = p;
            } else {
                out[base + m] = SQRT_2 * p * cm[m];
                out[base - m] = SQRT_2 * p * sm[m];
            }
        };
        write(m, pmm);
        if m == lmax {
            break;
        }
        let mut p_prev = pmm;
        let mut p_cur = (2.0 * m as f64 + 3.0).sqrt() * cos_t * pmm;
        write(m + 1, p_cur);
        let mf = m as f64;
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            let p_next = a * (cos_t * p_cur - b * p_prev);
            write(l, p_next);
            p_prev = p_cur;
            p_cur = p_next;
        }
    }
}
