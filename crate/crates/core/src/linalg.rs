//! Thin singular value decomposition for tall sampling matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `A = U Σ Vᵀ` with singular values sorted descending. For `m < n` the
/// trailing `n - m` singular values are reported as zero.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub singular_values: Vec<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::invalid(format!("cannot decompose a {m}x{n} matrix")));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure("non-finite entry in sampling matrix".into()));
        }
        // QR first for tall matrices: the SVD of R is n×n.
        let (u, sigma, v) = if m >= 2 * n {
            let qr = a.qr();
            let (q, r) = qr.unpack();
            let svd = r.svd(true, true);
            let u = q * svd
                .u
                .ok_or_else(|| Error::NumericalFailure("SVD produced no U".into()))?;
            let v = svd
                .v_t
                .ok_or_else(|| Error::NumericalFailure("SVD produced no Vᵀ".into()))?
                .transpose();
            (u, svd.singular_values, v)
        } else {
            let svd = a.svd(true, true);
            let u = svd
                .u
                .ok_or_else(|| Error::NumericalFailure("SVD produced no U".into()))?;
            let v = svd
                .v_t
                .ok_or_else(|| Error::NumericalFailure("SVD produced no Vᵀ".into()))?
                .transpose();
            (u, svd.singular_values, v)
        };
        let r = sigma.len();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
        let u = DMatrix::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
        let v = DMatrix::from_fn(v.nrows(), r, |i, j| v[(i, order[j])]);
        let mut singular_values: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
        singular_values.resize(n, 0.0);
        Ok(ThinSvd { singular_values, u, v })
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().unwrap()
    }

    /// Minimum-norm least-squares solution through the pseudo-inverse,
    /// discarding singular values below `rcond · σ_max`.
    pub fn solve(&self, b: &[f64], rcond: f64) -> Vec<f64> {
        let b = DVector::from_column_slice(b);
        let utb = self.u.transpose() * b;
        let cutoff = rcond * self.sigma_max();
        let mut scaled = utb;
        for (i, s) in self.singular_values.iter().take(scaled.len()).enumerate() {
            scaled[i] = if *s > cutoff { scaled[i] / s } else { 0.0 };
        }
        (&self.v * scaled).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tall_and_wide_agree_with_gram_eigenvalues() {
        let a = DMatrix::from_fn(40, 6, |i, j| {
            ((i * 7 + j * 3) as f64 * 0.31).sin() + if i == j { 2.0 } else { 0.0 }
        });
        let svd = ThinSvd::new(a.clone()).unwrap();
        let gram = a.transpose() * &a;
        let mut eig: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        for (s, e) in svd.singular_values.iter().zip(&eig) {
            assert!((s * s - e).abs() < 1e-10 * eig[0]);
        }
        let wide = ThinSvd::new(a.rows(0, 3).into_owned()).unwrap();
        assert_eq!(wide.singular_values.len(), 6);
        assert_eq!(wide.sigma_min(), 0.0);
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = DMatrix::from_fn(30, 5, |i, j| {
            ((i + 1) as f64).powi(j as i32 % 3) * ((i * j) as f64).cos()
        });
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0]);
        let b = &a * &x;
        let svd = ThinSvd::new(a).unwrap();
        let sol = svd.solve(b.as_slice(), 1e-14);
        for (s, e) in sol.iter().zip(x.iter()) {
            assert!((s - e).abs() < 1e-9);
        }
    }
}
