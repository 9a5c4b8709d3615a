//! Small dense symmetric factorizations, row-major storage.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite `n × n` matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = libm::sqrt(d);
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Cholesky factor of a positive semi-definite matrix.
///
/// Pivots within `tol · max diag` of zero are treated as exact zeros and the
/// corresponding column is left empty, so perfectly correlated rows come out
/// identical. A pivot below `-tol · max diag` is an error.
pub fn cholesky_psd(a: &[f64], n: usize, tol: f64) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let cut = tol * scale.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -cut || d.is_nan() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        if d <= cut {
            continue;
        }
        let d = libm::sqrt(d);
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L y = b` in place.
pub fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ x = y` in place.
pub fn backward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    forward_substitute(l, n, b);
    backward_substitute(l, n, b);
}

/// Diagonal of `A⁻¹` from the Cholesky factor of `A`.
pub fn inverse_diagonal(l: &[f64], n: usize) -> Vec<f64> {
    let mut diag = vec![0.0; n];
    let mut e = vec![0.0; n];
    for (i, d) in diag.iter_mut().enumerate() {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[i] = 1.0;
        cholesky_solve(l, n, &mut e);
        *d = e[i];
    }
    diag
}

/// `y = L x` for lower-triangular `L`.
pub fn lower_mul(l: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}
