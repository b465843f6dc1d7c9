//! Small dense helpers on row-major square matrices.

use crate::error::{Error, Result};

pub(crate) fn matmul(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * k];
    for i in 0..k {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..k {
                c[i * k + j] += ail * b[l * k + j];
            }
        }
    }
    c
}

/// Lower Cholesky factor of a symmetric positive-semidefinite matrix.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    pub n: usize,
    pub l: Vec<f64>,
    /// Pivots that came out in `[-tol, 0]` and were set to zero.
    pub clamped: Vec<usize>,
}

/// Factors `a` (row-major, `n×n`). Pivots in `[-tol, 0]` are clamped to zero
/// and their column dropped; anything more negative is an error.
pub(crate) fn cholesky(a: &[f64], n: usize, tol: f64) -> Result<Cholesky> {
    let mut l = vec![0.0; n * n];
    let mut clamped = Vec::new();
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -tol {
            return Err(Error::Covariance {
                index: j,
                variance: d,
            });
        }
        if d <= 0.0 {
            clamped.push(j);
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(Cholesky { n, l, clamped })
}

impl Cholesky {
    /// `L z` for a vector of independent standard normals `z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * z[k]).sum())
            .collect()
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))?;
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
            }
            x.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= f * m[col * n + j];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in col + 1..n {
            s -= m[col * n + j] * x[j];
        }
        x[col] = s / m[col * n + col];
    }
    Some(x)
}
