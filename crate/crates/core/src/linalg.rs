//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn quad_form(x: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += x[(i, j)] * b[j];
        }
        s += a[i] * row;
    }
    s
}

pub fn mat_vec(x: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * v[j]).sum())
        .collect()
}

/// Sorted eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn sym_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetric square root and inverse of a positive definite matrix,
/// together with its determinant.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    pub sqrt: DMatrix<f64>,
    pub inv: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub det: f64,
    pub min_eigenvalue: f64,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let eig = SymmetricEigen::new(a.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return None;
        }
        let q = &eig.eigenvectors;
        let build = |f: &dyn Fn(f64) -> f64| {
            let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&v| f(v)));
            q * DMatrix::from_diagonal(&d) * q.transpose()
        };
        Some(Self {
            sqrt: build(&|v| v.sqrt()),
            inv: build(&|v| 1.0 / v),
            inv_sqrt: build(&|v| 1.0 / v.sqrt()),
            det: eig.eigenvalues.iter().product(),
            min_eigenvalue: min,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_factor_round_trips() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = SpdFactor::new(&a).unwrap();
        let back = &f.sqrt * &f.sqrt;
        assert!((back - &a).abs().max() < 1e-12);
        let id = &f.inv * &a;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!((f.det - 1.75).abs() < 1e-12);
        assert!(SpdFactor::new(&DMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn norms() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        assert!((sym_op_norm(&a) - 3.0).abs() < 1e-12);
        assert!((sym_min_eigenvalue(&a) + 3.0).abs() < 1e-12);
        assert_eq!(quad_form(&a, &[1.0, 1.0], &[1.0, 1.0]), -2.0);
    }
}
