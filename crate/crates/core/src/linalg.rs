//! Dense linear-algebra helpers shared by the embedding and extension code.
//!
//! Matrices are `nalgebra::DMatrix<f64>` throughout; the symmetric
//! eigensolver is backed by faer, run sequentially so results do not depend
//! on thread scheduling.

use faer::dyn_stack::{GlobalPodBuffer, PodStack};
use faer::linalg::evd::{self, ComputeVectors};
use faer::Parallelism;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenpairs of a real symmetric matrix, sorted by descending eigenvalue.
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

/// Full eigendecomposition of a symmetric matrix. Only the lower triangle is read.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let mut s = faer::Col::<f64>::zeros(n);
    let mut u = faer::Mat::<f64>::zeros(n, n);
    let params = Default::default();
    let req = evd::compute_hermitian_evd_req::<f64>(n, ComputeVectors::Yes, Parallelism::None, params)
        .expect("workspace size overflow");
    evd::compute_hermitian_evd(
        mat.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Parallelism::None,
        PodStack::new(&mut GlobalPodBuffer::new(req)),
        params,
    );
    // faer returns ascending order; reverse, keeping solver order among ties.
    let order: Vec<usize> = (0..n).rev().collect();
    let values = order.iter().map(|&k| s.read(k)).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| u.read(i, order[j]));
    SymmetricEigen { values, vectors }
}

/// Ratio of extreme singular values; infinite when the matrix is singular.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with relative tolerance on the singular values.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Solves `A X = B` by partial-pivoting LU.
pub fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{}x{} LU factorization", a.nrows(), a.ncols())))
}

/// Least-squares solution of `A x = b` via SVD.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .map_err(|e| Error::Singular(e.to_string()))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
