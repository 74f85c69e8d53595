//! Detection of harmonic eigenvectors.
//!
//! An eigenvector that is (locally) a function of already accepted
//! coordinates parameterizes no new direction on the manifold. Each
//! candidate is regressed on the accepted coordinates with a leave-one-out
//! local linear fit; a small normalized residual marks it as a harmonic.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSelection {
    /// Accepted eigenvector numbers (1-based, trivial eigenvector is 1).
    pub selected: Vec<usize>,
    /// `(index, residual)` for every candidate examined after `2`.
    pub residuals: Vec<(usize, f64)>,
    /// False when fewer coordinates than requested were found.
    pub complete: bool,
}

/// Greedy selection over the columns of `eigenvectors` (column `l - 1` is
/// eigenvector `l`). Index 2 is always accepted; each later index is
/// accepted when its residual against the accepted set exceeds `threshold`.
pub fn independent_coordinates(
    eigenvectors: &DMatrix<f64>,
    count: usize,
    threshold: f64,
) -> Result<CoordinateSelection> {
    let k = eigenvectors.ncols();
    if count == 0 {
        return Err(Error::param("at least one coordinate must be requested"));
    }
    if k < 2 {
        return Err(Error::param("need at least one non-trivial eigenvector"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("residual threshold must lie in (0, 1), got {threshold}")));
    }
    let column = |l: usize| -> Vec<f64> { eigenvectors.column(l - 1).iter().copied().collect() };
    let mut selected = vec![2];
    let mut residuals = Vec::new();
    let mut accepted_cols = vec![column(2)];
    for l in 3..=k {
        if selected.len() == count {
            break;
        }
        let target = column(l);
        let r = local_linear_residual(&target, &accepted_cols);
        residuals.push((l, r));
        if r > threshold {
            selected.push(l);
            accepted_cols.push(target);
        }
    }
    let complete = selected.len() == count;
    Ok(CoordinateSelection { selected, residuals, complete })
}

/// Normalized leave-one-out residual of `target` regressed locally-linearly
/// on `predictors` (each a column over the same samples), in `[0, ~1]`.
///
/// Gaussian weights use a bandwidth of one third of the median pairwise
/// distance between predictor rows.
pub fn local_linear_residual(target: &[f64], predictors: &[Vec<f64>]) -> f64 {
    let m = target.len();
    let a = predictors.len();
    let x: Vec<f64> = (0..m).flat_map(|i| predictors.iter().map(move |c| c[i])).collect();
    let row = |i: usize| &x[i * a..(i + 1) * a];

    let mut dists: Vec<f64> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in 0..i {
            dists.push(crate::linalg::squared_distance(row(i), row(j)).sqrt());
        }
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let bandwidth = *median / 3.0;
    let inv_bw2 = if bandwidth > 0.0 { 1.0 / (bandwidth * bandwidth) } else { f64::INFINITY };
    drop(dists);

    let predicted: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = row(i);
            let dim = a + 1;
            let mut normal = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            let mut z = vec![0.0; dim];
            for k in 0..m {
                if k == i {
                    continue;
                }
                let xk = row(k);
                let w = (-crate::linalg::squared_distance(xi, xk) * inv_bw2).exp();
                if w == 0.0 {
                    continue;
                }
                z[0] = 1.0;
                for c in 0..a {
                    z[c + 1] = xk[c] - xi[c];
                }
                for p in 0..dim {
                    rhs[p] += w * z[p] * target[k];
                    for q in 0..dim {
                        normal[(p, q)] += w * z[p] * z[q];
                    }
                }
            }
            match normal.clone().cholesky() {
                Some(ch) => ch.solve(&rhs)[0],
                None => normal
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .map(|s| s[0])
                    .unwrap_or(f64::NAN),
            }
        })
        .collect();

    let mean = target.iter().sum::<f64>() / m as f64;
    let var = target.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / m as f64;
    let mse = target
        .iter()
        .zip(&predicted)
        .map(|(t, p)| if p.is_finite() { (t - p).powi(2) } else { (t - mean).powi(2) })
        .sum::<f64>()
        / m as f64;
    if var == 0.0 {
        return 0.0;
    }
    (mse / var).sqrt()
}
