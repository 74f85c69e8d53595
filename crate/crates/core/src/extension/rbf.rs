//! Polyharmonic radial basis interpolation `f(x) = sum_i a_i |x - x_i|^p`.

use nalgebra::DMatrix;
use std::sync::atomic::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{self, squared_distance};

use super::{FitFlags, Model};

/// Above this condition number the collocation system is regularized.
pub const RBF_CONDITION_LIMIT: f64 = 1e12;
const TIKHONOV: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RbfModel {
    nodes: DMatrix<f64>,
    coeffs: DMatrix<f64>,
    p: u32,
    regularized: bool,
}

fn radial(r2: f64, p: u32) -> f64 {
    r2.sqrt().powi(p as i32)
}

impl RbfModel {
    /// Solves `Lambda a = f` with `Lambda_ij = |x_i - x_j|^p`. When the
    /// system is too ill-conditioned the Tikhonov normal equations
    /// `(Lambda^T Lambda + mu I) a = Lambda^T f`, `mu = 1e-10 tr(Lambda^T Lambda)`,
    /// are solved instead and the fit is flagged.
    pub fn fit(x: &DMatrix<f64>, f: &DMatrix<f64>, p: u32, flags: &FitFlags) -> Result<Self> {
        let m = x.nrows();
        if p.is_multiple_of(2) {
            return Err(Error::param(format!("RBF exponent must be odd, got {p}")));
        }
        if m < 2 {
            return Err(Error::param("RBF interpolation needs at least two nodes"));
        }
        if f.nrows() != m {
            return Err(Error::DimensionMismatch("node and value counts differ".into()));
        }
        let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let lambda = DMatrix::from_fn(m, m, |i, j| radial(squared_distance(&rows[i], &rows[j]), p));
        let eig = linalg::symmetric_eigen(&lambda);
        let abs: Vec<f64> = eig.values.iter().map(|v| v.abs()).collect();
        let max = abs.iter().cloned().fold(0.0, f64::max);
        let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
        let well_posed = min > 0.0 && max / min <= RBF_CONDITION_LIMIT;
        let solved = if well_posed { lambda.clone().lu().solve(f) } else { None };
        let (coeffs, regularized) = match solved {
            Some(c) => (c, false),
            None => {
                // eigenbasis form of the regularized normal equations
                let mu = TIKHONOV * eig.values.iter().map(|v| v * v).sum::<f64>();
                let proj = eig.vectors.transpose() * f;
                let scaled = DMatrix::from_fn(m, f.ncols(), |k, c| {
                    let d = eig.values[k];
                    proj[(k, c)] * d / (d * d + mu)
                });
                flags.regularized.fetch_add(1, Ordering::Relaxed);
                (&eig.vectors * scaled, true)
            }
        };
        Ok(Self { nodes: x.clone(), coeffs, p, regularized })
    }

    pub fn is_regularized(&self) -> bool {
        self.regularized
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coeffs
    }
}

impl Model for RbfModel {
    fn output_dim(&self) -> usize {
        self.coeffs.ncols()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        for (i, node) in self.nodes.row_iter().enumerate() {
            let r2: f64 = node.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let phi = radial(r2, self.p);
            for (o, c) in out.iter_mut().zip(self.coeffs.row(i).iter()) {
                *o += c * phi;
            }
        }
        Ok(out)
    }

    /// `d f / d x_g = p sum_i a_i |x - x_i|^(p-2) (x_g - x_ig)`.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let a = x.len();
        let mut jac = DMatrix::zeros(self.output_dim(), a);
        let p = self.p as f64;
        for (i, node) in self.nodes.row_iter().enumerate() {
            let r2: f64 = node.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum();
            if r2 == 0.0 {
                // the derivative of r^p vanishes at the node for p > 1
                continue;
            }
            let g = p * r2.sqrt().powi(self.p as i32 - 2);
            for c in 0..self.output_dim() {
                let ac = self.coeffs[(i, c)] * g;
                for d in 0..a {
                    jac[(c, d)] += ac * (x[d] - node[d]);
                }
            }
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_linear_kernel() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let f = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let m = RbfModel::fit(&x, &f, 1, &FitFlags::default()).unwrap();
        assert!((m.eval(&[0.5]).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!(!m.is_regularized());
    }

    #[test]
    fn rejects_degenerate_configurations() {
        let x = DMatrix::from_column_slice(1, 1, &[0.0]);
        let f = DMatrix::from_column_slice(1, 1, &[1.0]);
        assert!(RbfModel::fit(&x, &f, 3, &FitFlags::default()).is_err());
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let f = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(RbfModel::fit(&x, &f, 2, &FitFlags::default()).is_err());
    }

    #[test]
    fn duplicate_nodes_trigger_flagged_regularization() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 1.0]);
        let f = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 1.0]);
        let flags = FitFlags::default();
        let m = RbfModel::fit(&x, &f, 3, &flags).unwrap();
        assert!(m.is_regularized());
        assert_eq!(flags.report().regularized_fits, 1);
        assert!((m.eval(&[1.0]).unwrap()[0] - 1.0).abs() < 1e-6);
    }
}
