//! Laplacian pyramids: multiscale kernel smoothing of residuals.
//!
//! Level `l` smooths the residual left by levels `0..l` with the normalized
//! Gaussian kernel `exp(-|x - x_i|^2 / sigma_l)`, `sigma_l = sigma_0 / 2^l`.

use nalgebra::DMatrix;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::squared_distance;

use super::{FitFlags, Model};

/// Exponent beyond which all kernel weights of a level underflow.
const UNDERFLOW_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone)]
struct Level {
    sigma: f64,
    /// Residual `M x b` smoothed by this level.
    residual: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LaplacianPyramid {
    nodes: Vec<Vec<f64>>,
    levels: Vec<Level>,
    /// Max absolute training residual after each level.
    training_errors: Vec<f64>,
}

/// Kernel weights of one level at `x`, shifted by the nearest node so the
/// normalization never underflows; `None` when the unshifted weights would.
fn weights(nodes: &[Vec<f64>], x: &[f64], sigma: f64) -> Option<Vec<f64>> {
    let d2: Vec<f64> = nodes.iter().map(|n| squared_distance(n, x)).collect();
    let min = d2.iter().cloned().fold(f64::INFINITY, f64::min);
    if min / sigma > UNDERFLOW_EXPONENT {
        return None;
    }
    Some(d2.iter().map(|d| (-(d - min) / sigma).exp()).collect())
}

impl LaplacianPyramid {
    /// Adds levels `0, 1, ...` until the max training residual drops below
    /// `err` or level `max_level` has been added.
    pub fn fit(x: &DMatrix<f64>, f: &DMatrix<f64>, sigma0: f64, max_level: usize, err: f64) -> Result<Self> {
        if !(sigma0.is_finite() && sigma0 > 0.0) {
            return Err(Error::param(format!("sigma0 must be positive, got {sigma0}")));
        }
        if !(err > 0.0) {
            return Err(Error::param(format!("target error must be positive, got {err}")));
        }
        let m = x.nrows();
        if m == 0 || f.nrows() != m {
            return Err(Error::DimensionMismatch("node and value counts differ or are empty".into()));
        }
        let nodes: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut residual = f.clone();
        let mut levels = Vec::new();
        let mut training_errors = Vec::new();
        for l in 0..=max_level {
            let sigma = sigma0 / 2f64.powi(l as i32);
            // every training point carries its own unit weight, so the
            // training-set normalization cannot underflow
            let mut smooth = DMatrix::zeros(m, f.ncols());
            for (i, xi) in nodes.iter().enumerate() {
                let w = weights(&nodes, xi, sigma).expect("self weight is one");
                let q: f64 = w.iter().sum();
                for c in 0..f.ncols() {
                    smooth[(i, c)] = w.iter().zip(residual.column(c).iter()).map(|(a, b)| a * b).sum::<f64>() / q;
                }
            }
            levels.push(Level { sigma, residual: residual.clone() });
            residual -= smooth;
            let e = residual.amax();
            training_errors.push(e);
            if e < err {
                break;
            }
        }
        Ok(Self { nodes, levels, training_errors })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Max absolute training residual after levels `0..=l`, for each `l`.
    pub fn training_errors(&self) -> &[f64] {
        &self.training_errors
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.sigma).collect()
    }

    /// Sum of levels `0..=finest` at `x`. Levels whose kernel underflows at
    /// `x` contribute nothing.
    pub fn eval_levels(&self, x: &[f64], finest: usize, flags: Option<&FitFlags>) -> Vec<f64> {
        let b = self.levels[0].residual.ncols();
        let mut out = vec![0.0; b];
        for level in self.levels.iter().take(finest + 1) {
            let Some(w) = weights(&self.nodes, x, level.sigma) else {
                if let Some(fl) = flags {
                    if fl.skipped_levels.fetch_add(1, Ordering::Relaxed) == 0 {
                        log::warn!("Laplacian pyramid kernel underflows at sigma = {:.3e}; level skipped", level.sigma);
                    }
                }
                continue;
            };
            let q: f64 = w.iter().sum();
            for (c, o) in out.iter_mut().enumerate() {
                *o += w.iter().zip(level.residual.column(c).iter()).map(|(a, d)| a * d).sum::<f64>() / q;
            }
        }
        out
    }

    /// Jacobian of [`Self::eval_levels`]. The residuals are constants of
    /// the fit, so each level differentiates like a normalized kernel
    /// average: `(sum_i dw_i d_i - s sum_i dw_i) / q` with
    /// `dw_i / dx_b = 2 w_i (x_ib - x_b) / sigma_l`.
    pub fn jacobian_levels(&self, x: &[f64], finest: usize) -> DMatrix<f64> {
        let b = self.levels[0].residual.ncols();
        let a = x.len();
        let mut jac = DMatrix::zeros(b, a);
        for level in self.levels.iter().take(finest + 1) {
            let Some(w) = weights(&self.nodes, x, level.sigma) else { continue };
            let q: f64 = w.iter().sum();
            let mut dw_sum = vec![0.0; a];
            let mut dw_d = DMatrix::<f64>::zeros(b, a);
            let mut s = vec![0.0; b];
            for (i, node) in self.nodes.iter().enumerate() {
                if w[i] == 0.0 {
                    continue;
                }
                for c in 0..b {
                    s[c] += w[i] * level.residual[(i, c)];
                }
                for d in 0..a {
                    let dw = 2.0 * w[i] * (node[d] - x[d]) / level.sigma;
                    dw_sum[d] += dw;
                    for c in 0..b {
                        dw_d[(c, d)] += dw * level.residual[(i, c)];
                    }
                }
            }
            for c in 0..b {
                for d in 0..a {
                    jac[(c, d)] += (dw_d[(c, d)] - s[c] / q * dw_sum[d]) / q;
                }
            }
        }
        jac
    }
}

/// A fitted pyramid plus the flag sink used during evaluation.
#[derive(Debug)]
pub(crate) struct LpModel {
    pub pyramid: LaplacianPyramid,
    pub flags: Arc<FitFlags>,
}

impl Model for LpModel {
    fn output_dim(&self) -> usize {
        self.pyramid.levels[0].residual.ncols()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pyramid.eval_levels(x, usize::MAX - 1, Some(&self.flags)))
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.pyramid.jacobian_levels(x, usize::MAX - 1))
    }
}
