//! Nystrom extension of diffusion-map eigenvectors.

use nalgebra::DMatrix;

use crate::cloud::PointCloud;
use crate::dmap::DiffusionEmbedding;
use crate::error::{Error, Result};

use super::Mapping;

/// Beyond this exponent the unshifted kernel sum underflows.
const SUPPORT_EXPONENT: f64 = 700.0;

/// Restriction `y -> (lambda_l^t psi_l(y))` for the selected eigenvectors,
/// with `psi_l(y) = lambda_l^-1 sum_i k(y_i, y) phi_il` and `k` the
/// row-normalized heat kernel.
#[derive(Debug, Clone)]
pub struct NystromRestriction {
    scaled: Vec<f64>,
    dim: usize,
    scale: Vec<f64>,
    epsilon: f64,
    /// `M x m` selected eigenvectors.
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    weights: Vec<f64>,
}

impl NystromRestriction {
    pub fn new(cloud: &PointCloud, embedding: &DiffusionEmbedding) -> Result<Self> {
        if cloud.len() != embedding.len() {
            return Err(Error::DimensionMismatch(format!(
                "cloud has {} points, embedding {}",
                cloud.len(),
                embedding.len()
            )));
        }
        let m = embedding.selected.len();
        let vectors = DMatrix::from_fn(cloud.len(), m, |i, k| embedding.eigenvectors[(i, embedding.selected[k] - 1)]);
        let eigenvalues: Vec<f64> = embedding.selected.iter().map(|&l| embedding.eigenvalue(l)).collect();
        if eigenvalues.contains(&0.0) {
            return Err(Error::Degenerate("selected eigenvalue is zero".into()));
        }
        Ok(Self {
            scaled: cloud.scaled_points(),
            dim: cloud.dim(),
            scale: cloud.metric().diag().to_vec(),
            epsilon: embedding.epsilon,
            vectors,
            eigenvalues,
            weights: embedding.coordinate_weights(),
        })
    }

    /// Shifted weights `exp(-(d_i^2 - d_min^2) / eps^2)`; the shift cancels
    /// in every normalized quantity.
    fn kernel(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("query of length {}, expected {}", y.len(), self.dim)));
        }
        if let Some(col) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        let q: Vec<f64> = y.iter().zip(&self.scale).map(|(v, r)| v * r).collect();
        let d2: Vec<f64> =
            self.scaled.chunks_exact(self.dim).map(|p| crate::linalg::squared_distance(p, &q)).collect();
        let e2 = self.epsilon * self.epsilon;
        let min = d2.iter().cloned().fold(f64::INFINITY, f64::min);
        if min / e2 > SUPPORT_EXPONENT {
            return Err(Error::OutsideKernelSupport { distance: min.sqrt() });
        }
        Ok((d2.iter().map(|d| (-(d - min) / e2).exp()).collect(), q))
    }
}

impl Mapping for NystromRestriction {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (w, _) = self.kernel(y)?;
        let q: f64 = w.iter().sum();
        Ok((0..self.output_dim())
            .map(|k| {
                let s: f64 = w.iter().zip(self.vectors.column(k).iter()).map(|(a, b)| a * b).sum();
                self.weights[k] * s / (q * self.eigenvalues[k])
            })
            .collect())
    }

    /// `d psi / d y_b = (lambda q^2)^-1 [q sum_i dw_i phi_i - (sum_i dw_i) sum_j w_j phi_j]`
    /// with `dw_i / dy_b = 2 eps^-2 r_b^2 w_i (y_ib - y_b)`.
    fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let (w, q) = self.kernel(y)?;
        let n = self.dim;
        let m = self.output_dim();
        let qsum: f64 = w.iter().sum();
        let e2 = self.epsilon * self.epsilon;
        let mut dw_sum = vec![0.0; n];
        let mut dw_phi = DMatrix::<f64>::zeros(m, n);
        let mut w_phi = vec![0.0; m];
        for (i, p) in self.scaled.chunks_exact(n).enumerate() {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            for k in 0..m {
                w_phi[k] += wi * self.vectors[(i, k)];
            }
            for b in 0..n {
                // scaled coordinates carry one factor r_b; the chain rule adds the other
                let dw = 2.0 / e2 * wi * (p[b] - q[b]) * self.scale[b];
                dw_sum[b] += dw;
                for k in 0..m {
                    dw_phi[(k, b)] += dw * self.vectors[(i, k)];
                }
            }
        }
        Ok(DMatrix::from_fn(m, n, |k, b| {
            self.weights[k] * (qsum * dw_phi[(k, b)] - dw_sum[b] * w_phi[k])
                / (self.eigenvalues[k] * qsum * qsum)
        }))
    }
}
