//! Geometric harmonics: multiscale projection onto leading eigenvectors of
//! a Gaussian kernel, extended off the samples Nystrom-style.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, squared_distance};

use super::Model;

#[derive(Debug, Clone)]
struct Step {
    eps: f64,
    /// `M x b` node weights `sum_a c_a phi_ia / lambda_a`, so that the
    /// step extends as `sum_i w(x_i, x) weights_i`.
    weights: DMatrix<f64>,
    kept: usize,
}

#[derive(Debug, Clone)]
pub struct GeometricHarmonics {
    nodes: Vec<Vec<f64>>,
    steps: Vec<Step>,
    /// Frobenius norm of the training residual after each step.
    residuals: Vec<f64>,
}

/// Maximum squared distance between nodes: a kernel scale that sees the
/// whole node set at the first step.
pub fn default_eps0(x: &DMatrix<f64>) -> f64 {
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut max: f64 = 0.0;
    for i in 0..rows.len() {
        for j in 0..i {
            max = max.max(squared_distance(&rows[i], &rows[j]));
        }
    }
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

impl GeometricHarmonics {
    /// Step `l = 1, 2, ...` projects the current residual on the
    /// eigenvectors of `exp(-d^2 / eps_l)`, `eps_l = 2^(1-l) eps0`, whose
    /// eigenvalues are at least `delta` times the largest. Stops when the
    /// residual norm falls below `err` or after `max_steps` steps.
    pub fn fit(x: &DMatrix<f64>, f: &DMatrix<f64>, eps0: f64, delta: f64, err: f64, max_steps: usize) -> Result<Self> {
        if !(eps0.is_finite() && eps0 > 0.0) {
            return Err(Error::param(format!("eps0 must be positive, got {eps0}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param(format!("spectral cutoff must lie in (0, 1), got {delta}")));
        }
        if !(err > 0.0) || max_steps == 0 {
            return Err(Error::param("target error and step budget must be positive"));
        }
        let m = x.nrows();
        if m == 0 || f.nrows() != m {
            return Err(Error::DimensionMismatch("node and value counts differ or are empty".into()));
        }
        let nodes: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut d2 = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..i {
                let v = squared_distance(&nodes[i], &nodes[j]);
                d2[(i, j)] = v;
                d2[(j, i)] = v;
            }
        }
        let mut residual = f.clone();
        let mut steps = Vec::new();
        let mut residuals = Vec::new();
        for l in 1..=max_steps {
            let eps = eps0 * 2f64.powi(1 - l as i32);
            let w = d2.map(|d| (-d / eps).exp());
            let eig = linalg::symmetric_eigen(&w);
            let top = eig.values[0];
            let kept = eig.values.iter().take_while(|&&v| v >= delta * top).count();
            let phi = eig.vectors.columns(0, kept);
            let coeffs = phi.transpose() * &residual;
            let projection = phi * &coeffs;
            let inv = DMatrix::from_fn(kept, f.ncols(), |a, c| coeffs[(a, c)] / eig.values[a]);
            let weights = phi * inv;
            residual -= projection;
            residuals.push(residual.norm());
            steps.push(Step { eps, weights, kept });
            if residual.norm() < err {
                break;
            }
        }
        Ok(Self { nodes, steps, residuals })
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn residual_norms(&self) -> &[f64] {
        &self.residuals
    }

    pub fn residual_norm(&self) -> f64 {
        *self.residuals.last().expect("at least one step")
    }

    /// Eigenvectors retained at each step.
    pub fn kept_counts(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.kept).collect()
    }

    /// Extension summed over steps `1..=count`.
    pub fn eval_steps(&self, x: &[f64], count: usize) -> Vec<f64> {
        let b = self.steps[0].weights.ncols();
        let mut out = vec![0.0; b];
        let d2: Vec<f64> = self.nodes.iter().map(|n| squared_distance(n, x)).collect();
        for step in self.steps.iter().take(count) {
            for (i, d) in d2.iter().enumerate() {
                let w = (-d / step.eps).exp();
                if w == 0.0 {
                    continue;
                }
                for (c, o) in out.iter_mut().enumerate() {
                    *o += w * step.weights[(i, c)];
                }
            }
        }
        out
    }
}

impl Model for GeometricHarmonics {
    fn output_dim(&self) -> usize {
        self.steps[0].weights.ncols()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_steps(x, self.steps.len()))
    }

    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Err(Error::Unsupported("geometric harmonics provide no Jacobian".into()))
    }
}
