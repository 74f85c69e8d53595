//! Universal Kriging with polynomial trend and Gaussian correlation.
//!
//! Inputs and outputs are normalized to zero mean and unit standard
//! deviation per coordinate before fitting; the correlation between two
//! normalized points is `exp(-theta |s - s'|^2)`.

use nalgebra::{DMatrix, DVector};
use std::sync::atomic::Ordering;

use crate::error::{Error, Result};

use super::{FitFlags, Model};

const JITTER: f64 = 1e-10;

/// Number of regression functions of total degree `<= order` in `a` variables.
pub fn basis_size(order: u8, a: usize) -> usize {
    match order {
        0 => 1,
        1 => 1 + a,
        _ => 1 + a + a * (a + 1) / 2,
    }
}

fn basis(order: u8, s: &[f64]) -> Vec<f64> {
    let a = s.len();
    let mut f = Vec::with_capacity(basis_size(order, a));
    f.push(1.0);
    if order >= 1 {
        f.extend_from_slice(s);
    }
    if order >= 2 {
        for i in 0..a {
            for j in i..a {
                f.push(s[i] * s[j]);
            }
        }
    }
    f
}

/// `d basis_k / d s_d`, `basis_size x a`.
fn basis_jacobian(order: u8, s: &[f64]) -> DMatrix<f64> {
    let a = s.len();
    let mut jac = DMatrix::zeros(basis_size(order, a), a);
    if order >= 1 {
        for d in 0..a {
            jac[(1 + d, d)] = 1.0;
        }
    }
    if order >= 2 {
        let mut k = 1 + a;
        for i in 0..a {
            for j in i..a {
                jac[(k, i)] += s[j];
                jac[(k, j)] += s[i];
                k += 1;
            }
        }
    }
    jac
}

fn mean_std(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let v: Vec<f64> = col.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

#[derive(Debug, Clone)]
pub struct KrigingModel {
    nodes: DMatrix<f64>,
    x_mean: Vec<f64>,
    x_sd: Vec<f64>,
    y_mean: Vec<f64>,
    y_sd: Vec<f64>,
    order: u8,
    theta: f64,
    beta: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl KrigingModel {
    /// Fits on `x` (`M x a`) and `f` (`M x b`). The regression order drops
    /// when the node set cannot support it; the correlation matrix gets a
    /// small diagonal jitter when its Cholesky factorization fails. Both
    /// events are counted in `flags`.
    pub fn fit(x: &DMatrix<f64>, f: &DMatrix<f64>, order: u8, theta: f64, flags: &FitFlags) -> Result<Self> {
        if order > 2 {
            return Err(Error::param(format!("regression order must be 0, 1 or 2, got {order}")));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::param(format!("correlation parameter must be positive, got {theta}")));
        }
        let (m, a) = x.shape();
        if m == 0 || f.nrows() != m {
            return Err(Error::DimensionMismatch("node and value counts differ or are empty".into()));
        }
        let b = f.ncols();
        let (x_mean, x_sd): (Vec<f64>, Vec<f64>) = (0..a).map(|d| mean_std(x.column(d).iter().copied())).unzip();
        let (y_mean, y_sd): (Vec<f64>, Vec<f64>) = (0..b).map(|c| mean_std(f.column(c).iter().copied())).unzip();
        let s = DMatrix::from_fn(m, a, |i, d| (x[(i, d)] - x_mean[d]) / x_sd[d]);
        let y = DMatrix::from_fn(m, b, |i, c| (f[(i, c)] - y_mean[c]) / y_sd[c]);

        let rows: Vec<Vec<f64>> = s.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut r = DMatrix::from_fn(m, m, |i, j| (-theta * crate::linalg::squared_distance(&rows[i], &rows[j])).exp());
        let chol = match r.clone().cholesky() {
            Some(c) => c,
            None => {
                for i in 0..m {
                    r[(i, i)] += JITTER;
                }
                flags.jittered.fetch_add(1, Ordering::Relaxed);
                r.cholesky().ok_or_else(|| Error::Singular("Kriging correlation matrix".into()))?
            }
        };
        let l = chol.l();
        let yt = l.solve_lower_triangular(&y).ok_or_else(|| Error::Singular("Kriging triangular solve".into()))?;

        let mut used = order;
        loop {
            let k = basis_size(used, a);
            let fmat = DMatrix::from_fn(m, k, |i, c| basis(used, &rows[i])[c]);
            let ft = l.solve_lower_triangular(&fmat).ok_or_else(|| Error::Singular("Kriging regression".into()))?;
            let qr = ft.clone().qr();
            let g = qr.r();
            let diag: Vec<f64> = (0..k).map(|i| g[(i, i)].abs()).collect();
            let gmax = diag.iter().cloned().fold(0.0, f64::max);
            let gmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let deficient = m < k || gmax == 0.0 || gmin < 1e-10 * gmax;
            if deficient {
                if used == 0 {
                    return Err(Error::Singular("Kriging constant trend is unidentifiable".into()));
                }
                used -= 1;
                flags.order_lowered.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            let qty = qr.q().transpose() * &yt;
            let beta = g
                .solve_upper_triangular(&qty)
                .ok_or_else(|| Error::Singular("Kriging trend coefficients".into()))?;
            let rho = &yt - &ft * &beta;
            let gamma = l
                .transpose()
                .solve_upper_triangular(&rho)
                .ok_or_else(|| Error::Singular("Kriging correlation weights".into()))?;
            return Ok(Self { nodes: s, x_mean, x_sd, y_mean, y_sd, order: used, theta, beta, gamma });
        }
    }

    /// Regression order actually used.
    pub fn order(&self) -> u8 {
        self.order
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_mean).zip(&self.x_sd).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn correlations(&self, s: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.nodes.nrows(),
            self.nodes.row_iter().map(|node| {
                let d2: f64 = node.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.theta * d2).exp()
            }),
        )
    }
}

impl Model for KrigingModel {
    fn output_dim(&self) -> usize {
        self.y_mean.len()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.normalize(x);
        let fx = DVector::from_vec(basis(self.order, &s));
        let rx = self.correlations(&s);
        let yhat = self.beta.transpose() * fx + self.gamma.transpose() * rx;
        Ok(yhat.iter().enumerate().map(|(c, v)| self.y_mean[c] + self.y_sd[c] * v).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.normalize(x);
        let a = s.len();
        let jf = basis_jacobian(self.order, &s);
        let rx = self.correlations(&s);
        // d r_i / d s_d = -2 theta (s_d - node_id) r_i
        let jr = DMatrix::from_fn(self.nodes.nrows(), a, |i, d| -2.0 * self.theta * (s[d] - self.nodes[(i, d)]) * rx[i]);
        let jhat = self.beta.transpose() * jf + self.gamma.transpose() * jr;
        Ok(DMatrix::from_fn(self.output_dim(), a, |c, d| self.y_sd[c] * jhat[(c, d)] / self.x_sd[d]))
    }
}
