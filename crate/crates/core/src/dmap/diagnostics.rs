use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Approximate eigenvalue of the `k`-th harmonic along a principal
/// direction of length `length` for evenly spaced samples with spacing
/// `spacing`: `1 - exp(-(d/eps)^2) (k pi d / L)^2`.
pub fn eigenvalue_prediction(spacing: f64, length: f64, eps: f64, harmonic: u32) -> f64 {
    let delta = (-(spacing / eps).powi(2)).exp();
    let x = harmonic as f64 * std::f64::consts::PI * spacing / length;
    1.0 - delta * x * x
}

/// Eigenvalues below `1 - (1 - lambda2) / gamma^2` resolve features smaller
/// than the data accuracy `gamma` (a fraction of the data range).
pub fn noise_cutoff(lambda2: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::param(format!("accuracy fraction must lie in (0, 1], got {gamma}")));
    }
    if !(lambda2 < 1.0) {
        return Err(Error::param("first non-trivial eigenvalue must be below 1"));
    }
    Ok(1.0 - (1.0 - lambda2) / (gamma * gamma))
}

/// Result of the sorted edge-length dimensionality assessment.
#[derive(Debug, Clone)]
pub struct DimensionEstimate {
    pub dimension: f64,
    /// `(ln rank, ln length)` at log-spaced ranks over the whole edge list.
    pub curve: Vec<(f64, f64)>,
    /// Rank window `[lo, hi]` (1-based) used for the fit.
    pub window: (usize, usize),
}

/// Lower and upper edge-rank fractions of the fitting window.
pub const DIMENSION_WINDOW: (f64, f64) = (0.01, 0.10);

/// Sorted edge-length dimension estimate.
///
/// The number of edges shorter than `l` grows like `l^m` on an
/// `m`-dimensional manifold, so `ln length` is linear in `ln rank` with slope
/// `1/m` at scales well above the sample spacing and well below the data
/// diameter. The slope is fitted on log-spaced ranks inside
/// [`DIMENSION_WINDOW`].
pub fn dimension_estimate(d: &DMatrix<f64>) -> Result<DimensionEstimate> {
    let m = d.nrows();
    if m < 50 {
        return Err(Error::param(format!("dimension estimate needs at least 50 points, got {m}")));
    }
    let mut edges: Vec<f64> = Vec::with_capacity(m * (m - 1) / 2);
    for j in 0..m {
        for i in 0..j {
            edges.push(d[(i, j)]);
        }
    }
    edges.sort_by(f64::total_cmp);
    let total = edges.len();
    if *edges.last().unwrap() == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }

    let log_ranks = |lo: usize, hi: usize, n: usize| -> Vec<usize> {
        let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
        let mut r: Vec<usize> = (0..n)
            .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp().round() as usize)
            .map(|r| r.clamp(lo, hi))
            .collect();
        r.dedup();
        r
    };

    let curve = log_ranks(1, total, 400)
        .into_iter()
        .filter(|&r| edges[r - 1] > 0.0)
        .map(|r| ((r as f64).ln(), edges[r - 1].ln()))
        .collect();

    let lo = ((DIMENSION_WINDOW.0 * total as f64).ceil() as usize).max(1);
    let hi = ((DIMENSION_WINDOW.1 * total as f64).floor() as usize).max(lo + 1).min(total);
    let pts: Vec<(f64, f64)> = log_ranks(lo, hi, 200)
        .into_iter()
        .filter(|&r| edges[r - 1] > 0.0)
        .map(|r| ((r as f64).ln(), edges[r - 1].ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate("too few distinct edge lengths in the fitting window".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::Degenerate("edge lengths do not grow with rank".into()));
    }
    Ok(DimensionEstimate { dimension: 1.0 / slope, curve, window: (lo, hi) })
}
