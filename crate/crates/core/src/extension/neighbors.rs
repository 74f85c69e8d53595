//! Exact nearest-neighbor search by linear scan.

use crate::linalg::squared_distance;

/// Indices of the `k` rows of `points` (row-major, `dim` columns) nearest
/// to `query`, ties broken by index. The result is sorted by index so that
/// downstream fits see neighbors in training order.
pub fn nearest_neighbors(points: &[f64], dim: usize, query: &[f64], k: usize) -> Vec<usize> {
    let m = points.len() / dim;
    let k = k.min(m);
    let mut keyed: Vec<(f64, usize)> = points
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, p)| (squared_distance(p, query), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < m && k > 0 {
        keyed.select_nth_unstable_by(k - 1, cmp);
    }
    let mut idx: Vec<usize> = keyed[..k].iter().map(|&(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

/// Smallest squared distance from `query` to any row.
pub fn nearest_squared_distance(points: &[f64], dim: usize, query: &[f64]) -> f64 {
    points.chunks_exact(dim).map(|p| squared_distance(p, query)).fold(f64::INFINITY, f64::min)
}
