//! Time-averaged deviations between detailed and reduced trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::OperatorPair;
use crate::kinetics::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Length of the common time range.
    pub horizon: f64,
    /// `t^-1 int |psi_det - psi_red| dt`.
    pub mean_reduced_deviation: f64,
    /// `t^-1 int |y_det,a - y_red,a| dt` per ambient coordinate.
    pub mean_ambient_deviation: Vec<f64>,
    pub times: Vec<f64>,
    /// Pointwise `|psi_det - psi_red|` at `times`.
    pub reduced_deviation: Vec<f64>,
}

/// Union of both time grids restricted to their overlap.
fn union_grid(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let t0 = a.times()[0].max(b.times()[0]);
    let t1 = a.last_time().min(b.last_time());
    if !(t1 > t0) {
        return Err(Error::EmptyOverlap);
    }
    let mut grid: Vec<f64> =
        a.times().iter().chain(b.times()).copied().filter(|t| *t >= t0 && *t <= t1).chain([t0, t1]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance between two trajectories in the same space,
/// both linearly interpolated onto the union grid.
pub fn reduced_deviation(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("trajectories of dimension {} and {}", a.dim(), b.dim())));
    }
    let grid = union_grid(a, b)?;
    let dev: Vec<f64> = grid.iter().map(|&t| norm_diff(&a.interpolate(t), &b.interpolate(t))).collect();
    Ok(trapezoid(&grid, &dev) / (grid[grid.len() - 1] - grid[0]))
}

/// Restricts the detailed trajectory and lifts the reduced one, then
/// averages the deviations over the common time range by trapezoidal
/// quadrature on the union of both time grids.
pub fn compare(detailed: &Trajectory, reduced: &Trajectory, pair: &OperatorPair) -> Result<ComparisonReport> {
    if detailed.dim() != pair.ambient_dim() || reduced.dim() != pair.reduced_dim() {
        return Err(Error::DimensionMismatch(format!(
            "trajectories of dimension {} and {}, operators map {} <-> {}",
            detailed.dim(),
            reduced.dim(),
            pair.ambient_dim(),
            pair.reduced_dim()
        )));
    }
    let times = union_grid(detailed, reduced)?;
    let n = detailed.dim();
    let mut psi_dev = Vec::with_capacity(times.len());
    let mut y_dev: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len()); n];
    for &t in &times {
        let y_det = detailed.interpolate(t);
        let u_red = reduced.interpolate(t);
        let u_det = pair.restrict(&y_det)?;
        let y_red = pair.lift(&u_red)?;
        psi_dev.push(norm_diff(&u_det, &u_red));
        for a in 0..n {
            y_dev[a].push((y_det[a] - y_red[a]).abs());
        }
    }
    let horizon = times[times.len() - 1] - times[0];
    Ok(ComparisonReport {
        horizon,
        mean_reduced_deviation: trapezoid(&times, &psi_dev) / horizon,
        mean_ambient_deviation: y_dev.iter().map(|d| trapezoid(&times, d) / horizon).collect(),
        times,
        reduced_deviation: psi_dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(times: &[f64], f: impl Fn(f64) -> Vec<f64>) -> Trajectory {
        let dim = f(0.0).len();
        let states = times.iter().flat_map(|&t| f(t)).collect();
        Trajectory::from_parts(times.to_vec(), states, dim).unwrap()
    }

    #[test]
    fn identical_trajectories_have_zero_deviation() {
        let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let a = traj(&t, |t| vec![t.sin(), t * t]);
        assert_eq!(reduced_deviation(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_gives_the_offset() {
        let t: Vec<f64> = (0..21).map(|i| i as f64 * 0.05).collect();
        let a = traj(&t, |t| vec![t.cos(), t]);
        let b = traj(&t[3..], |t| vec![t.cos(), t + 0.25]);
        assert!((reduced_deviation(&a, &b).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn symmetric_under_swap() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let a = traj(&t, |t| vec![t.sin(), (2.0 * t).cos()]);
        let b = traj(&t, |t| vec![0.9 * t.sin(), t.cos()]);
        assert_eq!(reduced_deviation(&a, &b).unwrap(), reduced_deviation(&b, &a).unwrap());
    }

    #[test]
    fn disjoint_time_ranges_are_refused() {
        let a = traj(&[0.0, 1.0], |t| vec![t]);
        let b = traj(&[2.0, 3.0], |t| vec![t]);
        assert!(matches!(reduced_deviation(&a, &b), Err(Error::EmptyOverlap)));
    }
}
