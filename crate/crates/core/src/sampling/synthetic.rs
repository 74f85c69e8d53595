//! Benchmark clouds with known generating coordinates.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{Labels, PointCloud};
use crate::error::{Error, Result};

/// Angular extent of the partial cylinder: three fourths of a full turn.
pub const CYLINDER_ARC: f64 = 1.5 * PI;
pub const CYLINDER_LENGTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Uniform random points of the unit square wrapped on the cylinder.
    CylinderUniform,
    /// Regular `rows x cols` array wrapped on the cylinder.
    CylinderGrid,
    /// One uniform random point per cell of a `rows x cols` array, wrapped.
    CylinderJittered,
    /// Uniform random angles on the unit circle.
    Circle,
    /// Evenly spaced points on `[0, 1]`.
    Segment,
    /// Regular `rows x cols` grid on the unit square.
    SquareGrid,
}

impl FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cylinder-uniform" => Self::CylinderUniform,
            "cylinder-grid" => Self::CylinderGrid,
            "cylinder-jittered" => Self::CylinderJittered,
            "circle" => Self::Circle,
            "segment" => Self::Segment,
            "square-grid" => Self::SquareGrid,
            other => return Err(Error::Unknown { kind: "synthetic cloud", name: other.into() }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    /// Point count for the random and segment kinds.
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self { n: 2000, rows: 40, cols: 40 }
    }
}

fn cylinder(unit_square: &[(f64, f64)]) -> Result<PointCloud> {
    let mut pts = Vec::with_capacity(3 * unit_square.len());
    let mut labels = Vec::with_capacity(2 * unit_square.len());
    for &(s, h) in unit_square {
        let theta = s * CYLINDER_ARC;
        let z = h * CYLINDER_LENGTH;
        pts.extend([theta.cos(), theta.sin(), z]);
        labels.extend([theta, z]);
    }
    PointCloud::new(pts, 3)?
        .with_names(vec!["x".into(), "y".into(), "z".into()])?
        .with_labels(Labels { names: vec!["theta".into(), "z".into()], values: labels })
}

fn grid(rows: usize, cols: usize) -> Result<Vec<(f64, f64)>> {
    if rows < 2 || cols < 2 {
        return Err(Error::param("grid needs at least 2 rows and 2 columns"));
    }
    Ok((0..rows)
        .flat_map(|i| {
            (0..cols).map(move |j| (j as f64 / (cols - 1) as f64, i as f64 / (rows - 1) as f64))
        })
        .collect())
}

pub fn synthetic_cloud<R: Rng>(kind: SyntheticKind, params: &SyntheticParams, rng: &mut R) -> Result<PointCloud> {
    match kind {
        SyntheticKind::CylinderUniform => {
            let pts: Vec<(f64, f64)> = (0..params.n).map(|_| (rng.gen(), rng.gen())).collect();
            cylinder(&pts)
        }
        SyntheticKind::CylinderGrid => cylinder(&grid(params.rows, params.cols)?),
        SyntheticKind::CylinderJittered => {
            if params.rows == 0 || params.cols == 0 {
                return Err(Error::param("jittered grid needs at least one cell"));
            }
            let mut pts = Vec::with_capacity(params.rows * params.cols);
            for i in 0..params.rows {
                for j in 0..params.cols {
                    let s = (j as f64 + rng.gen::<f64>()) / params.cols as f64;
                    let h = (i as f64 + rng.gen::<f64>()) / params.rows as f64;
                    pts.push((s, h));
                }
            }
            cylinder(&pts)
        }
        SyntheticKind::Circle => {
            let mut pts = Vec::with_capacity(2 * params.n);
            let mut labels = Vec::with_capacity(params.n);
            for _ in 0..params.n {
                let t = rng.gen::<f64>() * 2.0 * PI;
                pts.extend([t.cos(), t.sin()]);
                labels.push(t);
            }
            PointCloud::new(pts, 2)?
                .with_names(vec!["x".into(), "y".into()])?
                .with_labels(Labels { names: vec!["angle".into()], values: labels })
        }
        SyntheticKind::Segment => {
            if params.n < 2 {
                return Err(Error::param("segment needs at least 2 points"));
            }
            let xs: Vec<f64> = (0..params.n).map(|i| i as f64 / (params.n - 1) as f64).collect();
            PointCloud::new(xs.clone(), 1)?
                .with_names(vec!["x".into()])?
                .with_labels(Labels { names: vec!["x".into()], values: xs })
        }
        SyntheticKind::SquareGrid => {
            let g = grid(params.rows, params.cols)?;
            let flat: Vec<f64> = g.iter().flat_map(|&(a, b)| [a, b]).collect();
            PointCloud::new(flat.clone(), 2)?
                .with_names(vec!["x".into(), "y".into()])?
                .with_labels(Labels { names: vec!["x".into(), "y".into()], values: flat })
        }
    }
}
