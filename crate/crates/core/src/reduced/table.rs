//! Tabulated reduced right-hand sides on uniform Cartesian grids.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{OperatorPair, PairDescriptor};
use crate::kinetics::VectorField;

use super::{chain_rule_rhs, projection_rhs, Formulation};

pub const TABLE_FORMAT_VERSION: u32 = 1;

/// Relative slack on the domain bounds so grid-edge queries are not lost
/// to rounding.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::param(format!("grid axes need at least two nodes, got {nodes}")));
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::param(format!("grid axis bounds must satisfy min < max, got [{min}, {max}]")));
        }
        Ok(Self { min, max, nodes })
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }
}

/// Tensor grid; node `(i_1, ..., i_m)` has flat index with the last axis
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::param("a grid needs at least one axis"));
        }
        for a in &axes {
            Axis::new(a.min, a.max, a.nodes)?;
        }
        Ok(Self { axes })
    }

    /// Bounding box of `coords` (`M x m`) padded by `pad` of each extent.
    pub fn fit_to(coords: &DMatrix<f64>, nodes: &[usize], pad: f64) -> Result<Self> {
        if coords.ncols() != nodes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates but {} node counts",
                coords.ncols(),
                nodes.len()
            )));
        }
        if coords.nrows() == 0 {
            return Err(Error::param("cannot fit a grid to no points"));
        }
        let axes = nodes
            .iter()
            .enumerate()
            .map(|(d, &n)| {
                let col = coords.column(d);
                let (lo, hi) = (col.min(), col.max());
                let w = (hi - lo).max(f64::EPSILON * hi.abs().max(1.0));
                Axis::new(lo - pad * w, hi + pad * w, n)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (d, a) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % a.nodes;
            flat /= a.nodes;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.nodes + i)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&i, a)| a.node(i)).collect()
    }

    /// Length of one cell diagonal.
    pub fn cell_diagonal(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing().powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter().zip(&self.axes).all(|(v, a)| {
                let slack = BOUND_SLACK * (a.max - a.min);
                *v >= a.min - slack && *v <= a.max + slack
            })
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    /// Node counts only, `R` or `RxC`; the bounds are filled in later.
    fn from_str(s: &str) -> Result<Self> {
        let nodes = s
            .split(['x', 'X'])
            .map(|p| p.trim().parse::<usize>().map_err(|_| Error::param(format!("bad grid size `{s}`, expected RxC"))))
            .collect::<Result<Vec<_>>>()?;
        GridSpec::new(nodes.into_iter().map(|n| Axis { min: 0.0, max: 1.0, nodes: n }).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub pair: PairDescriptor,
    pub field: String,
    pub formulation: Formulation,
}

/// Reduced right-hand side sampled at grid nodes. Nodes where lifting or
/// differentiation failed are masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedTable {
    pub format_version: u32,
    pub grid: GridSpec,
    /// `n_nodes x m`, row-major; masked rows hold NaN.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub provenance: Option<TableProvenance>,
}

impl ReducedTable {
    /// Table from node values, every finite row counted valid.
    pub fn from_values(grid: GridSpec, values: Vec<f64>, provenance: Option<TableProvenance>) -> Result<Self> {
        let m = grid.dim();
        if values.len() != grid.n_nodes() * m {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} nodes of dimension {m}",
                values.len(),
                grid.n_nodes()
            )));
        }
        let mask = values.chunks_exact(m).map(|r| r.iter().all(|v| v.is_finite())).collect();
        Ok(Self { format_version: TABLE_FORMAT_VERSION, grid, values, mask, provenance })
    }

    pub fn node_value(&self, flat: usize) -> Option<&[f64]> {
        let m = self.grid.dim();
        self.mask[flat].then(|| &self.values[flat * m..(flat + 1) * m])
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|v| !**v).count() as f64 / self.mask.len() as f64
    }

    /// Multilinear interpolation over the enclosing cell.
    pub fn interpolate(&self, u: &[f64]) -> Result<Vec<f64>> {
        let m = self.grid.dim();
        if u.len() != m {
            return Err(Error::DimensionMismatch(format!("query of length {}, table dimension {m}", u.len())));
        }
        if !self.grid.contains(u) {
            return Err(Error::OutOfDomain { point: u.to_vec() });
        }
        let mut base = vec![0; m];
        let mut frac = vec![0.0; m];
        for (d, a) in self.grid.axes.iter().enumerate() {
            let s = ((u[d] - a.min) / a.spacing()).clamp(0.0, (a.nodes - 1) as f64);
            let i = (s.floor() as usize).min(a.nodes - 2);
            base[d] = i;
            frac[d] = s - i as f64;
        }
        let mut out = vec![0.0; m];
        let mut corner = vec![0; m];
        for bits in 0..(1usize << m) {
            let mut weight = 1.0;
            for d in 0..m {
                let up = bits >> d & 1 == 1;
                corner[d] = base[d] + up as usize;
                weight *= if up { frac[d] } else { 1.0 - frac[d] };
            }
            let flat = self.grid.flat_index(&corner);
            let Some(v) = self.node_value(flat) else {
                return Err(Error::MaskedCell { point: u.to_vec() });
            };
            if weight == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += weight * x;
            }
        }
        Ok(out)
    }
}

/// Evaluates the reduced right-hand side at every grid node in parallel.
/// Failing nodes are masked; more than half masked draws a warning.
pub fn tabulate(
    grid: &GridSpec,
    pair: &OperatorPair,
    field: &dyn VectorField,
    formulation: Formulation,
    field_name: &str,
) -> Result<ReducedTable> {
    let m = pair.reduced_dim();
    if grid.dim() != m {
        return Err(Error::DimensionMismatch(format!("grid of dimension {}, reduced dimension {m}", grid.dim())));
    }
    if field.dim() != pair.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "field of dimension {}, ambient dimension {}",
            field.dim(),
            pair.ambient_dim()
        )));
    }
    let rows: Vec<Option<Vec<f64>>> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|k| {
            let u = grid.node(k);
            let r = match formulation {
                Formulation::ChainRule => chain_rule_rhs(&u, pair, field),
                Formulation::Projection => projection_rhs(&u, pair, field),
            };
            match r {
                Ok(v) if v.iter().all(|x| x.is_finite()) => Some(v),
                Ok(_) => {
                    log::debug!("grid node {k}: non-finite reduced rate, masked");
                    None
                }
                Err(Error::RankDeficientJacobian { condition, .. }) => {
                    log::debug!("{}", Error::RankDeficientJacobian { condition, node: Some(k) });
                    None
                }
                Err(e) => {
                    log::debug!("grid node {k}: {e}, masked");
                    None
                }
            }
        })
        .collect();
    let mut values = Vec::with_capacity(rows.len() * m);
    let mut mask = Vec::with_capacity(rows.len());
    for r in rows {
        match r {
            Some(v) => {
                values.extend(v);
                mask.push(true);
            }
            None => {
                values.extend(std::iter::repeat_n(f64::NAN, m));
                mask.push(false);
            }
        }
    }
    let table = ReducedTable {
        format_version: TABLE_FORMAT_VERSION,
        grid: grid.clone(),
        values,
        mask,
        provenance: Some(TableProvenance {
            pair: pair.descriptor().clone(),
            field: field_name.to_string(),
            formulation,
        }),
    };
    if table.masked_fraction() > 0.5 {
        log::warn!(
            "{:.0}% of grid nodes are masked; the grid likely extends past the manifold chart",
            100.0 * table.masked_fraction()
        );
    }
    Ok(table)
}
