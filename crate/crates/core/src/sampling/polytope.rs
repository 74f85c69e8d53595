//! Admissible compositions: elemental equalities plus nonnegativity.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::cloud::ScaledMetric;
use crate::error::{Error, Result};
use crate::kinetics::ReactionNetwork;

/// Largest ambient dimension handled by the combinatorial vertex search.
pub const MAX_ENUMERATION_DIM: usize = 20;

/// `{ y : A y = b, y >= 0 }` with linearly independent rows of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    equality_matrix: DMatrix<f64>,
    equality_rhs: DVector<f64>,
}

impl Polytope {
    pub fn new(equality_matrix: DMatrix<f64>, equality_rhs: DVector<f64>) -> Result<Self> {
        let (d, n) = equality_matrix.shape();
        if equality_rhs.len() != d {
            return Err(Error::DimensionMismatch(format!("{d} equality rows, {} right-hand sides", equality_rhs.len())));
        }
        if d == 0 || d >= n {
            return Err(Error::param(format!("need 0 < d < n equalities, got d = {d}, n = {n}")));
        }
        if crate::linalg::rank(&equality_matrix, 1e-12) < d {
            return Err(Error::param("equality rows are linearly dependent"));
        }
        Ok(Self { equality_matrix, equality_rhs })
    }

    /// Conservation polytope of a network through `reference`: one row per
    /// element with entries `c[e][p] / W_p`.
    pub fn from_network(network: &ReactionNetwork, reference: &[f64]) -> Result<Self> {
        let n = network.n_species();
        if reference.len() != n {
            return Err(Error::DimensionMismatch("reference state length differs from species count".into()));
        }
        if reference.iter().any(|v| *v < 0.0) {
            return Err(Error::param("reference state must be nonnegative"));
        }
        let comp = network.composition_matrix();
        let w = network.molecular_weights();
        let a = DMatrix::from_fn(comp.len(), n, |e, p| comp[e][p] / w[p]);
        let b = &a * DVector::from_column_slice(reference);
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.equality_matrix.ncols()
    }

    pub fn n_equalities(&self) -> usize {
        self.equality_matrix.nrows()
    }

    pub fn equality_matrix(&self) -> &DMatrix<f64> {
        &self.equality_matrix
    }

    pub fn equality_rhs(&self) -> &DVector<f64> {
        &self.equality_rhs
    }

    /// Largest equality violation relative to the right-hand-side scale.
    pub fn equality_residual(&self, y: &[f64]) -> f64 {
        let r = &self.equality_matrix * DVector::from_column_slice(y) - &self.equality_rhs;
        r.amax() / self.equality_rhs.amax().max(1e-300)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        y.len() == self.dim() && y.iter().all(|v| *v >= -tol) && self.equality_residual(y) <= tol
    }
}

fn push_unique(vertices: &mut Vec<Vec<f64>>, v: Vec<f64>) {
    let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    let dup = vertices.iter().any(|u| u.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-10 * scale));
    if !dup {
        vertices.push(v);
    }
}

/// All vertices, found by choosing `d` support coordinates, pinning the
/// others to zero and solving the square remainder.
pub fn enumerate_vertices(polytope: &Polytope) -> Result<Vec<Vec<f64>>> {
    let (d, n) = polytope.equality_matrix.shape();
    if n > MAX_ENUMERATION_DIM {
        return Err(Error::param(format!("vertex enumeration is limited to n <= {MAX_ENUMERATION_DIM}, got {n}")));
    }
    let a = &polytope.equality_matrix;
    let b = &polytope.equality_rhs;
    let scale = b.amax().max(1e-300);
    let mut vertices = Vec::new();
    for support in (0..n).combinations(d) {
        let sub = DMatrix::from_fn(d, d, |i, j| a[(i, support[j])]);
        if crate::linalg::rank(&sub, 1e-12) < d {
            continue;
        }
        let Some(x) = sub.lu().solve(b) else { continue };
        let tol = 1e-12 * x.amax().max(1.0);
        if x.iter().any(|v| *v < -tol) {
            continue;
        }
        let mut y = vec![0.0; n];
        for (k, &c) in support.iter().enumerate() {
            y[c] = x[k].max(0.0);
        }
        let r = a * DVector::from_column_slice(&y) - b;
        if r.amax() > 1e-9 * scale {
            continue;
        }
        push_unique(&mut vertices, y);
    }
    if vertices.is_empty() {
        return Err(Error::EmptyPolytope(format!("no feasible vertex among {n} coordinates")));
    }
    Ok(vertices)
}

/// The `count` vertices nearest to the midpoint of `fresh` and `equilibrium`
/// under `metric`, ties broken by position in `vertices`.
pub fn select_vertex_subset(
    vertices: &[Vec<f64>],
    fresh: &[f64],
    equilibrium: &[f64],
    count: usize,
    metric: &ScaledMetric,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 || count > vertices.len() {
        return Err(Error::param(format!("subset size {count} must lie in 1..={}", vertices.len())));
    }
    let mid: Vec<f64> = fresh.iter().zip(equilibrium).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut order: Vec<(f64, usize)> =
        vertices.iter().enumerate().map(|(i, v)| (metric.squared_distance(v, &mid), i)).collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    Ok(order[..count].iter().map(|&(_, i)| vertices[i].clone()).collect())
}

/// Corners of the axis-aligned box `[lo, hi]`, in binary counting order.
pub fn box_vertices(lo: &[f64], hi: &[f64]) -> Result<Vec<Vec<f64>>> {
    if lo.len() != hi.len() || lo.is_empty() || lo.len() > MAX_ENUMERATION_DIM {
        return Err(Error::param("box bounds must have equal, small, nonzero length"));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(Error::param("box lower bounds must be below the upper bounds"));
    }
    let n = lo.len();
    Ok((0..1usize << n)
        .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect())
        .collect())
}
