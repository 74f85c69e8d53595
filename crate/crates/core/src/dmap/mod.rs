//! Diffusion-map embedding of a point cloud.
//!
//! Pipeline: scaled pairwise distances, heat-kernel affinities
//! `w = exp(-(d/eps)^2)`, row normalization to the Markov matrix `K = D^-1 W`,
//! leading eigenpairs of `K`, and selection of the eigenvectors that
//! parameterize independent directions on the data manifold.

mod diagnostics;
mod independence;

pub use diagnostics::{dimension_estimate, eigenvalue_prediction, noise_cutoff, DimensionEstimate};
pub use independence::{independent_coordinates, local_linear_residual, CoordinateSelection};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, ScaledMetric};
use crate::error::{Error, Result};
use crate::linalg;

/// Dense kernels are stored in full; beyond this many samples the memory
/// footprint (three `M x M` matrices of f64) is no longer reasonable.
pub const MAX_POINTS: usize = 20_000;

/// `d_ij = |R y_i - R y_j|`, symmetric with zero diagonal.
pub fn pairwise_distances(cloud: &PointCloud) -> Result<DMatrix<f64>> {
    let m = cloud.len();
    if m > MAX_POINTS {
        return Err(Error::param(format!("{m} points exceeds the dense-kernel cap of {MAX_POINTS}")));
    }
    for (i, row) in cloud.rows().enumerate() {
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col });
        }
    }
    let scaled = cloud.scaled_points();
    let n = cloud.dim();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let a = &scaled[i * n..(i + 1) * n];
            (0..m)
                .map(|j| linalg::squared_distance(a, &scaled[j * n..(j + 1) * n]).sqrt())
                .collect()
        })
        .collect();
    let mut d = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    // exact symmetry regardless of rounding in the row computation
    for i in 0..m {
        d[(i, i)] = 0.0;
        for j in 0..i {
            d[(i, j)] = d[(j, i)];
        }
    }
    Ok(d)
}

/// Heat-kernel affinities `w_ij = exp(-(d_ij / eps)^2)`.
pub fn affinity_matrix(d: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::param(format!("kernel scale must be positive, got {eps}")));
    }
    Ok(d.map(|x| (-(x / eps).powi(2)).exp()))
}

/// Row-stochastic `K = D^-1 W` together with the row sums `D`.
#[derive(Debug, Clone)]
pub struct MarkovMatrix {
    pub kernel: DMatrix<f64>,
    pub row_sums: Vec<f64>,
}

pub fn markov_matrix(w: &DMatrix<f64>) -> Result<MarkovMatrix> {
    if w.nrows() != w.ncols() {
        return Err(Error::DimensionMismatch("affinity matrix must be square".into()));
    }
    let row_sums: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = row_sums.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Degenerate(format!("row {i} of the affinity matrix has zero sum")));
    }
    let mut kernel = w.clone();
    for (i, s) in row_sums.iter().enumerate() {
        kernel.row_mut(i).unscale_mut(*s);
    }
    Ok(MarkovMatrix { kernel, row_sums })
}

/// Negatively defined normalized graph Laplacian `L = D^-1 W - I`.
pub fn graph_laplacian(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut l = markov_matrix(w)?.kernel;
    for i in 0..l.nrows() {
        l[(i, i)] -= 1.0;
    }
    Ok(l)
}

/// Leading eigenpairs of a Markov matrix.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    /// Sorted by descending magnitude.
    pub values: Vec<f64>,
    /// Right eigenvectors of `K`, unit Euclidean norm, as columns.
    pub vectors: DMatrix<f64>,
}

/// Residual tolerance `|K phi - lambda phi| <= tol |phi|` for returned pairs.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// The `k` leading eigenpairs of `K`, computed from the symmetric conjugate
/// `D^1/2 K D^-1/2 = D^-1/2 W D^-1/2` and mapped back with `D^-1/2`.
///
/// Each eigenvector is scaled to unit Euclidean norm and its sign fixed so
/// that its largest-magnitude entry is positive.
pub fn eigendecompose(markov: &MarkovMatrix, k: usize) -> Result<Eigenpairs> {
    let m = markov.kernel.nrows();
    if k == 0 || k > m {
        return Err(Error::param(format!("eigenpair count {k} must lie in 1..={m}")));
    }
    let sqrt_d: Vec<f64> = markov.row_sums.iter().map(|d| d.sqrt()).collect();
    let mut sym = DMatrix::from_fn(m, m, |i, j| sqrt_d[i] * markov.kernel[(i, j)] / sqrt_d[j]);
    for i in 0..m {
        for j in 0..i {
            let avg = 0.5 * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = avg;
            sym[(j, i)] = avg;
        }
    }
    let eig = linalg::symmetric_eigen(&sym);

    let mut order: Vec<usize> = (0..m).collect();
    // stable: ties keep solver order
    order.sort_by(|&a, &b| eig.values[b].abs().total_cmp(&eig.values[a].abs()));
    order.truncate(k);

    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(m, k);
    for (col, &src) in order.iter().enumerate() {
        let mut phi: Vec<f64> = (0..m).map(|i| eig.vectors[(i, src)] / sqrt_d[i]).collect();
        normalize_and_fix_sign(&mut phi);
        vectors.column_mut(col).copy_from_slice(&phi);
        values.push(eig.values[src]);
    }

    for (col, &lambda) in values.iter().enumerate() {
        let phi = vectors.column(col);
        let residual = (&markov.kernel * phi - phi * lambda).norm();
        if !(residual <= EIGEN_RESIDUAL_TOL * phi.norm()) {
            return Err(Error::EigenNonConvergence { index: col + 1, residual });
        }
    }
    Ok(Eigenpairs { values, vectors })
}

fn normalize_and_fix_sign(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut pivot = 0.0f64;
    for &x in v.iter() {
        if x.abs() > pivot.abs() {
            pivot = x;
        }
    }
    let s = if pivot < 0.0 { -1.0 / norm } else { 1.0 / norm };
    v.iter_mut().for_each(|x| *x *= s);
}

fn nearest_neighbor_distances(d: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = d.nrows();
    if m < 2 {
        return Err(Error::param("at least two points are required"));
    }
    Ok((0..m)
        .map(|j| (0..m).filter(|&i| i != j).map(|i| d[(i, j)]).fold(f64::INFINITY, f64::min))
        .collect())
}

/// `multiplier * max_j min_{i != j} d_ij`.
pub fn select_epsilon(d: &DMatrix<f64>, multiplier: f64) -> Result<f64> {
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(Error::param(format!("epsilon multiplier must be positive, got {multiplier}")));
    }
    let nn = nearest_neighbor_distances(d)?;
    Ok(multiplier * nn.into_iter().fold(0.0, f64::max))
}

/// Largest edge of a minimum spanning tree of the complete distance graph:
/// deleting every edge at least this long disconnects the graph.
pub fn critical_diffusion_distance(d: &DMatrix<f64>) -> Result<f64> {
    let m = d.nrows();
    if m < 2 {
        return Err(Error::param("at least two points are required"));
    }
    // Prim's algorithm on the dense graph
    let mut in_tree = vec![false; m];
    let mut best = vec![f64::INFINITY; m];
    best[0] = 0.0;
    let mut longest = 0.0f64;
    for _ in 0..m {
        let mut next = usize::MAX;
        for v in 0..m {
            if !in_tree[v] && (next == usize::MAX || best[v] < best[next]) {
                next = v;
            }
        }
        in_tree[next] = true;
        longest = longest.max(best[next]);
        for v in 0..m {
            if !in_tree[v] && d[(next, v)] < best[v] {
                best[v] = d[(next, v)];
            }
        }
    }
    Ok(longest)
}

/// How the kernel scale is chosen from the distance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonRule {
    /// Multiple of the critical diffusion distance.
    Critical,
    /// Multiple of `max_j min_{i != j} d_ij`.
    MaxMin,
}

impl std::str::FromStr for EpsilonRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "critical" => Ok(Self::Critical),
            "max-min" | "maxmin" => Ok(Self::MaxMin),
            other => Err(Error::Unknown { kind: "epsilon rule", name: other.into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmapParams {
    /// Explicit kernel scale; overrides the rule when set.
    pub epsilon: Option<f64>,
    pub epsilon_rule: EpsilonRule,
    pub multiplier: f64,
    /// Number of eigenpairs computed, including the trivial one.
    pub n_eigen: usize,
    /// Number of embedding coordinates sought.
    pub n_coords: usize,
    pub residual_threshold: f64,
    /// Diffusion time exponent.
    pub t: u32,
    /// Rescale coordinates by `1/max|y|` before computing distances.
    pub rescale: bool,
}

impl Default for DmapParams {
    fn default() -> Self {
        Self {
            epsilon: None,
            epsilon_rule: EpsilonRule::Critical,
            multiplier: 2.0,
            n_eigen: 20,
            n_coords: 2,
            residual_threshold: independence::DEFAULT_RESIDUAL_THRESHOLD,
            t: 0,
            rescale: false,
        }
    }
}

/// Eigenpairs of the Markov matrix plus the chosen embedding coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEmbedding {
    /// Sorted by descending magnitude; entry 0 is the trivial eigenvalue 1.
    pub eigenvalues: Vec<f64>,
    /// `M x k` right eigenvectors, column `l - 1` holding eigenvector `l`.
    #[serde(skip)]
    pub eigenvectors: DMatrix<f64>,
    pub epsilon: f64,
    /// Selected eigenvector numbers, counting the trivial one as 1.
    pub selected: Vec<usize>,
    pub t: u32,
}

impl DiffusionEmbedding {
    pub fn from_parts(
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
        epsilon: f64,
        selected: Vec<usize>,
        t: u32,
    ) -> Result<Self> {
        if eigenvectors.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch("eigenvalue and eigenvector counts differ".into()));
        }
        let k = eigenvalues.len();
        let mut seen = std::collections::BTreeSet::new();
        for &s in &selected {
            if s < 2 || s > k || !seen.insert(s) {
                return Err(Error::param(format!("selected index {s} must be distinct and in 2..={k}")));
            }
        }
        Ok(Self { eigenvalues, eigenvectors, epsilon, selected, t })
    }

    pub fn len(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvectors.nrows() == 0
    }

    pub fn reduced_dim(&self) -> usize {
        self.selected.len()
    }

    /// Eigenvector number `l` (1-based).
    pub fn eigenvector(&self, l: usize) -> Vec<f64> {
        self.eigenvectors.column(l - 1).iter().copied().collect()
    }

    pub fn eigenvalue(&self, l: usize) -> f64 {
        self.eigenvalues[l - 1]
    }

    /// `lambda_l^t` for each selected coordinate.
    pub fn coordinate_weights(&self) -> Vec<f64> {
        self.selected.iter().map(|&l| self.eigenvalue(l).powi(self.t as i32)).collect()
    }

    /// Training-set coordinates `u_i`, `M x m`, using the embedding's own `t`.
    pub fn coordinates(&self) -> DMatrix<f64> {
        let weights = self.coordinate_weights();
        DMatrix::from_fn(self.len(), self.selected.len(), |i, a| {
            weights[a] * self.eigenvectors[(i, self.selected[a] - 1)]
        })
    }
}

/// Truncated diffusion coordinates.
///
/// For `t = 0` the selected eigenvectors are returned as they are. For
/// `t > 0` each selected coordinate `l` is weighted by `lambda_l^t` and kept
/// only when `|lambda_l|^t > delta`.
pub fn embed(embedding: &DiffusionEmbedding, t: u32, delta: f64) -> Result<DMatrix<f64>> {
    let kept: Vec<usize> = if t == 0 {
        embedding.selected.clone()
    } else {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param(format!("truncation threshold must lie in (0, 1), got {delta}")));
        }
        embedding
            .selected
            .iter()
            .copied()
            .filter(|&l| embedding.eigenvalue(l).abs().powi(t as i32) > delta)
            .collect()
    };
    if kept.is_empty() {
        return Err(Error::EmptyTruncation { threshold: delta });
    }
    Ok(DMatrix::from_fn(embedding.len(), kept.len(), |i, a| {
        let l = kept[a];
        embedding.eigenvalue(l).powi(t as i32) * embedding.eigenvectors[(i, l - 1)]
    }))
}

/// Everything computed while building an embedding.
#[derive(Debug, Clone)]
pub struct DmapRun {
    pub embedding: DiffusionEmbedding,
    pub selection: CoordinateSelection,
    pub markov: MarkovMatrix,
    /// Metric the distances were measured in; operators built on the
    /// embedding must use the same one.
    pub metric: ScaledMetric,
}

/// Kernel scale from the parameters: explicit value or rule times multiplier.
pub fn kernel_scale(d: &DMatrix<f64>, params: &DmapParams) -> Result<f64> {
    if let Some(eps) = params.epsilon {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::param(format!("kernel scale must be positive, got {eps}")));
        }
        return Ok(eps);
    }
    match params.epsilon_rule {
        EpsilonRule::MaxMin => select_epsilon(d, params.multiplier),
        EpsilonRule::Critical => {
            if !(params.multiplier.is_finite() && params.multiplier > 0.0) {
                return Err(Error::param("epsilon multiplier must be positive"));
            }
            Ok(params.multiplier * critical_diffusion_distance(d)?)
        }
    }
}

/// Builds the embedding for `cloud`. Its metric is used as given unless
/// `params.rescale` asks for `1/max|y|` scaling, which replaces it.
pub fn diffusion_map(cloud: &PointCloud, params: &DmapParams) -> Result<DmapRun> {
    if cloud.len() < 2 {
        return Err(Error::param("a diffusion map needs at least two points"));
    }
    let metric =
        if params.rescale { ScaledMetric::from_max_abs(cloud.as_flat(), cloud.dim()) } else { cloud.metric().clone() };
    let rescaled;
    let cloud = if params.rescale {
        let mut c = cloud.clone();
        c.set_metric(metric.clone())?;
        rescaled = c;
        &rescaled
    } else {
        cloud
    };
    let d = pairwise_distances(cloud)?;
    let epsilon = kernel_scale(&d, params)?;
    let w = affinity_matrix(&d, epsilon)?;
    drop(d);
    let markov = markov_matrix(&w)?;
    drop(w);
    let k = params.n_eigen.min(cloud.len());
    let pairs = eigendecompose(&markov, k)?;
    let selection =
        independent_coordinates(&pairs.vectors, params.n_coords, params.residual_threshold)?;
    if !selection.complete {
        log::warn!(
            "found {} independent coordinates of the {} requested",
            selection.selected.len(),
            params.n_coords
        );
    }
    let embedding = DiffusionEmbedding::from_parts(
        pairs.values,
        pairs.vectors,
        epsilon,
        selection.selected.clone(),
        params.t,
    )?;
    Ok(DmapRun { embedding, selection, markov, metric })
}
