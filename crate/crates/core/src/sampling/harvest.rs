//! Random initial conditions, trajectory harvesting and subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Provenance, ScaledMetric};
use crate::error::{Error, Result};
use crate::kinetics::{integrate_field, IntegratorOptions, VectorField};

/// Convex weights `w_i = (-ln z_i)^p / sum_j (-ln z_j)^p`, `z_i` uniform.
pub fn sample_weights<R: Rng>(v: usize, p: f64, rng: &mut R) -> Result<Vec<f64>> {
    if v == 0 {
        return Err(Error::param("need at least one vertex"));
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::param(format!("weight exponent must lie in [1, 2], got {p}")));
    }
    let raw: Vec<f64> = (0..v)
        .map(|_| loop {
            let z: f64 = rng.gen();
            if z > 0.0 {
                break (-z.ln()).powf(p);
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        // every draw hit z = 1 exactly; fall back to the barycenter
        return Ok(vec![1.0 / v as f64; v]);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `y = sum_i w_i vertex_i`.
pub fn random_initial_condition(vertices: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if vertices.len() != weights.len() || vertices.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} vertices, {} weights", vertices.len(), weights.len())));
    }
    let n = vertices[0].len();
    let mut y = vec![0.0; n];
    for (v, w) in vertices.iter().zip(weights) {
        for (a, b) in y.iter_mut().zip(v) {
            *a += w * b;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingPlan {
    /// Weight exponent in `[1, 2]`.
    pub p: f64,
    /// Vertices (nearest the mixing-line midpoint) used as convex generators.
    pub vertex_subset_size: Option<usize>,
    /// Transient skipped before samples are recorded.
    pub tau_f: f64,
    pub t_end: f64,
    /// Minimum metric distance between subsampled points.
    pub d_min: f64,
    /// Within-trajectory spacing; `d_min / 2` when absent.
    pub retention: Option<f64>,
    pub n_trajectories: usize,
    pub seed: u64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            p: 1.5,
            vertex_subset_size: None,
            tau_f: 0.0,
            t_end: 1.0,
            d_min: 0.0,
            retention: None,
            n_trajectories: 100,
            seed: 0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
        }
    }
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        if !(1.0..=2.0).contains(&self.p) {
            return Err(Error::param(format!("p must lie in [1, 2], got {}", self.p)));
        }
        if !(self.tau_f >= 0.0 && self.tau_f < self.t_end && self.t_end.is_finite()) {
            return Err(Error::param(format!("need 0 <= tau_f < t_end, got {} and {}", self.tau_f, self.t_end)));
        }
        if !(self.d_min >= 0.0) {
            return Err(Error::param("d_min must be nonnegative"));
        }
        if matches!(self.retention, Some(r) if !(r >= 0.0)) {
            return Err(Error::param("retention spacing must be nonnegative"));
        }
        if self.vertex_subset_size == Some(0) {
            return Err(Error::param("vertex subset must not be empty"));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::param("integrator tolerances must be positive"));
        }
        Ok(())
    }

    pub fn retention_spacing(&self) -> f64 {
        self.retention.unwrap_or(0.5 * self.d_min)
    }

    /// Independent generator for trajectory `index`.
    pub fn trajectory_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// Integrates `n_trajectories` random convex combinations of `vertices` up
/// to `t_end` and keeps integrator steps at `t >= tau_f` that lie at least
/// the retention spacing (under `metric`) from the previous kept state.
///
/// Trajectories whose integration fails are dropped with a warning. Small
/// negative coordinates (round-off below the nonnegative orthant) are
/// clamped to zero.
pub fn harvest(
    field: &dyn VectorField,
    vertices: &[Vec<f64>],
    plan: &SamplingPlan,
    n_trajectories: usize,
    metric: &ScaledMetric,
) -> Result<PointCloud> {
    plan.validate()?;
    let n = field.dim();
    if vertices.is_empty() || vertices.iter().any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch(format!("vertices must be non-empty with length {n}")));
    }
    if metric.dim() != n {
        return Err(Error::DimensionMismatch("metric dimension differs from field".into()));
    }
    let spacing = plan.retention_spacing();
    let opts = IntegratorOptions::with_tolerances(plan.rel_tol, plan.abs_tol);
    let runs: Vec<Option<(Vec<f64>, Vec<Provenance>)>> = (0..n_trajectories)
        .into_par_iter()
        .map(|k| {
            let mut rng = plan.trajectory_rng(k);
            let w = sample_weights(vertices.len(), plan.p, &mut rng).ok()?;
            let y0 = random_initial_condition(vertices, &w).ok()?;
            let traj = match integrate_field(field, &y0, (0.0, plan.t_end), &opts) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("trajectory {k} dropped: {e}");
                    return None;
                }
            };
            let mut pts = Vec::new();
            let mut prov = Vec::new();
            let mut last: Option<Vec<f64>> = None;
            for (&t, s) in traj.times().iter().zip(traj.states()) {
                if t < plan.tau_f {
                    continue;
                }
                let s: Vec<f64> = s.iter().map(|&v| if v < 0.0 && v > -1e-6 { 0.0 } else { v }).collect();
                if let Some(l) = &last {
                    if metric.distance(l, &s) < spacing {
                        continue;
                    }
                }
                pts.extend_from_slice(&s);
                prov.push(Provenance { trajectory: k, time: t });
                last = Some(s);
            }
            Some((pts, prov))
        })
        .collect();
    let mut points = Vec::new();
    let mut provenance = Vec::new();
    for (p, v) in runs.into_iter().flatten() {
        points.extend(p);
        provenance.extend(v);
    }
    let cloud = PointCloud::with_metric(points, n, metric.clone())?
        .with_names(field.names())?
        .with_provenance(provenance)?;
    Ok(cloud)
}

/// Greedy pass in input order: a point is kept when it lies at least
/// `d_min` (cloud metric) from every point kept before it.
pub fn subsample(cloud: &PointCloud, d_min: f64) -> Result<PointCloud> {
    if !(d_min >= 0.0) {
        return Err(Error::param(format!("d_min must be nonnegative, got {d_min}")));
    }
    if d_min == 0.0 {
        return Ok(cloud.clone());
    }
    let scaled = cloud.scaled_points();
    let n = cloud.dim();
    let row = |i: usize| &scaled[i * n..(i + 1) * n];
    let d2 = d_min * d_min;
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..cloud.len() {
        let far = kept.iter().all(|&k| crate::linalg::squared_distance(row(i), row(k)) >= d2);
        if far {
            kept.push(i);
        }
    }
    Ok(cloud.select(&kept))
}
