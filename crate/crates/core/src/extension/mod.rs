//! Restriction (ambient to reduced) and lifting (reduced to ambient)
//! operators built from a training cloud and its diffusion embedding.
//!
//! Every scheme except Nystrom is an interpolation [`Model`] fitted either
//! once on all training pairs or, when a neighbor count is configured,
//! afresh for every query on its nearest training pairs.

mod gh;
mod kriging;
mod lp;
mod neighbors;
mod nystrom;
mod rbf;

pub use gh::{default_eps0, GeometricHarmonics};
pub use kriging::{basis_size, KrigingModel};
pub use lp::LaplacianPyramid;
pub use neighbors::{nearest_neighbors, nearest_squared_distance};
pub use nystrom::NystromRestriction;
pub use rbf::{RbfModel, RBF_CONDITION_LIMIT};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::cloud::PointCloud;
use crate::dmap::DiffusionEmbedding;
use crate::error::{Error, Result};

/// A differentiable map between raw coordinate spaces.
pub trait Mapping: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `output_dim x input_dim`.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
}

/// A fitted interpolant in the (scaled) coordinates it was trained on.
pub trait Model: Send + Sync {
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
}

/// Counters for the recoverable numerical events of fits and evaluations.
#[derive(Debug, Default)]
pub struct FitFlags {
    pub regularized: AtomicUsize,
    pub jittered: AtomicUsize,
    pub order_lowered: AtomicUsize,
    pub skipped_levels: AtomicUsize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitReport {
    pub regularized_fits: usize,
    pub jittered_fits: usize,
    pub order_lowered: usize,
    pub skipped_levels: usize,
}

impl FitFlags {
    pub fn report(&self) -> FitReport {
        FitReport {
            regularized_fits: self.regularized.load(Ordering::Relaxed),
            jittered_fits: self.jittered.load(Ordering::Relaxed),
            order_lowered: self.order_lowered.load(Ordering::Relaxed),
            skipped_levels: self.skipped_levels.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfConfig {
    #[serde(default = "default_rbf_p")]
    pub p: u32,
    pub nn: Option<usize>,
}

fn default_rbf_p() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigingConfig {
    #[serde(default = "default_kriging_order")]
    pub order: u8,
    pub theta: f64,
    /// `None` fits one global model.
    pub nn: Option<usize>,
}

fn default_kriging_order() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpConfig {
    pub sigma0: f64,
    pub max_level: usize,
    pub err: f64,
    pub nn: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhConfig {
    /// `None` takes the largest squared distance among the fitted nodes.
    pub eps0: Option<f64>,
    #[serde(default = "default_gh_delta")]
    pub delta: f64,
    pub err: f64,
    #[serde(default = "default_gh_steps")]
    pub max_steps: usize,
    pub nn: Option<usize>,
}

fn default_gh_delta() -> f64 {
    0.05
}

fn default_gh_steps() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum SchemeConfig {
    Nystrom,
    Rbf(RbfConfig),
    Kriging(KrigingConfig),
    Lp(LpConfig),
    Gh(GhConfig),
}

impl SchemeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeConfig::Nystrom => "nystrom",
            SchemeConfig::Rbf(_) => "rbf",
            SchemeConfig::Kriging(_) => "kriging",
            SchemeConfig::Lp(_) => "lp",
            SchemeConfig::Gh(_) => "gh",
        }
    }

    fn neighbors(&self) -> Option<usize> {
        match self {
            SchemeConfig::Nystrom => None,
            SchemeConfig::Rbf(c) => c.nn,
            SchemeConfig::Kriging(c) => c.nn,
            SchemeConfig::Lp(c) => c.nn,
            SchemeConfig::Gh(c) => c.nn,
        }
    }

    /// Checks parameters that do not depend on the training data.
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            SchemeConfig::Nystrom => {}
            SchemeConfig::Rbf(c) => {
                if c.p % 2 == 0 {
                    return Err(Error::param(format!("RBF exponent must be odd and positive, got {}", c.p)));
                }
                if c.nn.is_some_and(|k| k < 2) {
                    return Err(Error::param("RBF needs at least two neighbors"));
                }
            }
            SchemeConfig::Kriging(c) => {
                if c.order > 2 {
                    return Err(Error::param(format!("Kriging order must be 0, 1 or 2, got {}", c.order)));
                }
                positive(c.theta, "Kriging theta")?;
                let need = basis_size(c.order, input_dim);
                if let Some(k) = c.nn.filter(|&k| k < need) {
                    return Err(Error::param(format!(
                        "Kriging order {} in {input_dim} dimensions needs at least {need} neighbors, got {k}",
                        c.order
                    )));
                }
            }
            SchemeConfig::Lp(c) => {
                positive(c.sigma0, "LP sigma0")?;
                positive(c.err, "LP target error")?;
                if c.nn == Some(0) {
                    return Err(Error::param("LP neighbor count must be positive"));
                }
            }
            SchemeConfig::Gh(c) => {
                if let Some(e) = c.eps0 {
                    positive(e, "GH eps0")?;
                }
                if !(c.delta > 0.0 && c.delta < 1.0) {
                    return Err(Error::param(format!("GH cutoff must lie in (0, 1), got {}", c.delta)));
                }
                positive(c.err, "GH target error")?;
                if c.max_steps == 0 || c.nn == Some(0) {
                    return Err(Error::param("GH step budget and neighbor count must be positive"));
                }
            }
        }
        Ok(())
    }
}

fn fit_model(config: &SchemeConfig, x: &DMatrix<f64>, f: &DMatrix<f64>, flags: &Arc<FitFlags>) -> Result<Box<dyn Model>> {
    Ok(match config {
        SchemeConfig::Nystrom => return Err(Error::param("Nystrom is not an interpolation model")),
        SchemeConfig::Rbf(c) => Box::new(RbfModel::fit(x, f, c.p, flags)?),
        SchemeConfig::Kriging(c) => Box::new(KrigingModel::fit(x, f, c.order, c.theta, flags)?),
        SchemeConfig::Lp(c) => Box::new(lp::LpModel {
            pyramid: LaplacianPyramid::fit(x, f, c.sigma0, c.max_level, c.err)?,
            flags: Arc::clone(flags),
        }),
        SchemeConfig::Gh(c) => {
            let eps0 = c.eps0.unwrap_or_else(|| default_eps0(x));
            Box::new(GeometricHarmonics::fit(x, f, eps0, c.delta, c.err, c.max_steps)?)
        }
    })
}

/// An interpolation scheme over training pairs `(x_i, f_i)` with inputs
/// compared under the diagonal scaling `r`.
pub struct Extension {
    config: SchemeConfig,
    /// Scaled inputs, row-major.
    nodes: Vec<f64>,
    values: DMatrix<f64>,
    scale: Vec<f64>,
    global: Option<Box<dyn Model>>,
    flags: Arc<FitFlags>,
}

impl std::fmt::Debug for Extension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Extension")
            .field("config", &self.config)
            .field("nodes", &self.values.nrows())
            .field("scale", &self.scale)
            .finish()
    }
}

impl Extension {
    /// `inputs` is `M x a`, `values` `M x b`.
    pub fn fit(
        config: &SchemeConfig,
        inputs: &DMatrix<f64>,
        values: &DMatrix<f64>,
        scale: &[f64],
        flags: Arc<FitFlags>,
    ) -> Result<Self> {
        let (m, a) = inputs.shape();
        if values.nrows() != m || scale.len() != a {
            return Err(Error::DimensionMismatch(format!(
                "{m} inputs of dimension {a}, {} values, scale of length {}",
                values.nrows(),
                scale.len()
            )));
        }
        if m == 0 {
            return Err(Error::param("cannot fit an extension on an empty training set"));
        }
        config.validate(a)?;
        let mut nodes = Vec::with_capacity(m * a);
        for i in 0..m {
            for d in 0..a {
                nodes.push(inputs[(i, d)] * scale[d]);
            }
        }
        let global = match config.neighbors() {
            Some(k) if k < m => None,
            _ => {
                let x = DMatrix::from_row_slice(m, a, &nodes);
                Some(fit_model(config, &x, values, &flags)?)
            }
        };
        Ok(Self { config: config.clone(), nodes, values: values.clone(), scale: scale.to_vec(), global, flags })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn flags(&self) -> &FitFlags {
        &self.flags
    }

    fn scaled(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.scale.len() {
            return Err(Error::DimensionMismatch(format!("query of length {}, expected {}", x.len(), self.scale.len())));
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        Ok(x.iter().zip(&self.scale).map(|(v, r)| v * r).collect())
    }

    fn with_model<T>(&self, s: &[f64], f: impl FnOnce(&dyn Model) -> Result<T>) -> Result<T> {
        if let Some(model) = &self.global {
            return f(model.as_ref());
        }
        let a = self.scale.len();
        let k = self.config.neighbors().expect("local fits have a neighbor count");
        let idx = nearest_neighbors(&self.nodes, a, s, k);
        let x = DMatrix::from_fn(idx.len(), a, |r, d| self.nodes[idx[r] * a + d]);
        let v = self.values.select_rows(idx.iter());
        let model = fit_model(&self.config, &x, &v, &self.flags)?;
        f(model.as_ref())
    }
}

impl Mapping for Extension {
    fn input_dim(&self) -> usize {
        self.scale.len()
    }

    fn output_dim(&self) -> usize {
        self.values.ncols()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.scaled(x)?;
        self.with_model(&s, |m| m.eval(&s))
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.scaled(x)?;
        let mut jac = self.with_model(&s, |m| m.jacobian(&s))?;
        for (d, r) in self.scale.iter().enumerate() {
            jac.column_mut(d).scale_mut(*r);
        }
        Ok(jac)
    }
}

/// What built an operator pair, for provenance records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDescriptor {
    pub restriction: SchemeConfig,
    pub lifting: SchemeConfig,
    pub n_training: usize,
    pub ambient_dim: usize,
    pub reduced_dim: usize,
    /// SHA-256 over the training points and their embedded coordinates.
    pub training_checksum: String,
}

/// Restriction `u = psi(y)` and lifting `y = Theta(u)` trained on the same
/// cloud and embedding.
pub struct OperatorPair {
    restriction: Box<dyn Mapping>,
    lifting: Box<dyn Mapping>,
    descriptor: PairDescriptor,
    flags: Arc<FitFlags>,
}

impl std::fmt::Debug for OperatorPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorPair").field("descriptor", &self.descriptor).finish()
    }
}

impl OperatorPair {
    pub fn restrict(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.restriction.eval(y)
    }

    pub fn lift(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.lifting.eval(u)
    }

    /// `d psi / d y`, `m x n`.
    pub fn restriction_jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.restriction.jacobian(y)
    }

    /// `d Theta / d u`, `n x m`.
    pub fn lifting_jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.lifting.jacobian(u)
    }

    pub fn descriptor(&self) -> &PairDescriptor {
        &self.descriptor
    }

    pub fn fit_report(&self) -> FitReport {
        self.flags.report()
    }

    pub fn ambient_dim(&self) -> usize {
        self.descriptor.ambient_dim
    }

    pub fn reduced_dim(&self) -> usize {
        self.descriptor.reduced_dim
    }
}

fn training_checksum(cloud: &PointCloud, u: &DMatrix<f64>) -> String {
    let mut hasher = Sha256::new();
    for v in cloud.as_flat() {
        hasher.update(v.to_le_bytes());
    }
    for v in cloud.metric().diag() {
        hasher.update(v.to_le_bytes());
    }
    for i in 0..u.nrows() {
        for v in u.row(i).iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the restriction and lifting for one combination of schemes.
/// Training pairs are `(y_i, u_i)` with `u_i` the embedded coordinates.
/// Restriction inputs are compared under the cloud's metric, lifting
/// inputs under the plain Euclidean metric of the reduced space.
pub fn make_operator_pair(
    restriction: &SchemeConfig,
    lifting: &SchemeConfig,
    cloud: &PointCloud,
    embedding: &DiffusionEmbedding,
) -> Result<OperatorPair> {
    if matches!(lifting, SchemeConfig::Nystrom) {
        return Err(Error::param("Nystrom extends eigenvectors and cannot serve as a lifting"));
    }
    if cloud.len() != embedding.len() {
        return Err(Error::DimensionMismatch(format!(
            "cloud has {} points, embedding {}",
            cloud.len(),
            embedding.len()
        )));
    }
    if embedding.selected.is_empty() {
        return Err(Error::param("embedding selects no coordinates"));
    }
    let flags = Arc::new(FitFlags::default());
    let u = embedding.coordinates();
    let y = DMatrix::from_row_slice(cloud.len(), cloud.dim(), cloud.as_flat());
    let restriction_map: Box<dyn Mapping> = match restriction {
        SchemeConfig::Nystrom => Box::new(NystromRestriction::new(cloud, embedding)?),
        cfg => Box::new(Extension::fit(cfg, &y, &u, cloud.metric().diag(), Arc::clone(&flags))?),
    };
    let ones = vec![1.0; u.ncols()];
    let lifting_map = Box::new(Extension::fit(lifting, &u, &y, &ones, Arc::clone(&flags))?);
    let descriptor = PairDescriptor {
        restriction: restriction.clone(),
        lifting: lifting.clone(),
        n_training: cloud.len(),
        ambient_dim: cloud.dim(),
        reduced_dim: u.ncols(),
        training_checksum: training_checksum(cloud, &u),
    };
    Ok(OperatorPair { restriction: restriction_map, lifting: lifting_map, descriptor, flags })
}
