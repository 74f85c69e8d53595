//! Reduced dynamics on the learned manifold chart.
//!
//! With `y = Theta(u)` the lifting and `psi` the restriction, the reduced
//! right-hand side is either the chain rule `du/dt = (d psi / dy) f(y)` or
//! the least-squares projection `du/dt = (J^T J)^-1 J^T f(y)` with
//! `J = d Theta / du`. Either one can be evaluated directly or tabulated
//! on a grid and interpolated.

mod compare;
mod presets;
mod table;

pub use compare::{compare, reduced_deviation, ComparisonReport};
pub use presets::{method_preset, MethodPreset, PRESET_COUNT};
pub use table::{tabulate, Axis, GridSpec, ReducedTable, TableProvenance, TABLE_FORMAT_VERSION};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::OperatorPair;
use crate::kinetics::{integrate_with, Halt, Integration, IntegratorOptions, VectorField};

/// Lifting Jacobians worse conditioned than this cannot be projected on.
pub const PROJECTION_CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    ChainRule,
    Projection,
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" | "chain-rule" => Ok(Formulation::ChainRule),
            "projection" => Ok(Formulation::Projection),
            _ => Err(Error::Unknown { kind: "formulation", name: s.to_string() }),
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::ChainRule => "chain-rule",
            Formulation::Projection => "projection",
        })
    }
}

/// `du/dt = (d psi / dy)(y) f(y)` at `y = Theta(u)`.
pub fn chain_rule_rhs(u: &[f64], pair: &OperatorPair, field: &dyn VectorField) -> Result<Vec<f64>> {
    let y = pair.lift(u)?;
    let f = field.rhs(&y)?;
    let jac = pair.restriction_jacobian(&y)?;
    Ok((jac * nalgebra::DVector::from_vec(f)).iter().copied().collect())
}

/// Least-squares solution `v` of `J v = f`, refusing Jacobians whose
/// condition number exceeds [`PROJECTION_CONDITION_LIMIT`].
pub fn tangent_projection(jac: &DMatrix<f64>, f: &[f64]) -> Result<Vec<f64>> {
    let (n, m) = jac.shape();
    if f.len() != n {
        return Err(Error::DimensionMismatch(format!("Jacobian has {n} rows, vector {} entries", f.len())));
    }
    if m > n {
        return Err(Error::RankDeficientJacobian { condition: f64::INFINITY, node: None });
    }
    let svd = jac.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= PROJECTION_CONDITION_LIMIT) {
        return Err(Error::RankDeficientJacobian { condition, node: None });
    }
    let u = svd.u.as_ref().expect("left vectors requested");
    let vt = svd.v_t.as_ref().expect("right vectors requested");
    let coeffs = u.transpose() * nalgebra::DVector::from_column_slice(f);
    let scaled = coeffs.component_div(&svd.singular_values);
    Ok((vt.transpose() * scaled).iter().copied().collect())
}

/// `du/dt = (J^T J)^-1 J^T f(y)` with `J = d Theta / du` at `u`.
pub fn projection_rhs(u: &[f64], pair: &OperatorPair, field: &dyn VectorField) -> Result<Vec<f64>> {
    let y = pair.lift(u)?;
    let f = field.rhs(&y)?;
    let jac = pair.lifting_jacobian(u)?;
    tangent_projection(&jac, &f)
}

/// A reduced right-hand side `du/dt = g(u)`.
pub trait ReducedRhs: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>>;
}

/// Reduced right-hand side evaluated through the operator pair at every call.
pub struct DirectRhs<'a> {
    pub pair: &'a OperatorPair,
    pub field: &'a dyn VectorField,
    pub formulation: Formulation,
}

impl ReducedRhs for DirectRhs<'_> {
    fn dim(&self) -> usize {
        self.pair.reduced_dim()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self.formulation {
            Formulation::ChainRule => chain_rule_rhs(u, self.pair, self.field),
            Formulation::Projection => projection_rhs(u, self.pair, self.field),
        }
    }
}

impl ReducedRhs for ReducedTable {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.interpolate(u)
    }
}

/// Integrates the reduced system from `u0`. Leaving the table domain, or
/// any other failure of the right-hand side, ends the run early with the
/// partial trajectory and the reason in [`Integration::stopped`].
pub fn simulate_reduced(
    source: &dyn ReducedRhs,
    u0: &[f64],
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Integration> {
    if u0.len() != source.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial condition of length {}, reduced dimension {}",
            u0.len(),
            source.dim()
        )));
    }
    // the start itself must be admissible
    source.eval(u0)?;
    let rhs = |_t: f64, u: &[f64], du: &mut [f64]| match source.eval(u) {
        Ok(v) => {
            du.copy_from_slice(&v);
            Ok(())
        }
        Err(Error::NegativeConcentration { .. }) => Err(Halt::Reject),
        Err(e) => Err(Halt::Stop(e)),
    };
    integrate_with(rhs, u0, t_span, opts)
}
