//! Detailed vector fields and their integration.

mod integrator;
mod mechanism;
mod models;

pub use integrator::{
    integrate, integrate_field, integrate_fixed, integrate_with, Halt, Integration, IntegratorOptions, Output,
};
pub use mechanism::{
    parse_mechanism, rates, Arrhenius, MechanismField, Reaction, ReactionNetwork, Species, GAS_CONSTANT,
    NEGATIVE_TOLERANCE,
};
pub use models::{builtin_model, toy_h2_network, DavisSkodje, Linear2d, TOY_H2_FRESH, TOY_H2_MECHANISM};

use crate::error::{Error, Result};

/// Autonomous right-hand side `y' = f(y)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<()>;

    fn names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("y{i}")).collect()
    }

    /// Distance-like deviation from a known slow manifold, for models that
    /// have one in closed form.
    fn slow_manifold_residual(&self, _y: &[f64]) -> Option<f64> {
        None
    }

    fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut dy = vec![0.0; self.dim()];
        self.eval(y, &mut dy)?;
        Ok(dy)
    }
}

/// Time samples of an integrated state, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<f64>,
    dim: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Trajectory {
    pub(crate) fn empty(dim: usize, rel_tol: f64, abs_tol: f64) -> Self {
        Self { times: Vec::new(), states: Vec::new(), dim, rel_tol, abs_tol }
    }

    /// Builds a trajectory from parts, checking monotone times and finite states.
    pub fn from_parts(times: Vec<f64>, states: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || states.len() != times.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} state values for {} times of dimension {dim}",
                states.len(),
                times.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("trajectory times must increase strictly"));
        }
        if let Some(k) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / dim, col: k % dim });
        }
        Ok(Self { times, states, dim, rel_tol: f64::NAN, abs_tol: f64::NAN })
    }

    pub(crate) fn push(&mut self, t: f64, y: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(y);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.states
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("empty trajectory")
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Piecewise-linear state at `t`, clamped to the recorded span.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        if t <= self.times[0] {
            return self.state(0).to_vec();
        }
        if t >= self.times[n - 1] {
            return self.state(n - 1).to_vec();
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.state(k - 1).iter().zip(self.state(k)).map(|(a, b)| a + w * (b - a)).collect()
    }
}

/// Integrates from `y0` until `|f|` (scaled by the state) drops below
/// `tolerance` or `t_max` is reached; returns the final state.
pub fn relax(field: &dyn VectorField, y0: &[f64], t_max: f64, tolerance: f64) -> Result<Vec<f64>> {
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut window: f64 = 1.0;
    while t < t_max {
        let span = window.min(t_max - t);
        let traj = integrate(field, &y, (0.0, span), 1e-11, 1e-14)?;
        y = traj.last_state().to_vec();
        t += span;
        let f = field.rhs(&y)?;
        let scale = y.iter().map(|v| v.abs()).fold(1e-12, f64::max);
        if f.iter().map(|v| v.abs()).fold(0.0, f64::max) < tolerance * scale {
            return Ok(y);
        }
        window *= 2.0;
    }
    Ok(y)
}
