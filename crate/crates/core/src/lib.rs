//! Learning slow invariant manifolds with diffusion maps and integrating the
//! reduced dynamics they induce.
//!
//! The crate is organized along the pipeline:
//!
//! - [`sampling`]: admissible-polytope initial conditions, trajectory
//!   harvesting, subsampling and synthetic benchmark clouds.
//! - [`kinetics`]: mass-action reaction networks, analytic toy models and
//!   the adaptive Runge-Kutta integrator.
//! - [`dmap`]: the diffusion-map embedding and its diagnostics.
//! - [`extension`]: restriction and lifting operators (Nystrom, RBF,
//!   Kriging, Laplacian pyramids, geometric harmonics).
//! - [`reduced`]: reduced right-hand sides, tabulation, reduced
//!   integration and detailed-vs-reduced comparison.

pub mod cloud;
pub mod dmap;
pub mod error;
pub mod extension;
pub mod io;
pub mod kinetics;
pub mod linalg;
pub mod reduced;
pub mod sampling;

pub use cloud::{Labels, PointCloud, Provenance, ScaledMetric};
pub use error::{Error, Result};
