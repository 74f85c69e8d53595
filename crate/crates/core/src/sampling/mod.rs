//! Training data: admissible-polytope initial conditions, trajectory
//! harvesting, subsampling and synthetic benchmark clouds.

mod harvest;
mod polytope;
mod synthetic;

pub use harvest::{harvest, random_initial_condition, sample_weights, subsample, SamplingPlan};
pub use polytope::{box_vertices, enumerate_vertices, select_vertex_subset, Polytope, MAX_ENUMERATION_DIM};
pub use synthetic::{synthetic_cloud, SyntheticKind, SyntheticParams, CYLINDER_ARC, CYLINDER_LENGTH};
