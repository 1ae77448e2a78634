//! Dynamics network and fixed-step RK4 integration.

mod mlp;
mod solver;

pub use mlp::{mlp_forward, one_hot, Layer, MlpParams, BASE_INPUTS, PARAMS_FORMAT_VERSION};
pub(crate) use solver::check_grid;
pub use solver::{integrate, integrate_with, rk4_step, share_project, Trajectory, DEFAULT_SUBSTEPS_PER_YEAR};
