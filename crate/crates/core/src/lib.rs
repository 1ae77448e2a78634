//! Country-level emissions forecasting built on the Kaya identity.
//!
//! Seven indicators (population, GDP per capita, energy intensity, carbon
//! intensity and the fossil/nuclear/renewable electricity shares) are
//! forecast jointly by a neural ODE whose right-hand side is a small MLP,
//! integrated with fixed-step RK4 and trained by differentiating through the
//! unrolled solver. A VAR(p) model serves as the statistical baseline, and
//! the [`scenario`] module supports pinned-indicator and hypothetical
//! observation what-if runs.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod ode;
pub mod scenario;
pub mod service;
pub mod train;
pub mod var;

pub use error::{Error, Result};
