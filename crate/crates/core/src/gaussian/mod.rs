//! Gaussian solvers for PDE(Q, f) and the OU Cauchy problem.

pub mod covariance;
pub mod grid;
pub mod path;
pub mod quadrature;
pub mod residual;
pub mod solver;
pub mod source;
pub(crate) mod spectral;
pub mod transform;

pub use covariance::{
    density_envelope_exponent, fit_envelope_constant, increment_covariance, matrix_exp, ou_covariance, ou_density, ou_density_d2x,
    GaussianIncrementLaw, OuDensity,
};
pub use grid::{BoxRegion, Field, Provenance, SpaceTimeGrid};
pub use path::{PathSpec, TimePSDPath};
pub use residual::residual;
pub use solver::{driftless_diffusion, driftless_grid_for, solve_driftless, solve_ou, solve_ou_pipeline, Averaging, SolverConfig};
pub use source::{source_pullback, source_pushforward, FnSource, LinearWarp, Source, SourceSpec, TimeProfile};
pub use transform::{pull_to_driftless, push_to_ou, Interpolator};
