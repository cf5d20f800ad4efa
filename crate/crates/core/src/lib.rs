//! Solvers and diagnostics for degenerate Kolmogorov–Ornstein–Uhlenbeck Cauchy problems.
//!
//! * [`structure`]: Kalman condition, block structure, intrinsic scales.
//! * [`gaussian`]: representation-formula solvers, covariances, densities, drift removal.
//! * [`poisson`]: Poisson paths, jump-shifted sources and finite-difference perturbations.
//! * [`norms`]: weighted L^p, Hessian-block, anisotropic Sobolev and Hölder norms.
//! * [`harness`]: constant-estimation and stability experiments.
//! * [`config`], [`cli`]: JSON run configurations and the `hypou` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod norms;
pub mod poisson;
pub mod rng;
pub mod structure;

pub use error::{HypouError, Result};
