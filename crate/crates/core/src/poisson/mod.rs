//! Poisson jump paths and the finite-difference route to second-order perturbations.

pub mod fd;
pub mod process;
pub mod shift;

pub use fd::{
    active_directions, central_term, fd_time_step, one_sided_term, perturbed_solve_iterative, solve_fd_one, solve_fd_two, solve_fd_two_all, ConvergenceRow, ConvergenceTable, IterativeResult, LadderMode,
};
pub use process::{
    ensemble_path, expectation_identity_check, inter_arrival_sample, ks_critical_5pct, ks_exponential, poisson_integral, poisson_integral_check, sample_poisson_path, ExpectationReport,
    IntegralMeanReport, PoissonPath, ProcessSpec,
};
pub use shift::{averaged_shifted_at, averaged_shifted_solve, shifted_solve, JumpDrivenShift, ShiftedSource, MC_JUMP_BUDGET};
