//! Deterministic finite-difference-perturbed problems at lambda = eps^-2 and the eps ladder.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};
use crate::gaussian::covariance::increment_covariance;
use crate::gaussian::grid::{Field, SpaceTimeGrid};
use crate::gaussian::path::TimePSDPath;
use crate::gaussian::solver::{inflation, solve_driftless, spectral_solve, SolverConfig};
use crate::gaussian::source::Source;
use crate::gaussian::spectral::{default_step, Generator, JumpKind, JumpTerm};
use crate::linalg;

/// Largest admissible lambda * dt.
pub const SPLIT_LIMIT: f64 = 0.5;

fn check_eps(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(HypouError::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(1.0 / (epsilon * epsilon))
}

/// Time step for a jump term of intensity lambda: the user's `max_step` is checked against the
/// stability guard, otherwise the default step capped at 0.5 / lambda is used.
pub fn fd_time_step(cfg: &SolverConfig, lambda: f64, grid: &SpaceTimeGrid) -> Result<f64> {
    match cfg.max_step {
        Some(h) => {
            let r = lambda * h.min(grid.dt());
            if r > SPLIT_LIMIT {
                return Err(HypouError::SplitStep(r));
            }
            Ok(h.min(grid.dt()))
        }
        None => Ok(default_step(grid).min(SPLIT_LIMIT / lambda)),
    }
}

/// Componentwise range of l(t) = sqrt(Q'(t)) e_k over [0, T].
fn direction_range(qprime: &TimePSDPath, k: usize, horizon: f64) -> (Vec<f64>, Vec<f64>) {
    let d = qprime.dim();
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut ts: Vec<f64> = (0..=128).map(|i| horizon * i as f64 / 128.0).collect();
    ts.extend(qprime.kinks(horizon));
    for t in ts {
        let r = linalg::psd_sqrt(&qprime.evaluate(t));
        for i in 0..d {
            lo[i] = f64::min(lo[i], r[(i, k)]);
            hi[i] = f64::max(hi[i], r[(i, k)]);
        }
    }
    (lo, hi)
}

/// Checks the grid against the source support, the Gaussian spread of Q and the drift of the
/// jump terms (one-sided terms displace mass along -l only).
pub(crate) fn check_fd_coverage(q: &TimePSDPath, qprime: &TimePSDPath, f: &dyn Source, epsilon: f64, k: usize, kind: JumpKind, grid: &SpaceTimeGrid, cfg: &SolverConfig) -> Result<()> {
    check_fd_coverage_dirs(q, qprime, f, epsilon, &[k], kind, grid, cfg)
}

fn check_fd_coverage_dirs(q: &TimePSDPath, qprime: &TimePSDPath, f: &dyn Source, epsilon: f64, dirs: &[usize], kind: JumpKind, grid: &SpaceTimeGrid, cfg: &SolverConfig) -> Result<()> {
    match fd_support(q, qprime, f, epsilon, dirs, kind, grid.horizon, cfg)? {
        Some((lo, hi, margin)) => grid.check_covers(&lo, &hi, margin, "finite-difference support"),
        None => Ok(()),
    }
}

/// Box the jump scheme can reach from the source support, and the Gaussian margin around it.
fn fd_support(q: &TimePSDPath, qprime: &TimePSDPath, f: &dyn Source, epsilon: f64, dirs: &[usize], kind: JumpKind, horizon: f64, cfg: &SolverConfig) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>> {
    let Some((mut lo, mut hi)) = f.support_box(horizon) else {
        return Ok(None);
    };
    let lt = horizon / (epsilon * epsilon);
    for &k in dirs {
        let (llo, lhi) = direction_range(qprime, k, horizon);
        match kind {
            JumpKind::OneSided => {
                let n = lt + 4.0 * lt.sqrt() + 1.0;
                for i in 0..lo.len() {
                    lo[i] -= epsilon * n * lhi[i];
                    hi[i] -= epsilon * n * llo[i];
                }
            }
            JumpKind::Central => {
                let n = 4.0 * (2.0 * lt).sqrt() + 1.0;
                for i in 0..lo.len() {
                    let m = epsilon * n * f64::max(lhi[i], -llo[i]);
                    lo[i] -= m;
                    hi[i] += m;
                }
            }
        }
    }
    let total = increment_covariance(q, 0.0, horizon, cfg.quad_tol)?;
    Ok(Some((lo, hi, inflation(&total.covariance))))
}

/// Smallest box (margin included) that passes the coverage check of the simultaneous ladder.
pub(crate) fn ladder_support(q: &TimePSDPath, qprime: &TimePSDPath, f: &dyn Source, eps_ladder: &[f64], horizon: f64, cfg: &SolverConfig) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let dirs = active_directions(qprime, horizon);
    let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
    for &eps in eps_ladder {
        let Some((lo, hi, m)) = fd_support(q, qprime, f, eps, &dirs, JumpKind::Central, horizon, cfg)? else {
            return Ok(None);
        };
        let (lo, hi): (Vec<f64>, Vec<f64>) = (lo.iter().map(|v| v - m).collect(), hi.iter().map(|v| v + m).collect());
        acc = Some(match acc {
            None => (lo, hi),
            Some((a, b)) => (a.iter().zip(&lo).map(|(x, y)| x.min(*y)).collect(), b.iter().zip(&hi).map(|(x, y)| x.max(*y)).collect()),
        });
    }
    Ok(acc)
}

fn check_dims(q: &TimePSDPath, qprime: &TimePSDPath, f: &dyn Source, grid: &SpaceTimeGrid, dirs: &[usize]) -> Result<()> {
    grid.validate()?;
    let d = grid.dim();
    if q.dim() != d || qprime.dim() != d || f.dim() != d {
        return Err(HypouError::DimensionMismatch(format!("grid {d}, Q {}, Q' {}, source {}", q.dim(), qprime.dim(), f.dim())));
    }
    if let Some(&k) = dirs.iter().find(|&&k| k >= d) {
        return Err(HypouError::InvalidArgument(format!("direction {k} out of range for dimension {d}")));
    }
    Ok(())
}

fn fd_solve(q: &TimePSDPath, qprime: &TimePSDPath, epsilon: f64, dirs: &[usize], kind: JumpKind, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig, label: &str) -> Result<Field> {
    check_dims(q, qprime, f, grid, dirs)?;
    let lambda = check_eps(epsilon)?;
    if qprime.is_identically_zero() || dirs.is_empty() {
        let mut out = solve_driftless(q, f, grid, cfg, 0)?;
        out.provenance.solver = label.into();
        return Ok(out);
    }
    let step = fd_time_step(cfg, lambda, grid)?;
    check_fd_coverage_dirs(q, qprime, f, epsilon, dirs, kind, grid, cfg)?;
    let jumps = dirs.iter().map(|&direction| JumpTerm { kind, epsilon, qprime, direction }).collect();
    let cfg = SolverConfig { max_step: Some(step), ..cfg.clone() };
    spectral_solve(Generator { diffusion: vec![q], jumps }, f, grid, &cfg, label)
}

/// dw = Tr(Q D^2 w) + lambda (w(z + eps l) - w(z)) + f, lambda = eps^-2, l(t) = sqrt(Q'(t)) e_k.
pub fn solve_fd_one(q: &TimePSDPath, qprime: &TimePSDPath, epsilon: f64, k: usize, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig) -> Result<Field> {
    fd_solve(q, qprime, epsilon, &[k], JumpKind::OneSided, f, grid, cfg, "fd-one")
}

/// dw = Tr(Q D^2 w) + eps^-2 (w(z + eps l) - 2 w(z) + w(z - eps l)) + f.
pub fn solve_fd_two(q: &TimePSDPath, qprime: &TimePSDPath, epsilon: f64, k: usize, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig) -> Result<Field> {
    fd_solve(q, qprime, epsilon, &[k], JumpKind::Central, f, grid, cfg, "fd-two")
}

/// Central difference terms in every listed direction at once.
pub fn solve_fd_two_all(q: &TimePSDPath, qprime: &TimePSDPath, epsilon: f64, dirs: &[usize], f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig) -> Result<Field> {
    fd_solve(q, qprime, epsilon, dirs, JumpKind::Central, f, grid, cfg, "fd-two")
}

/// Directions k with l(t) = sqrt(Q'(t)) e_k not identically zero.
pub fn active_directions(qprime: &TimePSDPath, horizon: f64) -> Vec<usize> {
    (0..qprime.dim())
        .filter(|&k| {
            let (lo, hi) = direction_range(qprime, k, horizon);
            lo.iter().chain(&hi).any(|v| v.abs() > 1e-14)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderMode {
    /// All directional difference terms active together.
    #[default]
    Simultaneous,
    /// One direction at a time as a difference term, the others kept as exact diffusion;
    /// the reported error is the worst over directions.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub sup_error: f64,
    pub l2_error: f64,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// sup |w_direct|, for relative errors.
    pub reference_sup: f64,
}

impl ConvergenceTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epsilon,sup_error,l2_error,runtime_s")?;
        for r in &self.rows {
            writeln!(w, "{},{:.10e},{:.10e},{:.3}", r.epsilon, r.sup_error, r.l2_error, r.runtime_s)?;
        }
        Ok(())
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error)
    }

    /// Errors below this are treated as exact (Q' = 0 and similar).
    fn negligible(&self) -> bool {
        self.rows.iter().all(|r| r.sup_error <= 1e-12 * self.reference_sup.max(1e-300))
    }

    pub fn check_monotone(&self) -> Result<()> {
        if self.negligible() || self.is_strictly_decreasing() {
            return Ok(());
        }
        let errs: Vec<String> = self.rows.iter().map(|r| format!("{:.3e}", r.sup_error)).collect();
        Err(HypouError::NonmonotoneConvergence(errs.join(", ")))
    }

    /// Least-squares slope of log(sup_error) against log(epsilon).
    pub fn slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.rows.iter().filter(|r| r.sup_error > 0.0).map(|r| (r.epsilon.ln(), r.sup_error.ln())).collect();
        if pts.len() < 2 {
            return f64::NAN;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    }

    pub fn final_relative_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.sup_error / self.reference_sup)
    }
}

/// Discrete space-time L2 distance.
fn l2_distance(a: &Field, b: &Field) -> f64 {
    let g = &a.grid;
    let cell: f64 = g.spacings().iter().product::<f64>() * g.dt();
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    (s * cell).sqrt()
}

pub struct IterativeResult {
    /// Field at the smallest epsilon.
    pub field: Field,
    pub table: ConvergenceTable,
    /// PDE(Q + Q', f).
    pub direct: Field,
}

/// Runs the eps ladder and compares each entry with w_direct = PDE(Q + Q', f).
pub fn perturbed_solve_iterative(q: &Arc<TimePSDPath>, qprime: &Arc<TimePSDPath>, f: &dyn Source, grid: &SpaceTimeGrid, eps_ladder: &[f64], mode: LadderMode, cfg: &SolverConfig) -> Result<IterativeResult> {
    if eps_ladder.is_empty() || eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HypouError::InvalidArgument("eps ladder must be non-empty and strictly decreasing".into()));
    }
    let total = TimePSDPath::sum(vec![q.clone(), qprime.clone()])?;
    // the reference uses the finest step of the ladder so that time stepping does not set a floor
    let finest = eps_ladder[eps_ladder.len() - 1];
    let ref_cfg = SolverConfig { max_step: Some(fd_time_step(cfg, 1.0 / (finest * finest), grid)?), ..cfg.clone() };
    let direct = solve_driftless(&total, f, grid, &ref_cfg, 0)?;
    let dirs = active_directions(qprime, grid.horizon);

    let entries: Vec<(Field, ConvergenceRow)> = eps_ladder
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let fields: Vec<Field> = match mode {
                LadderMode::Simultaneous => vec![solve_fd_two_all(q, qprime, eps, &dirs, f, grid, cfg)?],
                LadderMode::Sequential => dirs
                    .iter()
                    .map(|&k| {
                        let others: Vec<usize> = dirs.iter().copied().filter(|&j| j != k).collect();
                        let rest = TimePSDPath::directional_part(qprime.clone(), others)?;
                        let diff = TimePSDPath::sum(vec![q.clone(), Arc::new(rest)])?;
                        solve_fd_two(&diff, qprime, eps, k, f, grid, cfg)
                    })
                    .collect::<Result<_>>()?,
            };
            let fields = if fields.is_empty() { vec![solve_driftless(q, f, grid, cfg, 0)?] } else { fields };
            let sup_error = fields.iter().map(|w| w.max_abs_diff(&direct)).fold(0.0, f64::max);
            let l2_error = fields.iter().map(|w| l2_distance(w, &direct)).fold(0.0, f64::max);
            let runtime_s = start.elapsed().as_secs_f64();
            Ok((fields.into_iter().last().unwrap(), ConvergenceRow { epsilon: eps, sup_error, l2_error, runtime_s }))
        })
        .collect::<Result<_>>()?;
    let rows = entries.iter().map(|e| e.1.clone()).collect();
    let table = ConvergenceTable { rows, reference_sup: direct.sup_abs() };
    let field = entries.into_iter().last().unwrap().0;
    Ok(IterativeResult { field, table, direct })
}

/// lambda (phi(z + eps l) - phi(z)) with lambda = eps^-2.
pub fn one_sided_term(phi: impl Fn(&[f64]) -> f64, z: &[f64], l: &[f64], epsilon: f64) -> f64 {
    let y: Vec<f64> = z.iter().zip(l).map(|(a, b)| a + epsilon * b).collect();
    (phi(&y) - phi(z)) / (epsilon * epsilon)
}

/// eps^-2 (phi(z + eps l) - 2 phi(z) + phi(z - eps l)).
pub fn central_term(phi: impl Fn(&[f64]) -> f64, z: &[f64], l: &[f64], epsilon: f64) -> f64 {
    let p: Vec<f64> = z.iter().zip(l).map(|(a, b)| a + epsilon * b).collect();
    let m: Vec<f64> = z.iter().zip(l).map(|(a, b)| a - epsilon * b).collect();
    (phi(&p) - 2.0 * phi(z) + phi(&m)) / (epsilon * epsilon)
}
