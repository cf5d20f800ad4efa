//! Representation-formula solvers for PDE(Q, f) and the OU problem.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::covariance::{increment_covariance, ou_covariance_tol, GaussianIncrementLaw};
use super::grid::{Field, SpaceTimeGrid};
use super::path::TimePSDPath;
use super::quadrature::gauss_hermite;
use super::source::{source_pullback, Source};
use super::spectral::{build_nodes, Engine, FftGrid, Generator};
use super::transform::{push_to_ou, Interpolator};
use crate::error::{HypouError, Result};
use crate::linalg::{self, Matrix};
use crate::rng;
use crate::structure::OUSystem;

/// How the spatial Gaussian averages are computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Averaging {
    /// Exact Gaussian averaging of the grid function in Fourier space.
    Spectral,
    /// Tensor Gauss–Hermite rule in whitened coordinates.
    GaussHermite { nodes: usize },
    /// Monte Carlo with per-sample derived seeds; reports standard errors.
    MonteCarlo { n_paths: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub averaging: Averaging,
    /// Relative tolerance of the covariance quadrature.
    pub quad_tol: f64,
    /// Points per axis of the Lagrange interpolation used by push/pull.
    pub interp_order: usize,
    /// Largest time step of the Duhamel recursion and of the trapezoid rule used by the pointwise
    /// averagings (grid step if unset).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { averaging: Averaging::Spectral, quad_tol: 1e-12, interp_order: 6, max_step: None }
    }
}

impl SolverConfig {
    pub fn with_averaging(averaging: Averaging) -> Self {
        SolverConfig { averaging, ..Default::default() }
    }

    pub fn interpolator(&self) -> Result<Interpolator> {
        Interpolator::new(self.interp_order)
    }

    fn descriptor(&self) -> String {
        match self.averaging {
            Averaging::Spectral => "spectral".into(),
            Averaging::GaussHermite { nodes } => format!("gauss-hermite({nodes})"),
            Averaging::MonteCarlo { n_paths } => format!("monte-carlo({n_paths})"),
        }
    }
}

/// Displacement scale 4 * sqrt(lambda_max(cov)).
pub fn inflation(cov: &Matrix) -> f64 {
    4.0 * linalg::max_eigenvalue(cov).max(0.0).sqrt()
}

/// Checks that the grid box contains the source support inflated by `margin`.
pub fn check_source_coverage(grid: &SpaceTimeGrid, f: &dyn Source, margin: f64) -> Result<()> {
    match f.support_box(grid.horizon) {
        Some((lo, hi)) => grid.check_covers(&lo, &hi, margin, "source support"),
        None => Ok(()),
    }
}

fn check_inputs(grid: &SpaceTimeGrid, f: &dyn Source, n: usize) -> Result<()> {
    grid.validate()?;
    if grid.dim() != n || f.dim() != n {
        return Err(HypouError::DimensionMismatch(format!("grid dim {}, source dim {}, system dim {n}", grid.dim(), f.dim())));
    }
    Ok(())
}

/// v = PDE(Q, f): v(t, z) = int_0^t E f(s, z + I_{s,t}) ds with Cov I_{s,t} = 2 int_s^t Q.
pub fn solve_driftless(q: &TimePSDPath, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig, seed: u64) -> Result<Field> {
    check_inputs(grid, f, q.dim())?;
    let total = increment_covariance(q, 0.0, grid.horizon, cfg.quad_tol)?;
    check_source_coverage(grid, f, inflation(&total.covariance))?;
    match cfg.averaging {
        Averaging::Spectral => spectral_solve(Generator { diffusion: vec![q], jumps: vec![] }, f, grid, cfg, "driftless"),
        _ => {
            let nodes = build_nodes(grid, &f.time_breakpoints(grid.horizon), cfg.max_step);
            let times: Vec<f64> = nodes.iter().map(|n| n.t).collect();
            // cumulative 2 int_0^s Q at the nodes; Cov(s_i, t) = C(t) - C(s_i)
            let mut cum = vec![Matrix::zeros(q.dim(), q.dim())];
            for w in times.windows(2) {
                let inc = increment_covariance(q, w[0], w[1], cfg.quad_tol)?.covariance;
                cum.push(cum.last().unwrap() + inc);
            }
            let law = |i: usize, j: usize| -> Result<(Matrix, GaussianIncrementLaw)> {
                Ok((Matrix::identity(q.dim(), q.dim()), GaussianIncrementLaw::centered(linalg::symmetrize(&(&cum[j] - &cum[i])))?))
            };
            pointwise_solve(grid, f, &nodes, &law, cfg, seed, "driftless")
        }
    }
}

pub(crate) fn spectral_solve(generator: Generator<'_>, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig, label: &str) -> Result<Field> {
    let engine = Engine::new(grid, generator, f, cfg.max_step, cfg.quad_tol);
    let mut out = Field::zeros(grid.clone(), &format!("{label}/spectral"));
    let ns = grid.n_space();
    engine.run(|n, slice| {
        out.values[n * ns..(n + 1) * ns].copy_from_slice(slice);
        Ok(())
    })?;
    Ok(out)
}

/// u(t, z) = int_0^t E f(s, e^{A(t-s)} z + I^ou_{s,t}) ds, evaluated directly (no change of variables).
pub fn solve_ou(sys: &OUSystem, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig, seed: u64) -> Result<Field> {
    check_inputs(grid, f, sys.n())?;
    let total = ou_covariance_tol(sys, 0.0, grid.horizon, cfg.quad_tol)?;
    check_source_coverage(grid, f, inflation(&total.covariance))?;
    let nodes = build_nodes(grid, &f.time_breakpoints(grid.horizon), cfg.max_step);
    let a = sys.a().clone();
    let times: Vec<f64> = nodes.iter().map(|n| n.t).collect();
    let law = |i: usize, j: usize| -> Result<(Matrix, GaussianIncrementLaw)> {
        let lag = times[j] - times[i];
        Ok((linalg::expm(&a, lag), ou_covariance_tol(sys, 0.0, lag, cfg.quad_tol)?))
    };
    match cfg.averaging {
        Averaging::Spectral => spectral_ou_direct(grid, f, &nodes, &law, cfg),
        _ => pointwise_solve(grid, f, &nodes, &law, cfg, seed, "ou"),
    }
}

type LawFn<'a> = dyn Fn(usize, usize) -> Result<(Matrix, GaussianIncrementLaw)> + Sync + 'a;

/// Trapezoid contributions: (node index, left side?, weight) for the integral over [0, t_{end}].
fn trapezoid_terms(nodes: &[super::spectral::Node], end: usize) -> Vec<(usize, bool, f64)> {
    let mut terms: Vec<(usize, bool, f64)> = vec![];
    for i in 0..end {
        let dt = nodes[i + 1].t - nodes[i].t;
        terms.push((i, false, 0.5 * dt));
        terms.push((i + 1, nodes[i + 1].breakpoint, 0.5 * dt));
    }
    // merge equal (node, side) pairs so each expectation is computed once
    terms.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut merged: Vec<(usize, bool, f64)> = vec![];
    for t in terms {
        match merged.last_mut() {
            Some(m) if m.0 == t.0 && m.1 == t.1 => m.2 += t.2,
            _ => merged.push(t),
        }
    }
    merged
}

fn spectral_ou_direct(grid: &SpaceTimeGrid, f: &dyn Source, nodes: &[super::spectral::Node], law: &LawFn<'_>, cfg: &SolverConfig) -> Result<Field> {
    let fft = FftGrid::new(grid);
    let interp = cfg.interpolator()?;
    let ns = grid.n_space();
    let d = grid.dim();
    let zero = Complex64::new(0.0, 0.0);
    let mut real = vec![0.0; ns];
    // spectra at every node (and left limits at breakpoints)
    let mut spectra: Vec<(Vec<Complex64>, Option<Vec<Complex64>>)> = Vec::with_capacity(nodes.len());
    for nd in nodes {
        let mut s = vec![zero; ns];
        f.sample(nd.t, false, grid, &mut real);
        fft.forward_real(&real, &mut s);
        let left = if nd.breakpoint {
            let mut l = vec![zero; ns];
            f.sample(nd.t, true, grid, &mut real);
            fft.forward_real(&real, &mut l);
            Some(l)
        } else {
            None
        };
        spectra.push((s, left));
    }
    let mut out = Field::zeros(grid.clone(), "ou/spectral-direct");
    let mut buf = vec![zero; ns];
    let mut work = Vec::with_capacity(ns);
    let mut g = vec![0.0; ns];
    let mut z = vec![0.0; d];
    let mut y = vec![0.0; d];
    for (end, nd) in nodes.iter().enumerate() {
        let Some(n_out) = nd.output else { continue };
        if end == 0 {
            continue;
        }
        let acc = &mut out.values[n_out * ns..(n_out + 1) * ns];
        for (i, left, w) in trapezoid_terms(nodes, end) {
            let (mean_map, lw) = law(i, end)?;
            let cov = &lw.covariance;
            let spec = if left { spectra[i].1.as_ref().unwrap() } else { &spectra[i].0 };
            for (q, b) in buf.iter_mut().enumerate() {
                *b = spec[q] * (-0.5 * linalg::quad_form(cov, fft.k(q))).exp();
            }
            fft.inverse_real(&buf, &mut work, &mut g);
            for (p, a) in acc.iter_mut().enumerate() {
                grid.point(p, &mut z);
                linalg::mat_vec(&mean_map, &z, &mut y);
                if let Some(v) = interp.eval(&g, grid, &y) {
                    *a += w * v;
                }
            }
        }
    }
    Ok(out)
}

/// Pointwise representation formula: Gauss–Hermite or Monte Carlo averages at every node.
fn pointwise_solve(
    grid: &SpaceTimeGrid,
    f: &dyn Source,
    nodes: &[super::spectral::Node],
    law: &LawFn<'_>,
    cfg: &SolverConfig,
    seed: u64,
    label: &str,
) -> Result<Field> {
    let d = grid.dim();
    let ns = grid.n_space();
    let mut out = Field::zeros(grid.clone(), &format!("{label}/{}", cfg.descriptor()));
    out.provenance.seed = Some(seed);
    let (samples, weights): (Vec<Vec<f64>>, Vec<f64>) = match cfg.averaging {
        Averaging::GaussHermite { nodes: m } => {
            if m == 0 {
                return Err(HypouError::InvalidArgument("Gauss–Hermite needs at least one node".into()));
            }
            gauss_hermite_tensor(m, d)
        }
        Averaging::MonteCarlo { n_paths } => {
            if n_paths < 2 {
                return Err(HypouError::InvalidArgument("Monte Carlo needs at least two samples".into()));
            }
            let s = (0..n_paths)
                .map(|p| {
                    let mut r = rng::stream(seed, p as u64);
                    (0..d).map(|_| StandardNormal.sample(&mut r)).collect()
                })
                .collect();
            (s, vec![1.0 / n_paths as f64; n_paths])
        }
        Averaging::Spectral => unreachable!("spectral averaging is handled elsewhere"),
    };
    let is_mc = matches!(cfg.averaging, Averaging::MonteCarlo { .. });
    let mut std_err = if is_mc { Some(vec![0.0; out.values.len()]) } else { None };

    for (end, nd) in nodes.iter().enumerate() {
        let Some(n_out) = nd.output else { continue };
        if end == 0 {
            continue;
        }
        let t = nd.t;
        // (mean map, factor, weight, node, left) for each term
        let mut terms = vec![];
        for (i, left, w) in trapezoid_terms(nodes, end) {
            let (m, lw) = law(i, end)?;
            // GH integrates over the non-degenerate directions; MC uses the full factor.
            let fac = if is_mc { lw.factor.clone() } else { lw.whitened_directions(1e-12) };
            terms.push((m, fac, w, nodes[i].t, left));
        }
        let _ = t;
        let results: Vec<(f64, f64)> = (0..ns)
            .into_par_iter()
            .map(|p| {
                let mut z = vec![0.0; d];
                grid.point(p, &mut z);
                let mut y = vec![0.0; d];
                let mut mean = vec![0.0; d];
                if is_mc {
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for xi in &samples {
                        let mut val = 0.0;
                        for (m, fac, w, s, left) in &terms {
                            linalg::mat_vec(m, &z, &mut mean);
                            for r in 0..d {
                                y[r] = mean[r] + (0..fac.ncols()).map(|c| fac[(r, c)] * xi[c]).sum::<f64>();
                            }
                            val += w * if *left { f.eval_left(*s, &y) } else { f.eval(*s, &y) };
                        }
                        s1 += val;
                        s2 += val * val;
                    }
                    let n = samples.len() as f64;
                    let mu = s1 / n;
                    let var = ((s2 - n * mu * mu) / (n - 1.0)).max(0.0);
                    (mu, (var / n).sqrt())
                } else {
                    let mut val = 0.0;
                    for (m, fac, w, s, left) in &terms {
                        linalg::mat_vec(m, &z, &mut mean);
                        let r = fac.ncols();
                        if r == 0 {
                            val += w * if *left { f.eval_left(*s, &mean) } else { f.eval(*s, &mean) };
                            continue;
                        }
                        let (pts, wts) = tensor_view(&samples, &weights, r, d);
                        let mut e = 0.0;
                        for (xi, wx) in pts.iter().zip(&wts) {
                            for q in 0..d {
                                y[q] = mean[q] + (0..r).map(|c| fac[(q, c)] * xi[c]).sum::<f64>();
                            }
                            e += wx * if *left { f.eval_left(*s, &y) } else { f.eval(*s, &y) };
                        }
                        val += w * e;
                    }
                    (val, 0.0)
                }
            })
            .collect();
        for (p, (v, se)) in results.into_iter().enumerate() {
            out.values[n_out * ns + p] = v;
            if let Some(e) = std_err.as_mut() {
                e[n_out * ns + p] = se;
            }
        }
    }
    out.std_err = std_err;
    Ok(out)
}

/// Tensor Gauss–Hermite rule in dimension d (points listed with the first coordinate slowest).
fn gauss_hermite_tensor(m: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (x, w) = gauss_hermite(m);
    let mut pts = vec![vec![]];
    let mut wts = vec![1.0];
    for _ in 0..d {
        let mut np = vec![];
        let mut nw = vec![];
        for (p, pw) in pts.iter().zip(&wts) {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q = p.clone();
                q.push(*xi);
                np.push(q);
                nw.push(pw * wi);
            }
        }
        pts = np;
        wts = nw;
    }
    (pts, wts)
}

/// Lower-dimensional view of a full tensor rule: the sub-rule over the first r coordinates.
fn tensor_view(pts: &[Vec<f64>], wts: &[f64], r: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if r == d {
        return (pts.to_vec(), wts.to_vec());
    }
    let m = (pts.len() as f64).powf(1.0 / d as f64).round() as usize;
    let block = m.pow((d - r) as u32);
    let mut p = vec![];
    let mut w = vec![];
    for (i, chunk) in pts.chunks(block).enumerate() {
        p.push(chunk[0][..r].to_vec());
        w.push(wts[i * block..(i + 1) * block].iter().sum());
    }
    (p, w)
}

/// Grid for the driftless problem of the drift-removal pipeline: same spacing as `u_grid`,
/// covering both e^{tA} box(u_grid) and the inflated support of the pulled-back source.
pub fn driftless_grid_for(sys: &OUSystem, q_total: &TimePSDPath, f: &dyn Source, u_grid: &SpaceTimeGrid, cfg: &SolverConfig) -> Result<SpaceTimeGrid> {
    let d = sys.n();
    let h = u_grid.spacings();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut corner = vec![0.0; d];
    let mut img = vec![0.0; d];
    for n in 0..=u_grid.nt {
        let m = linalg::expm(sys.a(), u_grid.time(n));
        for mask in 0..(1usize << d) {
            for j in 0..d {
                corner[j] = if mask >> j & 1 == 1 { u_grid.hi[j] } else { u_grid.lo[j] };
            }
            linalg::mat_vec(&m, &corner, &mut img);
            for j in 0..d {
                lo[j] = lo[j].min(img[j]);
                hi[j] = hi[j].max(img[j]);
            }
        }
    }
    let stencil = cfg.interp_order as f64;
    for j in 0..d {
        lo[j] -= stencil * h[j];
        hi[j] += stencil * h[j];
    }
    let ft = source_pullback(f, sys.a(), u_grid.horizon);
    if let Some((slo, shi)) = ft.support_box(u_grid.horizon) {
        let delta = inflation(&increment_covariance(q_total, 0.0, u_grid.horizon, cfg.quad_tol)?.covariance);
        for j in 0..d {
            lo[j] = lo[j].min(slo[j] - delta - h[j]);
            hi[j] = hi[j].max(shi[j] + delta + h[j]);
        }
    }
    SpaceTimeGrid::aligned_fft(u_grid.horizon, u_grid.nt, &lo, &hi, &h)
}

/// e^{tA} B e^{tA^*} (+ e^{tA} S(t) e^{tA^*} when a perturbation is given).
pub fn driftless_diffusion(sys: &OUSystem, s: Option<&TimePSDPath>) -> Result<TimePSDPath> {
    let base = Arc::new(TimePSDPath::conjugated(Arc::new(TimePSDPath::constant(sys.diffusion())?), sys.a().clone())?);
    match s {
        Some(p) if !p.is_identically_zero() => {
            if p.dim() != sys.n() {
                return Err(HypouError::DimensionMismatch("perturbation size differs from the system".into()));
            }
            let pert = Arc::new(TimePSDPath::conjugated(Arc::new(p.clone()), sys.a().clone())?);
            TimePSDPath::sum(vec![base, pert])
        }
        _ => TimePSDPath::sum(vec![base]),
    }
}

/// Drift-removal pipeline: w = PDE(Q + Q', f~) on an auxiliary grid, then u(t, z) = w(t, e^{tA} z) on `u_grid`.
pub fn solve_ou_pipeline(sys: &OUSystem, s: Option<&TimePSDPath>, f: &dyn Source, u_grid: &SpaceTimeGrid, cfg: &SolverConfig, seed: u64) -> Result<Field> {
    check_inputs(u_grid, f, sys.n())?;
    let q = driftless_diffusion(sys, s)?;
    let w_grid = driftless_grid_for(sys, &q, f, u_grid, cfg)?;
    let ft = source_pullback(f, sys.a(), u_grid.horizon);
    let w = solve_driftless(&q, &ft, &w_grid, cfg, seed)?;
    let mut u = push_to_ou(&w, sys.a(), u_grid, cfg.interpolator()?)?;
    u.provenance.solver = format!("ou-pipeline/{}", cfg.descriptor());
    u.provenance.seed = Some(seed);
    Ok(u)
}
