//! Jump-driven shifts X_t, shifted sources f(t, z - eps X_t) and their Monte Carlo averages.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::process::{ensemble_path, PoissonPath};
use crate::error::{HypouError, Result};
use crate::gaussian::grid::{Field, SpaceTimeGrid};
use crate::gaussian::path::TimePSDPath;
use crate::gaussian::solver::{solve_driftless, SolverConfig};
use crate::gaussian::source::{clean_breakpoints, Source};
use crate::gaussian::spectral::{phi12, Engine, Generator, JumpKind};
use crate::gaussian::transform::Interpolator;
use crate::linalg;

/// Total expected jumps allowed in one ensemble.
pub const MC_JUMP_BUDGET: f64 = 2e8;

/// X_t = sum_{sigma_j <= t} l(sigma_j) with l(t) = sqrt(Q'(t)) e_k.
#[derive(Clone, Debug)]
pub struct JumpDrivenShift {
    pub path: PoissonPath,
    pub epsilon: f64,
    pub direction: usize,
    /// (sigma_j, X_{sigma_j}) after each jump.
    states: Vec<(f64, Vec<f64>)>,
    dim: usize,
}

impl JumpDrivenShift {
    pub fn new(path: PoissonPath, qprime: &TimePSDPath, direction: usize, epsilon: f64) -> Result<Self> {
        let dim = qprime.dim();
        if direction >= dim {
            return Err(HypouError::InvalidArgument(format!("direction {direction} out of range for dimension {dim}")));
        }
        if !(epsilon >= 0.0) {
            return Err(HypouError::InvalidArgument("epsilon must be non-negative".into()));
        }
        let mut x = vec![0.0; dim];
        let mut states = vec![];
        for &s in &path.jump_times {
            let r = linalg::psd_sqrt(&qprime.evaluate(s));
            for i in 0..dim {
                x[i] += r[(i, direction)];
            }
            states.push((s, x.clone()));
        }
        Ok(JumpDrivenShift { path, epsilon, direction, states, dim })
    }

    /// X_t (right-continuous).
    pub fn x(&self, t: f64) -> Vec<f64> {
        let j = self.states.partition_point(|(s, _)| *s <= t);
        if j == 0 { vec![0.0; self.dim] } else { self.states[j - 1].1.clone() }
    }

    /// X_{t-}.
    pub fn x_left(&self, t: f64) -> Vec<f64> {
        let j = self.states.partition_point(|(s, _)| *s < t);
        if j == 0 { vec![0.0; self.dim] } else { self.states[j - 1].1.clone() }
    }

    /// Componentwise range of eps X over the path (including X = 0).
    pub fn displacement_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![0.0; self.dim];
        let mut hi = vec![0.0; self.dim];
        for (_, x) in &self.states {
            for i in 0..self.dim {
                lo[i] = f64::min(lo[i], self.epsilon * x[i]);
                hi[i] = f64::max(hi[i], self.epsilon * x[i]);
            }
        }
        (lo, hi)
    }
}

/// f_eps(t, z) = f(t, z - eps X_t).
pub struct ShiftedSource<'a, S: Source + ?Sized> {
    pub inner: &'a S,
    pub shift: &'a JumpDrivenShift,
}

impl<S: Source + ?Sized> ShiftedSource<'_, S> {
    fn arg(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        z.iter().zip(x).map(|(a, b)| a - self.shift.epsilon * b).collect()
    }
}

impl<S: Source + ?Sized> Source for ShiftedSource<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, t: f64, z: &[f64]) -> f64 {
        self.inner.eval(t, &self.arg(z, &self.shift.x(t)))
    }
    fn eval_left(&self, t: f64, z: &[f64]) -> f64 {
        self.inner.eval_left(t, &self.arg(z, &self.shift.x_left(t)))
    }
    fn support_radius(&self) -> f64 {
        let (lo, hi) = self.shift.displacement_box();
        let m = lo.iter().chain(&hi).map(|v| v * v).sum::<f64>().sqrt();
        self.inner.support_radius() + m
    }
    fn support_box(&self, horizon: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let (l, h) = self.inner.support_box(horizon)?;
        let (dl, dh) = self.shift.displacement_box();
        Some((l.iter().zip(&dl).map(|(a, b)| a + b).collect(), h.iter().zip(&dh).map(|(a, b)| a + b).collect()))
    }
    fn time_breakpoints(&self, horizon: f64) -> Vec<f64> {
        let mut b = self.inner.time_breakpoints(horizon);
        if self.shift.epsilon != 0.0 {
            b.extend(self.shift.path.jump_times.iter().copied());
        }
        clean_breakpoints(&mut b, horizon);
        b
    }
    fn sup_abs(&self) -> f64 {
        self.inner.sup_abs()
    }
    fn derivative_bounds(&self) -> [f64; 5] {
        self.inner.derivative_bounds()
    }
    fn sample(&self, t: f64, left: bool, grid: &SpaceTimeGrid, out: &mut [f64]) {
        let x = if left { self.shift.x_left(t) } else { self.shift.x(t) };
        let mut z = vec![0.0; grid.dim()];
        let mut y = vec![0.0; grid.dim()];
        for (i, o) in out.iter_mut().enumerate() {
            grid.point(i, &mut z);
            for j in 0..z.len() {
                y[j] = z[j] - self.shift.epsilon * x[j];
            }
            *o = if left { self.inner.eval_left(t, &y) } else { self.inner.eval(t, &y) };
        }
    }
}

/// v_eps = PDE(Q, f_eps) for one realisation of the shift.
pub fn shifted_solve(q: &TimePSDPath, f: &dyn Source, shift: &JumpDrivenShift, grid: &SpaceTimeGrid, cfg: &SolverConfig, seed: u64) -> Result<Field> {
    let src = ShiftedSource { inner: f, shift };
    let mut out = solve_driftless(q, &src, grid, cfg, seed)?;
    out.provenance.solver = format!("shifted/{}", out.provenance.solver);
    Ok(out)
}

/// Physical-space cumulative Duhamel integrals H(s_i, .) = int_0^{s_i} G_{r,t} f(r) dr for a fixed
/// output time t, where G_{r,t} is the Gaussian semigroup of Q from r to t.
struct Cumulative {
    times: Vec<f64>,
    fields: Vec<Vec<f64>>,
}

impl Cumulative {
    fn build(engine: &Engine<'_>, t_out: f64) -> Result<Self> {
        let nodes: Vec<_> = engine.nodes.iter().copied().take_while(|n| n.t <= t_out + 1e-12 * engine.grid.horizon).collect();
        let total = engine.fft.len();
        let zero = Complex64::new(0.0, 0.0);
        let m = nodes.len();
        // exponent increments E_i over [s_i, s_{i+1}] and e^{D_i}, D_i = M(t) - M(s_i)
        let mut inc = vec![vec![zero; total]; m - 1];
        for i in 0..m - 1 {
            engine.exponent(nodes[i].t, nodes[i + 1].t, &mut inc[i])?;
        }
        let mut d = vec![zero; total];
        let mut dexp: Vec<Vec<Complex64>> = vec![vec![]; m];
        for i in (0..m).rev() {
            dexp[i] = d.iter().map(|v| v.exp()).collect();
            if i > 0 {
                for q in 0..total {
                    d[q] += inc[i - 1][q];
                }
            }
        }
        let mut real = vec![0.0; total];
        let mut fa = vec![zero; total];
        let mut fb = vec![zero; total];
        let mut j = vec![zero; total];
        let mut work = Vec::with_capacity(total);
        let mut fields = vec![vec![0.0; total]];
        engine.spectrum(nodes[0].t, false, &mut real, &mut fa);
        for i in 0..m - 1 {
            let dt = nodes[i + 1].t - nodes[i].t;
            engine.spectrum(nodes[i + 1].t, nodes[i + 1].breakpoint, &mut real, &mut fb);
            let e_next = &dexp[i + 1];
            for q in 0..total {
                let z = inc[i][q];
                let (p1, p2) = phi12(z, z.exp());
                j[q] += e_next[q] * dt * ((p1 - p2) * fa[q] + p2 * fb[q]);
            }
            let mut h = vec![0.0; total];
            engine.fft.inverse_real(&j, &mut work, &mut h);
            fields.push(h);
            if nodes[i + 1].breakpoint {
                engine.spectrum(nodes[i + 1].t, false, &mut real, &mut fa);
            } else {
                std::mem::swap(&mut fa, &mut fb);
            }
        }
        Ok(Cumulative { times: nodes.iter().map(|n| n.t).collect(), fields })
    }

    /// H(sigma, node p + offset), linear in sigma between nodes; zero outside the grid.
    fn at_lattice(&self, sigma: f64, grid: &SpaceTimeGrid, idx: &[i64]) -> f64 {
        let mut flat = 0usize;
        let strides = grid.strides();
        for j in 0..idx.len() {
            if idx[j] < 0 || idx[j] >= grid.n[j] as i64 {
                return 0.0;
            }
            flat += idx[j] as usize * strides[j];
        }
        self.interp_time(sigma, |f| f[flat])
    }

    fn at_point(&self, sigma: f64, grid: &SpaceTimeGrid, y: &[f64], interp: Interpolator) -> f64 {
        self.interp_time(sigma, |f| interp.eval(f, grid, y).unwrap_or(0.0))
    }

    fn interp_time(&self, sigma: f64, val: impl Fn(&[f64]) -> f64) -> f64 {
        let last = self.times.len() - 1;
        if sigma >= self.times[last] {
            return val(&self.fields[last]);
        }
        if sigma <= self.times[0] {
            return val(&self.fields[0]);
        }
        let i = self.times.partition_point(|&s| s <= sigma) - 1;
        let w = (sigma - self.times[i]) / (self.times[i + 1] - self.times[i]);
        let a = val(&self.fields[i]);
        if w == 0.0 {
            return a;
        }
        (1.0 - w) * a + w * val(&self.fields[i + 1])
    }
}

/// Per-path sample of v_eps(t, y + eps X_t) given the cumulative integrals at output time t.
fn path_value(cum: &Cumulative, shift: &JumpDrivenShift, t: f64, grid: &SpaceTimeGrid, z: &[f64], interp: Interpolator) -> f64 {
    let d = grid.dim();
    let h = grid.spacings();
    let eps = shift.epsilon;
    let xt = shift.x(t);
    // segment boundaries: 0, jumps <= t, t; X is constant on each segment
    let mut bounds = vec![0.0];
    bounds.extend(shift.path.jump_times.iter().copied().take_while(|&s| s <= t));
    bounds.push(t);
    let mut total = 0.0;
    let mut y = vec![0.0; d];
    let mut idx = vec![0i64; d];
    for w in 0..bounds.len() - 1 {
        let (a, b) = (bounds[w], bounds[w + 1]);
        if b <= a {
            continue;
        }
        let xs = shift.x(a);
        let mut lattice = true;
        for j in 0..d {
            y[j] = z[j] + eps * (xt[j] - xs[j]);
            let u = (y[j] - grid.lo[j]) / h[j];
            let r = u.round();
            if (u - r).abs() > 1e-9 {
                lattice = false;
            }
            idx[j] = r as i64;
        }
        total += if lattice {
            cum.at_lattice(b, grid, &idx) - cum.at_lattice(a, grid, &idx)
        } else {
            cum.at_point(b, grid, &y, interp) - cum.at_point(a, grid, &y, interp)
        };
    }
    total
}

/// Shared setup of the Monte Carlo averages.
struct ShiftEnsemble<'a> {
    engine: Engine<'a>,
    qprime: &'a TimePSDPath,
    epsilon: f64,
    direction: usize,
    lambda: f64,
}

impl<'a> ShiftEnsemble<'a> {
    fn new(q: &'a TimePSDPath, qprime: &'a TimePSDPath, f: &'a dyn Source, epsilon: f64, k: usize, grid: &'a SpaceTimeGrid, n_paths: usize, cfg: &SolverConfig) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(HypouError::InvalidArgument("epsilon must be positive".into()));
        }
        if k >= grid.dim() || q.dim() != grid.dim() || qprime.dim() != grid.dim() {
            return Err(HypouError::DimensionMismatch("direction or path dimension".into()));
        }
        if n_paths < 2 {
            return Err(HypouError::InvalidArgument("need at least two paths".into()));
        }
        let lambda = 1.0 / (epsilon * epsilon);
        let expected = n_paths as f64 * lambda * grid.horizon;
        if expected > MC_JUMP_BUDGET {
            return Err(HypouError::McBudget(format!("{expected:e} expected jumps exceed the budget {MC_JUMP_BUDGET:e}")));
        }
        super::fd::check_fd_coverage(q, qprime, f, epsilon, k, JumpKind::OneSided, grid, cfg)?;
        let engine = Engine::new(grid, Generator { diffusion: vec![q], jumps: vec![] }, f, cfg.max_step, cfg.quad_tol);
        Ok(ShiftEnsemble { engine, qprime, epsilon, direction: k, lambda })
    }

    fn shift(&self, t_max: f64, seed: u64, p: usize) -> Result<JumpDrivenShift> {
        let path = ensemble_path(self.lambda, t_max, seed, p as u64)?;
        JumpDrivenShift::new(path, self.qprime, self.direction, self.epsilon)
    }
}

/// Per-node count, mean and centred second moment.
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn empty(ns: usize) -> Self {
        Moments { count: 0.0, mean: vec![0.0; ns], m2: vec![0.0; ns] }
    }

    fn of(vals: &[Vec<f64>], ns: usize) -> Self {
        let count = vals.len() as f64;
        let mean: Vec<f64> = (0..ns).map(|p| vals.iter().map(|v| v[p]).sum::<f64>() / count).collect();
        let m2 = (0..ns).map(|p| vals.iter().map(|v| (v[p] - mean[p]) * (v[p] - mean[p])).sum()).collect();
        Moments { count, mean, m2 }
    }

    fn merge(&mut self, o: &Moments) {
        let n = self.count + o.count;
        for p in 0..self.mean.len() {
            let d = o.mean[p] - self.mean[p];
            self.mean[p] += d * o.count / n;
            self.m2[p] += o.m2[p] + d * d * self.count * o.count / n;
        }
        self.count = n;
    }
}

/// Fixed chunk size for ordered reductions (independent of the worker count).
const CHUNK: usize = 64;

/// v-bar_eps(t, z) = E[v_eps(t, z + eps X_t)] at every grid node, with standard errors. lambda = eps^-2.
///
/// Each path reuses the cumulative Duhamel integrals of the unshifted problem, interpolated
/// linearly in time at the jump times. Modes that decay within one step (grid-scale content of
/// an under-resolved source) are therefore only roughly represented; keep `max_step` small
/// against 1 / (|k|^2 |Q|).
pub fn averaged_shifted_solve(
    q: &TimePSDPath,
    qprime: &TimePSDPath,
    f: &dyn Source,
    epsilon: f64,
    k: usize,
    grid: &SpaceTimeGrid,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Field> {
    let ens = ShiftEnsemble::new(q, qprime, f, epsilon, k, grid, n_paths, cfg)?;
    let interp = cfg.interpolator()?;
    let ns = grid.n_space();
    let mut out = Field::zeros(grid.clone(), "averaged-shifted/monte-carlo");
    out.provenance.seed = Some(seed);
    let mut se = vec![0.0; out.values.len()];
    let shifts: Vec<JumpDrivenShift> = (0..n_paths).map(|p| ens.shift(grid.horizon, seed, p)).collect::<Result<_>>()?;
    for n in 1..=grid.nt {
        let t = grid.time(n);
        let cum = Cumulative::build(&ens.engine, t)?;
        let chunks: Vec<Moments> = shifts
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut z = vec![0.0; grid.dim()];
                let vals: Vec<Vec<f64>> = chunk
                    .iter()
                    .map(|sh| {
                        (0..ns)
                            .map(|p| {
                                grid.point(p, &mut z);
                                path_value(&cum, sh, t, grid, &z, interp)
                            })
                            .collect()
                    })
                    .collect();
                Moments::of(&vals, ns)
            })
            .collect();
        let mut acc = Moments::empty(ns);
        for c in &chunks {
            acc.merge(c);
        }
        let m = n_paths as f64;
        for p in 0..ns {
            out.values[n * ns + p] = acc.mean[p];
            se[n * ns + p] = (acc.m2[p] / (m - 1.0) / m).sqrt();
        }
    }
    out.std_err = Some(se);
    Ok(out)
}

/// Mean and standard error of v_eps(t_n, z + eps X_{t_n}) at selected points.
pub fn averaged_shifted_at(
    q: &TimePSDPath,
    qprime: &TimePSDPath,
    f: &dyn Source,
    epsilon: f64,
    k: usize,
    grid: &SpaceTimeGrid,
    time_index: usize,
    points: &[Vec<f64>],
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    if time_index == 0 || time_index > grid.nt {
        return Err(HypouError::InvalidArgument("time index must be in 1..=nt".into()));
    }
    let ens = ShiftEnsemble::new(q, qprime, f, epsilon, k, grid, n_paths, cfg)?;
    let interp = cfg.interpolator()?;
    let t = grid.time(time_index);
    let cum = Cumulative::build(&ens.engine, t)?;
    let samples: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let sh = ens.shift(t, seed, p)?;
            Ok(points.iter().map(|z| path_value(&cum, &sh, t, grid, z, interp)).collect())
        })
        .collect::<Result<_>>()?;
    let m = n_paths as f64;
    Ok((0..points.len())
        .map(|i| {
            let mu = samples.iter().map(|s| s[i]).sum::<f64>() / m;
            let var = samples.iter().map(|s| (s[i] - mu) * (s[i] - mu)).sum::<f64>() / (m - 1.0);
            (mu, (var / m).sqrt())
        })
        .collect())
}
