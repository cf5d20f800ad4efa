//! Fourier-space Duhamel engine.
//!
//! On the periodised grid box every generator used here (time-dependent diffusion
//! plus bounded shift operators) is a Fourier multiplier, so the Duhamel integral
//! `w(t) = int_0^t exp(M(t) - M(s)) f(s) ds` is evaluated mode by mode. Between time
//! nodes the source is linear and the exponent increment is exact for the diffusion
//! part; the resulting exponential-integrator step reduces to the trapezoid rule
//! for slow modes and stays stable for stiff ones.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::SpaceTimeGrid;
use super::path::TimePSDPath;
use super::quadrature::integrate_matrix;
use super::source::{clean_breakpoints, Source};
use crate::error::Result;
use crate::linalg::{self, Matrix};

pub(crate) struct FftGrid {
    dims: Vec<usize>,
    total: usize,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    /// Wave vectors, `total x d`, row-major.
    kvec: Vec<f64>,
}

impl FftGrid {
    pub fn new(grid: &SpaceTimeGrid) -> Self {
        let d = grid.dim();
        let dims = grid.n.clone();
        let total = grid.n_space();
        let mut planner = FftPlanner::new();
        let fwd = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let axis_k: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let n = dims[j];
                let len = n as f64 * grid.spacing(j);
                (0..n).map(|m| {
                    let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                    2.0 * PI * s / len
                }).collect()
            })
            .collect();
        let mut kvec = vec![0.0; total * d];
        let mut idx = vec![0usize; d];
        for i in 0..total {
            grid.unravel(i, &mut idx);
            for j in 0..d {
                kvec[i * d + j] = axis_k[j][idx[j]];
            }
        }
        FftGrid { dims, total, fwd, inv, kvec }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn k(&self, i: usize) -> &[f64] {
        let d = self.dims.len();
        &self.kvec[i * d..(i + 1) * d]
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let d = self.dims.len();
        for axis in 0..d {
            let n = self.dims[axis];
            let inner: usize = self.dims[axis + 1..].iter().product();
            let outer: usize = self.dims[..axis].iter().product();
            let plan = if inverse { &self.inv[axis] } else { &self.fwd[axis] };
            if inner == 1 {
                plan.process(buf);
                continue;
            }
            let mut tmp = vec![Complex64::new(0.0, 0.0); inner * n];
            for o in 0..outer {
                let base = o * n * inner;
                for j in 0..n {
                    let row = &buf[base + j * inner..base + (j + 1) * inner];
                    for (q, v) in row.iter().enumerate() {
                        tmp[q * n + j] = *v;
                    }
                }
                plan.process(&mut tmp);
                for j in 0..n {
                    let row = &mut buf[base + j * inner..base + (j + 1) * inner];
                    for (q, v) in row.iter_mut().enumerate() {
                        *v = tmp[q * n + j];
                    }
                }
            }
        }
        if inverse {
            let s = 1.0 / self.total as f64;
            buf.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn forward_real(&self, input: &[f64], out: &mut [Complex64]) {
        for (o, &x) in out.iter_mut().zip(input) {
            *o = Complex64::new(x, 0.0);
        }
        self.transform(out, false);
    }

    /// Real part of the inverse transform.
    pub fn inverse_real(&self, spec: &[Complex64], work: &mut Vec<Complex64>, out: &mut [f64]) {
        work.clear();
        work.extend_from_slice(spec);
        self.transform(work, true);
        for (o, v) in out.iter_mut().zip(work.iter()) {
            *o = v.re;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum JumpKind {
    /// lambda (w(z + eps l) - w(z))
    OneSided,
    /// eps^-2 (w(z + eps l) - 2 w(z) + w(z - eps l))
    Central,
}

#[derive(Clone, Copy)]
pub(crate) struct JumpTerm<'a> {
    pub kind: JumpKind,
    pub epsilon: f64,
    pub qprime: &'a TimePSDPath,
    pub direction: usize,
}

impl JumpTerm<'_> {
    pub fn lambda(&self) -> f64 {
        1.0 / (self.epsilon * self.epsilon)
    }

    /// l(t) = sqrt(Q'(t)) e_k.
    pub fn direction_at(&self, t: f64) -> Vec<f64> {
        let r = linalg::psd_sqrt(&self.qprime.evaluate(t));
        (0..r.nrows()).map(|i| r[(i, self.direction)]).collect()
    }
}

/// Fourier symbol of the generator: diffusion paths (summed) plus bounded jump terms.
#[derive(Clone, Default)]
pub(crate) struct Generator<'a> {
    pub diffusion: Vec<&'a TimePSDPath>,
    pub jumps: Vec<JumpTerm<'a>>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Node {
    pub t: f64,
    pub output: Option<usize>,
    pub breakpoint: bool,
}

/// Time nodes: grid times, breakpoints and `extra`, refined so that no step exceeds `max_step`.
pub(crate) fn build_nodes(grid: &SpaceTimeGrid, breakpoints: &[f64], max_step: Option<f64>) -> Vec<Node> {
    let mut bps = breakpoints.to_vec();
    clean_breakpoints(&mut bps, grid.horizon);
    let tol = 1e-12 * grid.horizon;
    let mut coarse: Vec<Node> = grid.times().iter().enumerate().map(|(n, &t)| Node { t, output: Some(n), breakpoint: false }).collect();
    for &b in &bps {
        if let Some(node) = coarse.iter_mut().find(|nd| (nd.t - b).abs() <= tol) {
            node.breakpoint = true;
        } else {
            coarse.push(Node { t: b, output: None, breakpoint: true });
        }
    }
    coarse.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut nodes = vec![coarse[0]];
    for w in coarse.windows(2) {
        let len = w[1].t - w[0].t;
        let m = match max_step {
            Some(h) if h > 0.0 => ((len / h) - 1e-9).ceil().max(1.0) as usize,
            _ => 1,
        };
        for j in 1..m {
            nodes.push(Node { t: w[0].t + len * j as f64 / m as f64, output: None, breakpoint: false });
        }
        nodes.push(w[1]);
    }
    nodes
}

/// Step used when none is configured; the exponent is only piecewise linear in time, so
/// time-dependent diffusions need more than the output grid.
pub(crate) fn default_step(grid: &SpaceTimeGrid) -> f64 {
    grid.dt().min(grid.horizon / 128.0)
}

/// phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2.
#[inline]
pub(crate) fn phi12(z: Complex64, ez: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 0.1 {
        let mut p1 = Complex64::new(0.0, 0.0);
        let mut p2 = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        let mut fact1 = 1.0;
        let mut fact2 = 2.0;
        for j in 0..9 {
            p1 += term / fact1;
            p2 += term / fact2;
            term *= z;
            fact1 *= (j + 2) as f64;
            fact2 *= (j + 3) as f64;
        }
        (p1, p2)
    } else {
        let p1 = (ez - 1.0) / z;
        (p1, (p1 - 1.0) / z)
    }
}

pub(crate) struct Engine<'a> {
    pub grid: &'a SpaceTimeGrid,
    pub fft: FftGrid,
    pub generator: Generator<'a>,
    pub source: &'a dyn Source,
    pub nodes: Vec<Node>,
    pub tol: f64,
}

impl<'a> Engine<'a> {
    pub fn new(grid: &'a SpaceTimeGrid, generator: Generator<'a>, source: &'a dyn Source, max_step: Option<f64>, tol: f64) -> Self {
        let nodes = build_nodes(grid, &source.time_breakpoints(grid.horizon), Some(max_step.unwrap_or_else(|| default_step(grid))));
        Engine { grid, fft: FftGrid::new(grid), generator, source, nodes, tol }
    }

    /// Integrated diffusion int_a^b sum_j Q_j(r) dr.
    pub fn diffusion_increment(&self, a: f64, b: f64) -> Result<Matrix> {
        let d = self.grid.dim();
        let mut c = Matrix::zeros(d, d);
        for q in &self.generator.diffusion {
            if q.is_identically_zero() {
                continue;
            }
            c += integrate_matrix(&|r| q.evaluate(r), a, b, &q.kinks(self.grid.horizon), self.tol)?;
        }
        Ok(c)
    }

    /// Exponent increment M(b) - M(a) for every mode. Jump directions are frozen at the midpoint.
    pub fn exponent(&self, a: f64, b: f64, out: &mut [Complex64]) -> Result<()> {
        let d = self.grid.dim();
        let c = self.diffusion_increment(a, b)?;
        let dt = b - a;
        let mid = 0.5 * (a + b);
        let jumps: Vec<(JumpKind, f64, f64, Vec<f64>)> = self
            .generator
            .jumps
            .iter()
            .map(|j| (j.kind, j.epsilon, dt * j.lambda(), j.direction_at(mid)))
            .filter(|(_, _, _, l)| l.iter().any(|&x| x != 0.0))
            .collect();
        let cz = c.amax() == 0.0;
        for (i, o) in out.iter_mut().enumerate() {
            let k = self.fft.k(i);
            let mut re = if cz { 0.0 } else { -linalg::quad_form(&c, k) };
            let mut im = 0.0;
            for (kind, eps, w, l) in &jumps {
                let phase: f64 = eps * (0..d).map(|j| k[j] * l[j]).sum::<f64>();
                match kind {
                    JumpKind::OneSided => {
                        let (s, co) = phase.sin_cos();
                        re += w * (co - 1.0);
                        im += w * s;
                    }
                    JumpKind::Central => re += w * (2.0 * phase.cos() - 2.0),
                }
            }
            *o = Complex64::new(re, im);
        }
        Ok(())
    }

    pub fn spectrum(&self, t: f64, left: bool, real: &mut [f64], out: &mut [Complex64]) {
        self.source.sample(t, left, self.grid, real);
        self.fft.forward_real(real, out);
    }

    /// Runs the Duhamel recursion and hands each output time slice to `on_output`.
    pub fn run(&self, mut on_output: impl FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        let total = self.fft.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut state = vec![zero; total];
        let mut fa = vec![zero; total];
        let mut fb = vec![zero; total];
        let mut expo = vec![zero; total];
        let mut real = vec![0.0; total];
        let mut work = Vec::with_capacity(total);

        if let Some(n) = self.nodes[0].output {
            real.iter_mut().for_each(|v| *v = 0.0);
            on_output(n, &real)?;
        }
        self.spectrum(self.nodes[0].t, false, &mut real, &mut fa);
        for w in self.nodes.windows(2) {
            let (a, b) = (w[0].t, w[1].t);
            let dt = b - a;
            self.spectrum(b, w[1].breakpoint, &mut real, &mut fb);
            self.exponent(a, b, &mut expo)?;
            for i in 0..total {
                let z = expo[i];
                let ez = z.exp();
                let (p1, p2) = phi12(z, ez);
                state[i] = ez * state[i] + dt * ((p1 - p2) * fa[i] + p2 * fb[i]);
            }
            if let Some(n) = w[1].output {
                self.fft.inverse_real(&state, &mut work, &mut real);
                on_output(n, &real)?;
            }
            if w[1].breakpoint {
                self.spectrum(b, false, &mut real, &mut fa);
            } else {
                std::mem::swap(&mut fa, &mut fb);
            }
        }
        Ok(())
    }
}
