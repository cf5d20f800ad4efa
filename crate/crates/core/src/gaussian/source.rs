//! Source terms f(t, z): compactly supported in space, piecewise continuous in time.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::grid::SpaceTimeGrid;
use crate::error::{HypouError, Result};
use crate::linalg::{self, Matrix};

pub trait Source: Send + Sync {
    fn dim(&self) -> usize;

    /// Right-continuous value.
    fn eval(&self, t: f64, z: &[f64]) -> f64;

    /// Left limit in time.
    fn eval_left(&self, t: f64, z: &[f64]) -> f64 {
        self.eval(t, z)
    }

    /// Spatial support lies in the ball of this radius (infinite if not compact).
    fn support_radius(&self) -> f64;

    /// Axis-aligned box containing the spatial support, for all t in [0, horizon].
    fn support_box(&self, _horizon: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let r = self.support_radius();
        r.is_finite().then(|| (vec![-r; self.dim()], vec![r; self.dim()]))
    }

    /// Discontinuity times in (0, horizon).
    fn time_breakpoints(&self, horizon: f64) -> Vec<f64>;

    fn sup_abs(&self) -> f64;

    /// Directional sup-norms of spatial derivatives of order 0..=4.
    fn derivative_bounds(&self) -> [f64; 5];

    /// Samples the source at time t on every spatial node of `grid`.
    fn sample(&self, t: f64, left: bool, grid: &SpaceTimeGrid, out: &mut [f64]) {
        let mut z = vec![0.0; grid.dim()];
        for (i, o) in out.iter_mut().enumerate() {
            grid.point(i, &mut z);
            *o = if left { self.eval_left(t, &z) } else { self.eval(t, &z) };
        }
    }
}

macro_rules! forward_source {
    ($($ty:ty),*) => {$(
        impl<S: Source + ?Sized> Source for $ty {
            fn dim(&self) -> usize { (**self).dim() }
            fn eval(&self, t: f64, z: &[f64]) -> f64 { (**self).eval(t, z) }
            fn eval_left(&self, t: f64, z: &[f64]) -> f64 { (**self).eval_left(t, z) }
            fn support_radius(&self) -> f64 { (**self).support_radius() }
            fn support_box(&self, h: f64) -> Option<(Vec<f64>, Vec<f64>)> { (**self).support_box(h) }
            fn time_breakpoints(&self, h: f64) -> Vec<f64> { (**self).time_breakpoints(h) }
            fn sup_abs(&self) -> f64 { (**self).sup_abs() }
            fn derivative_bounds(&self) -> [f64; 5] { (**self).derivative_bounds() }
            fn sample(&self, t: f64, left: bool, g: &SpaceTimeGrid, out: &mut [f64]) { (**self).sample(t, left, g, out) }
        }
    )*};
}
forward_source!(&S, Box<S>, Arc<S>);

/// Scalar time profile g(t) multiplying a spatial shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimeProfile {
    #[default]
    Constant,
    /// 0 before t0, 1 after t1, linear in between.
    Ramp { t0: f64, t1: f64 },
    /// sin(2 pi freq t + phase).
    Sine { freq: f64, #[serde(default)] phase: f64 },
    /// `before` on [0, at), `after` from `at` on.
    Step { at: f64, before: f64, after: f64 },
    /// 1 on [start, end), 0 elsewhere.
    Window { start: f64, end: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Ramp { t0, t1 } => ((t - t0) / (t1 - t0)).clamp(0.0, 1.0),
            TimeProfile::Sine { freq, phase } => (2.0 * PI * freq * t + phase).sin(),
            TimeProfile::Step { at, before, after } => if t < at { before } else { after },
            TimeProfile::Window { start, end } => if t >= start && t < end { 1.0 } else { 0.0 },
        }
    }

    pub fn eval_left(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Step { at, before, after } => if t <= at { before } else { after },
            TimeProfile::Window { start, end } => if t > start && t <= end { 1.0 } else { 0.0 },
            _ => self.eval(t),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            TimeProfile::Step { at, .. } => vec![at],
            TimeProfile::Window { start, end } => vec![start, end],
            _ => vec![],
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match *self {
            TimeProfile::Step { before, after, .. } => before.abs().max(after.abs()),
            _ => 1.0,
        }
    }
}

/// Smooth bump psi(rho) = exp(1 - 1/(1 - rho^2)) for rho < 1, with psi(0) = 1.
pub fn bump_profile(rho: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - rho * rho)).exp()
    }
}

/// Sup-norms of the derivatives of s -> psi(|s|) on the unit interval, orders 0..=4.
fn bump_derivative_constants() -> [f64; 5] {
    static C: OnceLock<[f64; 5]> = OnceLock::new();
    *C.get_or_init(|| {
        let h = 1e-3;
        let n = 2000;
        let v: Vec<f64> = (0..=n + 8).map(|i| bump_profile((-1.0 - 4.0 * h + i as f64 * h).abs())).collect();
        let mut out: [f64; 5] = [1.0, 0.0, 0.0, 0.0, 0.0];
        for i in 4..=n + 4 {
            let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
            let d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
            let d3 = (v[i + 2] - 2.0 * v[i + 1] + 2.0 * v[i - 1] - v[i - 2]) / (2.0 * h * h * h);
            let d4 = (v[i + 2] - 4.0 * v[i + 1] + 6.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (h * h * h * h);
            out[1] = out[1].max(d1.abs());
            out[2] = out[2].max(d2.abs());
            out[3] = out[3].max(d3.abs());
            out[4] = out[4].max(d4.abs());
        }
        out
    })
}

/// JSON descriptor of a source; implements `Source` directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    /// amplitude * g(t) * psi(|z - center| / radius)
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
        #[serde(default)]
        profile: TimeProfile,
    },
    /// amplitude * g(t), spatially constant (no compact support).
    Uniform {
        dim: usize,
        amplitude: f64,
        #[serde(default)]
        profile: TimeProfile,
    },
    Sum { terms: Vec<SourceSpec> },
}

impl SourceSpec {
    pub fn bump(center: Vec<f64>, radius: f64, amplitude: f64, profile: TimeProfile) -> Self {
        SourceSpec::Bump { center, radius, amplitude, profile }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceSpec::Bump { center, radius, amplitude, .. } => {
                if center.is_empty() || !(*radius > 0.0) || !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return Err(HypouError::InvalidArgument("bump needs a centre, positive radius and finite amplitude".into()));
                }
            }
            SourceSpec::Uniform { dim, amplitude, .. } => {
                if *dim == 0 || !amplitude.is_finite() {
                    return Err(HypouError::InvalidArgument("uniform source needs dim > 0 and a finite amplitude".into()));
                }
            }
            SourceSpec::Sum { terms } => {
                let d = terms.first().ok_or_else(|| HypouError::InvalidArgument("empty source sum".into()))?.dim();
                for t in terms {
                    t.validate()?;
                    if t.dim() != d {
                        return Err(HypouError::DimensionMismatch("summed sources differ in dimension".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Same source multiplied by c.
    pub fn scaled(&self, c: f64) -> SourceSpec {
        match self.clone() {
            SourceSpec::Bump { center, radius, amplitude, profile } => SourceSpec::Bump { center, radius, amplitude: amplitude * c, profile },
            SourceSpec::Uniform { dim, amplitude, profile } => SourceSpec::Uniform { dim, amplitude: amplitude * c, profile },
            SourceSpec::Sum { terms } => SourceSpec::Sum { terms: terms.iter().map(|t| t.scaled(c)).collect() },
        }
    }

    fn eval_side(&self, t: f64, z: &[f64], left: bool) -> f64 {
        match self {
            SourceSpec::Bump { center, radius, amplitude, profile } => {
                let g = if left { profile.eval_left(t) } else { profile.eval(t) };
                if g == 0.0 {
                    return 0.0;
                }
                let r2: f64 = z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                let rho2 = r2 / (radius * radius);
                if rho2 >= 1.0 {
                    0.0
                } else {
                    amplitude * g * (1.0 - 1.0 / (1.0 - rho2)).exp()
                }
            }
            SourceSpec::Uniform { amplitude, profile, .. } => amplitude * if left { profile.eval_left(t) } else { profile.eval(t) },
            SourceSpec::Sum { terms } => terms.iter().map(|s| s.eval_side(t, z, left)).sum(),
        }
    }
}

impl Source for SourceSpec {
    fn dim(&self) -> usize {
        match self {
            SourceSpec::Bump { center, .. } => center.len(),
            SourceSpec::Uniform { dim, .. } => *dim,
            SourceSpec::Sum { terms } => terms.first().map_or(0, |t| t.dim()),
        }
    }

    fn eval(&self, t: f64, z: &[f64]) -> f64 {
        self.eval_side(t, z, false)
    }

    fn eval_left(&self, t: f64, z: &[f64]) -> f64 {
        self.eval_side(t, z, true)
    }

    fn support_radius(&self) -> f64 {
        match self {
            SourceSpec::Bump { center, radius, .. } => center.iter().map(|c| c * c).sum::<f64>().sqrt() + radius,
            SourceSpec::Uniform { .. } => f64::INFINITY,
            SourceSpec::Sum { terms } => terms.iter().map(|t| t.support_radius()).fold(0.0, f64::max),
        }
    }

    fn support_box(&self, horizon: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            SourceSpec::Bump { center, radius, .. } => Some((center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())),
            SourceSpec::Uniform { .. } => None,
            SourceSpec::Sum { terms } => {
                let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
                for t in terms {
                    let (l, h) = t.support_box(horizon)?;
                    acc = Some(match acc {
                        None => (l, h),
                        Some((al, ah)) => (al.iter().zip(&l).map(|(a, b)| a.min(*b)).collect(), ah.iter().zip(&h).map(|(a, b)| a.max(*b)).collect()),
                    });
                }
                acc
            }
        }
    }

    fn time_breakpoints(&self, horizon: f64) -> Vec<f64> {
        let mut b = match self {
            SourceSpec::Bump { profile, .. } | SourceSpec::Uniform { profile, .. } => profile.breakpoints(),
            SourceSpec::Sum { terms } => terms.iter().flat_map(|t| t.time_breakpoints(horizon)).collect(),
        };
        clean_breakpoints(&mut b, horizon);
        b
    }

    fn sup_abs(&self) -> f64 {
        match self {
            SourceSpec::Bump { amplitude, profile, .. } | SourceSpec::Uniform { amplitude, profile, .. } => amplitude.abs() * profile.sup_abs(),
            SourceSpec::Sum { terms } => terms.iter().map(|t| t.sup_abs()).sum(),
        }
    }

    fn derivative_bounds(&self) -> [f64; 5] {
        match self {
            SourceSpec::Bump { radius, amplitude, profile, .. } => {
                let c = bump_derivative_constants();
                let a = amplitude.abs() * profile.sup_abs();
                std::array::from_fn(|j| a * c[j] / radius.powi(j as i32))
            }
            SourceSpec::Uniform { amplitude, profile, .. } => [amplitude.abs() * profile.sup_abs(), 0.0, 0.0, 0.0, 0.0],
            SourceSpec::Sum { terms } => terms.iter().fold([0.0; 5], |mut acc, t| {
                let d = t.derivative_bounds();
                for j in 0..5 {
                    acc[j] += d[j];
                }
                acc
            }),
        }
    }
}

pub(crate) fn clean_breakpoints(b: &mut Vec<f64>, horizon: f64) {
    b.retain(|&t| t > 0.0 && t < horizon);
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() <= 1e-13 * horizon.max(1.0));
}

/// Source given by a closure; used for analytic fixtures.
pub struct FnSource<F: Fn(f64, &[f64]) -> f64 + Send + Sync> {
    pub dim: usize,
    pub f: F,
    pub radius: f64,
    pub sup: f64,
    pub breakpoints: Vec<f64>,
}

impl<F: Fn(f64, &[f64]) -> f64 + Send + Sync> Source for FnSource<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, z: &[f64]) -> f64 {
        (self.f)(t, z)
    }
    fn support_radius(&self) -> f64 {
        self.radius
    }
    fn time_breakpoints(&self, horizon: f64) -> Vec<f64> {
        let mut b = self.breakpoints.clone();
        clean_breakpoints(&mut b, horizon);
        b
    }
    fn sup_abs(&self) -> f64 {
        self.sup
    }
    fn derivative_bounds(&self) -> [f64; 5] {
        [self.sup, f64::NAN, f64::NAN, f64::NAN, f64::NAN]
    }
}

/// f(t, e^{sign t A} z). `sign = -1` is the pullback f~, `sign = +1` the pushforward f-bar.
pub struct LinearWarp<S: Source> {
    inner: S,
    a: Matrix,
    sign: f64,
    horizon: f64,
}

/// f~(t, z) = f(t, e^{-tA} z): the source of the driftless problem solved by v(t, z) = u(t, e^{-tA} z).
pub fn source_pullback<S: Source>(f: S, a: &Matrix, horizon: f64) -> LinearWarp<S> {
    LinearWarp { inner: f, a: a.clone(), sign: -1.0, horizon }
}

/// f-bar(t, z) = f(t, e^{tA} z).
pub fn source_pushforward<S: Source>(f: S, a: &Matrix, horizon: f64) -> LinearWarp<S> {
    LinearWarp { inner: f, a: a.clone(), sign: 1.0, horizon }
}

impl<S: Source> LinearWarp<S> {
    fn map(&self, t: f64) -> Matrix {
        linalg::expm(&self.a, self.sign * t)
    }

    fn sample_times(&self) -> Vec<f64> {
        (0..=64).map(|i| self.horizon * i as f64 / 64.0).collect()
    }
}

impl<S: Source> Source for LinearWarp<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, t: f64, z: &[f64]) -> f64 {
        let mut y = vec![0.0; z.len()];
        linalg::mat_vec(&self.map(t), z, &mut y);
        self.inner.eval(t, &y)
    }

    fn eval_left(&self, t: f64, z: &[f64]) -> f64 {
        let mut y = vec![0.0; z.len()];
        linalg::mat_vec(&self.map(t), z, &mut y);
        self.inner.eval_left(t, &y)
    }

    /// Support of f(t, M z) is M^{-1} supp f, with M^{-1} = e^{-sign t A}.
    fn support_radius(&self) -> f64 {
        let r = self.inner.support_radius();
        let k = self.sample_times().iter().map(|&t| linalg::op_norm(&linalg::expm(&self.a, -self.sign * t))).fold(1.0, f64::max);
        r * k * 1.02
    }

    fn support_box(&self, horizon: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let (lo, hi) = self.inner.support_box(horizon)?;
        let d = lo.len();
        let mut out_lo = vec![f64::INFINITY; d];
        let mut out_hi = vec![f64::NEG_INFINITY; d];
        let mut corner = vec![0.0; d];
        let mut img = vec![0.0; d];
        let ts: Vec<f64> = (0..=256).map(|i| horizon * i as f64 / 256.0).collect();
        for &t in &ts {
            let m = linalg::expm(&self.a, -self.sign * t);
            for mask in 0..(1usize << d) {
                for j in 0..d {
                    corner[j] = if mask >> j & 1 == 1 { hi[j] } else { lo[j] };
                }
                linalg::mat_vec(&m, &corner, &mut img);
                for j in 0..d {
                    out_lo[j] = out_lo[j].min(img[j]);
                    out_hi[j] = out_hi[j].max(img[j]);
                }
            }
        }
        // Sampled hull; widen by the variation over one sampling step.
        let pad: Vec<f64> = (0..d).map(|j| 0.02 * (out_hi[j] - out_lo[j]) + 1e-9).collect();
        Some((out_lo.iter().zip(&pad).map(|(a, p)| a - p).collect(), out_hi.iter().zip(&pad).map(|(a, p)| a + p).collect()))
    }

    fn time_breakpoints(&self, horizon: f64) -> Vec<f64> {
        self.inner.time_breakpoints(horizon)
    }

    fn sup_abs(&self) -> f64 {
        self.inner.sup_abs()
    }

    fn derivative_bounds(&self) -> [f64; 5] {
        let k = self.sample_times().iter().map(|&t| linalg::op_norm(&self.map(t))).fold(1.0, f64::max);
        let d = self.inner.derivative_bounds();
        std::array::from_fn(|j| d[j] * k.powi(j as i32))
    }

    fn sample(&self, t: f64, left: bool, grid: &SpaceTimeGrid, out: &mut [f64]) {
        let m = self.map(t);
        let d = grid.dim();
        let mut z = vec![0.0; d];
        let mut y = vec![0.0; d];
        for (i, o) in out.iter_mut().enumerate() {
            grid.point(i, &mut z);
            linalg::mat_vec(&m, &z, &mut y);
            *o = if left { self.inner.eval_left(t, &y) } else { self.inner.eval(t, &y) };
        }
    }
}
