//! Continuous paths t -> symmetric non-negative matrices (diffusions and perturbations).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};
use crate::linalg::{self, Matrix, PSD_TOL};

/// JSON descriptor for a PSD path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathSpec {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// Linear interpolation between PSD samples; constant outside the sampled range.
    PiecewiseLinear {
        times: Vec<f64>,
        matrices: Vec<Vec<Vec<f64>>>,
    },
    /// R(t) diag(eigenvalues) R(t)^T with R(t) the rotation by `omega * t + phase` in `plane`.
    SinusoidalPsd {
        eigenvalues: Vec<f64>,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "default_plane")]
        plane: [usize; 2],
    },
    /// max(0, sin(2 pi t / period + phase)) v v^T.
    Rank1Vanishing {
        v: Vec<f64>,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn default_plane() -> [usize; 2] {
    [0, 1]
}

#[derive(Clone, Debug)]
enum Kind {
    Constant(Matrix),
    PiecewiseLinear { times: Vec<f64>, mats: Vec<Matrix> },
    Sinusoidal { diag: Vec<f64>, omega: f64, phase: f64, plane: [usize; 2] },
    Rank1 { v: Vec<f64>, period: f64, phase: f64 },
    /// e^{tA} P(t) e^{tA^*}
    Conjugated { inner: Arc<TimePSDPath>, a: Matrix },
    Sum(Vec<Arc<TimePSDPath>>),
    /// sum over j in keep of l_j l_j^T with l_j = sqrt(P(t)) e_j
    Directions { inner: Arc<TimePSDPath>, keep: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct TimePSDPath {
    dim: usize,
    kind: Kind,
    spec: Option<PathSpec>,
}

impl TimePSDPath {
    pub fn constant(m: Matrix) -> Result<Self> {
        let m = validate_psd(&m)?;
        let spec = PathSpec::Constant { matrix: linalg::to_rows(&m) };
        Ok(TimePSDPath { dim: m.nrows(), kind: Kind::Constant(m), spec: Some(spec) })
    }

    pub fn zero(n: usize) -> Self {
        TimePSDPath::constant(Matrix::zeros(n, n)).expect("zero is PSD")
    }

    pub fn piecewise_linear(times: Vec<f64>, mats: Vec<Matrix>) -> Result<Self> {
        if times.is_empty() || times.len() != mats.len() {
            return Err(HypouError::InvalidArgument("piecewise-linear path needs matching, non-empty times and matrices".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HypouError::InvalidArgument("sample times must be strictly increasing".into()));
        }
        let dim = mats[0].nrows();
        let mats = mats
            .iter()
            .map(|m| if m.nrows() != dim { Err(HypouError::DimensionMismatch("path samples differ in size".into())) } else { validate_psd(m) })
            .collect::<Result<Vec<_>>>()?;
        let spec = PathSpec::PiecewiseLinear { times: times.clone(), matrices: mats.iter().map(linalg::to_rows).collect() };
        Ok(TimePSDPath { dim, kind: Kind::PiecewiseLinear { times, mats }, spec: Some(spec) })
    }

    pub fn sinusoidal(eigenvalues: Vec<f64>, omega: f64, phase: f64, plane: [usize; 2]) -> Result<Self> {
        let dim = eigenvalues.len();
        if dim == 0 || eigenvalues.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(HypouError::InvalidArgument("sinusoidal-psd eigenvalues must be finite and non-negative".into()));
        }
        if dim >= 2 && (plane[0] >= dim || plane[1] >= dim || plane[0] == plane[1]) {
            return Err(HypouError::InvalidArgument(format!("rotation plane {plane:?} invalid for dimension {dim}")));
        }
        let spec = PathSpec::SinusoidalPsd { eigenvalues: eigenvalues.clone(), omega, phase, plane };
        Ok(TimePSDPath { dim, kind: Kind::Sinusoidal { diag: eigenvalues, omega, phase, plane }, spec: Some(spec) })
    }

    pub fn rank1_vanishing(v: Vec<f64>, period: f64, phase: f64) -> Result<Self> {
        if v.is_empty() || !(period > 0.0) {
            return Err(HypouError::InvalidArgument("rank1-vanishing needs a vector and a positive period".into()));
        }
        let spec = PathSpec::Rank1Vanishing { v: v.clone(), period, phase };
        Ok(TimePSDPath { dim: v.len(), kind: Kind::Rank1 { v, period, phase }, spec: Some(spec) })
    }

    pub fn from_spec(spec: &PathSpec) -> Result<Self> {
        match spec {
            PathSpec::Constant { matrix } => TimePSDPath::constant(rows(matrix)?),
            PathSpec::PiecewiseLinear { times, matrices } => {
                TimePSDPath::piecewise_linear(times.clone(), matrices.iter().map(|m| rows(m)).collect::<Result<_>>()?)
            }
            PathSpec::SinusoidalPsd { eigenvalues, omega, phase, plane } => TimePSDPath::sinusoidal(eigenvalues.clone(), *omega, *phase, *plane),
            PathSpec::Rank1Vanishing { v, period, phase } => TimePSDPath::rank1_vanishing(v.clone(), *period, *phase),
        }
    }

    /// e^{tA} P(t) e^{tA^*}.
    pub fn conjugated(inner: Arc<TimePSDPath>, a: Matrix) -> Result<Self> {
        if a.nrows() != inner.dim || a.ncols() != inner.dim {
            return Err(HypouError::DimensionMismatch("conjugating matrix size".into()));
        }
        Ok(TimePSDPath { dim: inner.dim, kind: Kind::Conjugated { inner, a }, spec: None })
    }

    pub fn sum(parts: Vec<Arc<TimePSDPath>>) -> Result<Self> {
        let dim = parts.first().ok_or_else(|| HypouError::InvalidArgument("empty path sum".into()))?.dim;
        if parts.iter().any(|p| p.dim != dim) {
            return Err(HypouError::DimensionMismatch("summed paths differ in size".into()));
        }
        Ok(TimePSDPath { dim, kind: Kind::Sum(parts), spec: None })
    }

    /// Part of P(t) carried by the columns `keep` of its square root.
    pub fn directional_part(inner: Arc<TimePSDPath>, keep: Vec<usize>) -> Result<Self> {
        if keep.iter().any(|&j| j >= inner.dim) {
            return Err(HypouError::InvalidArgument("direction index out of range".into()));
        }
        Ok(TimePSDPath { dim: inner.dim, kind: Kind::Directions { inner, keep }, spec: None })
    }

    /// Descriptor, if the path is one of the serialisable kinds.
    pub fn spec(&self) -> Option<&PathSpec> {
        self.spec.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, t: f64) -> Matrix {
        match &self.kind {
            Kind::Constant(m) => m.clone(),
            Kind::PiecewiseLinear { times, mats } => {
                if t <= times[0] {
                    return mats[0].clone();
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return mats[last].clone();
                }
                let j = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[j]) / (times[j + 1] - times[j]);
                &mats[j] * (1.0 - w) + &mats[j + 1] * w
            }
            Kind::Sinusoidal { diag, omega, phase, plane } => {
                let n = diag.len();
                let mut r = Matrix::identity(n, n);
                if n >= 2 {
                    let th = omega * t + phase;
                    let (s, c) = th.sin_cos();
                    let [i, j] = *plane;
                    r[(i, i)] = c;
                    r[(i, j)] = -s;
                    r[(j, i)] = s;
                    r[(j, j)] = c;
                }
                let d = Matrix::from_diagonal(&linalg::Vector::from_vec(diag.clone()));
                linalg::symmetrize(&(&r * d * r.transpose()))
            }
            Kind::Rank1 { v, period, phase } => {
                let s = (2.0 * PI * t / period + phase).sin().max(0.0);
                let v = linalg::Vector::from_vec(v.clone());
                &v * v.transpose() * s
            }
            Kind::Conjugated { inner, a } => {
                let e = linalg::expm(a, t);
                linalg::symmetrize(&(&e * inner.evaluate(t) * e.transpose()))
            }
            Kind::Sum(parts) => {
                let mut m = Matrix::zeros(self.dim, self.dim);
                for p in parts {
                    m += p.evaluate(t);
                }
                m
            }
            Kind::Directions { inner, keep } => {
                let r = linalg::psd_sqrt(&inner.evaluate(t));
                let mut m = Matrix::zeros(self.dim, self.dim);
                for &j in keep {
                    let c = r.column(j);
                    m += &c * c.transpose();
                }
                m
            }
        }
    }

    /// Times in (0, horizon) where the path has a kink; quadrature splits there.
    pub fn kinks(&self, horizon: f64) -> Vec<f64> {
        let mut out = match &self.kind {
            Kind::PiecewiseLinear { times, .. } => times.clone(),
            Kind::Rank1 { period, phase, .. } => {
                // zeros of sin(2 pi t / period + phase)
                let mut z = vec![];
                let m0 = ((phase) / PI).floor() as i64 - 1;
                let mut m = m0;
                loop {
                    let t = (m as f64 * PI - phase) * period / (2.0 * PI);
                    if t >= horizon {
                        break;
                    }
                    if t > 0.0 {
                        z.push(t);
                    }
                    m += 1;
                }
                z
            }
            Kind::Conjugated { inner, .. } | Kind::Directions { inner, .. } => inner.kinks(horizon),
            Kind::Sum(parts) => parts.iter().flat_map(|p| p.kinks(horizon)).collect(),
            _ => vec![],
        };
        out.retain(|&t| t > 0.0 && t < horizon);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * horizon.max(1.0));
        out
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            Kind::Constant(_) => true,
            Kind::Sinusoidal { diag, omega, .. } => *omega == 0.0 || diag.windows(2).all(|w| w[0] == w[1]),
            Kind::Conjugated { inner, a } => inner.is_constant() && a.amax() == 0.0,
            Kind::Sum(parts) => parts.iter().all(|p| p.is_constant()),
            Kind::Directions { inner, .. } => inner.is_constant(),
            _ => false,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match &self.kind {
            Kind::Constant(m) => m.amax() == 0.0,
            Kind::PiecewiseLinear { mats, .. } => mats.iter().all(|m| m.amax() == 0.0),
            Kind::Sinusoidal { diag, .. } => diag.iter().all(|&d| d == 0.0),
            Kind::Rank1 { v, .. } => v.iter().all(|&x| x == 0.0),
            Kind::Conjugated { inner, .. } => inner.is_identically_zero(),
            Kind::Sum(parts) => parts.iter().all(|p| p.is_identically_zero()),
            Kind::Directions { inner, keep } => keep.is_empty() || inner.is_identically_zero(),
        }
    }

    /// Largest Frobenius jump between consecutive samples on a uniform grid of `n` steps.
    pub fn continuity_certificate(&self, horizon: f64, n: usize) -> f64 {
        let mut prev = self.evaluate(0.0);
        let mut worst = 0.0f64;
        for i in 1..=n {
            let cur = self.evaluate(horizon * i as f64 / n as f64);
            worst = worst.max((&cur - &prev).norm());
            prev = cur;
        }
        worst
    }

    /// sup_t lambda_max(P(t)) estimated on a uniform sampling plus the kinks.
    pub fn max_eigenvalue(&self, horizon: f64) -> f64 {
        let mut ts: Vec<f64> = (0..=128).map(|i| horizon * i as f64 / 128.0).collect();
        ts.extend(self.kinks(horizon));
        ts.iter().map(|&t| linalg::max_eigenvalue(&self.evaluate(t))).fold(0.0, f64::max)
    }
}

fn rows(r: &[Vec<f64>]) -> Result<Matrix> {
    linalg::from_rows(r).ok_or_else(|| HypouError::DimensionMismatch("ragged matrix".into()))
}

fn validate_psd(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(HypouError::DimensionMismatch("path matrix must be square".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(HypouError::InvalidArgument("non-finite path matrix".into()));
    }
    if !linalg::is_symmetric(m, 1e-12) {
        return Err(HypouError::InvalidArgument("path matrix is not symmetric".into()));
    }
    linalg::clamp_psd(m, PSD_TOL).ok_or_else(|| HypouError::InvalidArgument(format!("path matrix is not PSD: min eigenvalue {}", linalg::min_eigenvalue(m))))
}
