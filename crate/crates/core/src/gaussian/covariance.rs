//! Gaussian increment laws: covariances of the driftless and OU noises, and the OU density.

use std::f64::consts::PI;

use super::path::TimePSDPath;
use super::quadrature::integrate_matrix;
use crate::error::{HypouError, Result};
use crate::linalg::{self, Matrix, Vector, PSD_TOL};
use crate::structure::{scale_matrix, BlockStructure, OUSystem};

pub const DEFAULT_QUAD_TOL: f64 = 1e-12;

/// e^{tA}.
pub fn matrix_exp(a: &Matrix, t: f64) -> Matrix {
    linalg::expm(a, t)
}

/// Law of a Gaussian increment: mean, covariance and a factor F with F F^* = covariance.
#[derive(Clone, Debug)]
pub struct GaussianIncrementLaw {
    pub mean: Vector,
    pub covariance: Matrix,
    pub factor: Matrix,
}

impl GaussianIncrementLaw {
    pub fn centered(covariance: Matrix) -> Result<Self> {
        let n = covariance.nrows();
        let covariance = linalg::clamp_psd(&covariance, PSD_TOL)
            .ok_or_else(|| HypouError::InvalidArgument(format!("covariance not PSD: min eigenvalue {}", linalg::min_eigenvalue(&covariance))))?;
        let factor = linalg::psd_sqrt(&covariance);
        Ok(GaussianIncrementLaw { mean: Vector::zeros(n), covariance, factor })
    }

    /// Non-degenerate whitened directions: columns `sqrt(lambda_j) v_j` for eigenvalues above `rel_tol * lambda_max`.
    pub fn whitened_directions(&self, rel_tol: f64) -> Matrix {
        let (vals, vecs) = linalg::sym_eigen(&self.covariance);
        let lmax = vals.last().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..vals.len()).filter(|&j| lmax > 0.0 && vals[j] > rel_tol * lmax).collect();
        Matrix::from_fn(self.covariance.nrows(), keep.len(), |r, c| vecs[(r, keep[c])] * vals[keep[c]].sqrt())
    }
}

/// 2 * int_s^t Q(r) dr.
pub fn increment_covariance(q: &TimePSDPath, s: f64, t: f64, tol: f64) -> Result<GaussianIncrementLaw> {
    if !(t >= s) {
        return Err(HypouError::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let c = integrate_matrix(&|r| q.evaluate(r), s, t, &q.kinks(t), tol)? * 2.0;
    GaussianIncrementLaw::centered(linalg::symmetrize(&c))
}

/// Covariance of sqrt(2) int_s^t e^{(t-r)A} B^{1/2} dW_r, i.e. 2 int_0^{t-s} e^{rA} B e^{rA^*} dr.
pub fn ou_covariance(sys: &OUSystem, s: f64, t: f64) -> Result<GaussianIncrementLaw> {
    ou_covariance_tol(sys, s, t, DEFAULT_QUAD_TOL)
}

pub fn ou_covariance_tol(sys: &OUSystem, s: f64, t: f64, tol: f64) -> Result<GaussianIncrementLaw> {
    if !(t >= s) {
        return Err(HypouError::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let b = sys.diffusion();
    let a = sys.a();
    let f = |r: f64| {
        let e = linalg::expm(a, r);
        &e * &b * e.transpose()
    };
    let c = integrate_matrix(&f, 0.0, t - s, &[], tol)? * 2.0;
    GaussianIncrementLaw::centered(linalg::symmetrize(&c))
}

/// Mean, inverse covariance and normalising constant of p^ou(v, z, .).
struct DensityParts {
    mean: Vector,
    inv: Matrix,
    norm: f64,
    expav: Matrix,
}

fn density_parts(sys: &OUSystem, v: f64, z: &[f64]) -> Result<DensityParts> {
    if !(v > 0.0) {
        return Err(HypouError::SingularCovariance(format!("time {v} is not positive")));
    }
    if !sys.is_hypoelliptic() {
        return Err(HypouError::SingularCovariance("system is not hypoelliptic".into()));
    }
    let n = sys.n();
    let law = ou_covariance(sys, 0.0, v)?;
    let (vals, _) = linalg::sym_eigen(&law.covariance);
    let (lmin, lmax) = (vals[0], vals[n - 1]);
    if !(lmin > 0.0) || lmax / lmin > 1e12 {
        return Err(HypouError::SingularCovariance(format!("condition number {:e} at v = {v}", lmax / lmin)));
    }
    let inv = law.covariance.clone().try_inverse().ok_or_else(|| HypouError::SingularCovariance("inversion failed".into()))?;
    let det: f64 = vals.iter().product();
    let expav = linalg::expm(sys.a(), v);
    let mean = &expav * Vector::from_column_slice(z);
    Ok(DensityParts { mean, inv, norm: 1.0 / ((2.0 * PI).powi(n as i32) * det).sqrt(), expav })
}

/// Gaussian density with mean e^{Av} z and covariance `ou_covariance(0, v)`, evaluated at z'.
pub fn ou_density(sys: &OUSystem, v: f64, z: &[f64], zp: &[f64]) -> Result<f64> {
    let p = density_parts(sys, v, z)?;
    let d = Vector::from_column_slice(zp) - &p.mean;
    Ok(p.norm * (-0.5 * (d.transpose() * &p.inv * &d)[(0, 0)]).exp())
}

/// Density evaluator that reuses the covariance for many (z, z') pairs at a fixed time.
pub struct OuDensity {
    parts: DensityParts,
    n: usize,
}

impl OuDensity {
    pub fn new(sys: &OUSystem, v: f64) -> Result<Self> {
        Ok(OuDensity { parts: density_parts(sys, v, &vec![0.0; sys.n()])?, n: sys.n() })
    }

    pub fn eval(&self, z: &[f64], zp: &[f64]) -> f64 {
        let m = &self.parts.expav * Vector::from_column_slice(z);
        let d = Vector::from_column_slice(zp) - m;
        self.parts.norm * (-0.5 * (d.transpose() * &self.parts.inv * &d)[(0, 0)]).exp()
    }

    /// Hessian of z -> p(v, z, z'), closed form.
    pub fn hessian_z(&self, z: &[f64], zp: &[f64]) -> Matrix {
        let m = &self.parts.expav * Vector::from_column_slice(z);
        let d = Vector::from_column_slice(zp) - m;
        let p = self.parts.norm * (-0.5 * (d.transpose() * &self.parts.inv * &d)[(0, 0)]).exp();
        let g = &self.parts.inv * &d;
        let inner = &g * g.transpose() - &self.parts.inv;
        (self.parts.expav.transpose() * inner * &self.parts.expav) * p
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Frobenius norm of the x-block of the Hessian of z -> p^ou(v, z, z').
pub fn ou_density_d2x(sys: &OUSystem, v: f64, z: &[f64], zp: &[f64]) -> Result<f64> {
    let h = OuDensity::new(sys, v)?.hessian_z(z, zp);
    let d0 = sys.d0();
    Ok(h.view((0, 0), (d0, d0)).norm())
}

/// Power of v in the second-derivative envelope: sum_{i=0}^{k} d_i (i + 1/2) + 1.
pub fn density_envelope_exponent(bs: &BlockStructure) -> f64 {
    (0..=bs.k).map(|i| bs.size(i) as f64 * (i as f64 + 0.5)).sum::<f64>() + 1.0
}

/// Smallest C >= 1 with |D_x^2 p| <= C v^{-a} exp(-v |T_v^{-1}(e^{Av} z - z')|^2 / C) on the given samples.
pub fn fit_envelope_constant(sys: &OUSystem, bs: &BlockStructure, samples: &[(f64, Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let a = density_envelope_exponent(bs);
    let mut c_fit = 1.0f64;
    for (v, z, zp) in samples {
        let lhs = ou_density_d2x(sys, *v, z, zp)? * v.powf(a);
        let tinv = scale_matrix(*v, bs).try_inverse().expect("diagonal scale is invertible");
        let d = linalg::expm(sys.a(), *v) * Vector::from_column_slice(z) - Vector::from_column_slice(zp);
        let phi = v * (&tinv * d).norm_squared();
        let ok = |c: f64| c * (-phi / c).exp() >= lhs;
        if ok(c_fit) {
            continue;
        }
        let mut hi = c_fit * 2.0;
        while !ok(hi) {
            hi *= 2.0;
            if hi > 1e300 {
                return Ok(f64::INFINITY);
            }
        }
        let mut lo = c_fit;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        c_fit = hi;
    }
    Ok(c_fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_identity() {
        let q = TimePSDPath::constant(Matrix::identity(2, 2)).unwrap();
        let l = increment_covariance(&q, 0.0, 1.0, 1e-12).unwrap();
        assert!((l.covariance - Matrix::identity(2, 2) * 2.0).amax() < 1e-14);
        let l = increment_covariance(&q, 0.4, 0.4, 1e-12).unwrap();
        assert_eq!(l.covariance.amax(), 0.0);
    }

    #[test]
    fn factor_reproduces() {
        let sys = OUSystem::kolmogorov();
        let l = ou_covariance(&sys, 0.0, 0.3).unwrap();
        let rec = &l.factor * l.factor.transpose();
        assert!((rec - &l.covariance).norm() / l.covariance.norm() < 1e-10);
    }

    #[test]
    fn singular_at_small_time() {
        let sys = OUSystem::kolmogorov();
        assert!(matches!(ou_density(&sys, 1e-7, &[0.0, 0.0], &[0.0, 0.0]), Err(HypouError::SingularCovariance(_))));
        assert!(ou_density(&sys, 0.1, &[0.0, 0.0], &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn hessian_matches_differences() {
        let sys = OUSystem::kolmogorov();
        let d = OuDensity::new(&sys, 0.5).unwrap();
        let z = [0.2, -0.1];
        let zp = [0.4, 0.3];
        let h = 1e-4;
        let fd = (d.eval(&[z[0] + h, z[1]], &zp) - 2.0 * d.eval(&z, &zp) + d.eval(&[z[0] - h, z[1]], &zp)) / (h * h);
        let an = d.hessian_z(&z, &zp)[(0, 0)];
        assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
    }
}
