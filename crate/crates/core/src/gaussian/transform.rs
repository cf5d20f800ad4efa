//! Lagrange interpolation on uniform grids and the drift-removal change of variables.

use super::grid::{Field, SpaceTimeGrid};
use crate::error::{HypouError, Result};
use crate::linalg::{self, Matrix};

const MAX_ORDER: usize = 8;
const MAX_DIM: usize = 6;

/// Tensor-product Lagrange interpolation with `order` points per axis (4 = cubic, 6 = quintic).
#[derive(Clone, Copy, Debug)]
pub struct Interpolator {
    order: usize,
}

impl Interpolator {
    pub fn new(order: usize) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&order) || order % 2 != 0 {
            return Err(HypouError::InvalidArgument(format!("interpolation order must be even and in [2, {MAX_ORDER}], got {order}")));
        }
        Ok(Interpolator { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Value at `x`, or `None` if `x` lies outside the grid box.
    pub fn eval(&self, values: &[f64], grid: &SpaceTimeGrid, x: &[f64]) -> Option<f64> {
        let d = grid.dim();
        assert!(d <= MAX_DIM);
        let p = self.order;
        let mut starts = [0usize; MAX_DIM];
        let mut weights = [[0.0f64; MAX_ORDER]; MAX_DIM];
        for j in 0..d {
            let n = grid.n[j];
            let u = (x[j] - grid.lo[j]) / grid.spacing(j);
            if !(u >= -1e-9 && u <= (n - 1) as f64 + 1e-9) {
                return None;
            }
            let p_eff = p.min(n);
            let s = (u.floor() as i64 - (p_eff as i64 / 2 - 1)).clamp(0, (n - p_eff) as i64) as usize;
            starts[j] = s;
            let r = u - s as f64;
            let ri = r.round();
            if (r - ri).abs() < 1e-12 && ri >= 0.0 && (ri as usize) < p_eff {
                for m in 0..p_eff {
                    weights[j][m] = if m == ri as usize { 1.0 } else { 0.0 };
                }
            } else {
                for m in 0..p_eff {
                    let mut w = 1.0;
                    for q in 0..p_eff {
                        if q != m {
                            w *= (r - q as f64) / (m as f64 - q as f64);
                        }
                    }
                    weights[j][m] = w;
                }
            }
            for m in p_eff..MAX_ORDER {
                weights[j][m] = 0.0;
            }
        }
        let strides = grid.strides();
        let p_axes: Vec<usize> = (0..d).map(|j| p.min(grid.n[j])).collect();
        let mut idx = [0usize; MAX_DIM];
        let mut sum = 0.0;
        loop {
            let mut w = 1.0;
            let mut flat = 0;
            for j in 0..d {
                w *= weights[j][idx[j]];
                flat += (starts[j] + idx[j]) * strides[j];
            }
            if w != 0.0 {
                sum += w * values[flat];
            }
            let mut j = d;
            loop {
                if j == 0 {
                    return Some(sum);
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < p_axes[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
}

/// Checks that `m * box(target)` stays inside `source`'s box (images of corners suffice).
fn check_mapped_box(m: &Matrix, target: &SpaceTimeGrid, source: &SpaceTimeGrid, t: f64) -> Result<()> {
    let d = target.dim();
    let mut corner = vec![0.0; d];
    let mut img = vec![0.0; d];
    for mask in 0..(1usize << d) {
        for j in 0..d {
            corner[j] = if mask >> j & 1 == 1 { target.hi[j] } else { target.lo[j] };
        }
        linalg::mat_vec(m, &corner, &mut img);
        for j in 0..d {
            if img[j] < source.lo[j] - 1e-9 || img[j] > source.hi[j] + 1e-9 {
                return Err(HypouError::Coverage(format!(
                    "at t = {t:.4} the corner {corner:?} maps to {img:?}, outside the sampled box on axis {j} [{}, {}]",
                    source.lo[j], source.hi[j]
                )));
            }
        }
    }
    Ok(())
}

/// out(t, z) = field(t, e^{sign t A} z), resampled on `target`.
fn warp(field: &Field, a: &Matrix, sign: f64, target: &SpaceTimeGrid, interp: Interpolator, label: &str) -> Result<Field> {
    let g = &field.grid;
    if target.dim() != g.dim() || a.nrows() != g.dim() {
        return Err(HypouError::DimensionMismatch("warp: dimensions differ".into()));
    }
    if target.nt != g.nt || target.horizon != g.horizon {
        return Err(HypouError::DimensionMismatch("warp: time grids differ".into()));
    }
    let mut out = Field::zeros(target.clone(), label);
    out.provenance.seed = field.provenance.seed;
    out.provenance.solver = format!("{label}({})", field.provenance.solver);
    let ns = target.n_space();
    let d = g.dim();
    let mut z = vec![0.0; d];
    let mut y = vec![0.0; d];
    for n in 0..=g.nt {
        let t = g.time(n);
        let m = linalg::expm(a, sign * t);
        check_mapped_box(&m, target, g, t)?;
        let src = field.slice(n);
        let dst = &mut out.values[n * ns..(n + 1) * ns];
        for (i, o) in dst.iter_mut().enumerate() {
            target.point(i, &mut z);
            linalg::mat_vec(&m, &z, &mut y);
            for j in 0..d {
                y[j] = y[j].clamp(g.lo[j], g.hi[j]);
            }
            *o = interp.eval(src, g, &y).expect("clamped point lies in the box");
        }
    }
    Ok(out)
}

/// u(t, z) = v(t, e^{tA} z).
pub fn push_to_ou(v: &Field, a: &Matrix, target: &SpaceTimeGrid, interp: Interpolator) -> Result<Field> {
    warp(v, a, 1.0, target, interp, "push")
}

/// v(t, z) = u(t, e^{-tA} z).
pub fn pull_to_driftless(u: &Field, a: &Matrix, target: &SpaceTimeGrid, interp: Interpolator) -> Result<Field> {
    warp(u, a, -1.0, target, interp, "pull")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        let g = SpaceTimeGrid::new(1.0, 2, vec![-1.0, -1.0], vec![1.0, 1.0], vec![11, 11]).unwrap();
        let f = Field::from_fn(g.clone(), "p", |_, z| z[0].powi(5) - 2.0 * z[0] * z[1].powi(3) + 1.0);
        let it = Interpolator::new(6).unwrap();
        for x in [[0.13, -0.77], [0.99, 0.95], [-1.0, 0.31]] {
            let v = it.eval(f.slice(0), &g, &x).unwrap();
            let e = x[0].powi(5) - 2.0 * x[0] * x[1].powi(3) + 1.0;
            assert!((v - e).abs() < 1e-12, "{v} {e}");
        }
        assert!(it.eval(f.slice(0), &g, &[1.2, 0.0]).is_none());
    }

    #[test]
    fn identity_when_a_is_zero() {
        let g = SpaceTimeGrid::new(1.0, 2, vec![-2.0; 2], vec![2.0; 2], vec![9, 9]).unwrap();
        let f = Field::from_fn(g.clone(), "p", |t, z| t * (-z[0] * z[0] - z[1] * z[1]).exp());
        let p = push_to_ou(&f, &Matrix::zeros(2, 2), &g, Interpolator::new(4).unwrap()).unwrap();
        assert_eq!(p.values, f.values);
    }

    #[test]
    fn coverage_error() {
        let g = SpaceTimeGrid::new(1.0, 2, vec![-2.0; 2], vec![2.0; 2], vec![9, 9]).unwrap();
        let f = Field::zeros(g.clone(), "z");
        let a = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(push_to_ou(&f, &a, &g, Interpolator::new(4).unwrap()), Err(HypouError::Coverage(_))));
    }
}
