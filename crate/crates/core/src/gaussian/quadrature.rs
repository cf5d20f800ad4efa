//! Adaptive Gauss–Kronrod quadrature for matrix-valued integrands and Gauss–Hermite rules.

use crate::error::{HypouError, Result};
use crate::linalg::Matrix;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_DEPTH: usize = 40;

fn gk15(f: &dyn Fn(f64) -> Matrix, a: f64, b: f64) -> (Matrix, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = &fc * WGK[7];
    let mut g = &fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += &s * WGK[j];
        if j % 2 == 1 {
            g += &s * WG[j / 2];
        }
    }
    k *= h;
    g *= h;
    let err = (&k - &g).amax();
    (k, err)
}

/// Integrates a matrix-valued function over [a, b], splitting at `breaks`.
/// Succeeds when the Kronrod/Gauss difference is below `tol * max(1, |I|)` entrywise.
pub fn integrate_matrix(f: &dyn Fn(f64) -> Matrix, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<Matrix> {
    let probe = f(a);
    if b <= a {
        return Ok(Matrix::zeros(probe.nrows(), probe.ncols()));
    }
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    pts.push(b);
    let mut total = Matrix::zeros(probe.nrows(), probe.ncols());
    for w in pts.windows(2) {
        let scale = (w[1] - w[0]) / (b - a);
        total += adapt(f, w[0], w[1], tol * scale, 0)?;
    }
    Ok(total)
}

fn adapt(f: &dyn Fn(f64) -> Matrix, a: f64, b: f64, tol: f64, depth: usize) -> Result<Matrix> {
    let (k, err) = gk15(f, a, b);
    if err <= tol * k.amax().max(1.0) || err < 1e-15 * (b - a) {
        return Ok(k);
    }
    if depth >= MAX_DEPTH {
        return Err(HypouError::Quadrature(format!("no convergence on [{a}, {b}], error estimate {err:e}")));
    }
    let m = 0.5 * (a + b);
    Ok(adapt(f, a, m, 0.5 * tol, depth + 1)? + adapt(f, m, b, 0.5 * tol, depth + 1)?)
}

pub fn integrate_scalar(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let g = |t: f64| Matrix::from_element(1, 1, f(t));
    Ok(integrate_matrix(&g, a, b, &[], tol)?[(0, 0)])
}

/// Nodes and weights for E[g(X)], X ~ N(0, 1) (probabilists' Hermite, Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut j = Matrix::zeros(n, n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let (vals, vecs) = crate::linalg::sym_eigen(&j);
    let w: Vec<f64> = (0..n).map(|c| vecs[(0, c)] * vecs[(0, c)]).collect();
    let s: f64 = w.iter().sum();
    (vals, w.into_iter().map(|x| x / s).collect())
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pm) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            let dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let (qn, qm) = if n == 1 { (z, 1.0) } else { (q1, q0) };
                let d = n as f64 * (z * qn - qm) / (z * z - 1.0);
                w[i] = 2.0 / ((1.0 - z * z) * d * d);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}
