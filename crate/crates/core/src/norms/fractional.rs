//! p.v. int [u(z + E_i w) - u(z)] |w|^{-(d_i + 2 beta)} dw on a grid.
//!
//! Outside the box u is continued by the affine function through the end values of each line
//! (1-D blocks) or by the mean boundary value (larger blocks). The operator annihilates that
//! continuation, so it is subtracted and the remainder is extended by zero; for decaying fields
//! this is plain zero extension.

use std::f64::consts::PI;

use crate::error::{HypouError, Result};
use crate::gaussian::grid::SpaceTimeGrid;
use crate::gaussian::quadrature::gauss_legendre;
use crate::structure::BlockStructure;

/// Multiplier constant: the operator acts on e^{ik.w} as -C |k|^{2 beta}, with
/// C = pi^{d/2} |Gamma(-beta)| / (4^beta Gamma(d/2 + beta)).
pub fn fractional_kernel_constant(d: usize, beta: f64) -> f64 {
    let gm = |x: f64| libm_gamma(x);
    PI.powf(d as f64 / 2.0) * gm(-beta).abs() / (4f64.powf(beta) * gm(d as f64 / 2.0 + beta))
}

/// Lanczos approximation (g = 7), reflection for x < 1/2.
fn libm_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * libm_gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Weights W_j with int_0^{M h} q(w) w^e dw ~ sum_j W_j q(j h): composite product-Simpson,
/// exact moments on the first panel (where w^e may be singular), Gauss–Legendre elsewhere.
fn product_simpson_weights(h: f64, e: f64, m: usize) -> Vec<f64> {
    debug_assert!(m % 2 == 0 && m >= 2);
    let mut w = vec![0.0; m + 1];
    let basis = |s: f64| [(s - 1.0) * (s - 2.0) / 2.0, -s * (s - 2.0), s * (s - 1.0) / 2.0];
    // first panel: int_0^2 L_k(s) (h s)^e h ds via moments int_0^2 s^{p+e} ds
    let mo = |p: f64| 2f64.powf(p + e + 1.0) / (p + e + 1.0);
    let (m0, m1, m2) = (mo(0.0), mo(1.0), mo(2.0));
    let sc = h.powf(e + 1.0);
    w[0] += sc * (m2 - 3.0 * m1 + 2.0 * m0) / 2.0;
    w[1] += sc * (2.0 * m1 - m2);
    w[2] += sc * (m2 - m1) / 2.0;
    let (gx, gw) = gauss_legendre(8);
    for panel in 1..m / 2 {
        let a = 2.0 * panel as f64;
        for (x, wt) in gx.iter().zip(&gw) {
            let s = 1.0 + x;
            let ker = (h * (a + s)).powf(e) * h * wt;
            let b = basis(s);
            for k in 0..3 {
                w[2 * panel + k] += b[k] * ker;
            }
        }
    }
    w
}

/// Folds q0 = (4 q1 - q2) / 3 and the 1 / w^2 factor into the product weights.
fn line_weights(weights: &[f64], h: f64) -> Vec<f64> {
    let mut c = weights.to_vec();
    c[1] += 4.0 * weights[0] / 3.0;
    c[2] -= weights[0] / 3.0;
    c[0] = 0.0;
    for (j, v) in c.iter_mut().enumerate().skip(1) {
        *v /= (j as f64 * h).powi(2);
    }
    c
}

/// Along one axis with spacing h and n nodes; `cw` from `line_weights`.
fn apply_1d(line: &[f64], h: f64, beta: f64, cw: &[f64], out: &mut [f64]) {
    let n = line.len();
    let m = cw.len() - 1;
    let tail = (m as f64 * h).powf(-2.0 * beta) / beta;
    let wsum: f64 = cw.iter().sum();
    for (c, o) in out.iter_mut().enumerate() {
        let u = line[c];
        // values outside the line are zero
        let mut acc = 0.0;
        for j in 1..=m.min(n - 1 - c) {
            acc += line[c + j] * cw[j];
        }
        for j in 1..=m.min(c) {
            acc += line[c - j] * cw[j];
        }
        *o = acc - 2.0 * u * wsum - u * tail;
    }
}

/// int over [0, a]^d of |u|^s du for s > -d, by the Duffy split into d pyramids.
fn cube_power_integral(d: usize, a: f64, s: f64) -> f64 {
    if d == 1 {
        return a.powf(s + 1.0) / (s + 1.0);
    }
    let (gx, gw) = gauss_legendre(10);
    let m = d - 1;
    let total = gx.len().pow(m as u32);
    let mut inner = 0.0;
    for flat in 0..total {
        let mut r = flat;
        let mut w = 1.0;
        let mut norm2 = 1.0;
        for _ in 0..m {
            let k = r % gx.len();
            r /= gx.len();
            let v = 0.5 * (1.0 + gx[k]);
            w *= 0.5 * gw[k];
            norm2 += v * v;
        }
        inner += w * norm2.powf(s / 2.0);
    }
    d as f64 * a.powf(s + d as f64) / (s + d as f64) * inner
}

/// Fractional operator of order beta along block `block`, evaluated at every node of `slice`.
pub fn frac_laplacian(slice: &[f64], grid: &SpaceTimeGrid, block: usize, beta: f64, bs: &BlockStructure) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(HypouError::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")));
    }
    if block > bs.k || bs.n != grid.dim() || slice.len() != grid.n_space() {
        return Err(HypouError::DimensionMismatch("block, structure or slice does not match the grid".into()));
    }
    let axes: Vec<usize> = bs.range(block).collect();
    let strides = grid.strides();
    let mut out = vec![0.0; slice.len()];
    if axes.len() == 1 {
        let ax = axes[0];
        let n = grid.n[ax];
        let h = grid.spacing(ax);
        let m = (n - 1) + (n - 1) % 2;
        let weights = line_weights(&product_simpson_weights(h, 1.0 - 2.0 * beta, m.max(2)), h);
        let mut line = vec![0.0; n];
        let mut res = vec![0.0; n];
        for start in 0..slice.len() {
            // line starts are the nodes whose index along `ax` is zero
            if (start / strides[ax]) % n != 0 {
                continue;
            }
            let (a, b) = (slice[start], slice[start + (n - 1) * strides[ax]]);
            for i in 0..n {
                let s = i as f64 / (n - 1) as f64;
                line[i] = slice[start + i * strides[ax]] - (a + (b - a) * s);
            }
            apply_1d(&line, h, beta, &weights, &mut res);
            for i in 0..n {
                out[start + i * strides[ax]] = res[i];
            }
        }
        return Ok(out);
    }
    lattice(slice, grid, &axes, beta, &mut out)?;
    Ok(out)
}

/// Blocks of dimension >= 2: midpoint lattice sum over all offsets in reach, the origin cell
/// replaced by its Taylor term and the far field by the exact integral outside a ball.
fn lattice(slice: &[f64], grid: &SpaceTimeGrid, axes: &[usize], beta: f64, out: &mut [f64]) -> Result<()> {
    let d = axes.len();
    let h = grid.spacing(axes[0]);
    if axes.iter().any(|&a| (grid.spacing(a) - h).abs() > 1e-12 * h) {
        return Err(HypouError::InvalidArgument("multi-dimensional blocks need equal spacings".into()));
    }
    let strides = grid.strides();
    let dims = grid.dim();
    let vol = h.powi(d as i32);
    let expo = -(d as f64) - 2.0 * beta;
    let reach: Vec<i64> = axes.iter().map(|&a| grid.n[a] as i64 - 1).collect();
    let mut offsets: Vec<(Vec<i64>, f64)> = vec![];
    let count: usize = reach.iter().map(|r| (2 * r + 1) as usize).product();
    let mut mvec = vec![0i64; d];
    let mut kernel_sum = 0.0;
    for flat in 0..count {
        let mut r = flat;
        let mut norm2 = 0.0;
        for j in 0..d {
            let span = (2 * reach[j] + 1) as usize;
            mvec[j] = (r % span) as i64 - reach[j];
            r /= span;
            norm2 += (mvec[j] as f64 * h).powi(2);
        }
        if norm2 == 0.0 {
            continue;
        }
        let k = norm2.powf(expo / 2.0) * vol;
        kernel_sum += k;
        offsets.push((mvec.clone(), k));
    }
    // far field: the region outside the lattice box is approximated by the outside of the ball
    // of the same volume
    let box_vol: f64 = reach.iter().map(|&r| (2 * r + 1) as f64 * h).product();
    let unit_ball = PI.powf(d as f64 / 2.0) / libm_gamma(d as f64 / 2.0 + 1.0);
    let radius = (box_vol / unit_ball).powf(1.0 / d as f64);
    let sphere = d as f64 * unit_ball;
    let tail = sphere * radius.powf(-2.0 * beta) / (2.0 * beta);
    // origin cell: (1/2) Lap u (1/d) int_cell |w|^{2 - d - 2 beta}
    let cell = 2f64.powi(d as i32) * cube_power_integral(d, 0.5 * h, 2.0 - d as f64 - 2.0 * beta) / d as f64;
    let mut idx = vec![0usize; dims];
    // mean over the block boundary of each fibre, keyed by the off-block indices
    let mut fibre_sum: std::collections::HashMap<Vec<usize>, (f64, usize)> = std::collections::HashMap::new();
    for p in 0..slice.len() {
        grid.unravel(p, &mut idx);
        if axes.iter().any(|&a| idx[a] == 0 || idx[a] + 1 == grid.n[a]) {
            let key: Vec<usize> = (0..dims).filter(|j| !axes.contains(j)).map(|j| idx[j]).collect();
            let e = fibre_sum.entry(key).or_insert((0.0, 0));
            e.0 += slice[p];
            e.1 += 1;
        }
    }
    let level = |idx: &[usize]| -> f64 {
        let key: Vec<usize> = (0..dims).filter(|j| !axes.contains(j)).map(|j| idx[j]).collect();
        let (s, c) = fibre_sum[&key];
        s / c as f64
    };
    let mut shifted = vec![0.0; slice.len()];
    for (p, v) in shifted.iter_mut().enumerate() {
        grid.unravel(p, &mut idx);
        *v = slice[p] - level(&idx);
    }
    let slice = &shifted[..];
    for (p, o) in out.iter_mut().enumerate() {
        grid.unravel(p, &mut idx);
        let u = slice[p];
        let mut acc = -u * (kernel_sum + tail);
        'off: for (m, k) in &offsets {
            let mut q = p as i64;
            for j in 0..d {
                let ni = idx[axes[j]] as i64 + m[j];
                if ni < 0 || ni >= grid.n[axes[j]] as i64 {
                    continue 'off;
                }
                q += m[j] * strides[axes[j]] as i64;
            }
            acc += slice[q as usize] * k;
        }
        // Laplacian along the block (zero outside the box)
        let mut lap = 0.0;
        for &a in axes {
            let up = if idx[a] + 1 < grid.n[a] { slice[p + strides[a]] } else { 0.0 };
            let dn = if idx[a] > 0 { slice[p - strides[a]] } else { 0.0 };
            lap += (up - 2.0 * u + dn) / (h * h);
        }
        *o = acc + 0.5 * lap * cell;
    }
    Ok(())
}
