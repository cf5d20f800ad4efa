//! Integral-form residual of a sampled field.

use super::grid::Field;
use super::path::TimePSDPath;
use super::source::Source;

/// max over interior nodes of |v(t, z) - int_0^t (f + Tr(Q D^2 v)) ds|, with centred second
/// differences and trapezoidal time integration. A one-node band at the boundary is skipped.
pub fn residual(field: &Field, q: &TimePSDPath, f: &dyn Source) -> f64 {
    let g = &field.grid;
    let d = g.dim();
    let ns = g.n_space();
    let strides = g.strides();
    let h = g.spacings();
    let ranges: Vec<(usize, usize)> = (0..d).map(|j| (1, g.n[j] - 1)).collect();
    let interior: Vec<usize> = (0..ns)
        .filter(|&p| {
            let mut idx = vec![0; d];
            g.unravel(p, &mut idx);
            (0..d).all(|j| idx[j] >= ranges[j].0 && idx[j] < ranges[j].1)
        })
        .collect();
    let breaks = f.time_breakpoints(g.horizon);
    let is_break = |t: f64| breaks.iter().any(|b| (b - t).abs() <= 1e-12 * g.horizon);
    let mut z = vec![0.0; d];
    // integrand at each time, right and left values
    let integrand = |n: usize, left: bool, p: usize, z: &[f64]| -> f64 {
        let t = g.time(n);
        let qm = q.evaluate(t);
        let v = field.slice(n);
        let mut tr = 0.0;
        for a in 0..d {
            for b in 0..d {
                if qm[(a, b)] == 0.0 {
                    continue;
                }
                let dab = if a == b {
                    (v[p + strides[a]] - 2.0 * v[p] + v[p - strides[a]]) / (h[a] * h[a])
                } else {
                    (v[p + strides[a] + strides[b]] - v[p + strides[a] - strides[b]] - v[p - strides[a] + strides[b]] + v[p - strides[a] - strides[b]])
                        / (4.0 * h[a] * h[b])
                };
                tr += qm[(a, b)] * dab;
            }
        }
        let fv = if left { f.eval_left(t, z) } else { f.eval(t, z) };
        fv + tr
    };
    let mut worst = 0.0f64;
    for &p in &interior {
        g.point(p, &mut z);
        let mut acc = 0.0;
        let mut prev = integrand(0, false, p, &z);
        for n in 1..=g.nt {
            let dt = g.time(n) - g.time(n - 1);
            let t = g.time(n);
            let cur_left = integrand(n, is_break(t), p, &z);
            acc += 0.5 * dt * (prev + cur_left);
            worst = worst.max((field.slice(n)[p] - acc).abs());
            prev = if is_break(t) { integrand(n, false, p, &z) } else { cur_left };
        }
    }
    worst
}
