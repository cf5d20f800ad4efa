//! Anisotropic Zygmund–Hölder norms: per-block quotients with exponent gamma / (1 + 2i).

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{inner_nodes, NormKind, NormReport};
use crate::error::{HypouError, Result};
use crate::gaussian::grid::{Field, SpaceTimeGrid};
use crate::structure::BlockStructure;

/// Vector-valued grid function: `comp[c][node]`.
type Components = Vec<Vec<f64>>;

/// Fourth-order central weights of d/dz at offsets -2..=2, in units of 1 / (12 h).
const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
/// Same for d^2/dz^2, in units of 1 / (12 h^2).
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

fn first_derivatives(v: &[f64], grid: &SpaceTimeGrid, axes: &[usize], nodes: &[usize]) -> Components {
    let strides = grid.strides();
    axes.iter()
        .map(|&a| {
            let (s, h) = (strides[a] as isize, grid.spacing(a));
            let mut out = vec![0.0; v.len()];
            for &i in nodes {
                let acc: f64 = (-2..=2isize).map(|k| D1[(k + 2) as usize] * v[(i as isize + k * s) as usize]).sum();
                out[i] = acc / (12.0 * h);
            }
            out
        })
        .collect()
}

fn second_derivatives(v: &[f64], grid: &SpaceTimeGrid, axes: &[usize], nodes: &[usize]) -> Components {
    let strides = grid.strides();
    let mut comps = vec![];
    for &a in axes {
        for &b in axes {
            let (sa, sb) = (strides[a] as isize, strides[b] as isize);
            let (ha, hb) = (grid.spacing(a), grid.spacing(b));
            let mut out = vec![0.0; v.len()];
            for &i in nodes {
                let i = i as isize;
                out[i as usize] = if a == b {
                    (-2..=2isize).map(|k| D2[(k + 2) as usize] * v[(i + k * sa) as usize]).sum::<f64>() / (12.0 * ha * ha)
                } else {
                    let mut acc = 0.0;
                    for p in -2..=2isize {
                        for q in -2..=2isize {
                            acc += D1[(p + 2) as usize] * D1[(q + 2) as usize] * v[(i + p * sa + q * sb) as usize];
                        }
                    }
                    acc / (144.0 * ha * hb)
                };
            }
            comps.push(out);
        }
    }
    comps
}

fn sup_norm(c: &Components, nodes: &[usize]) -> f64 {
    nodes.iter().map(|&i| c.iter().map(|f| f[i] * f[i]).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Lattice offsets along `axes` with 0 < |w| <= cutoff, one of each +-w pair.
fn offsets(grid: &SpaceTimeGrid, axes: &[usize], cutoff: f64) -> Vec<(Vec<i64>, f64)> {
    let reach: Vec<i64> = axes.iter().map(|&a| (cutoff / grid.spacing(a)).floor() as i64).collect();
    let count: usize = reach.iter().map(|r| (2 * r + 1) as usize).product();
    let mut out = vec![];
    let mut m = vec![0i64; axes.len()];
    for flat in 0..count {
        let mut r = flat;
        for j in 0..axes.len() {
            let span = (2 * reach[j] + 1) as usize;
            m[j] = (r % span) as i64 - reach[j];
            r /= span;
        }
        // keep the lexicographically positive representative
        match m.iter().find(|&&x| x != 0) {
            Some(&x) if x > 0 => {}
            _ => continue,
        }
        let len = axes.iter().zip(&m).map(|(&a, &k)| (k as f64 * grid.spacing(a)).powi(2)).sum::<f64>().sqrt();
        if len <= cutoff + 1e-12 {
            out.push((m.clone(), len));
        }
    }
    out
}

/// sup |F(z + w) - F(z)| / |w|^alpha, or the Zygmund form sup |F(z+w) + F(z-w) - 2F(z)| / |w|,
/// over inner nodes z and offsets w along `axes`.
fn quotient(c: &Components, grid: &SpaceTimeGrid, axes: &[usize], inside: &[bool], nodes: &[usize], alpha: f64, zygmund: bool, cutoff: f64) -> f64 {
    let strides = grid.strides();
    // (per-axis steps, flat step, 1 / denominator)
    let offs: Vec<(Vec<i64>, i64, f64)> = offsets(grid, axes, cutoff)
        .into_iter()
        .map(|(m, len)| {
            let flat = axes.iter().zip(&m).map(|(&a, &k)| k * strides[a] as i64).sum();
            (m, flat, 1.0 / if zygmund { len } else { len.powf(alpha) })
        })
        .collect();
    let d = grid.dim();
    let scalar = c.len() == 1;
    nodes
        .par_iter()
        .map(|&p| {
            let mut idx = vec![0usize; d];
            grid.unravel(p, &mut idx);
            let fits = |m: &[i64], sign: i64| axes.iter().zip(m).all(|(&a, &k)| {
                let ni = idx[a] as i64 + sign * k;
                ni >= 0 && ni < grid.n[a] as i64
            });
            let mut best = 0.0f64;
            for (m, flat, inv) in &offs {
                if !fits(m, 1) {
                    continue;
                }
                let up = (p as i64 + flat) as usize;
                if !inside[up] {
                    continue;
                }
                let diff = if zygmund {
                    if !fits(m, -1) {
                        continue;
                    }
                    let dn = (p as i64 - flat) as usize;
                    if !inside[dn] {
                        continue;
                    }
                    if scalar {
                        (c[0][up] + c[0][dn] - 2.0 * c[0][p]).abs()
                    } else {
                        c.iter().map(|f| (f[up] + f[dn] - 2.0 * f[p]).powi(2)).sum::<f64>().sqrt()
                    }
                } else if scalar {
                    (c[0][up] - c[0][p]).abs()
                } else {
                    c.iter().map(|f| (f[up] - f[p]).powi(2)).sum::<f64>().sqrt()
                };
                best = best.max(diff * inv);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 3.0) {
        return Err(HypouError::Exponent(format!(
            "gamma = {gamma}: exponents outside (0, 3) would need derivatives along a degenerate block"
        )));
    }
    Ok(())
}

/// ||u||_{C^gamma} of one slice. Block 0 carries sup norms of the derivatives below gamma and a
/// quotient of the top one; block i >= 1 a direct quotient with exponent gamma / (1 + 2i).
/// Pairs are restricted to a quarter of the inner box, so the quotients are lower bounds of the
/// continuum suprema.
pub fn holder_norm(slice: &[f64], grid: &SpaceTimeGrid, gamma: f64, bs: &BlockStructure) -> Result<NormReport> {
    check_gamma(gamma)?;
    if bs.n != grid.dim() || slice.len() != grid.n_space() {
        return Err(HypouError::DimensionMismatch("slice or block structure does not match the grid".into()));
    }
    let nodes: Vec<usize> = inner_nodes(grid, 2).into_iter().map(|(i, _)| i).collect();
    let mut inside = vec![false; slice.len()];
    nodes.iter().for_each(|&i| inside[i] = true);
    let region = grid.inner_region();
    let u: Components = vec![slice.to_vec()];
    let mut comps = BTreeMap::new();
    comps.insert("sup".to_string(), sup_norm(&u, &nodes));

    let cutoff_of = |axes: &[usize]| axes.iter().map(|&a| 0.25 * (region.hi[a] - region.lo[a])).fold(f64::INFINITY, f64::min);

    let x: Vec<usize> = bs.range(0).collect();
    let order = if gamma < 1.0 { 0 } else if gamma <= 2.0 { 1 } else { 2 };
    let top_exp = gamma - order as f64;
    // integer gamma: Zygmund quotient of the derivative one order lower
    let (zyg, fields) = if gamma == 1.0 {
        (true, u.clone())
    } else if gamma == 2.0 {
        (true, first_derivatives(slice, grid, &x, &nodes))
    } else {
        match order {
            0 => (false, u.clone()),
            1 => (false, first_derivatives(slice, grid, &x, &nodes)),
            _ => (false, second_derivatives(slice, grid, &x, &nodes)),
        }
    };
    if order >= 1 {
        comps.insert("x_d1".to_string(), sup_norm(&first_derivatives(slice, grid, &x, &nodes), &nodes));
    }
    if order == 2 {
        comps.insert("x_d2".to_string(), sup_norm(&fields, &nodes));
    }
    comps.insert("x".to_string(), quotient(&fields, grid, &x, &inside, &nodes, top_exp, zyg, cutoff_of(&x)));

    for i in 1..=bs.k {
        let axes: Vec<usize> = bs.range(i).collect();
        let e = gamma / (1.0 + 2.0 * i as f64);
        comps.insert(format!("y{i}"), quotient(&u, grid, &axes, &inside, &nodes, e, e == 1.0, cutoff_of(&axes)));
    }
    let value = comps.values().sum();
    Ok(NormReport { kind: NormKind::HolderAniso, p: None, gamma: Some(gamma), weight: None, components: comps, value, solver: String::new() })
}

/// sup over t > 0 of the slice norms; components are the componentwise suprema.
pub fn holder_norm_field(field: &Field, gamma: f64, bs: &BlockStructure) -> Result<NormReport> {
    let mut out: Option<NormReport> = None;
    for n in 1..=field.grid.nt {
        let r = holder_norm(field.slice(n), &field.grid, gamma, bs)?;
        out = Some(match out {
            None => r,
            Some(mut acc) => {
                for (k, v) in r.components {
                    let e = acc.components.entry(k).or_insert(0.0);
                    *e = e.max(v);
                }
                acc.value = acc.value.max(r.value);
                acc
            }
        });
    }
    let mut r = out.ok_or_else(|| HypouError::InvalidArgument("field has no positive times".into()))?;
    r.solver = field.provenance.solver.clone();
    Ok(r)
}
