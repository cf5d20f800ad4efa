//! Weighted L^p norms, Hessian-block seminorms, anisotropic Sobolev seminorms and
//! anisotropic Zygmund–Hölder norms of sampled fields.

mod fractional;
mod holder;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};
use crate::gaussian::grid::{Field, SpaceTimeGrid};
use crate::structure::{BlockStructure, OUSystem};

pub use fractional::{frac_laplacian, fractional_kernel_constant};
pub use holder::{holder_norm, holder_norm_field};

/// Time weight g(t) of the L^p measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Weight {
    #[default]
    Unit,
    /// g(t) = det(e^{-tA}) = e^{-t Tr A}.
    DetExp { trace: f64 },
}

impl Weight {
    pub fn det_exp(sys: &OUSystem) -> Self {
        Weight::DetExp { trace: sys.a().trace() }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Weight::Unit => 1.0,
            Weight::DetExp { trace } => (-t * trace).exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Lp,
    D2xLp,
    SobolevAniso,
    HolderAniso,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub kind: NormKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Weight>,
    pub components: BTreeMap<String, f64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub solver: String,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(HypouError::InvalidArgument(format!("p must lie in (1, inf), got {p}")));
    }
    Ok(())
}

/// Inner nodes (flat index) with tensor trapezoid weights; `band` nodes are kept clear of the edge.
pub(crate) fn inner_nodes(grid: &SpaceTimeGrid, band: usize) -> Vec<(usize, f64)> {
    let ranges = grid.inner_ranges(band);
    let strides = grid.strides();
    let h = grid.spacings();
    let mut out = vec![(0usize, 1.0f64)];
    for j in 0..grid.dim() {
        let (a, b) = ranges[j];
        let mut next = Vec::with_capacity(out.len() * (b - a));
        for &(flat, w) in &out {
            for i in a..b {
                let wi = if b - a == 1 { h[j] } else if i == a || i + 1 == b { 0.5 * h[j] } else { h[j] };
                next.push((flat + i * strides[j], w * wi));
            }
        }
        out = next;
    }
    out
}

/// Trapezoid weights in time times g(t).
fn time_weights(grid: &SpaceTimeGrid, weight: &Weight) -> Vec<f64> {
    let dt = grid.dt();
    (0..=grid.nt)
        .map(|n| {
            let w = if n == 0 || n == grid.nt { 0.5 * dt } else { dt };
            w * weight.eval(grid.time(n))
        })
        .collect()
}

/// (int int |v|^p g dt dz)^{1/p} where `pointwise(n, slice)` returns |v| at every node of slice n.
fn integrate_p(grid: &SpaceTimeGrid, p: f64, weight: &Weight, band: usize, mut pointwise: impl FnMut(usize) -> Vec<f64>) -> f64 {
    let nodes = inner_nodes(grid, band);
    let tw = time_weights(grid, weight);
    let mut acc = 0.0;
    for n in 0..=grid.nt {
        if tw[n] == 0.0 {
            continue;
        }
        let v = pointwise(n);
        let s: f64 = nodes.iter().map(|&(i, w)| w * v[i].abs().powf(p)).sum();
        acc += tw[n] * s;
    }
    acc.powf(1.0 / p)
}

/// (int_0^T int |u|^p g(t) dz dt)^{1/p} over the inner box.
pub fn lp_norm(field: &Field, p: f64, weight: &Weight) -> Result<f64> {
    check_p(p)?;
    Ok(integrate_p(&field.grid, p, weight, 0, |n| field.slice(n).to_vec()))
}

/// Centred second difference d^2 u / dz_a dz_b at interior node `i`.
pub(crate) fn second_difference(v: &[f64], strides: &[usize], h: &[f64], i: usize, a: usize, b: usize) -> f64 {
    if a == b {
        (v[i + strides[a]] - 2.0 * v[i] + v[i - strides[a]]) / (h[a] * h[a])
    } else {
        (v[i + strides[a] + strides[b]] - v[i + strides[a] - strides[b]] - v[i - strides[a] + strides[b]] + v[i - strides[a] - strides[b]]) / (4.0 * h[a] * h[b])
    }
}

/// Frobenius norm of the Hessian restricted to `coords`, at every node at least one node from the edge.
fn hessian_block_magnitude(grid: &SpaceTimeGrid, v: &[f64], coords: &[usize]) -> Vec<f64> {
    let strides = grid.strides();
    let h = grid.spacings();
    let mut out = vec![0.0; v.len()];
    for (i, _) in inner_nodes(grid, 1) {
        let mut s = 0.0;
        for &a in coords {
            for &b in coords {
                let d = second_difference(v, &strides, &h, i, a, b);
                s += d * d;
            }
        }
        out[i] = s.sqrt();
    }
    out
}

/// ||B_I D^2 u B_I||_{L^p} with B_I selecting `coords`.
pub fn d2_block_seminorm(field: &Field, coords: &[usize], p: f64, weight: &Weight) -> Result<f64> {
    check_p(p)?;
    if coords.is_empty() || coords.iter().any(|&c| c >= field.grid.dim()) {
        return Err(HypouError::InvalidArgument("block coordinates out of range".into()));
    }
    Ok(integrate_p(&field.grid, p, weight, 1, |n| hessian_block_magnitude(&field.grid, field.slice(n), coords)))
}

/// ||D_x^2 u||_{L^p} over the non-degenerate block.
pub fn d2x_seminorm(field: &Field, bs: &BlockStructure, p: f64, weight: &Weight) -> Result<NormReport> {
    let coords: Vec<usize> = bs.range(0).collect();
    let value = d2_block_seminorm(field, &coords, p, weight)?;
    Ok(NormReport {
        kind: NormKind::D2xLp,
        p: Some(p),
        gamma: None,
        weight: Some(*weight),
        components: BTreeMap::from([("dx2".to_string(), value)]),
        value,
        solver: field.provenance.solver.clone(),
    })
}

fn check_structure(grid: &SpaceTimeGrid, bs: &BlockStructure) -> Result<()> {
    if bs.n != grid.dim() {
        return Err(HypouError::DimensionMismatch(format!("block structure for N = {}, grid dimension {}", bs.n, grid.dim())));
    }
    Ok(())
}

/// (||Delta_x u||_p^p + sum_i ||Delta_{y_i}^{alpha_i} u||_p^p)^{1/p}.
pub fn sobolev_seminorm(field: &Field, bs: &BlockStructure, p: f64, weight: &Weight) -> Result<NormReport> {
    check_p(p)?;
    let grid = &field.grid;
    check_structure(grid, bs)?;
    let strides = grid.strides();
    let h = grid.spacings();
    let x: Vec<usize> = bs.range(0).collect();
    let mut components = BTreeMap::new();
    let dx = integrate_p(grid, p, weight, 1, |n| {
        let v = field.slice(n);
        let mut out = vec![0.0; v.len()];
        for (i, _) in inner_nodes(grid, 1) {
            out[i] = x.iter().map(|&a| second_difference(v, &strides, &h, i, a, a)).sum();
        }
        out
    });
    components.insert("dx".to_string(), dx);
    let mut total = dx.powf(p);
    for i in 1..=bs.k {
        let beta = bs.alphas[i - 1];
        let mut err = None;
        let c = integrate_p(grid, p, weight, 1, |n| match frac_laplacian(field.slice(n), grid, i, beta, bs) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                vec![0.0; grid.n_space()]
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        components.insert(format!("y{i}"), c);
        total += c.powf(p);
    }
    Ok(NormReport {
        kind: NormKind::SobolevAniso,
        p: Some(p),
        gamma: None,
        weight: Some(*weight),
        components,
        value: total.powf(1.0 / p),
        solver: field.provenance.solver.clone(),
    })
}

/// Report form of `lp_norm`.
pub fn lp_report(field: &Field, p: f64, weight: &Weight) -> Result<NormReport> {
    let value = lp_norm(field, p, weight)?;
    Ok(NormReport {
        kind: NormKind::Lp,
        p: Some(p),
        gamma: None,
        weight: Some(*weight),
        components: BTreeMap::from([("u".to_string(), value)]),
        value,
        solver: field.provenance.solver.clone(),
    })
}
