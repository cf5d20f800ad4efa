//! Space-time grids and sampled fields.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= *l - 1e-12 && *x <= *h + 1e-12)
    }
}

/// Uniform tensor grid on [0, T] x box. Nodes are `lo + j h` with `h = (hi - lo)/(n - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceTimeGrid {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub nt: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
    /// Region on which norms are evaluated. Defaults to the box minus a two-node band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<BoxRegion>,
}

impl SpaceTimeGrid {
    pub fn new(horizon: f64, nt: usize, lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        let g = SpaceTimeGrid { horizon, nt, lo, hi, n, inner: None };
        g.validate()?;
        Ok(g)
    }

    /// Grid with spacings `h` whose nodes are integer multiples of `h`, covering [lo, hi].
    pub fn aligned(horizon: f64, nt: usize, lo: &[f64], hi: &[f64], h: &[f64]) -> Result<Self> {
        let mut glo = vec![];
        let mut ghi = vec![];
        let mut n = vec![];
        for ((l, u), &h) in lo.iter().zip(hi).zip(h) {
            let a = (l / h + 1e-9).floor() as i64;
            let b = (u / h - 1e-9).ceil() as i64;
            glo.push(a as f64 * h);
            ghi.push(b as f64 * h);
            n.push((b - a + 1) as usize);
        }
        Self::new(horizon, nt, glo, ghi, n)
    }

    /// Aligned grid with per-axis counts rounded up to FFT-friendly (2,3,5-smooth) sizes.
    pub fn aligned_fft(horizon: f64, nt: usize, lo: &[f64], hi: &[f64], h: &[f64]) -> Result<Self> {
        let mut g = Self::aligned(horizon, nt, lo, hi, h)?;
        for j in 0..g.dim() {
            let target = smooth_size(g.n[j]);
            let extra = target - g.n[j];
            let below = extra / 2;
            g.lo[j] -= below as f64 * h[j];
            g.hi[j] += (extra - below) as f64 * h[j];
            g.n[j] = target;
        }
        g.validate()?;
        Ok(g)
    }

    pub fn with_inner(mut self, inner: BoxRegion) -> Result<Self> {
        if inner.lo.len() != self.dim() || inner.hi.len() != self.dim() {
            return Err(HypouError::DimensionMismatch("inner box dimension".into()));
        }
        self.inner = Some(inner);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || self.hi.len() != d || self.n.len() != d {
            return Err(HypouError::DimensionMismatch("grid lo/hi/n lengths differ".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(HypouError::InvalidArgument("horizon must be positive".into()));
        }
        if self.nt < 2 {
            return Err(HypouError::InvalidArgument("nt must be at least 2".into()));
        }
        for j in 0..d {
            if self.n[j] < 4 {
                return Err(HypouError::InvalidArgument(format!("axis {j} needs at least 4 nodes")));
            }
            if !(self.hi[j] > self.lo[j]) {
                return Err(HypouError::InvalidArgument(format!("axis {j} has empty extent")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn spacing(&self, j: usize) -> f64 {
        (self.hi[j] - self.lo[j]) / (self.n[j] - 1) as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.spacing(j)).collect()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.nt {
            self.horizon
        } else {
            self.horizon * n as f64 / self.nt as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt).map(|n| self.time(n)).collect()
    }

    pub fn coord(&self, j: usize, i: usize) -> f64 {
        if i == self.n[j] - 1 {
            self.hi[j]
        } else {
            self.lo[j] + i as f64 * self.spacing(j)
        }
    }

    pub fn n_space(&self) -> usize {
        self.n.iter().product()
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for j in (0..d.saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.n[j + 1];
        }
        s
    }

    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for j in (0..self.dim()).rev() {
            idx[j] = flat % self.n[j];
            flat /= self.n[j];
        }
    }

    pub fn point(&self, flat: usize, z: &mut [f64]) {
        let mut rem = flat;
        for j in (0..self.dim()).rev() {
            let i = rem % self.n[j];
            rem /= self.n[j];
            z[j] = self.coord(j, i);
        }
    }

    pub fn inner_region(&self) -> BoxRegion {
        self.inner.clone().unwrap_or_else(|| BoxRegion {
            lo: (0..self.dim()).map(|j| self.lo[j] + 2.0 * self.spacing(j)).collect(),
            hi: (0..self.dim()).map(|j| self.hi[j] - 2.0 * self.spacing(j)).collect(),
        })
    }

    /// Per-axis index ranges [a, b) of nodes inside the inner region and at least `band` nodes from the edge.
    pub fn inner_ranges(&self, band: usize) -> Vec<(usize, usize)> {
        let r = self.inner_region();
        (0..self.dim())
            .map(|j| {
                let h = self.spacing(j);
                let a = (((r.lo[j] - self.lo[j]) / h - 1e-9).ceil().max(0.0) as usize).max(band);
                let b = ((((r.hi[j] - self.lo[j]) / h + 1e-9).floor() as usize) + 1).min(self.n[j].saturating_sub(band));
                (a, b.max(a))
            })
            .collect()
    }

    /// Checks that the box contains `[lo - margin, hi + margin]`.
    pub fn check_covers(&self, lo: &[f64], hi: &[f64], margin: f64, what: &str) -> Result<()> {
        for j in 0..self.dim() {
            let need_lo = lo[j] - margin;
            let need_hi = hi[j] + margin;
            if need_lo < self.lo[j] - 1e-9 || need_hi > self.hi[j] + 1e-9 {
                return Err(HypouError::Coverage(format!(
                    "{what}: axis {j} needs [{need_lo:.4}, {need_hi:.4}], grid has [{:.4}, {:.4}]",
                    self.lo[j], self.hi[j]
                )));
            }
        }
        Ok(())
    }

    /// Same spatial layout and times.
    pub fn same_layout(&self, other: &SpaceTimeGrid) -> bool {
        self.horizon == other.horizon && self.nt == other.nt && self.lo == other.lo && self.hi == other.hi && self.n == other.n
    }
}

/// Smallest 2,3,5-smooth integer at or above `n`.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Solution values on a space-time grid, indexed `[time][row-major space]`.
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
    /// Monte Carlo standard errors, same layout as `values`.
    pub std_err: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl Field {
    pub fn zeros(grid: SpaceTimeGrid, solver: &str) -> Self {
        let len = (grid.nt + 1) * grid.n_space();
        Field { grid, values: vec![0.0; len], std_err: None, provenance: Provenance { solver: solver.into(), seed: None } }
    }

    /// Field sampled from a closure `(t, z) -> value`.
    pub fn from_fn(grid: SpaceTimeGrid, solver: &str, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let mut out = Field::zeros(grid, solver);
        let ns = out.grid.n_space();
        let mut z = vec![0.0; out.grid.dim()];
        for n in 0..=out.grid.nt {
            let t = out.grid.time(n);
            for i in 0..ns {
                out.grid.point(i, &mut z);
                out.values[n * ns + i] = f(t, &z);
            }
        }
        out
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        let ns = self.grid.n_space();
        &self.values[n * ns..(n + 1) * ns]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let ns = self.grid.n_space();
        &mut self.values[n * ns..(n + 1) * ns]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    pub fn scaled(&self, c: f64) -> Field {
        let mut f = self.clone();
        f.values.iter_mut().for_each(|v| *v *= c);
        f
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV with header `t,z1,...,zN,value`; 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim();
        let mut header = String::from("t");
        for j in 1..=d {
            header.push_str(&format!(",z{j}"));
        }
        header.push_str(",value\n");
        w.write_all(header.as_bytes())?;
        let ns = self.grid.n_space();
        let mut z = vec![0.0; d];
        let mut line = String::new();
        for n in 0..=self.grid.nt {
            let t = self.grid.time(n);
            for i in 0..ns {
                self.grid.point(i, &mut z);
                line.clear();
                line.push_str(&fmt17(t));
                for x in &z {
                    line.push(',');
                    line.push_str(&fmt17(*x));
                }
                line.push(',');
                line.push_str(&fmt17(self.values[n * ns + i]));
                line.push('\n');
                w.write_all(line.as_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads values written by `write_csv` back onto `grid`.
    pub fn read_csv(text: &str, grid: SpaceTimeGrid, solver: &str) -> Result<Field> {
        let d = grid.dim();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| HypouError::Config("empty field CSV".into()))?;
        if header.split(',').count() != d + 2 {
            return Err(HypouError::Config(format!("field CSV header `{header}` does not match dimension {d}")));
        }
        let mut f = Field::zeros(grid, solver);
        let expect = f.values.len();
        let mut count = 0;
        for (lineno, l) in lines.enumerate() {
            if l.is_empty() {
                continue;
            }
            let v = l
                .rsplit(',')
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| HypouError::Config(format!("bad CSV value on line {}", lineno + 2)))?;
            if count >= expect {
                return Err(HypouError::Config("field CSV has too many rows".into()));
            }
            f.values[count] = v;
            count += 1;
        }
        if count != expect {
            return Err(HypouError::Config(format!("field CSV has {count} rows, expected {expect}")));
        }
        Ok(f)
    }
}

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
