//! Poisson paths, stochastic integrals against them, and the statistical fixtures.

use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonPath {
    pub lambda: f64,
    pub horizon: f64,
    /// Increasing jump times in (0, horizon].
    pub jump_times: Vec<f64>,
    pub seed: u64,
}

impl PoissonPath {
    /// pi_t = number of jumps in [0, t].
    pub fn count(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s <= t)
    }

    /// pi_{t-} = number of jumps in [0, t).
    pub fn count_left(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s < t)
    }
}

/// Jump times from cumulative sums of i.i.d. Exp(lambda) gaps, truncated at T.
pub fn sample_poisson_path(lambda: f64, horizon: f64, seed: u64) -> Result<PoissonPath> {
    if !(lambda > 0.0) || !lambda.is_finite() || !(horizon > 0.0) {
        return Err(HypouError::InvalidArgument(format!("need lambda > 0 and T > 0, got {lambda}, {horizon}")));
    }
    let mut r = rng::stream(seed, 0);
    let exp = Exp::new(lambda).expect("positive rate");
    let mut t = 0.0;
    let mut jumps = vec![];
    loop {
        t += exp.sample(&mut r);
        if t > horizon {
            break;
        }
        jumps.push(t);
    }
    Ok(PoissonPath { lambda, horizon, jump_times: jumps, seed })
}

/// Path `index` of the ensemble keyed by `master`.
pub fn ensemble_path(lambda: f64, horizon: f64, master: u64, index: u64) -> Result<PoissonPath> {
    sample_poisson_path(lambda, horizon, rng::derive_seed(master, index))
}

/// b_t = sum over jumps sigma_k <= t of c(sigma_k).
pub fn poisson_integral(c: &dyn Fn(f64) -> Vec<f64>, path: &PoissonPath, t: f64) -> Vec<f64> {
    let mut acc: Option<Vec<f64>> = None;
    for &s in path.jump_times.iter().take_while(|&&s| s <= t) {
        let v = c(s);
        match acc.as_mut() {
            None => acc = Some(v),
            Some(a) => a.iter_mut().zip(&v).for_each(|(x, y)| *x += y),
        }
    }
    acc.unwrap_or_else(|| vec![0.0; c(0.0).len()])
}

/// Bounded adapted processes used by the expectation fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProcessSpec {
    Constant { value: f64 },
    /// xi_s = min(pi_{s-}, cap)
    PreJumpCount { cap: usize },
    /// xi_s = slope * s + intercept (deterministic)
    Linear { slope: f64, intercept: f64 },
}

impl ProcessSpec {
    /// Value just before s on the given path.
    fn left_value(&self, path: &PoissonPath, s: f64) -> f64 {
        match *self {
            ProcessSpec::Constant { value } => value,
            ProcessSpec::PreJumpCount { cap } => path.count_left(s).min(cap) as f64,
            ProcessSpec::Linear { slope, intercept } => slope * s + intercept,
        }
    }

    /// int_0^t xi_s ds on the given path.
    fn time_integral(&self, path: &PoissonPath, t: f64) -> f64 {
        match *self {
            ProcessSpec::Constant { value } => value * t,
            ProcessSpec::Linear { slope, intercept } => 0.5 * slope * t * t + intercept * t,
            ProcessSpec::PreJumpCount { cap } => {
                let mut acc = 0.0;
                let mut prev = 0.0;
                let mut count = 0usize;
                for &s in path.jump_times.iter().take_while(|&&s| s <= t) {
                    acc += count.min(cap) as f64 * (s - prev);
                    prev = s;
                    count += 1;
                }
                acc + count.min(cap) as f64 * (t - prev)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationReport {
    pub n_paths: usize,
    /// E int_0^t xi_{s-} d pi_s
    pub lhs_mean: f64,
    pub lhs_se: f64,
    /// lambda E int_0^t xi_s ds
    pub rhs_mean: f64,
    pub rhs_se: f64,
    /// Paired difference mean / standard error.
    pub z_score: f64,
}

impl ExpectationReport {
    pub fn passes(&self, z: f64) -> bool {
        self.z_score.abs() <= z
    }
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn check_ensemble(n_paths: usize) -> Result<()> {
    if n_paths < 2 {
        return Err(HypouError::InvalidArgument("need at least two paths".into()));
    }
    Ok(())
}

/// Monte Carlo check of E int_0^t xi_{s-} d pi_s = lambda int_0^t E xi_s ds.
pub fn expectation_identity_check(xi: &ProcessSpec, lambda: f64, t: f64, n_paths: usize, seed: u64) -> Result<ExpectationReport> {
    check_ensemble(n_paths)?;
    let rows: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let path = ensemble_path(lambda, t, seed, p as u64)?;
            let lhs: f64 = path.jump_times.iter().map(|&s| xi.left_value(&path, s)).sum();
            Ok((lhs, lambda * xi.time_integral(&path, t)))
        })
        .collect::<Result<_>>()?;
    let l: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let r: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let diff: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let (lm, ls) = mean_se(&l);
    let (rm, rs) = mean_se(&r);
    let (dm, ds) = mean_se(&diff);
    let z = if ds > 0.0 { dm / ds } else if dm == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(ExpectationReport { n_paths, lhs_mean: lm, lhs_se: ls, rhs_mean: rm, rhs_se: rs, z_score: z })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralMeanReport {
    pub n_paths: usize,
    pub mc_mean: Vec<f64>,
    pub mc_se: Vec<f64>,
    /// lambda int_0^t c
    pub exact: Vec<f64>,
    pub max_abs_z: f64,
}

/// Monte Carlo mean of b_t = int_0^t c d pi against lambda int_0^t c(s) ds.
pub fn poisson_integral_check(c: &(dyn Fn(f64) -> Vec<f64> + Sync), lambda: f64, t: f64, n_paths: usize, seed: u64) -> Result<IntegralMeanReport> {
    check_ensemble(n_paths)?;
    let samples: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| Ok(poisson_integral(c, &ensemble_path(lambda, t, seed, p as u64)?, t)))
        .collect::<Result<_>>()?;
    let dim = c(0.0).len();
    let integral = crate::gaussian::quadrature::integrate_matrix(
        &|s| crate::linalg::Matrix::from_column_slice(dim, 1, &c(s)),
        0.0,
        t,
        &[],
        1e-12,
    )?;
    let mut mc_mean = vec![];
    let mut mc_se = vec![];
    let mut exact = vec![];
    let mut zmax = 0.0f64;
    for j in 0..dim {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let (m, se) = mean_se(&col);
        let e = lambda * integral[(j, 0)];
        zmax = zmax.max(if se > 0.0 { (m - e).abs() / se } else if m == e { 0.0 } else { f64::INFINITY });
        mc_mean.push(m);
        mc_se.push(se);
        exact.push(e);
    }
    Ok(IntegralMeanReport { n_paths, mc_mean, mc_se, exact, max_abs_z: zmax })
}

/// Kolmogorov–Smirnov statistic of `samples` against the Exp(lambda) CDF.
pub fn ks_exponential(samples: &[f64], lambda: f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = 1.0 - (-lambda * v).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 5% critical value of the one-sample KS statistic.
pub fn ks_critical_5pct(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

/// First `n` inter-arrival gaps of one ensemble path. The horizon is long enough that
/// truncation at T almost never touches the first `n` gaps.
pub fn inter_arrival_sample(lambda: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let m = n as f64;
    let mut horizon = (m + 10.0 * m.sqrt() + 10.0) / lambda;
    for index in 0u64.. {
        let path = ensemble_path(lambda, horizon, seed, index)?;
        if path.jump_times.len() > n {
            let mut prev = 0.0;
            return Ok(path.jump_times[..n]
                .iter()
                .map(|&s| {
                    let g = s - prev;
                    prev = s;
                    g
                })
                .collect());
        }
        horizon *= 1.5;
    }
    unreachable!()
}
