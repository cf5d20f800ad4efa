//! Constant estimation and stability experiments: base ratios ||out(u)|| / ||in(f)|| over a
//! source suite, then the same ratios after adding a PSD perturbation S(t).

mod suites;

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};
use crate::gaussian::grid::{fmt17, Field, SpaceTimeGrid};
use crate::gaussian::path::{PathSpec, TimePSDPath};
use crate::gaussian::solver::{driftless_diffusion, driftless_grid_for, solve_ou_pipeline, SolverConfig};
use crate::gaussian::source::{source_pullback, Source, SourceSpec};
use crate::gaussian::transform::push_to_ou;
use crate::norms::{d2x_seminorm, holder_norm_field, lp_norm, sobolev_seminorm, Weight};
use crate::poisson::fd::ladder_support;
use crate::poisson::{perturbed_solve_iterative, ConvergenceTable, LadderMode};
use crate::rng;
use crate::structure::{extract_block_structure, is_homogeneous_class, BlockStructure, OUSystem};

pub use suites::{default_f_suite, default_s_suite, inflated_grid};

/// Numerical slack on "same constant".
pub const DEFAULT_DELTA: f64 = 0.05;

/// Output seminorm of the solution against input norm of the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NormPair {
    /// ||D_x^2 u||_p against ||f||_p.
    D2xLp { p: f64 },
    /// Anisotropic Sobolev seminorm (or one of its components, e.g. "y1") against ||f||_p.
    Sobolev {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        component: Option<String>,
    },
    /// sup_t ||u(t)||_{C^{2+beta}} against sup_t ||f(t)||_{C^beta}.
    Schauder { beta: f64 },
}

impl NormPair {
    pub fn label(&self) -> String {
        match self {
            NormPair::D2xLp { p } => format!("d2x-l{p}"),
            NormPair::Sobolev { p, component: None } => format!("sobolev-l{p}"),
            NormPair::Sobolev { p, component: Some(c) } => format!("sobolev-{c}-l{p}"),
            NormPair::Schauder { beta } => format!("schauder-{beta}"),
        }
    }

    /// (output seminorm, input norm) in words.
    pub fn descriptor(&self) -> (String, String) {
        match self {
            NormPair::D2xLp { p } => (format!("||D_x^2 u||_L{p}"), format!("||f||_L{p}")),
            NormPair::Sobolev { p, component } => {
                let out = match component {
                    Some(c) => format!("sobolev component {c} in L{p}"),
                    None => format!("anisotropic Sobolev seminorm in L{p}"),
                };
                (out, format!("||f||_L{p}"))
            }
            NormPair::Schauder { beta } => (format!("sup_t ||u||_C^(2+{beta})"), format!("sup_t ||f||_C^{beta}")),
        }
    }

    fn validate(&self, sys: &OUSystem, bs: &BlockStructure) -> Result<()> {
        match self {
            NormPair::D2xLp { .. } => Ok(()),
            NormPair::Sobolev { component, .. } => {
                if !is_homogeneous_class(sys, bs) {
                    return Err(HypouError::Class("Sobolev estimates need zero diagonal and upper blocks in A".into()));
                }
                if let Some(c) = component {
                    let known = c == "dx" || (1..=bs.k).any(|i| *c == format!("y{i}"));
                    if !known {
                        return Err(HypouError::InvalidArgument(format!("unknown Sobolev component `{c}`")));
                    }
                }
                Ok(())
            }
            NormPair::Schauder { beta } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(HypouError::Exponent(format!("Schauder beta must lie in (0, 1), got {beta}")));
                }
                Ok(())
            }
        }
    }

    pub fn output(&self, u: &Field, bs: &BlockStructure, weight: &Weight) -> Result<f64> {
        match self {
            NormPair::D2xLp { p } => Ok(d2x_seminorm(u, bs, *p, weight)?.value),
            NormPair::Sobolev { p, component } => {
                let r = sobolev_seminorm(u, bs, *p, weight)?;
                Ok(match component {
                    Some(c) => r.components[c],
                    None => r.value,
                })
            }
            NormPair::Schauder { beta } => Ok(holder_norm_field(u, 2.0 + beta, bs)?.value),
        }
    }

    pub fn input(&self, f: &Field, bs: &BlockStructure, weight: &Weight) -> Result<f64> {
        match self {
            NormPair::D2xLp { p } | NormPair::Sobolev { p, .. } => lp_norm(f, *p, weight),
            NormPair::Schauder { beta } => Ok(holder_norm_field(f, *beta, bs)?.value),
        }
    }
}

/// How perturbed problems are solved.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StabilityMode {
    /// Gaussian solve of the drift-removed problem with Q + Q'.
    #[default]
    Direct,
    /// Finite-difference jump scheme at the finest epsilon of the ladder.
    PoissonLadder { eps_ladder: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub output: String,
    pub input: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub norm: NormPair,
    pub estimator: Estimator,
    /// Max ratio over the source suite with S = 0.
    pub c_hat_base: f64,
    /// ratios[f][s]; column s uses S-suite entry s.
    pub ratios: Vec<Vec<f64>>,
    /// Max perturbed ratio divided by `c_hat_base`.
    pub margin: f64,
    /// (f index, S index) attaining the margin.
    pub argmax: [usize; 2],
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub system: crate::structure::SystemDescriptor,
    pub grid: SpaceTimeGrid,
    pub mode: StabilityMode,
    pub delta: f64,
    pub master_seed: u64,
    /// Seed of every (f, S) solve, same layout as the ratio matrices.
    pub seeds: Vec<Vec<u64>>,
    pub n_sources: usize,
    pub n_perturbations: usize,
    pub pairs: Vec<PairReport>,
    pub max_principle: Vec<MaxPrincipleRow>,
    #[serde(skip)]
    pub runtimes: Timings,
}

/// Wall-clock times; kept out of the reproducible report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_s: f64,
    /// Per (f, S) solve and norm evaluation.
    pub entries_s: Vec<Vec<f64>>,
}

impl StabilityReport {
    pub fn passes(&self) -> bool {
        self.pairs.iter().all(|p| p.passes) && self.max_principle.iter().all(|r| r.passes)
    }

    pub fn max_margin(&self) -> f64 {
        self.pairs.iter().map(|p| p.margin).fold(0.0, f64::max)
    }

    /// `norm,f,s,ratio` rows.
    pub fn write_ratios_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "norm,f,s,ratio")?;
        for p in &self.pairs {
            let label = p.norm.label();
            for (i, row) in p.ratios.iter().enumerate() {
                for (j, r) in row.iter().enumerate() {
                    writeln!(w, "{label},{i},{j},{}", fmt17(*r))?;
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| HypouError::Config(e.to_string()))
    }
}

/// Everything a stability run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySetup {
    pub sources: Vec<SourceSpec>,
    pub perturbations: Vec<PathSpec>,
    pub norms: Vec<NormPair>,
    pub grid: SpaceTimeGrid,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mode: StabilityMode,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl StabilitySetup {
    /// Ten bumps, six perturbations, the D_x^2 L^2, (Delta_y)^{1/3} L^2 and beta = 1/2 Schauder pairs.
    pub fn default_for(sys: &OUSystem) -> Result<Self> {
        let sources = default_f_suite();
        let grid = inflated_grid(sys, &sources, 1.0, 64, 0.1)?;
        Ok(StabilitySetup {
            sources,
            perturbations: default_s_suite(),
            norms: vec![
                NormPair::D2xLp { p: 2.0 },
                NormPair::Sobolev { p: 2.0, component: Some("y1".into()) },
                NormPair::Schauder { beta: 0.5 },
            ],
            grid,
            solver: SolverConfig::default(),
            mode: StabilityMode::Direct,
            delta: DEFAULT_DELTA,
        })
    }
}

/// u for the OU problem with source f and perturbation S (None for S = 0).
pub fn solve_perturbed(sys: &OUSystem, s: Option<&TimePSDPath>, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig, mode: &StabilityMode, seed: u64) -> Result<Field> {
    let s = s.filter(|p| !p.is_identically_zero());
    match (mode, s) {
        (StabilityMode::Direct, _) | (_, None) => solve_ou_pipeline(sys, s, f, grid, cfg, seed),
        (StabilityMode::PoissonLadder { eps_ladder }, Some(s)) => {
            let (mut u, _) = ladder_solve(sys, s, f, grid, cfg, eps_ladder)?;
            u.provenance.seed = Some(seed);
            Ok(u)
        }
    }
}

fn ladder_solve(sys: &OUSystem, s: &TimePSDPath, f: &dyn Source, grid: &SpaceTimeGrid, cfg: &SolverConfig, eps_ladder: &[f64]) -> Result<(Field, ConvergenceTable)> {
    let q = Arc::new(driftless_diffusion(sys, None)?);
    let qp = Arc::new(TimePSDPath::conjugated(Arc::new(s.clone()), sys.a().clone())?);
    let total = driftless_diffusion(sys, Some(s))?;
    let mut w_grid = driftless_grid_for(sys, &total, f, grid, cfg)?;
    let ft = source_pullback(f, sys.a(), grid.horizon);
    // the jump scheme reaches further than the Gaussian solve
    if let Some((lo, hi)) = ladder_support(&q, &qp, &ft, eps_ladder, grid.horizon, cfg)? {
        let lo: Vec<f64> = lo.iter().zip(&w_grid.lo).map(|(a, b)| a.min(*b)).collect();
        let hi: Vec<f64> = hi.iter().zip(&w_grid.hi).map(|(a, b)| a.max(*b)).collect();
        w_grid = SpaceTimeGrid::aligned_fft(grid.horizon, grid.nt, &lo, &hi, &w_grid.spacings())?;
    }
    let res = perturbed_solve_iterative(&q, &qp, &ft, &w_grid, eps_ladder, LadderMode::Simultaneous, cfg)?;
    let mut u = push_to_ou(&res.field, sys.a(), grid, cfg.interpolator()?)?;
    u.provenance.solver = "ou-pipeline/poisson-ladder".into();
    Ok((u, res.table))
}

fn source_field(f: &dyn Source, grid: &SpaceTimeGrid) -> Field {
    Field::from_fn(grid.clone(), "source", |t, z| f.eval(t, z))
}

/// Lower bound for the estimate constant: max over f of output(u_f) / input(f) with S = 0.
pub fn estimate_constant(sys: &OUSystem, f_suite: &[SourceSpec], pair: &NormPair, grid: &SpaceTimeGrid, cfg: &SolverConfig) -> Result<f64> {
    if f_suite.is_empty() {
        return Err(HypouError::InvalidArgument("empty source suite".into()));
    }
    let bs = extract_block_structure(sys)?;
    pair.validate(sys, &bs)?;
    let weight = Weight::det_exp(sys);
    let ratios = f_suite
        .par_iter()
        .map(|f| {
            f.validate()?;
            let u = solve_ou_pipeline(sys, None, f, grid, cfg, 0)?;
            Ok(ratio(pair.output(&u, &bs, &weight)?, pair.input(&source_field(f, grid), &bs, &weight)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

fn ratio(out: f64, inp: f64) -> f64 {
    if inp > 0.0 {
        out / inp
    } else {
        0.0
    }
}

/// Solves every (f, S) pair, evaluates every norm pair and records margins.
pub fn stability_experiment(sys: &OUSystem, setup: &StabilitySetup, master_seed: u64) -> Result<StabilityReport> {
    let start = Instant::now();
    if setup.sources.is_empty() || setup.perturbations.is_empty() || setup.norms.is_empty() {
        return Err(HypouError::InvalidArgument("source, perturbation and norm suites must be non-empty".into()));
    }
    let bs = extract_block_structure(sys)?;
    for p in &setup.norms {
        p.validate(sys, &bs)?;
    }
    for f in &setup.sources {
        f.validate()?;
        if f.dim() != sys.n() {
            return Err(HypouError::DimensionMismatch(format!("source of dimension {} for N = {}", f.dim(), sys.n())));
        }
    }
    let paths = setup
        .perturbations
        .iter()
        .map(|s| {
            let p = TimePSDPath::from_spec(s)?;
            if p.dim() != sys.n() {
                return Err(HypouError::DimensionMismatch(format!("perturbation of size {} for N = {}", p.dim(), sys.n())));
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let weight = Weight::det_exp(sys);
    let grid = &setup.grid;
    let (nf, ns) = (setup.sources.len(), paths.len());

    let inputs: Vec<Vec<f64>> = setup
        .sources
        .par_iter()
        .map(|f| {
            let ff = source_field(f, grid);
            setup.norms.iter().map(|p| p.input(&ff, &bs, &weight)).collect()
        })
        .collect::<Result<_>>()?;

    let seeds: Vec<Vec<u64>> = (0..nf).map(|i| (0..ns).map(|j| rng::derive_seed(master_seed, (i * ns + j) as u64)).collect()).collect();
    struct Entry {
        base: Option<Vec<f64>>,
        outputs: Vec<f64>,
        mp: Vec<MaxPrincipleRow>,
        time: f64,
    }
    // column ns stands for the S = 0 base solve
    let entries: Vec<Entry> = (0..nf * (ns + 1))
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / (ns + 1), idx % (ns + 1));
            let t0 = Instant::now();
            let f = &setup.sources[i];
            let (s, seed, label) = if j == ns {
                (None, rng::derive_seed(master_seed, u64::MAX - i as u64), format!("f{i}/base"))
            } else {
                (Some(&paths[j]), seeds[i][j], format!("f{i}/s{j}"))
            };
            let u = solve_perturbed(sys, s, f, grid, &setup.solver, &setup.mode, seed)?;
            let outputs = setup.norms.iter().map(|p| p.output(&u, &bs, &weight)).collect::<Result<Vec<_>>>()?;
            let mp = max_principle_suite(&[(label, &u, f.sup_abs())]);
            let is_base = j == ns;
            Ok(Entry { base: is_base.then(|| outputs.clone()), outputs, mp, time: t0.elapsed().as_secs_f64() })
        })
        .collect::<Result<_>>()?;

    let mut pairs = vec![];
    for (k, pair) in setup.norms.iter().enumerate() {
        let base: Vec<f64> = (0..nf).map(|i| ratio(entries[i * (ns + 1) + ns].base.as_ref().unwrap()[k], inputs[i][k])).collect();
        let c_hat = base.iter().copied().fold(0.0, f64::max);
        let ratios: Vec<Vec<f64>> = (0..nf).map(|i| (0..ns).map(|j| ratio(entries[i * (ns + 1) + j].outputs[k], inputs[i][k])).collect()).collect();
        let mut best = (f64::NEG_INFINITY, [0, 0]);
        for (i, row) in ratios.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r > best.0 {
                    best = (r, [i, j]);
                }
            }
        }
        let margin = if c_hat > 0.0 { best.0 / c_hat } else if best.0 > 0.0 { f64::INFINITY } else { 1.0 };
        let (output, input) = pair.descriptor();
        pairs.push(PairReport {
            norm: pair.clone(),
            estimator: Estimator { output, input },
            c_hat_base: c_hat,
            ratios,
            margin,
            argmax: best.1,
            passes: margin <= 1.0 + setup.delta,
        });
    }
    let max_principle = entries.iter().flat_map(|e| e.mp.clone()).collect();
    let entries_s = (0..nf).map(|i| (0..=ns).map(|j| entries[i * (ns + 1) + j].time).collect()).collect();
    Ok(StabilityReport {
        system: sys.descriptor(),
        grid: grid.clone(),
        mode: setup.mode.clone(),
        delta: setup.delta,
        master_seed,
        seeds,
        n_sources: nf,
        n_perturbations: ns,
        pairs,
        max_principle,
        runtimes: Timings { total_s: start.elapsed().as_secs_f64(), entries_s },
    })
}

/// Stability of the anisotropic Sobolev pair; the system must be in the homogeneous class.
pub fn sobolev_stability(sys: &OUSystem, setup: &StabilitySetup, p: f64, component: Option<String>, master_seed: u64) -> Result<StabilityReport> {
    let setup = StabilitySetup { norms: vec![NormPair::Sobolev { p, component }], ..setup.clone() };
    stability_experiment(sys, &setup, master_seed)
}

/// Stability of the C^beta -> C^{2+beta} pair.
pub fn schauder_stability(sys: &OUSystem, setup: &StabilitySetup, beta: f64, master_seed: u64) -> Result<StabilityReport> {
    let setup = StabilitySetup { norms: vec![NormPair::Schauder { beta }], ..setup.clone() };
    stability_experiment(sys, &setup, master_seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleRow {
    pub label: String,
    pub sup_v: f64,
    /// T sup |f|
    pub bound: f64,
    pub passes: bool,
}

pub const MAX_PRINCIPLE_TOL: f64 = 1e-8;

/// sup |v| <= T sup |f| + 1e-8 for every (label, field, sup |f|).
pub fn max_principle_suite(fields: &[(String, &Field, f64)]) -> Vec<MaxPrincipleRow> {
    fields
        .iter()
        .map(|(label, v, sup_f)| {
            let sup_v = v.sup_abs();
            let bound = v.grid.horizon * sup_f;
            MaxPrincipleRow { label: label.clone(), sup_v, bound, passes: sup_v <= bound + MAX_PRINCIPLE_TOL }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub eps_ladder: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub l2_errors: Vec<f64>,
    pub reference_sup: f64,
    pub slope: f64,
    pub final_relative_error: f64,
    pub strictly_decreasing: bool,
    #[serde(skip)]
    pub runtimes_s: Vec<f64>,
}

impl ConvergenceStudy {
    fn from_table(t: &ConvergenceTable) -> Self {
        ConvergenceStudy {
            eps_ladder: t.rows.iter().map(|r| r.epsilon).collect(),
            sup_errors: t.rows.iter().map(|r| r.sup_error).collect(),
            l2_errors: t.rows.iter().map(|r| r.l2_error).collect(),
            reference_sup: t.reference_sup,
            slope: t.slope(),
            final_relative_error: t.final_relative_error(),
            strictly_decreasing: t.is_strictly_decreasing(),
            runtimes_s: t.rows.iter().map(|r| r.runtime_s).collect(),
        }
    }

    /// `epsilon,sup_error,l2_error`; runtimes are left out so the file is reproducible.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epsilon,sup_error,l2_error")?;
        for i in 0..self.eps_ladder.len() {
            writeln!(w, "{},{},{}", self.eps_ladder[i], fmt17(self.sup_errors[i]), fmt17(self.l2_errors[i]))?;
        }
        Ok(())
    }
}

/// Error of the jump scheme against the direct Gaussian solve along an epsilon ladder, on the
/// driftless problem PDE(Q + Q', f) with Q = e^{tA} B e^{tA^*} and Q' = e^{tA} S e^{tA^*}.
pub fn epsilon_convergence_study(sys: &OUSystem, s: &TimePSDPath, f: &dyn Source, grid: &SpaceTimeGrid, eps_ladder: &[f64], cfg: &SolverConfig) -> Result<ConvergenceStudy> {
    let q = Arc::new(driftless_diffusion(sys, None)?);
    let qp = Arc::new(TimePSDPath::conjugated(Arc::new(s.clone()), sys.a().clone())?);
    let res = perturbed_solve_iterative(&q, &qp, f, grid, eps_ladder, LadderMode::Simultaneous, cfg)?;
    res.table.check_monotone()?;
    Ok(ConvergenceStudy::from_table(&res.table))
}
