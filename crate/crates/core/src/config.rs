//! JSON run configurations, one per command. Unknown keys are rejected and every config is
//! validated before any computation. A resolved config doubles as the run manifest.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};
use crate::gaussian::grid::SpaceTimeGrid;
use crate::gaussian::path::{PathSpec, TimePSDPath};
use crate::gaussian::solver::SolverConfig;
use crate::gaussian::source::{Source, SourceSpec};
use crate::harness::{StabilityMode, StabilitySetup};
use crate::norms::Weight;
use crate::poisson::ProcessSpec;
use crate::structure::SystemDescriptor;

/// Environment variable that overrides the config seed (the `--seed` flag overrides both).
pub const SEED_ENV: &str = "HYPOU_SEED";

/// Parses `text` as `T`, reporting line and column on failure.
pub fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| HypouError::Config(format!("{what}: {e}")))
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| HypouError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn check_grid(grid: &SpaceTimeGrid, n: usize) -> Result<()> {
    grid.validate()?;
    if grid.dim() != n {
        return Err(HypouError::DimensionMismatch(format!("grid dimension {} for N = {n}", grid.dim())));
    }
    Ok(())
}

fn check_source(f: &SourceSpec, n: usize) -> Result<()> {
    f.validate()?;
    if f.dim() != n {
        return Err(HypouError::DimensionMismatch(format!("source dimension {} for N = {n}", f.dim())));
    }
    Ok(())
}

fn check_path(s: &PathSpec, n: usize) -> Result<()> {
    let p = TimePSDPath::from_spec(s)?;
    if p.dim() != n {
        return Err(HypouError::DimensionMismatch(format!("perturbation of size {} for N = {n}", p.dim())));
    }
    Ok(())
}

/// `solve`: u for the OU problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub system: SystemDescriptor,
    pub source: SourceSpec,
    pub grid: SpaceTimeGrid,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid(&self.grid, self.system.n)?;
        check_source(&self.source, self.system.n)
    }
}

/// `perturb`: u for the OU problem with the extra diffusion S(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub system: SystemDescriptor,
    pub source: SourceSpec,
    pub perturbation: PathSpec,
    pub grid: SpaceTimeGrid,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mode: StabilityMode,
    #[serde(default)]
    pub seed: u64,
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid(&self.grid, self.system.n)?;
        check_source(&self.source, self.system.n)?;
        check_path(&self.perturbation, self.system.n)?;
        if let StabilityMode::PoissonLadder { eps_ladder } = &self.mode {
            if eps_ladder.is_empty() || eps_ladder.iter().any(|e| !(*e > 0.0)) {
                return Err(HypouError::InvalidArgument("eps ladder must hold positive values".into()));
            }
        }
        Ok(())
    }
}

/// A norm to evaluate in `norms`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NormSpec {
    Lp {
        p: f64,
        #[serde(default)]
        weight: Weight,
    },
    D2x {
        p: f64,
        #[serde(default)]
        weight: Weight,
    },
    Sobolev {
        p: f64,
        #[serde(default)]
        weight: Weight,
    },
    /// sup over t of the anisotropic C^gamma norm.
    Holder { gamma: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormTarget {
    #[default]
    Solution,
    Source,
}

/// `norms`: solve (optionally perturbed), then evaluate the listed norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    pub system: SystemDescriptor,
    pub source: SourceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PathSpec>,
    pub grid: SpaceTimeGrid,
    #[serde(default)]
    pub solver: SolverConfig,
    pub norms: Vec<NormSpec>,
    #[serde(default)]
    pub target: NormTarget,
    #[serde(default)]
    pub seed: u64,
}

impl NormsConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid(&self.grid, self.system.n)?;
        check_source(&self.source, self.system.n)?;
        if let Some(s) = &self.perturbation {
            check_path(s, self.system.n)?;
        }
        if self.norms.is_empty() {
            return Err(HypouError::Config("no norms requested".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    #[default]
    Stability,
    Convergence,
    All,
}

/// Epsilon ladder study on the drift-removed problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSetup {
    pub source: SourceSpec,
    pub perturbation: PathSpec,
    /// Grid of the drift-removed problem.
    pub grid: SpaceTimeGrid,
    pub eps_ladder: Vec<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ConvergenceSetup {
    /// Kolmogorov with S = diag(0, 1), T = 1/2, one bump, epsilon in {0.4, 0.2, 0.1, 0.05}.
    pub fn default_kolmogorov() -> Result<Self> {
        Ok(ConvergenceSetup {
            source: SourceSpec::bump(vec![0.0, 0.0], 1.0, 1.0, Default::default()),
            perturbation: PathSpec::Constant { matrix: vec![vec![0.0, 0.0], vec![0.0, 1.0]] },
            grid: SpaceTimeGrid::aligned(0.5, 16, &[-6.0, -10.0], &[6.0, 10.0], &[0.1, 0.1])?,
            eps_ladder: vec![0.4, 0.2, 0.1, 0.05],
            solver: SolverConfig::default(),
        })
    }
}

/// `verify`: the stability suite and/or the epsilon-convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub system: SystemDescriptor,
    #[serde(default)]
    pub suite: Suite,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySetup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSetup>,
    #[serde(default)]
    pub seed: u64,
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.system.n;
        if let Some(s) = &self.stability {
            check_grid(&s.grid, n)?;
            for f in &s.sources {
                check_source(f, n)?;
            }
            for p in &s.perturbations {
                check_path(p, n)?;
            }
        }
        if let Some(c) = &self.convergence {
            check_grid(&c.grid, n)?;
            check_source(&c.source, n)?;
            check_path(&c.perturbation, n)?;
        }
        Ok(())
    }
}

/// `poisson-demo`: the compensator identity, Poisson-integral means and the inter-arrival KS test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonDemoConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_ks")]
    pub ks_samples: usize,
    #[serde(default = "default_processes")]
    pub processes: Vec<ProcessSpec>,
    #[serde(default)]
    pub seed: u64,
}

fn default_lambda() -> f64 {
    4.0
}
fn default_horizon() -> f64 {
    1.0
}
fn default_paths() -> usize {
    100_000
}
fn default_ks() -> usize {
    10_000
}
fn default_processes() -> Vec<ProcessSpec> {
    vec![
        ProcessSpec::Constant { value: 1.5 },
        ProcessSpec::PreJumpCount { cap: 3 },
        ProcessSpec::Linear { slope: -2.0, intercept: 1.0 },
    ]
}

impl Default for PoissonDemoConfig {
    fn default() -> Self {
        parse("{}", "default").expect("defaults parse")
    }
}

impl PoissonDemoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.horizon > 0.0) || self.n_paths < 2 || self.ks_samples < 2 {
            return Err(HypouError::Config("need lambda > 0, horizon > 0 and at least two paths and samples".into()));
        }
        Ok(())
    }
}

/// --seed, then HYPOU_SEED, then the config value.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| HypouError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        None => Ok(config),
    }
}
