//! Command-line front end. Exit codes: 0 success, 1 negative verdict (not hypoelliptic, or a
//! verification bound failed), 2 unreadable or invalid config, 3 computation error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{self, ConvergenceSetup, NormSpec, NormTarget, NormsConfig, PerturbConfig, PoissonDemoConfig, SolveConfig, Suite, VerifyConfig, SEED_ENV};
use crate::error::{HypouError, Result};
use crate::gaussian::grid::Field;
use crate::gaussian::path::TimePSDPath;
use crate::gaussian::solver::solve_ou_pipeline;
use crate::gaussian::source::Source;
use crate::harness::{self, solve_perturbed, ConvergenceStudy, StabilityMode, StabilitySetup};
use crate::norms::{d2x_seminorm, holder_norm_field, lp_report, sobolev_seminorm, NormReport};
use crate::poisson::{expectation_identity_check, inter_arrival_sample, ks_critical_5pct, ks_exponential, poisson_integral_check, ExpectationReport, IntegralMeanReport, ProcessSpec};
use crate::structure::{extract_block_structure, structure_report, OUSystem, SystemDescriptor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hypou", version, about = "Solvers, norms and stability experiments for degenerate Kolmogorov-OU problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Master seed; overrides HYPOU_SEED and the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "hypou-out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Kalman condition, block structure and exponents of a system descriptor.
    Check {
        /// System descriptor JSON.
        #[arg(long)]
        config: PathBuf,
        /// Exit 0 even when the Kalman condition fails.
        #[arg(long)]
        permissive: bool,
    },
    /// Solve the OU problem; writes field.csv and manifest.json.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        permissive: bool,
    },
    /// Solve with an added diffusion S(t); writes field.csv and manifest.json.
    Perturb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        permissive: bool,
        /// Overrides the config mode (the poisson-ladder mode takes its ladder from the config).
        #[arg(long, value_parser = ["direct", "poisson-ladder"])]
        mode: Option<String>,
    },
    /// Solve and evaluate norms; writes norms.json and manifest.json.
    Norms {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        permissive: bool,
    },
    /// Stability and convergence experiments; writes report.json, ratios.csv, timings.json.
    Verify {
        /// Config JSON; the default Kolmogorov suites are used if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        permissive: bool,
        /// Overrides the config suite.
        #[arg(long, value_enum)]
        suite: Option<Suite>,
    },
    /// Statistical checks of Poisson paths and integrals; writes poisson.json.
    PoissonDemo {
        /// Config JSON; defaults are used if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Error with the exit code it maps to.
struct Failure {
    code: i32,
    err: HypouError,
}

impl From<HypouError> for Failure {
    fn from(err: HypouError) -> Self {
        let code = match err {
            HypouError::Config(_) => EXIT_CONFIG,
            _ => EXIT_COMPUTE,
        };
        Failure { code, err }
    }
}

fn config_err(err: HypouError) -> Failure {
    Failure { code: EXIT_CONFIG, err }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return report(Failure { code: EXIT_COMPUTE, err: HypouError::InvalidArgument(e.to_string()) }),
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> i32 {
    let body = serde_json::json!({ "error": f.err.name(), "code": f.err.code(), "message": f.err.to_string() });
    eprintln!("{body}");
    f.code
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(HypouError::Config(format!("{}: {e}", path.display()))))?;
    config::parse(&text, &path.display().to_string()).map_err(config_err)
}

fn seed(cli: &Cli, config: u64) -> std::result::Result<u64, Failure> {
    let env = std::env::var(SEED_ENV).ok();
    config::resolve_seed(cli.seed, env.as_deref(), config).map_err(config_err)
}

fn system(d: &SystemDescriptor, permissive: bool) -> std::result::Result<OUSystem, Failure> {
    OUSystem::from_descriptor(d, permissive).map_err(|e| match e {
        HypouError::NotHypoelliptic { .. } => Failure { code: EXIT_VERDICT, err: e },
        e => config_err(e),
    })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<()> {
    write(dir, name, &config::to_json(v)?)
}

fn write_field(dir: &Path, u: &Field) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join("field.csv"))?;
    u.write_csv(std::io::BufWriter::new(file))
}

fn dispatch(cli: &Cli) -> std::result::Result<i32, Failure> {
    let out = &cli.out;
    match &cli.command {
        Command::Check { config, permissive } => {
            let d: SystemDescriptor = read_config(config)?;
            let sys = OUSystem::from_descriptor(&d, true).map_err(config_err)?;
            let r = structure_report(&sys)?;
            println!("{}", config::to_json(&r)?.trim_end());
            Ok(if r.hypoelliptic || *permissive { EXIT_OK } else { EXIT_VERDICT })
        }
        Command::Solve { config, permissive } => {
            let mut c: SolveConfig = read_config(config)?;
            c.seed = seed(cli, c.seed)?;
            c.validate().map_err(config_err)?;
            let sys = system(&c.system, *permissive)?;
            let u = solve_ou_pipeline(&sys, None, &c.source, &c.grid, &c.solver, c.seed)?;
            write_field(out, &u)?;
            write_json(out, "manifest.json", &c)?;
            Ok(EXIT_OK)
        }
        Command::Perturb { config, permissive, mode } => {
            let mut c: PerturbConfig = read_config(config)?;
            c.seed = seed(cli, c.seed)?;
            match mode.as_deref() {
                Some("direct") => c.mode = StabilityMode::Direct,
                Some(_) if !matches!(c.mode, StabilityMode::PoissonLadder { .. }) => {
                    c.mode = StabilityMode::PoissonLadder { eps_ladder: vec![0.4, 0.2, 0.1, 0.05] };
                }
                _ => {}
            }
            c.validate().map_err(config_err)?;
            let sys = system(&c.system, *permissive)?;
            let s = TimePSDPath::from_spec(&c.perturbation)?;
            let u = solve_perturbed(&sys, Some(&s), &c.source, &c.grid, &c.solver, &c.mode, c.seed)?;
            write_field(out, &u)?;
            write_json(out, "manifest.json", &c)?;
            Ok(EXIT_OK)
        }
        Command::Norms { config, permissive } => {
            let mut c: NormsConfig = read_config(config)?;
            c.seed = seed(cli, c.seed)?;
            c.validate().map_err(config_err)?;
            let sys = system(&c.system, *permissive)?;
            let bs = extract_block_structure(&sys)?;
            let field = match c.target {
                NormTarget::Source => Field::from_fn(c.grid.clone(), "source", |t, z| c.source.eval(t, z)),
                NormTarget::Solution => {
                    let s = c.perturbation.as_ref().map(TimePSDPath::from_spec).transpose()?;
                    solve_perturbed(&sys, s.as_ref(), &c.source, &c.grid, &c.solver, &StabilityMode::Direct, c.seed)?
                }
            };
            let reports = c
                .norms
                .iter()
                .map(|n| match n {
                    NormSpec::Lp { p, weight } => lp_report(&field, *p, weight),
                    NormSpec::D2x { p, weight } => d2x_seminorm(&field, &bs, *p, weight),
                    NormSpec::Sobolev { p, weight } => sobolev_seminorm(&field, &bs, *p, weight),
                    NormSpec::Holder { gamma } => holder_norm_field(&field, *gamma, &bs),
                })
                .collect::<Result<Vec<NormReport>>>()?;
            write_json(out, "norms.json", &reports)?;
            write_json(out, "manifest.json", &c)?;
            Ok(EXIT_OK)
        }
        Command::Verify { config, permissive, suite } => {
            let mut c: VerifyConfig = match config {
                Some(p) => read_config(p)?,
                None => VerifyConfig { system: SystemDescriptor::kolmogorov(), suite: Suite::Stability, stability: None, convergence: None, seed: 0 },
            };
            c.seed = seed(cli, c.seed)?;
            if let Some(s) = suite {
                c.suite = *s;
            }
            c.validate().map_err(config_err)?;
            let sys = system(&c.system, *permissive)?;
            verify(&sys, &mut c, out)
        }
        Command::PoissonDemo { config } => {
            let mut c: PoissonDemoConfig = match config {
                Some(p) => read_config(p)?,
                None => PoissonDemoConfig::default(),
            };
            c.seed = seed(cli, c.seed)?;
            c.validate().map_err(config_err)?;
            let r = poisson_demo(&c)?;
            write_json(out, "poisson.json", &r)?;
            write_json(out, "manifest.json", &c)?;
            Ok(if r.passes { EXIT_OK } else { EXIT_VERDICT })
        }
    }
}

#[derive(Serialize)]
struct VerifyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    stability: Option<harness::StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<ConvergenceStudy>,
    passes: bool,
}

#[derive(Serialize, Default)]
struct VerifyTimings {
    #[serde(skip_serializing_if = "Option::is_none")]
    stability: Option<harness::Timings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence_s: Option<Vec<f64>>,
}

fn verify(sys: &OUSystem, c: &mut VerifyConfig, out: &Path) -> std::result::Result<i32, Failure> {
    let mut report = VerifyReport { stability: None, convergence: None, passes: true };
    let mut timings = VerifyTimings::default();
    if matches!(c.suite, Suite::Stability | Suite::All) {
        let setup = match &c.stability {
            Some(s) => s.clone(),
            None => StabilitySetup::default_for(sys)?,
        };
        c.stability = Some(setup.clone());
        let r = harness::stability_experiment(sys, &setup, c.seed)?;
        r.write_ratios_csv(std::io::BufWriter::new(fs::File::create(ensure(out)?.join("ratios.csv")).map_err(HypouError::from)?))?;
        report.passes &= r.passes();
        timings.stability = Some(r.runtimes.clone());
        report.stability = Some(r);
    }
    if matches!(c.suite, Suite::Convergence | Suite::All) {
        let setup = match &c.convergence {
            Some(s) => s.clone(),
            None => ConvergenceSetup::default_kolmogorov()?,
        };
        c.convergence = Some(setup.clone());
        let s = TimePSDPath::from_spec(&setup.perturbation)?;
        let study = harness::epsilon_convergence_study(sys, &s, &setup.source, &setup.grid, &setup.eps_ladder, &setup.solver)?;
        study.write_csv(std::io::BufWriter::new(fs::File::create(ensure(out)?.join("convergence.csv")).map_err(HypouError::from)?))?;
        report.passes &= study.strictly_decreasing && study.slope >= 1.0 && study.final_relative_error < 1e-2;
        timings.convergence_s = Some(study.runtimes_s.clone());
        report.convergence = Some(study);
    }
    write_json(out, "report.json", &report)?;
    write_json(out, "timings.json", &timings)?;
    write_json(out, "manifest.json", c)?;
    Ok(if report.passes { EXIT_OK } else { EXIT_VERDICT })
}

fn ensure(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct ProcessCheck {
    process: ProcessSpec,
    #[serde(flatten)]
    report: ExpectationReport,
}

#[derive(Serialize)]
struct PoissonDemoReport {
    expectation: Vec<ProcessCheck>,
    integral: IntegralMeanReport,
    ks_statistic: f64,
    ks_critical: f64,
    passes: bool,
}

fn poisson_demo(c: &PoissonDemoConfig) -> Result<PoissonDemoReport> {
    let mut expectation = vec![];
    let mut passes = true;
    for (i, xi) in c.processes.iter().enumerate() {
        let r = expectation_identity_check(xi, c.lambda, c.horizon, c.n_paths, crate::rng::derive_seed(c.seed, i as u64))?;
        passes &= r.passes(3.0);
        expectation.push(ProcessCheck { process: xi.clone(), report: r });
    }
    let integrand = |s: f64| vec![1.0, s, (2.0 * std::f64::consts::PI * s).cos()];
    let integral = poisson_integral_check(&integrand, c.lambda, c.horizon, c.n_paths, crate::rng::derive_seed(c.seed, 1000))?;
    passes &= integral.max_abs_z <= 3.0;
    let gaps = inter_arrival_sample(c.lambda, c.ks_samples, crate::rng::derive_seed(c.seed, 2000))?;
    let ks_statistic = ks_exponential(&gaps, c.lambda);
    let ks_critical = ks_critical_5pct(gaps.len());
    passes &= ks_statistic < ks_critical;
    Ok(PoissonDemoReport { expectation, integral, ks_statistic, ks_critical, passes })
}
