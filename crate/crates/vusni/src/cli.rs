//! The `vusni` command line.
//!
//! Exit status: 0 success, 2 numerical failure, 3 data or I/O error,
//! 64 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vusni_core::data::{standardize, Dataset, Standardization};
use vusni_core::estimators::{vus_estimate, vus_estimate_nonparametric, Method};
use vusni_core::fit::{fit, lrt_from_fits, FitOptions, ModelFit};
use vusni_core::inference::bootstrap_se;
use vusni_core::simulation::{builtin_scenario, generate, McConfig, Scenario, ScenarioSpec};

use crate::io::{load_csv, save_csv};
use crate::mc::{format_summary, run_parallel, write_outputs};
use crate::report::{BootstrapReport, EstimateReport, FitReport, MethodError};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "vusni", version, about = "VUS estimation for three-class tests under nonignorable verification bias")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the joint verification/disease model and write it as JSON.
    Fit(FitCmd),
    /// Estimate the VUS with one or more methods and write JSON.
    Estimate(EstimateCmd),
    /// Run a Monte Carlo study of a built-in scenario and write CSV reports.
    Simulate(SimulateCmd),
    /// Write one simulated dataset as CSV.
    Generate(GenerateCmd),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Input CSV with columns t, a1..ap, v, d.
    #[arg(long)]
    pub input: PathBuf,
    /// Starting points tried in addition to the default one.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, env = "VUSNI_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Fix λ = 0 (verification ignorable given T and A).
    #[arg(long)]
    pub constrain_mar: bool,
    /// Center and scale t and every covariate before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Convergence tolerance on the per-subject score.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

impl ModelArgs {
    fn fit_options(&self, constrain_mar: bool) -> FitOptions {
        FitOptions { constrain_mar, restarts: self.restarts, seed: self.seed, tol: self.tol, max_iter: self.max_iter }
    }

    fn load(&self) -> crate::Result<(Dataset, Option<Standardization>)> {
        let data = load_csv(&self.input, None)?;
        if self.standardize {
            let (data, tr) = standardize(&data)?;
            Ok((data, Some(tr)))
        } else {
            Ok((data, None))
        }
    }
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateCmd {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated: fi, fi_alt, msi, ipw, pdr, nonparametric.
    #[arg(long, value_delimiter = ',', default_value = "fi,msi,ipw,pdr")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    pub level: f64,
    /// Also fit the model with λ = 0 and test ignorability.
    #[arg(long)]
    pub with_lrt: bool,
    /// Bootstrap replicates for the nonparametric standard error (0 = none).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// 1 or 2.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub scenario: u8,
    #[arg(long, value_parser = clap::value_parser!(u64).range(10..))]
    pub n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    #[arg(long, env = "VUSNI_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Directory for summary.csv, params.csv and replications.csv.
    #[arg(long, default_value = "vusni-sim")]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "fi,msi,ipw,pdr")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    pub level: f64,
    #[arg(long)]
    pub with_lrt: bool,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    /// Replace the scenario's λ, e.g. `0,0` for ignorable verification.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub lambda: Option<[f64; 2]>,
}

#[derive(Debug, Args)]
pub struct GenerateCmd {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub scenario: u8,
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub n: u64,
    #[arg(long, env = "VUSNI_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// Reveal every disease class (all subjects verified).
    #[arg(long)]
    pub full: bool,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub lambda: Option<[f64; 2]>,
}

fn parse_level(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(format!("confidence level {x} is outside (0, 1)"))
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => {
            let a: f64 = a.parse().map_err(|_| format!("`{a}` is not a number"))?;
            let b: f64 = b.parse().map_err(|_| format!("`{b}` is not a number"))?;
            Ok([a, b])
        }
        _ => Err(format!("expected two comma-separated numbers, got `{s}`")),
    }
}

fn scenario_spec(which: u8, lambda: Option<[f64; 2]>) -> ScenarioSpec {
    let spec = builtin_scenario(if which == 1 { Scenario::I } else { Scenario::II });
    match lambda {
        Some(l) => spec.with_lambda(l),
        None => spec,
    }
}

fn emit_json<T: serde::Serialize>(value: &T, output: Option<&Path>) -> crate::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

fn describe_fit(f: &ModelFit) {
    eprintln!(
        "{} model converged ({} starts): loglik {:.6}, gradient norm {:.2e}, condition number {:.3e}",
        if f.constrain_mar { "MAR" } else { "nonignorable" },
        f.restarts_used,
        f.loglik,
        f.grad_norm,
        f.condition_number
    );
    if let Some(w) = &f.identifiability_warning {
        eprintln!("warning: {w}");
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Fit(c) => cmd_fit(&c),
        Command::Estimate(c) => cmd_estimate(&c),
        Command::Simulate(c) => cmd_simulate(&c),
        Command::Generate(c) => cmd_generate(&c),
    }
}

pub fn cmd_fit(c: &FitCmd) -> i32 {
    let (data, tr) = match c.model.load() {
        Ok(x) => x,
        Err(e) => return report_error(&e),
    };
    let model = match fit(&data, &c.model.fit_options(c.model.constrain_mar)) {
        Ok(m) => m,
        Err(e) => return report_error(&e.into()),
    };
    describe_fit(&model);
    match emit_json(&FitReport::new(&model, &data, tr.as_ref()), c.output.as_deref()) {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}

/// Keeps the more severe of two exit codes (data errors outrank numerical
/// ones).
fn worse(a: i32, b: i32) -> i32 {
    let rank = |c| match c {
        EXIT_DATA => 2,
        EXIT_NUMERICAL => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

pub fn cmd_estimate(c: &EstimateCmd) -> i32 {
    let (data, tr) = match c.model.load() {
        Ok(x) => x,
        Err(e) => return report_error(&e),
    };
    let mut status = EXIT_OK;
    let mut notes = Vec::new();
    let mut errors = Vec::new();

    let needs_fit = c.methods.iter().any(|m| m.needs_fit()) || c.with_lrt;
    let mut constrain = c.model.constrain_mar;
    if needs_fit && !constrain && data.all_verified() {
        notes.push("every subject is verified, so the verification model carries no information on lambda; it is fixed at 0".into());
        constrain = true;
    }
    let model = if needs_fit {
        let r = fit(&data, &c.model.fit_options(constrain));
        match &r {
            Ok(m) => describe_fit(m),
            Err(e) => {
                eprintln!("error: model fit failed: {e}");
                status = worse(status, Error::Core(e.clone()).exit_code());
            }
        }
        Some(r)
    } else {
        None
    };

    let mut estimates = Vec::new();
    for &m in &c.methods {
        let est = match (&model, m.needs_fit()) {
            (_, false) => vus_estimate_nonparametric(&data, c.level),
            (Some(Ok(f)), true) => vus_estimate(m, &data, f, c.level),
            (Some(Err(e)), true) => Err(e.clone()),
            (None, true) => unreachable!("a fit is made whenever a method needs one"),
        };
        match est {
            Ok(e) => estimates.push(e),
            Err(e) => {
                eprintln!("error: {m}: {e}");
                status = worse(status, Error::Core(e.clone()).exit_code());
                errors.push(MethodError { method: m, error: e.to_string() });
            }
        }
    }

    let mut lrt = None;
    if c.with_lrt {
        if data.all_verified() {
            notes.push("ignorability test skipped: it needs unverified subjects".into());
        } else if let Some(Ok(main)) = &model {
            let other = fit(&data, &c.model.fit_options(!main.constrain_mar));
            match other {
                Ok(o) => {
                    let (ni, mar) = if main.constrain_mar { (&o, main) } else { (main, &o) };
                    lrt = Some(lrt_from_fits(ni, mar));
                }
                Err(e) => {
                    eprintln!("error: ignorability test: {e}");
                    status = worse(status, Error::Core(e.clone()).exit_code());
                    notes.push(format!("ignorability test failed: {e}"));
                }
            }
        }
    }

    let mut bootstrap = None;
    if c.bootstrap > 0 {
        match bootstrap_se(&data, c.bootstrap, c.model.seed) {
            Ok(se) => bootstrap = Some(BootstrapReport { reps: c.bootstrap, seed: c.model.seed, se }),
            Err(e) => {
                eprintln!("error: bootstrap: {e}");
                status = worse(status, Error::Core(e.clone()).exit_code());
                notes.push(format!("bootstrap failed: {e}"));
            }
        }
    }

    for e in &estimates {
        eprintln!("{:<14} {:.4} (se {:.4}, CI {:.4} to {:.4})", e.method.name(), e.mu_hat, e.se, e.ci.0, e.ci.1);
    }
    let report = EstimateReport {
        n: data.len(),
        n_verified: data.n_verified(),
        level: c.level,
        fit: match &model {
            Some(Ok(f)) => Some(FitReport::new(f, &data, tr.as_ref())),
            _ => None,
        },
        estimates,
        errors,
        lrt,
        bootstrap,
        notes,
        standardization: tr,
    };
    match emit_json(&report, c.output.as_deref()) {
        Ok(()) => status,
        Err(e) => worse(status, report_error(&e)),
    }
}

pub fn cmd_simulate(c: &SimulateCmd) -> i32 {
    let spec = scenario_spec(c.scenario, c.lambda);
    let mut cfg = McConfig::new(c.n as usize, c.reps as usize, c.seed);
    cfg.methods = c.methods.clone();
    cfg.level = c.level;
    cfg.with_lrt = c.with_lrt;
    cfg.fit.restarts = c.restarts;
    let report = match run_parallel(&spec, &cfg, c.jobs) {
        Ok(r) => r,
        Err(e) => return report_error(&e),
    };
    if let Err(e) = write_outputs(&report, &spec, &c.out_dir) {
        return report_error(&e);
    }
    print!("{}", format_summary(&report));
    match report.check_failures() {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e.into()),
    }
}

pub fn cmd_generate(c: &GenerateCmd) -> i32 {
    let spec = scenario_spec(c.scenario, c.lambda);
    let sim = match generate(&spec, c.n as usize, c.seed) {
        Ok(s) => s,
        Err(e) => return report_error(&e.into()),
    };
    let data = if c.full { sim.fully_labeled() } else { sim.data };
    match save_csv(&data, &c.output) {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}
