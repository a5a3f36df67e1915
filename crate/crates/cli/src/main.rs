//! `sgm`: command-line driver for shadow Gierer-Meinhardt simulations.

mod artifact;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use sgm_core::bounds::{self, RealizedInputs, Verdict};
use sgm_core::ensemble::{self, StoppingDiagnostics};
use sgm_core::model::{phi_c1_mismatch, verify_phi_inequality};
use sgm_core::solver::{self, RunOutput};
use sgm_core::{output, Error, Parameters, RadialGrid};

use artifact::{csv_preamble, stamped_json, verify_file, write_atomic};
use config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_BREAKDOWN: u8 = 2;
pub const EXIT_ASSERTION: u8 = 3;

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "SHADOW_GM_OUT";

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: "config",
            message: message.into(),
            code: EXIT_USAGE,
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: "io",
            message: message.into(),
            code: EXIT_USAGE,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (kind, code) = match e {
            Error::AdmissibilityViolation(_) => ("admissibility_violation", EXIT_USAGE),
            Error::Domain(_) => ("domain", EXIT_USAGE),
            Error::InfeasibleSelection(_) => ("infeasible_selection", EXIT_USAGE),
            Error::StepRejected(_) => ("step_rejected", EXIT_BREAKDOWN),
            Error::NumericalBreakdown { .. } => ("numerical_breakdown", EXIT_BREAKDOWN),
        };
        CliError {
            kind,
            message: e.to_string(),
            code,
        }
    }
}

#[derive(Parser)]
#[command(name = "sgm", version, about = "Stochastic shadow Gierer-Meinhardt simulations and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Seed override: the path seed for `simulate`, the base seed otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (all cores by default); results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the environment and the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved parameters and regime flags.
    Validate(Common),
    /// Run one path and write its trajectory, snapshots, path and report.
    Simulate(Common),
    /// Run a Monte Carlo campaign and write per-path rows and a summary.
    Ensemble(Common),
    /// Evaluate every closed-form bound for a file of realized inputs.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// TOML or JSON file with the realized inputs.
        #[arg(long)]
        inputs: PathBuf,
    },
    /// Check the differential inequality and smoothness of the initial profile.
    VerifyProfile {
        #[command(flatten)]
        common: Common,
        /// Number of grid intervals for the scan.
        #[arg(long, default_value_t = 10_000)]
        nodes: usize,
    },
    /// Compare empirical running-maximum tails with the analytic bound.
    TailCheck(Common),
    /// Run the campaign at several amplitudes.
    SweepGamma {
        #[command(flatten)]
        common: Common,
        /// Comma-separated amplitudes; replaces the configured list.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
    /// Re-hash the config embedded in artifacts (files or directories).
    Verify {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

struct Context {
    cfg: RunConfig,
    hash: String,
    canonical: String,
    out: PathBuf,
    threads: Option<usize>,
}

impl Context {
    fn load(common: &Common, seed_target: SeedTarget) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            match seed_target {
                SeedTarget::Path => cfg.seed = seed,
                SeedTarget::Ensemble => cfg.ensemble.base_seed = seed,
                SeedTarget::Tail => cfg.tail.base_seed = seed,
                SeedTarget::Sweep => cfg.sweep.base_seed = seed,
            }
        }
        let out = common
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self::finish(cfg, out, common.threads))
    }

    fn finish(cfg: RunConfig, out: PathBuf, threads: Option<usize>) -> Self {
        Context {
            hash: cfg.hash(),
            canonical: cfg.canonical(),
            cfg,
            out,
            threads,
        }
    }

    fn params(&self) -> Result<Parameters, CliError> {
        Ok(Parameters::validate(self.cfg.params)?)
    }

    fn preamble(&self) -> String {
        csv_preamble(&self.hash, &self.canonical)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        write_atomic(&self.out, name, contents.as_bytes())
    }

    fn write_json<T: Serialize>(&self, name: &str, payload: &T) -> Result<PathBuf, CliError> {
        self.write(name, &stamped_json(&self.hash, &self.canonical, payload)?)
    }

    fn write_config(&self) -> Result<PathBuf, CliError> {
        self.write("config.toml", &self.canonical)
    }
}

#[derive(Clone, Copy)]
enum SeedTarget {
    Path,
    Ensemble,
    Tail,
    Sweep,
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string(value).expect("JSON values serialize"));
}

fn validate(common: &Common) -> Result<u8, CliError> {
    let ctx = Context::load(common, SeedTarget::Path)?;
    let params = ctx.params()?;
    let selection = bounds::select_beta_k(&params).ok();
    print_json(&json!({
        "params": params,
        "admissible": true,
        "blowup_regime": params.blowup_regime,
        "selection": selection,
        "config_hash": ctx.hash,
    }));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    seed: u64,
    params: Parameters,
    controls: &'a solver::Controls,
    report: &'a sgm_core::solver::BlowupReport,
    path_check: Option<bounds::PathCheck>,
    stopping: Option<StoppingDiagnostics>,
    early_profiles: usize,
    early_truncated: bool,
    error: Option<String>,
}

fn write_run(
    ctx: &Context,
    params: &Parameters,
    out: &RunOutput,
    path: Option<&sgm_core::brownian::BrownianPath>,
    error: Option<String>,
) -> Result<Option<bounds::PathCheck>, CliError> {
    let grid = RadialGrid::uniform(ctx.cfg.solver.grid_intervals, params.n)?;
    let check = match (path, &error) {
        (Some(p), None) => Some(bounds::bound_check_per_path(out, p, params)?),
        _ => None,
    };
    let stopping = error
        .is_none()
        .then(|| ensemble::stopping_diagnostics(out, params, &grid))
        .flatten();
    let preamble = ctx.preamble();
    ctx.write("trajectory.csv", &output::trajectory_csv(&preamble, &out.trajectory))?;
    ctx.write("snapshots.csv", &output::snapshot_csv(&preamble, &out.snapshots, &grid))?;
    if let Some(p) = path {
        ctx.write("path.csv", &output::path_csv(&preamble, p))?;
    }
    ctx.write_json(
        "report.json",
        &SimulateReport {
            seed: ctx.cfg.seed,
            params: *params,
            controls: &ctx.cfg.solver,
            report: &out.report,
            path_check: check,
            stopping,
            early_profiles: out.early.profiles.len(),
            early_truncated: out.early.truncated,
            error,
        },
    )?;
    ctx.write_config()?;
    Ok(check)
}

fn simulate(common: &Common) -> Result<u8, CliError> {
    let ctx = Context::load(common, SeedTarget::Path)?;
    let params = ctx.params()?;
    ctx.cfg.solver.validate()?;
    match solver::run_seeded(&params, &ctx.cfg.solver, ctx.cfg.seed) {
        Ok((out, path)) => {
            let check = write_run(&ctx, &params, &out, Some(&path), None)?;
            let r = &out.report;
            print_json(&json!({
                "blew_up": r.blew_up,
                "trigger": r.trigger,
                "t_b": r.t_hi.filter(|_| r.blew_up),
                "t_lambda": r.t_lambda,
                "bound": check.map(|c| c.bound),
                "verdict": check.map(|c| c.verdict),
                "out": ctx.out,
            }));
            Ok(if check.is_some_and(|c| c.verdict == Verdict::Violated) {
                EXIT_ASSERTION
            } else {
                EXIT_OK
            })
        }
        Err(failure) => {
            let err = CliError::from(failure.error.clone());
            if let Some(out) = failure.output {
                write_run(&ctx, &params, &out, None, Some(failure.error.to_string()))?;
            }
            Err(err)
        }
    }
}

fn run_ensemble(common: &Common) -> Result<u8, CliError> {
    let ctx = Context::load(common, SeedTarget::Ensemble)?;
    let params = ctx.params()?;
    let e = &ctx.cfg.ensemble;
    let stats = ensemble::run_ensemble(&params, e.paths, e.base_seed, &ctx.cfg.solver, ctx.threads)?;
    let consistent = stats.aggregates_consistent();
    ctx.write("ensemble.csv", &output::ensemble_csv(&ctx.preamble(), &stats.rows))?;
    ctx.write_json(
        "summary.json",
        &json!({
            "params": params,
            "base_seed": stats.base_seed,
            "aggregates": stats.aggregates,
            "aggregates_consistent": consistent,
        }),
    )?;
    ctx.write_config()?;
    let a = &stats.aggregates;
    print_json(&json!({
        "paths": a.paths,
        "blew_up": a.blew_up,
        "satisfied": a.satisfied,
        "violated": a.violated,
        "inconclusive": a.inconclusive,
        "failed": a.failed,
        "out": ctx.out,
    }));
    Ok(if a.failed > 0 {
        EXIT_BREAKDOWN
    } else if a.violated > 0 || !consistent {
        EXIT_ASSERTION
    } else {
        EXIT_OK
    })
}

fn load_inputs(path: &Path) -> Result<RealizedInputs, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid inputs: {e}")))
    } else {
        toml::from_str(&text).map_err(|e| CliError::config(format!("invalid inputs: {e}")))
    }
}

fn run_bounds(common: &Common, inputs: &Path) -> Result<u8, CliError> {
    let ctx = Context::load(common, SeedTarget::Path)?;
    let params = ctx.params()?;
    let inputs = load_inputs(inputs)?;
    let grid = RadialGrid::uniform(ctx.cfg.solver.grid_intervals, params.n)?;
    let record = bounds::evaluate_all(&params, &inputs, &grid)?;
    ctx.write_json("bounds.json", &record)?;
    ctx.write_config()?;
    print_json(&json!({
        "k_theta": record.k_theta,
        "bound": record.blowup_bound.value,
        "cap": record.blowup_bound.cap,
        "applicable": record.blowup_bound.applicable,
        "out": ctx.out,
    }));
    Ok(EXIT_OK)
}

/// Tolerances of the profile check.
const PROFILE_MARGIN_TOL: f64 = 1e-10;
const PROFILE_C1_TOL: f64 = 1e-12;

fn verify_profile(common: &Common, nodes: usize) -> Result<u8, CliError> {
    let ctx = Context::load(common, SeedTarget::Path)?;
    let params = ctx.params()?;
    let grid = RadialGrid::uniform(nodes, params.n)?;
    let report = verify_phi_inequality(&params, &grid);
    let (value_mismatch, slope_mismatch) = phi_c1_mismatch(params.delta, params.alpha);
    let pass = report.holds(PROFILE_MARGIN_TOL)
        && value_mismatch <= PROFILE_C1_TOL
        && slope_mismatch <= PROFILE_C1_TOL;
    let payload = json!({
        "params": params,
        "nodes": nodes,
        "margin": report,
        "value_mismatch_at_delta": value_mismatch,
        "slope_mismatch_at_delta": slope_mismatch,
        "pass": pass,
    });
    ctx.write_json("profile.json", &payload)?;
    ctx.write_config()?;
    print_json(&json!({ "pass": pass, "min_margin": report.min_margin, "min_relative_margin": report.min_relative_margin }));
    Ok(if pass { EXIT_OK } else { EXIT_ASSERTION })
}

fn tail_check(common: &Common) -> Result<u8, CliError> {
    let ctx = Context::load(common, SeedTarget::Tail)?;
    let t = &ctx.cfg.tail;
    let rows = ensemble::tail_check(&t.times, &t.levels, t.paths, t.base_seed, t.dt, ctx.threads)?;
    ctx.write("tail.csv", &output::tail_csv(&ctx.preamble(), &rows))?;
    ctx.write_config()?;
    let pass = rows.iter().all(|r| r.pass);
    print_json(&json!({ "rows": rows.len(), "pass": pass, "out": ctx.out }));
    Ok(if pass { EXIT_OK } else { EXIT_ASSERTION })
}

fn sweep_gamma(common: &Common, gammas: Option<Vec<f64>>) -> Result<u8, CliError> {
    let mut ctx = Context::load(common, SeedTarget::Sweep)?;
    if let Some(g) = gammas {
        let mut cfg = ctx.cfg.clone();
        cfg.sweep.gammas = g;
        ctx = Context::finish(cfg, ctx.out, ctx.threads);
    }
    let params = ctx.params()?;
    let s = &ctx.cfg.sweep;
    let table = ensemble::gamma_sweep(&params, &s.gammas, s.paths, s.base_seed, &ctx.cfg.solver, ctx.threads)?;
    ctx.write("sweep.csv", &output::sweep_csv(&ctx.preamble(), &table.rows))?;
    ctx.write_json("sweep.json", &table)?;
    ctx.write_config()?;
    let c = &table.checks;
    let decade = 10f64.powf(-(params.p - 1.0));
    let ratio_ok = table
        .rows
        .windows(2)
        .zip(&c.fixed_k_ratios)
        .all(|(w, r)| {
            let expected = (w[1].gamma / w[0].gamma).powf(-(params.p - 1.0));
            ((r - expected) / expected).abs() < 1e-9
        });
    let pass = ratio_ok && c.bound_non_increasing && c.t_b_non_increasing;
    print_json(&json!({ "checks": c, "decade_ratio": decade, "pass": pass, "out": ctx.out }));
    Ok(if pass { EXIT_OK } else { EXIT_ASSERTION })
}

fn collect_artifacts(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(format!("cannot list {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "csv" || e == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::config("no CSV or JSON artifacts found"));
    }
    Ok(files)
}

fn verify(paths: &[PathBuf]) -> Result<u8, CliError> {
    let checks: Vec<_> = collect_artifacts(paths)?.iter().map(|f| verify_file(f)).collect();
    let ok = checks.iter().all(|c| c.ok);
    print_json(&json!({ "ok": ok, "files": checks }));
    Ok(if ok { EXIT_OK } else { EXIT_ASSERTION })
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate(c) => validate(&c),
        Command::Simulate(c) => simulate(&c),
        Command::Ensemble(c) => run_ensemble(&c),
        Command::Bounds { common, inputs } => run_bounds(&common, &inputs),
        Command::VerifyProfile { common, nodes } => verify_profile(&common, nodes),
        Command::TailCheck(c) => tail_check(&c),
        Command::SweepGamma { common, gammas } => sweep_gamma(&common, gammas),
        Command::Verify { paths } => verify(&paths),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::from(EXIT_OK);
            }
            let err = json!({ "error": "usage", "message": e.to_string(), "exit_code": EXIT_USAGE });
            eprintln!("{err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let err = json!({ "error": e.kind, "message": e.message, "exit_code": e.code });
            eprintln!("{err}");
            ExitCode::from(e.code)
        }
    }
}
