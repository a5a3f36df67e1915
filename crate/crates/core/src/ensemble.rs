//! Monte Carlo campaigns over independent driver paths.
//!
//! Path `i` of a campaign uses the seed [`derive_seed`]`(base, i)`, and every
//! per-path record is a function of that seed alone, so results do not depend
//! on execution order or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    self, bound_check_per_path, lemma43_check, lemma44_check, PathCheck, StoppingCase,
    StoppingInputs, Verdict,
};
use crate::brownian::{tail_bound, BrownianPath};
use crate::error::{Error, Result};
use crate::model::{Parameters, RadialGrid};
use crate::solver::{estimate_c0, run_seeded, Controls, RunOutput, Trigger};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// The splitmix64 finalizer, a bijection on `u64`.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of path `index`; injective in `index` for a fixed `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_add(mix64(index)))
}

/// Runs `f` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::domain("thread count must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Checks from the stopping-time analysis on one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingDiagnostics {
    pub c0: f64,
    pub c0_clipped: bool,
    pub eps_star: f64,
    /// `(h* - h(t_lambda)) / h*`; nonpositive when `h(t_lambda) >= h*`.
    pub lemma43_violation: f64,
    /// Largest `v / envelope` on `z <= 1/2`, `t <= t_hat_lambda`.
    pub lemma44_ratio: f64,
    pub lemma44_profiles: usize,
    pub t_hat_lambda: f64,
    /// Lower bound on `t_hat_lambda` (0 when not positive).
    pub t_hat_bound: f64,
    pub t_hat_r: Option<f64>,
}

/// Evaluates the stopping-time checks on a run that reached `t_lambda`.
/// Returns `None` when the run never reached it, when no admissible
/// `(beta, k)` exists, or when the early profiles were not retained up to
/// `t_hat_lambda`.
pub fn stopping_diagnostics(
    output: &RunOutput,
    params: &Parameters,
    grid: &RadialGrid,
) -> Option<StoppingDiagnostics> {
    let report = &output.report;
    let t_lambda = report.t_lambda?;
    let t_hat = report.t_hat_lambda?;
    let bstar = report.bstar_t_lambda?;
    let sel = bounds::select_beta_k(params).ok()?;
    if (sel.beta - report.beta).abs() > 0.0 {
        return None;
    }
    let early = &output.early;
    if early.profiles.last().is_none_or(|p| p.t < t_hat) {
        return None;
    }
    let c0 = estimate_c0(&output.trajectory, params.n, t_lambda)?;
    let h0 = output.trajectory.samples.first()?.mean_vbeta;
    let inp = StoppingInputs {
        beta: sel.beta,
        k: sel.k,
        ell: sel.ell,
        h0,
        t_lambda,
        bstar_t_lambda: bstar,
    };
    let eps = bounds::eps_star(params, &inp, c0.value).ok()?;
    let l43 = lemma43_check(output)?;
    let l44 = lemma44_check(&early.profiles, grid, &inp, eps.value, t_hat).ok()?;
    let through = bounds::profiles_through(&early.profiles, t_hat);
    let c1 = |r: f64| bounds::estimate_c1(through, grid, r);
    let t_bound = bounds::t_hat_lower_bound(
        params,
        &inp,
        report.h_star_lambda?,
        &eps,
        c1,
        &bounds::default_r_grid(bounds::DEFAULT_R_POINTS),
        bounds::ExponentConvention::LemmaStatement,
    )
    .ok()?;
    Some(StoppingDiagnostics {
        c0: c0.value,
        c0_clipped: c0.clipped,
        eps_star: eps.value,
        lemma43_violation: l43.relative_violation,
        lemma44_ratio: l44.worst_ratio,
        lemma44_profiles: l44.profiles_checked,
        t_hat_lambda: t_hat,
        t_hat_bound: t_bound.value,
        t_hat_r: t_bound.r_used,
    })
}

/// One path of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub id: u64,
    pub seed: u64,
    pub gamma: f64,
    pub blew_up: bool,
    pub trigger: Trigger,
    pub t_lo: Option<f64>,
    pub t_b: Option<f64>,
    pub stop_time: f64,
    pub t_lambda: Option<f64>,
    pub case: Option<StoppingCase>,
    pub theta: Option<f64>,
    pub bstar_theta: Option<f64>,
    pub k_theta: Option<f64>,
    pub gamma_margin: Option<f64>,
    pub bound: Option<f64>,
    pub cap: Option<f64>,
    pub verdict: Verdict,
    pub steps: u64,
    pub min_xi_hat_increment: f64,
    /// Worst relative violation among `v >= gamma`, `d_z v <= 0` and
    /// `z^n v^beta <= mean v^beta`.
    pub lemma21_worst: f64,
    pub stopping: Option<StoppingDiagnostics>,
    pub error: Option<String>,
}

fn row_from(
    id: u64,
    seed: u64,
    params: &Parameters,
    grid: &RadialGrid,
    output: &RunOutput,
    check: Option<PathCheck>,
    error: Option<String>,
) -> EnsembleRow {
    let r = &output.report;
    let w = &r.worst;
    EnsembleRow {
        id,
        seed,
        gamma: params.gamma,
        blew_up: r.blew_up,
        trigger: r.trigger,
        t_lo: r.t_lo,
        t_b: r.t_hi.filter(|_| r.blew_up),
        stop_time: r.stop_time,
        t_lambda: r.t_lambda,
        case: check.map(|c| c.case),
        theta: check.map(|c| c.theta),
        bstar_theta: check.map(|c| c.bstar_theta),
        k_theta: check.map(|c| c.k_theta),
        gamma_margin: check.map(|c| c.gamma_margin),
        bound: check.map(|c| c.bound),
        cap: check.map(|c| c.cap),
        verdict: if error.is_some() {
            Verdict::Failed
        } else {
            check.map_or(Verdict::Failed, |c| c.verdict)
        },
        steps: r.steps_accepted,
        min_xi_hat_increment: w.min_xi_hat_increment,
        lemma21_worst: w.lower_bound.max(w.monotone).max(w.mean_bound),
        stopping: if error.is_none() {
            stopping_diagnostics(output, params, grid)
        } else {
            None
        },
        error,
    }
}

/// Runs path `index` of a campaign and returns its row together with the
/// full run output (absent when the run could not start).
pub fn run_member(
    params: &Parameters,
    index: u64,
    base_seed: u64,
    controls: &Controls,
) -> (EnsembleRow, Option<(RunOutput, BrownianPath)>) {
    let seed = derive_seed(base_seed, index);
    let grid = RadialGrid::uniform(controls.grid_intervals, params.n);
    let empty = |msg: String| EnsembleRow {
        id: index,
        seed,
        gamma: params.gamma,
        blew_up: false,
        trigger: Trigger::Breakdown,
        t_lo: None,
        t_b: None,
        stop_time: 0.0,
        t_lambda: None,
        case: None,
        theta: None,
        bstar_theta: None,
        k_theta: None,
        gamma_margin: None,
        bound: None,
        cap: None,
        verdict: Verdict::Failed,
        steps: 0,
        min_xi_hat_increment: f64::NAN,
        lemma21_worst: f64::NAN,
        stopping: None,
        error: Some(msg),
    };
    let grid = match grid {
        Ok(g) => g,
        Err(e) => return (empty(e.to_string()), None),
    };
    match run_seeded(params, controls, seed) {
        Ok((output, path)) => {
            let check = bound_check_per_path(&output, &path, params);
            let (check, error) = match check {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let row = row_from(index, seed, params, &grid, &output, check, error);
            (row, Some((output, path)))
        }
        Err(failure) => match failure.output {
            Some(output) => {
                let row = row_from(
                    index,
                    seed,
                    params,
                    &grid,
                    &output,
                    None,
                    Some(failure.error.to_string()),
                );
                (row, None)
            }
            None => (empty(failure.error.to_string()), None),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub paths: usize,
    pub blew_up: usize,
    pub fraction_blew_up: f64,
    pub applicable: usize,
    pub satisfied: usize,
    pub violated: usize,
    pub inconclusive: usize,
    pub failed: usize,
    /// Satisfied over applicable; `None` when no path was applicable.
    pub fraction_satisfied: Option<f64>,
    /// Paths whose blowup bracket ends by `delta^2/(2n) (1+alpha/2)^(1-p)`.
    pub within_cap: usize,
    pub fraction_within_cap: f64,
    /// Lower bound on that fraction with `theta0 = 1`.
    pub probability_bound: bounds::ProbabilityBound,
    /// `fraction_within_cap >= bound - 3 sigma`; `None` when the bound is
    /// vacuous.
    pub probability_bound_holds: Option<bool>,
}

impl Aggregates {
    pub fn from_rows(rows: &[EnsembleRow], params: &Parameters) -> Result<Self> {
        let paths = rows.len();
        let count = |f: &dyn Fn(&EnsembleRow) -> bool| rows.iter().filter(|r| f(r)).count();
        let blew_up = count(&|r| r.blew_up);
        let satisfied = count(&|r| r.verdict == Verdict::Satisfied);
        let violated = count(&|r| r.verdict == Verdict::Violated);
        let inconclusive = count(&|r| r.verdict == Verdict::Inconclusive);
        let failed = count(&|r| r.verdict == Verdict::Failed);
        let applicable = satisfied + violated + inconclusive;
        let cap = bounds::blowup_bound_thm31(params.gamma, 1.0, params.p, params.delta, params.alpha, params.n).cap;
        let within_cap = count(&|r| r.t_b.is_some_and(|t| t <= cap));
        let frac = |k: usize| if paths == 0 { 0.0 } else { k as f64 / paths as f64 };
        let fraction_within_cap = frac(within_cap);
        let probability_bound = bounds::probability_bound_cor32(
            1.0,
            params.gamma,
            params.lambda,
            params.xi0,
            params.p,
            params.q,
            params.n,
        )?;
        let probability_bound_holds = (!probability_bound.vacuous).then(|| {
            let pb = probability_bound.bound.clamp(0.0, 1.0);
            let sigma = (pb * (1.0 - pb) / paths.max(1) as f64).sqrt();
            fraction_within_cap >= probability_bound.bound - 3.0 * sigma
        });
        Ok(Aggregates {
            paths,
            blew_up,
            fraction_blew_up: frac(blew_up),
            applicable,
            satisfied,
            violated,
            inconclusive,
            failed,
            fraction_satisfied: (applicable > 0).then(|| satisfied as f64 / applicable as f64),
            within_cap,
            fraction_within_cap,
            probability_bound,
            probability_bound_holds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub params: Parameters,
    pub base_seed: u64,
    pub rows: Vec<EnsembleRow>,
    pub aggregates: Aggregates,
}

impl EnsembleStats {
    /// Recomputes the aggregates from the rows and compares.
    pub fn aggregates_consistent(&self) -> bool {
        Aggregates::from_rows(&self.rows, &self.params).is_ok_and(|a| a == self.aggregates)
    }
}

pub fn run_ensemble(
    params: &Parameters,
    m: usize,
    base_seed: u64,
    controls: &Controls,
    threads: Option<usize>,
) -> Result<EnsembleStats> {
    if m == 0 {
        return Err(Error::domain("ensemble size must be at least 1"));
    }
    controls.validate()?;
    let rows: Vec<EnsembleRow> = with_threads(threads, || {
        (0..m as u64)
            .into_par_iter()
            .map(|i| run_member(params, i, base_seed, controls).0)
            .collect()
    })?;
    let aggregates = Aggregates::from_rows(&rows, params)?;
    Ok(EnsembleStats {
        params: *params,
        base_seed,
        rows,
        aggregates,
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub paths: usize,
    pub blew_up: usize,
    /// Median blowup time, counting paths without blowup as `+inf`;
    /// `None` when that median is infinite.
    pub median_t_b: Option<f64>,
    /// Median of the per-path bound at the realized `K_theta`.
    pub median_bound: Option<f64>,
    /// The bound at `K_theta = (lambda xi0)^-q e^-(p-1)` (`theta = 1`, `B* = 0`).
    pub fixed_k_bound: f64,
    /// Worst monitor values over the paths at this amplitude.
    pub lemma21_worst: f64,
    pub min_xi_hat_increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepChecks {
    pub t_b_non_increasing: bool,
    pub bound_non_increasing: bool,
    /// Log-log slope of the median bound over the last pair of amplitudes.
    pub top_slope: Option<f64>,
    pub slope_within_10_percent: Option<bool>,
    /// Ratios of consecutive fixed-`K` bounds.
    pub fixed_k_ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub checks: SweepChecks,
}

/// Runs `m_per_gamma` paths per amplitude. Every amplitude uses the same
/// seeds, so the drivers are shared across the sweep.
pub fn gamma_sweep(
    params: &Parameters,
    gammas: &[f64],
    m_per_gamma: usize,
    base_seed: u64,
    controls: &Controls,
    threads: Option<usize>,
) -> Result<SweepTable> {
    if gammas.iter().any(|g| !(*g > 0.0)) || gammas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("amplitudes must be positive and increasing"));
    }
    let fixed_k = bounds::k_theta(params, 1.0, 0.0)?;
    let mut rows = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let p = params.with_gamma(g)?;
        let stats = run_ensemble(&p, m_per_gamma, base_seed, controls, threads)?;
        let mut t_b: Vec<f64> = stats
            .rows
            .iter()
            .map(|r| r.t_b.unwrap_or(f64::INFINITY))
            .collect();
        let mut b: Vec<f64> = stats.rows.iter().filter_map(|r| r.bound).collect();
        rows.push(SweepRow {
            gamma: g,
            paths: m_per_gamma,
            blew_up: stats.aggregates.blew_up,
            median_t_b: median(&mut t_b).filter(|x| x.is_finite()),
            median_bound: median(&mut b),
            fixed_k_bound: bounds::blowup_bound_thm31(g, fixed_k, p.p, p.delta, p.alpha, p.n).value,
            lemma21_worst: stats.rows.iter().map(|r| r.lemma21_worst).fold(f64::NEG_INFINITY, f64::max),
            min_xi_hat_increment: stats
                .rows
                .iter()
                .map(|r| r.min_xi_hat_increment)
                .fold(f64::INFINITY, f64::min),
        });
    }
    let checks = sweep_checks(&rows, params.p);
    Ok(SweepTable { rows, checks })
}

fn non_increasing(values: &[Option<f64>]) -> bool {
    values.windows(2).all(|w| match (w[0], w[1]) {
        (_, None) => w[0].is_none(),
        (None, Some(_)) => true,
        (Some(a), Some(b)) => b <= a,
    })
}

pub fn sweep_checks(rows: &[SweepRow], p: f64) -> SweepChecks {
    let t_b: Vec<Option<f64>> = rows.iter().map(|r| r.median_t_b).collect();
    let b: Vec<Option<f64>> = rows.iter().map(|r| r.median_bound).collect();
    let top_slope = match rows {
        [.., a, c] => match (a.median_bound, c.median_bound) {
            (Some(x), Some(y)) => Some((y / x).ln() / (c.gamma / a.gamma).ln()),
            _ => None,
        },
        _ => None,
    };
    SweepChecks {
        t_b_non_increasing: non_increasing(&t_b),
        bound_non_increasing: non_increasing(&b),
        top_slope,
        slope_within_10_percent: top_slope.map(|s| ((s + (p - 1.0)) / (p - 1.0)).abs() <= 0.1),
        fixed_k_ratios: rows
            .windows(2)
            .map(|w| w[1].fixed_k_bound / w[0].fixed_k_bound)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub a: f64,
    pub paths: usize,
    pub hits: usize,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    /// `ci_high <= bound`.
    pub pass: bool,
}

/// Wilson score interval for `hits` successes out of `n` at quantile `z`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Empirical `P(B*_t >= A)` over `m` paths with 99% Wilson intervals,
/// compared with the reflection-principle bound. The same paths serve every
/// `(t, A)` pair.
pub fn tail_check(
    t_values: &[f64],
    a_values: &[f64],
    m: usize,
    base_seed: u64,
    dt: f64,
    threads: Option<usize>,
) -> Result<Vec<TailRow>> {
    if m == 0 {
        return Err(Error::domain("path count must be at least 1"));
    }
    if t_values.iter().chain(a_values).any(|x| !(*x > 0.0 && x.is_finite())) || !(dt > 0.0) {
        return Err(Error::domain("times, levels and dt must be positive"));
    }
    if t_values.is_empty() || a_values.is_empty() {
        return Ok(Vec::new());
    }
    let horizon = t_values.iter().copied().fold(0.0, f64::max);
    let maxima: Vec<Vec<f64>> = with_threads(threads, || {
        (0..m as u64)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let path = BrownianPath::sample(horizon, dt, derive_seed(base_seed, i))?;
                t_values.iter().map(|&t| path.running_max(t)).collect()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut out = Vec::with_capacity(t_values.len() * a_values.len());
    for (ti, &t) in t_values.iter().enumerate() {
        for &a in a_values {
            let hits = maxima.iter().filter(|row| row[ti] >= a).count();
            let (ci_low, ci_high) = wilson_interval(hits, m, Z99);
            let bound = tail_bound(t, a)?;
            out.push(TailRow {
                t,
                a,
                paths: m,
                hits,
                frequency: hits as f64 / m as f64,
                ci_low,
                ci_high,
                bound,
                pass: ci_high <= bound,
            });
        }
    }
    Ok(out)
}
