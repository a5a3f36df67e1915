//! Acceptance suite. Each test evaluates one criterion, writes a single
//! `criterion N PASS|FAIL: ...` line to stderr, and fails when the criterion
//! fails.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use sgm_core::bounds::{self, ExponentConvention, StoppingInputs, Verdict};
use sgm_core::brownian::{tail_bound, BrownianPath};
use sgm_core::ensemble::{self, mix64, EnsembleStats, SweepTable};
use sgm_core::model::{phi_c1_mismatch, verify_phi_inequality};
use sgm_core::solver::{Controls, ReactionMode, Solver, Switches};
use sgm_core::{Parameters, RadialGrid, RawParameters};

const SCENARIO_PATHS: usize = 100;
const SCENARIO_SEED: u64 = 0;

fn scenario() -> Parameters {
    Parameters::validate(RawParameters::reference()).unwrap()
}

fn scenario_ensemble() -> &'static EnsembleStats {
    static STATS: OnceLock<EnsembleStats> = OnceLock::new();
    STATS.get_or_init(|| {
        ensemble::run_ensemble(&scenario(), SCENARIO_PATHS, SCENARIO_SEED, &Controls::default(), None).unwrap()
    })
}

fn scenario_sweep() -> &'static SweepTable {
    static TABLE: OnceLock<SweepTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        ensemble::gamma_sweep(&scenario(), &[1e2, 1e3, 1e4], 20, 7, &Controls::default(), None).unwrap()
    })
}

fn report(id: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {id} {verdict}: {detail}");
    assert!(pass, "criterion {id} failed: {detail}");
}

fn uniform(state: &mut u64) -> f64 {
    *state = mix64(*state);
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

fn random_admissible(state: &mut u64) -> Parameters {
    let p = 1.5 + 2.5 * uniform(state);
    let r = 0.5 + 3.5 * uniform(state);
    let s = 2.0 * uniform(state);
    let q = (p - 1.0) / r * (s + 1.0) + 0.05 + 2.0 * uniform(state);
    let n = 1 + (uniform(state) * 5.0) as u32;
    let delta = 0.2 + 0.7 * uniform(state);
    Parameters::validate(RawParameters {
        p,
        q,
        r,
        s,
        n,
        delta,
        ..RawParameters::reference()
    })
    .unwrap()
}

#[test]
fn criterion_1_profile_certification() {
    let mut state = 2024;
    let mut sets = vec![scenario()];
    sets.extend((0..10).map(|_| random_admissible(&mut state)));
    let mut worst_margin = f64::INFINITY;
    let mut worst_c1 = 0.0f64;
    let mut failures = Vec::new();
    for params in &sets {
        let grid = RadialGrid::uniform(10_000, params.n).unwrap();
        let m = verify_phi_inequality(params, &grid);
        let (dv, ds) = phi_c1_mismatch(params.delta, params.alpha);
        let limits_ok = m.inner_limit_at_delta >= -1e-10 && m.outer_limit_at_delta >= -1e-10;
        worst_margin = worst_margin.min(m.min_margin);
        worst_c1 = worst_c1.max(dv).max(ds);
        if m.min_margin < -1e-10 || !limits_ok || dv > 1e-12 || ds > 1e-12 {
            failures.push(format!("(p={}, n={}, delta={})", params.p, params.n, params.delta));
        }
    }
    report(
        1,
        failures.is_empty(),
        &format!(
            "{} parameter sets, min margin {worst_margin:.3e} (need >= -1e-10), worst C1 mismatch {worst_c1:.1e} (need <= 1e-12){}",
            sets.len(),
            if failures.is_empty() { String::new() } else { format!(", failing {}", failures.join(" ")) }
        ),
    );
}

#[test]
fn criterion_2_xi_hat_monotonicity() {
    let rows = &scenario_ensemble().rows[..20];
    let worst = rows.iter().map(|r| r.min_xi_hat_increment).fold(f64::INFINITY, f64::min);
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    report(
        2,
        worst >= -1e-12 && errors == 0,
        &format!("20 scenario paths, smallest relative step increment of xi_hat {worst:.3e} (need >= -1e-12), {errors} failed runs"),
    );
}

#[test]
fn criterion_3_reaction_oracle() {
    let cases: [(f64, f64, f64); 3] = [(1.0, 1.0, 2.0), (2.0, 0.5, 2.0), (1.0, 1.0, 3.0)];
    let mut worst = 0.0f64;
    let mut ok = true;
    for (c, k0, p) in cases {
        let raw = if p == 2.0 {
            RawParameters::reference()
        } else {
            RawParameters {
                p,
                q: 2.0,
                ..RawParameters::reference()
            }
        };
        let params = Parameters::validate(raw).unwrap();
        let exact = c.powf(1.0 - p) / (k0 * (p - 1.0));
        for dt_max in [1e-2, 1e-3, 1e-4] {
            let controls = Controls {
                horizon: 2.0,
                grid_intervals: 16,
                dt_max,
                snapshot_times: vec![],
                switches: Switches {
                    diffusion: false,
                    reaction: ReactionMode::Frozen { k0 },
                    inhibitor_source: false,
                    noise: false,
                },
                ..Controls::default()
            };
            let mut solver = Solver::new(&params, &controls).unwrap();
            let state = solver.state_at_zero(vec![c; 17]).unwrap();
            let mut path = BrownianPath::sample(2.0, 1e-3, 1).unwrap();
            let out = solver.run_from(state, &mut path).unwrap();
            match out.report.bracket() {
                Some((_, hi)) if out.report.blew_up => worst = worst.max(((hi - exact) / exact).abs()),
                _ => ok = false,
            }
        }
    }
    report(
        3,
        ok && worst <= 0.01,
        &format!("3 (c, K0, p) cases x 3 step caps, worst relative error of T_b {worst:.2e} (need <= 1e-2)"),
    );
}

#[test]
fn criterion_4_blowup_bound_per_path() {
    let stats = scenario_ensemble();
    let a = &stats.aggregates;
    let rows = &stats.rows;
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.get(v.len() / 2).copied().unwrap_or(f64::NAN)
    };
    let t_lambda = median(rows.iter().filter_map(|r| r.t_lambda).collect());
    let bound = median(rows.iter().filter_map(|r| r.bound).collect());
    let stop = median(rows.iter().map(|r| r.stop_time).collect());
    let pass = a.applicable > 0 && a.fraction_satisfied == Some(1.0);
    report(
        4,
        pass,
        &format!(
            "{} paths, {} applicable, {} satisfied, {} violated, {} inconclusive, {} blew up; median t_lambda {t_lambda:.3e}, median bound {bound:.3e}, median stop time {stop}",
            a.paths, a.applicable, a.satisfied, a.violated, a.inconclusive, a.blew_up
        ),
    );
}

#[test]
fn criterion_5_solution_monitors() {
    let rows = &scenario_ensemble().rows;
    let sweep = &scenario_sweep().rows;
    let values: Vec<f64> = rows
        .iter()
        .map(|r| r.lemma21_worst)
        .chain(sweep.iter().map(|r| r.lemma21_worst))
        .collect();
    let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nan = values.iter().filter(|x| x.is_nan()).count();
    let paths = rows.len() + sweep.iter().map(|r| r.paths).sum::<usize>();
    report(
        5,
        worst <= 1e-8 && nan == 0,
        &format!("{paths} paths (scenario ensemble and amplitude sweep), worst relative violation of v >= gamma, d_z v <= 0, z^n v^beta <= mean v^beta: {worst:.3e} (need <= 1e-8)"),
    );
}

#[test]
fn criterion_6_brownian_tail_bound() {
    let rows = ensemble::tail_check(&[1.0], &[2.0, 3.0], 100_000, 6, 1e-3, None).unwrap();
    let pass = rows.iter().all(|r| r.pass) && (tail_bound(1.0, 2.0).unwrap() - 0.10798).abs() < 1e-5;
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("A={}: freq {:.5}, 99% CI [{:.5}, {:.5}], bound {:.5}", r.a, r.frequency, r.ci_low, r.ci_high, r.bound))
        .collect();
    report(6, pass, &format!("1e5 paths at t=1; {}", detail.join("; ")));
}

#[test]
fn criterion_7_gamma_scaling() {
    let table = scenario_sweep();
    let c = &table.checks;
    let ratios_ok = c.fixed_k_ratios.iter().all(|r| ((r - 0.1) / 0.1).abs() <= 1e-12);
    let medians: Vec<String> = table
        .rows
        .iter()
        .map(|r| match r.median_t_b {
            Some(t) => format!("{t:.4e}"),
            None => "none".into(),
        })
        .collect();
    let blowups: usize = table.rows.iter().map(|r| r.blew_up).sum();
    let t_b_defined = table.rows.iter().all(|r| r.median_t_b.is_some());
    let pass = ratios_ok && t_b_defined && c.t_b_non_increasing;
    report(
        7,
        pass,
        &format!(
            "fixed-K bound ratios {:?} (need 0.1), median T_b per amplitude [{}] with {blowups} blowups in {} paths (need finite and non-increasing)",
            c.fixed_k_ratios,
            medians.join(", "),
            table.rows.iter().map(|r| r.paths).sum::<usize>()
        ),
    );
}

struct HandRecord {
    raw: RawParameters,
    h0: f64,
    t_lambda: f64,
    bstar: f64,
    c0: f64,
    c1: f64,
    r: f64,
}

/// Direct transcription of the stopping-time expressions.
fn hand_values(params: &Parameters, sel: &bounds::BetaK, rec: &HandRecord) -> [f64; 4] {
    let (p, q, r, s) = (params.p, params.q, params.r, params.s);
    let (gamma, xi0, lambda, alpha) = (params.gamma, params.xi0, params.lambda, params.alpha);
    let n = params.n as f64;
    let (beta, k, l) = (sel.beta, sel.k, sel.ell);
    let (t, b) = (rec.t_lambda, rec.bstar);
    let h_star = rec.h0
        + beta * (lambda - 1.0) * lambda.powf(-q) * gamma.powf(beta + p - 1.0 - r)
            * (-p * t - (s + q + 1.0) * (3.0 * t / 2.0 + b)).exp()
            * xi0.powf(s - q + 1.0);
    let e1 = alpha * (1.0 + alpha / 2.0).powf(-k) * rec.h0.powf(l);
    let e2 = 2f64.powf(-l * n + n) * rec.c0 * gamma.powf(beta * l - k);
    let e3 = (p - k) * gamma.powf(p + l - k) / (2.0 * k * (lambda * xi0).powf(q)) * (-(p - 1.0) * t - q * b).exp();
    let eps = e1.min(e2).min(e3);
    let big_l = rec.c1 * n * beta * rec.r.powf(n - 1.0) * gamma.powf(beta - 1.0)
        + rec.c1 * rec.c1 * beta * (1.0 - beta) * gamma.powf(beta - 2.0)
        + beta * xi0.powf(-q) * (1.5 * q * t + q * b).exp() * (h_star / rec.r.powf(n)).powf((beta + p - 1.0) / beta);
    let d = n - 2.0 * beta / (k - 1.0);
    let num = h_star - rec.h0 - n * (2.0 * h_star.powf(l) / (eps * (k - 1.0))).powf(1.0 / (k - 1.0)) * rec.r.powf(d) / d;
    [h_star, eps, big_l, num / big_l]
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

#[test]
fn criterion_8_stopping_time_evaluators() {
    let records = [
        HandRecord {
            raw: RawParameters::reference(),
            h0: 50.0,
            t_lambda: 0.1,
            bstar: 0.2,
            c0: 1.0,
            c1: 10.0,
            r: 0.5,
        },
        HandRecord {
            raw: RawParameters {
                p: 3.0,
                q: 2.0,
                r: 2.0,
                s: 0.0,
                n: 3,
                delta: 0.3,
                gamma: 20.0,
                xi0: 0.5,
                lambda: 1.5,
            },
            h0: 12.0,
            t_lambda: 0.05,
            bstar: 0.1,
            c0: 2.5,
            c1: 4.0,
            r: 0.25,
        },
        HandRecord {
            raw: RawParameters {
                p: 2.5,
                q: 1.5,
                r: 2.0,
                s: 0.5,
                n: 2,
                delta: 0.6,
                gamma: 7.0,
                xi0: 2.0,
                lambda: 3.0,
            },
            h0: 3.0,
            t_lambda: 0.4,
            bstar: 0.7,
            c0: 0.3,
            c1: 1.5,
            r: 0.1,
        },
    ];
    let mut worst = 0.0f64;
    for rec in &records {
        let params = Parameters::validate(rec.raw).unwrap();
        let sel = bounds::select_beta_k(&params).unwrap();
        let [h_hand, eps_hand, l_hand, t_hand] = hand_values(&params, &sel, rec);
        let inp = StoppingInputs {
            beta: sel.beta,
            k: sel.k,
            ell: sel.ell,
            h0: rec.h0,
            t_lambda: rec.t_lambda,
            bstar_t_lambda: rec.bstar,
        };
        let h = bounds::h_star_lambda(&params, sel.beta, rec.h0, rec.t_lambda, rec.bstar).unwrap().value;
        let eps = bounds::eps_star(&params, &inp, rec.c0).unwrap();
        let l = bounds::l_lemma45(&params, sel.beta, rec.c1, rec.r, h, rec.t_lambda, rec.bstar).unwrap();
        let t = bounds::t_hat_lower_bound(&params, &inp, h, &eps, |_| rec.c1, &[rec.r], ExponentConvention::LemmaStatement).unwrap();
        let t_lib = if t.positive { t.value } else { t.numerator / t.l };
        for (a, b) in [(h, h_hand), (eps.value, eps_hand), (l, l_hand), (t_lib, t_hand)] {
            worst = worst.max(rel(a, b));
        }
        if !t.positive {
            worst = worst.max(t.value.abs());
        }
    }
    let rows = &scenario_ensemble().rows;
    let reaching: Vec<_> = rows
        .iter()
        .filter(|r| r.t_lambda.is_some_and(|tl| !r.blew_up || r.t_lo.is_some_and(|lo| tl < lo)))
        .collect();
    let diagnosed: Vec<_> = reaching.iter().filter_map(|r| r.stopping).collect();
    let l43 = diagnosed.iter().map(|d| d.lemma43_violation).fold(f64::NEG_INFINITY, f64::max);
    let l44 = diagnosed.iter().map(|d| d.lemma44_ratio).fold(f64::NEG_INFINITY, f64::max);
    let t_hat_ok = diagnosed.iter().all(|d| d.t_hat_lambda >= d.t_hat_bound);
    let pass = worst <= 1e-12
        && !reaching.is_empty()
        && diagnosed.len() == reaching.len()
        && l43 <= 0.0
        && l44 <= 1.0
        && t_hat_ok;
    report(
        8,
        pass,
        &format!(
            "3 records, worst relative mismatch {worst:.1e} (need <= 1e-12); {} of {} paths reaching t_lambda diagnosed, worst (h* - h(t_lambda))/h* {l43:.3e} (need <= 0), worst v/envelope {l44:.4} (need <= 1), realized t_hat >= its lower bound: {t_hat_ok}",
            diagnosed.len(),
            reaching.len()
        ),
    );
}

const DETERMINISM_CONFIG: &str = r#"seed = 5

[params]
p = 2.0
q = 1.0
r = 2.0
s = 0.0
n = 3
delta = 0.5
gamma = 100.0
xi0 = 1.0
lambda = 2.0

[solver]
horizon = 0.05
snapshot_times = [0.0, 0.01, 0.04]

[ensemble]
paths = 6
base_seed = 3

[tail]
times = [0.5, 1.0]
levels = [1.0, 2.0]
paths = 3000

[sweep]
gammas = [100.0, 1000.0]
paths = 3
"#;

const DETERMINISM_INPUTS: &str = "theta = 1.0\nbstar_theta = 0.0\nt_lambda = 0.1\nbstar_t_lambda = 0.2\ntheta0 = 1.0\nc1 = 10.0\n";

fn sgm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sgm"))
        .args(args)
        .env_remove("SHADOW_GM_OUT")
        .output()
        .unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn criterion_9_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.toml");
    let inputs = tmp.path().join("inputs.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    std::fs::write(&inputs, DETERMINISM_INPUTS).unwrap();
    let cfg = cfg.to_str().unwrap();
    let inputs = inputs.to_str().unwrap();
    let commands: [(&str, Vec<&str>); 6] = [
        ("simulate", vec![]),
        ("ensemble", vec![]),
        ("bounds", vec!["--inputs", inputs]),
        ("verify-profile", vec!["--nodes", "2000"]),
        ("tail-check", vec![]),
        ("sweep-gamma", vec![]),
    ];
    let mut problems = Vec::new();
    let mut files = 0;
    for (name, extra) in &commands {
        let mut runs = Vec::new();
        for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
            let out = tmp.path().join(format!("{name}-{tag}"));
            let mut args = vec![*name, "--config", cfg, "--threads", threads, "--out", out.to_str().unwrap()];
            args.extend(extra.iter().copied());
            let res = sgm(&args);
            if !matches!(res.status.code(), Some(0) | Some(3)) {
                problems.push(format!("{name} exited with {:?}: {}", res.status.code(), String::from_utf8_lossy(&res.stderr)));
            }
            let verify = sgm(&["verify", out.to_str().unwrap()]);
            if verify.status.code() != Some(0) {
                problems.push(format!("{name}: config hash verification failed"));
            }
            runs.push(dir_contents(&out));
        }
        files += runs[0].len();
        if runs[0].is_empty() || runs[0] != runs[1] || runs[0] != runs[2] {
            problems.push(format!("{name}: outputs differ between runs"));
        }
    }
    let v1 = sgm(&["validate", "--config", cfg]);
    let v2 = sgm(&["validate", "--config", cfg]);
    if v1.stdout != v2.stdout || v1.status.code() != Some(0) {
        problems.push("validate output differs".into());
    }

    let params = scenario();
    let controls = Controls {
        horizon: 0.05,
        ..Controls::default()
    };
    let stats = ensemble::run_ensemble(&params, 8, 21, &controls, Some(2)).unwrap();
    let mut order: Vec<u64> = (0..8).collect();
    let mut state = 77u64;
    for i in (1..order.len()).rev() {
        let j = (uniform(&mut state) * (i + 1) as f64) as usize;
        order.swap(i, j);
    }
    for i in order {
        if ensemble::run_member(&params, i, 21, &controls).0 != stats.rows[i as usize] {
            problems.push(format!("ensemble member {i} differs when run out of order"));
        }
    }
    report(
        9,
        problems.is_empty(),
        &format!(
            "6 writing commands x 3 runs (threads 1, 1, 3) gave {} identical files each time, validate stdout stable, 8 ensemble members rerun in shuffled order{}",
            files,
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join("; ")) }
        ),
    );
}

#[test]
fn scenario_verdicts_are_reported_per_path() {
    let stats = scenario_ensemble();
    assert!(stats.aggregates_consistent());
    assert_eq!(stats.rows.len(), SCENARIO_PATHS);
    assert!(stats.rows.iter().all(|r| r.verdict != Verdict::Failed));
}
