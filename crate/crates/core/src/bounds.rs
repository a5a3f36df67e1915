//! Closed-form blowup-time and stopping-time bounds, and per-path checks of
//! simulation output against them.
//!
//! Every evaluator is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::model::{phi_prime, Parameters, RadialGrid, STRICT_SLACK};
use crate::solver::{mean_power, Profile, RunOutput, Sample, Trajectory};

/// Relative allowance on the blowup-time bound for discretization error.
pub const BOUND_ALLOWANCE: f64 = 0.05;

/// Default number of `R` values scanned by [`t_hat_lower_bound`].
pub const DEFAULT_R_POINTS: usize = 64;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `K_theta = (lambda xi0)^-q exp(-(p-1) theta - q B*_theta)`.
pub fn k_theta(params: &Parameters, theta: f64, bstar_theta: f64) -> Result<f64> {
    check_positive("theta", theta)?;
    if !(bstar_theta >= 0.0) {
        return Err(Error::domain(format!("B* must be nonnegative, got {bstar_theta}")));
    }
    let Parameters {
        p, q, lambda, xi0, ..
    } = *params;
    Ok((-q * (lambda * xi0).ln() - (p - 1.0) * theta - q * bstar_theta).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaCondition {
    /// `gamma^(p-1) K_theta - 4n/(p-1)`.
    pub margin: f64,
    /// Strict positivity of the margin.
    pub holds: bool,
}

pub fn gamma_condition(gamma: f64, k_theta: f64, p: f64, n: u32) -> GammaCondition {
    let margin = gamma.powf(p - 1.0) * k_theta - 4.0 * f64::from(n) / (p - 1.0);
    GammaCondition {
        margin,
        holds: margin > 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupBound {
    /// `2 delta^2 / (gamma^(p-1) K_theta (p-1)) (1 + alpha/2)^(1-p)`.
    pub value: f64,
    /// `delta^2 / (2n) (1 + alpha/2)^(1-p)`.
    pub cap: f64,
    /// The amplitude condition holds, so `value` bounds the blowup time.
    pub applicable: bool,
    /// `value < cap`; always true when `applicable`.
    pub below_cap: bool,
}

/// `2 delta^2 / (gamma^(p-1) K (p-1)) * bracket^(1-p)`, shared by the bound
/// and by every branch of the blowup-time profile.
fn tau_core(gamma: f64, k: f64, p: f64, delta: f64, bracket: f64) -> f64 {
    2.0 * delta * delta / (gamma.powf(p - 1.0) * k * (p - 1.0)) * bracket.powf(1.0 - p)
}

pub fn blowup_bound_thm31(
    gamma: f64,
    k_theta: f64,
    p: f64,
    delta: f64,
    alpha: f64,
    n: u32,
) -> BlowupBound {
    let value = tau_core(gamma, k_theta, p, delta, 1.0 + 0.5 * alpha);
    let cap = delta * delta / (2.0 * f64::from(n)) * (1.0 + 0.5 * alpha).powf(1.0 - p);
    BlowupBound {
        value,
        cap,
        applicable: gamma_condition(gamma, k_theta, p, n).holds,
        below_cap: value < cap,
    }
}

/// Blowup time of the comparison lower solution started at radius `z`.
pub fn tau_profile(z: f64, gamma: f64, k_theta: f64, p: f64, alpha: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&z) {
        return Err(Error::domain(format!("z must lie in [0,1), got {z}")));
    }
    Ok(if z <= delta {
        let ratio = z / delta;
        tau_core(gamma, k_theta, p, delta, 1.0 + 0.5 * (1.0 - ratio * ratio) * alpha)
    } else {
        tau_core(gamma, k_theta, p, z, 1.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    pub a0: f64,
    /// Lower bound on `P(T_b <= cap)`; 0 when `a0 <= 0`.
    pub bound: f64,
    /// The bound carries no information (`a0 <= 0` or `bound <= 0`).
    pub vacuous: bool,
}

pub fn probability_bound_cor32(
    theta0: f64,
    gamma: f64,
    lambda: f64,
    xi0: f64,
    p: f64,
    q: f64,
    n: u32,
) -> Result<ProbabilityBound> {
    check_positive("theta0", theta0)?;
    check_positive("gamma", gamma)?;
    let a0 = ((p - 1.0) * gamma.powf(p - 1.0) / (4.0 * f64::from(n) * (lambda * xi0).powf(q))).ln()
        / q
        - (p - 1.0) / q * theta0;
    if !(a0 > 0.0) {
        return Ok(ProbabilityBound {
            a0,
            bound: 0.0,
            vacuous: true,
        });
    }
    let tail = (theta0 / std::f64::consts::TAU).sqrt() * (4.0 / a0) * (-a0 * a0 / (2.0 * theta0)).exp();
    let bound = 1.0 - tail;
    Ok(ProbabilityBound {
        a0,
        bound,
        vacuous: bound <= 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HStar {
    pub value: f64,
    /// The same expression with the exponential factor replaced by 1.
    pub cap: f64,
}

fn check_beta(params: &Parameters, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!("beta must lie in (0,1], got {beta}")));
    }
    let lhs = params.p + beta - 1.0;
    if lhs < params.r * (1.0 - STRICT_SLACK) {
        return Err(Error::domain(format!(
            "beta = {beta} violates p + beta - 1 >= r ({lhs} < {})",
            params.r
        )));
    }
    Ok(())
}

/// `h*_lambda`, the level that `h = mean(v^beta)` is guaranteed to reach by
/// `t_lambda`.
pub fn h_star_lambda(
    params: &Parameters,
    beta: f64,
    h0: f64,
    t_lambda: f64,
    bstar_t_lambda: f64,
) -> Result<HStar> {
    check_beta(params, beta)?;
    if !(t_lambda >= 0.0) || !(bstar_t_lambda >= 0.0) {
        return Err(Error::domain("t_lambda and B* must be nonnegative"));
    }
    let Parameters {
        p,
        q,
        r,
        s,
        gamma,
        xi0,
        lambda,
        ..
    } = *params;
    let scale = beta
        * (lambda - 1.0)
        * lambda.powf(-q)
        * gamma.powf(beta + p - 1.0 - r)
        * xi0.powf(s - q + 1.0);
    let decay = (-p * t_lambda - (s + q + 1.0) * (1.5 * t_lambda + bstar_t_lambda)).exp();
    Ok(HStar {
        value: h0 + scale * decay,
        cap: h0 + scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaK {
    pub beta: f64,
    pub k: f64,
    /// Default `ell = k / beta`.
    pub ell: f64,
    /// `n(p-1) - 2 beta`, must be positive.
    pub margin_upper: f64,
    /// `beta - (r + 1 - p)`, must be nonnegative.
    pub margin_lower: f64,
    /// `n(k-1) - 2 beta`, must be positive.
    pub margin_k: f64,
}

/// Picks `beta in (0,1]` with `n(p-1) > 2 beta >= 2(r+1-p)` and
/// `k in (1,p)` with `n(k-1) > 2 beta`.
pub fn select_beta_k(params: &Parameters) -> Result<BetaK> {
    if !params.blowup_regime {
        return Err(Error::InfeasibleSelection(
            "parameters are outside the blowup regime".into(),
        ));
    }
    let Parameters { p, r, .. } = *params;
    let n = params.dim();
    let lower = (r + 1.0 - p).max(0.01 * (n * (p - 1.0) / 2.0).min(1.0));
    let upper = (0.499 * n * (p - 1.0)).min(1.0);
    let beta = lower.max(upper);
    let k = 0.5 * (1.0 + 2.0 * beta / n + p);
    let sel = BetaK {
        beta,
        k,
        ell: k / beta,
        margin_upper: n * (p - 1.0) - 2.0 * beta,
        margin_lower: beta - (r + 1.0 - p),
        margin_k: n * (k - 1.0) - 2.0 * beta,
    };
    let ok = beta > 0.0
        && beta <= 1.0
        && sel.margin_upper > 0.0
        && sel.margin_lower >= 0.0
        && k > 1.0
        && k < p
        && sel.margin_k > 0.0;
    if ok {
        Ok(sel)
    } else {
        Err(Error::InfeasibleSelection(format!("no admissible (beta, k): {sel:?}")))
    }
}

fn check_selection(params: &Parameters, beta: f64, k: f64, ell: f64) -> Result<()> {
    check_beta(params, beta)?;
    if !(k > 1.0 && k < params.p) {
        return Err(Error::domain(format!("k must lie in (1, p), got {k}")));
    }
    if !(ell >= k / beta * (1.0 - STRICT_SLACK)) {
        return Err(Error::domain(format!("ell = {ell} is below k/beta = {}", k / beta)));
    }
    Ok(())
}

/// Exponents and levels shared by the stopping-time lower-bound evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingInputs {
    pub beta: f64,
    pub k: f64,
    pub ell: f64,
    /// `h(0) = mean(v0^beta)`.
    pub h0: f64,
    pub t_lambda: f64,
    pub bstar_t_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsStar {
    pub value: f64,
    pub terms: [f64; 3],
    /// Index (0-based) of the term attaining the minimum.
    pub active: usize,
}

pub fn eps_star(params: &Parameters, inp: &StoppingInputs, c0: f64) -> Result<EpsStar> {
    let StoppingInputs {
        beta,
        k,
        ell,
        h0,
        t_lambda,
        bstar_t_lambda,
    } = *inp;
    check_selection(params, beta, k, ell)?;
    check_positive("C0", c0)?;
    check_positive("h(0)", h0)?;
    let Parameters {
        p,
        q,
        alpha,
        gamma,
        lambda,
        xi0,
        ..
    } = *params;
    let n = params.dim();
    let terms = [
        alpha * (1.0 + 0.5 * alpha).powf(-k) * h0.powf(ell),
        2f64.powf(n - ell * n) * c0 * gamma.powf(beta * ell - k),
        (p - k) * gamma.powf(p + ell - k) / (2.0 * k * (lambda * xi0).powf(q))
            * (-(p - 1.0) * t_lambda - q * bstar_t_lambda).exp(),
    ];
    let mut active = 0;
    for i in 1..3 {
        if terms[i] < terms[active] {
            active = i;
        }
    }
    Ok(EpsStar {
        value: terms[active],
        terms,
        active,
    })
}

/// `L = C1 n beta R^(n-1) gamma^(beta-1) + C1^2 beta (1-beta) gamma^(beta-2)
///    + beta xi0^-q exp(3q t_lambda/2 + q B*) (h* / R^n)^((beta+p-1)/beta)`.
pub fn l_lemma45(
    params: &Parameters,
    beta: f64,
    c1: f64,
    r_split: f64,
    h_star: f64,
    t_lambda: f64,
    bstar_t_lambda: f64,
) -> Result<f64> {
    if !(r_split > 0.0 && r_split < 1.0) {
        return Err(Error::domain(format!("R must lie in (0,1), got {r_split}")));
    }
    if !(c1 >= 0.0 && c1.is_finite()) {
        return Err(Error::domain(format!("C1 must be nonnegative, got {c1}")));
    }
    let Parameters {
        p, q, gamma, xi0, ..
    } = *params;
    let n = params.dim();
    let first = c1 * n * beta * r_split.powf(n - 1.0) * gamma.powf(beta - 1.0);
    let second = c1 * c1 * beta * (1.0 - beta) * gamma.powf(beta - 2.0);
    let third = beta
        * xi0.powf(-q)
        * (1.5 * q * t_lambda + q * bstar_t_lambda).exp()
        * (h_star / r_split.powf(n)).powf((beta + p - 1.0) / beta);
    Ok(first + second + third)
}

/// Exponent applied to `2 h*^ell / (eps* (k-1))` in the inner-ball term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentConvention {
    /// `1/(k-1)`, as in the statement of the lower bound.
    #[default]
    LemmaStatement,
    /// `beta/(k-1)`, as produced by integrating the pointwise envelope.
    H1Derivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct THatBound {
    /// Largest positive value over the scanned `R`, or 0.
    pub value: f64,
    /// Maximizing `R`, when some `R` gave a positive value.
    pub r_used: Option<f64>,
    pub positive: bool,
    /// Numerator and `L` at `r_used` (or at the last scanned `R`).
    pub numerator: f64,
    pub l: f64,
    pub c1: f64,
}

/// `n_pts` log-spaced values in `[1e-4, 1)`.
pub fn default_r_grid(n_pts: usize) -> Vec<f64> {
    (0..n_pts)
        .map(|j| 10f64.powf(-4.0 + 4.0 * (j as f64 + 0.5) / n_pts as f64))
        .collect()
}

/// Numerator of the lower bound on `t_hat_lambda` at a given `R`.
pub fn t_hat_numerator(
    params: &Parameters,
    inp: &StoppingInputs,
    h_star: f64,
    eps: f64,
    r_split: f64,
    convention: ExponentConvention,
) -> f64 {
    let StoppingInputs {
        beta, k, ell, h0, ..
    } = *inp;
    let n = params.dim();
    let d = n - 2.0 * beta / (k - 1.0);
    let e = match convention {
        ExponentConvention::LemmaStatement => 1.0 / (k - 1.0),
        ExponentConvention::H1Derivation => beta / (k - 1.0),
    };
    let base = 2.0 * h_star.powf(ell) / (eps * (k - 1.0));
    h_star - h0 - n * base.powf(e) * r_split.powf(d) / d
}

/// Lower bound on `t_hat_lambda`, maximized over `r_grid`. `c1(R)` supplies
/// the gradient bound on `[R, 1]`.
pub fn t_hat_lower_bound(
    params: &Parameters,
    inp: &StoppingInputs,
    h_star: f64,
    eps: &EpsStar,
    c1: impl Fn(f64) -> f64,
    r_grid: &[f64],
    convention: ExponentConvention,
) -> Result<THatBound> {
    check_selection(params, inp.beta, inp.k, inp.ell)?;
    if params.dim() <= 2.0 * inp.beta / (inp.k - 1.0) {
        return Err(Error::domain("n - 2 beta/(k-1) must be positive"));
    }
    let mut best = THatBound {
        value: 0.0,
        r_used: None,
        positive: false,
        numerator: f64::NAN,
        l: f64::NAN,
        c1: f64::NAN,
    };
    for &r_split in r_grid {
        let c = c1(r_split);
        let num = t_hat_numerator(params, inp, h_star, eps.value, r_split, convention);
        let l = l_lemma45(params, inp.beta, c, r_split, h_star, inp.t_lambda, inp.bstar_t_lambda)?;
        let value = num / l;
        if value > best.value {
            best = THatBound {
                value,
                r_used: Some(r_split),
                positive: true,
                numerator: num,
                l,
                c1: c,
            };
        } else if !best.positive {
            best.numerator = num;
            best.l = l;
            best.c1 = c;
        }
    }
    Ok(best)
}

/// Which case of the blowup theorem a path falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingCase {
    /// `t_lambda >= 1` (or never reached before the run stopped); `theta = 1`.
    LateStop,
    /// `t_lambda < 1`; `theta = t_lambda`.
    EarlyStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The amplitude condition fails; nothing is asserted.
    NotApplicable,
    /// Blowup was detected no later than the bound (with allowance).
    Satisfied,
    /// The path blew up after the bound, or survived past it.
    Violated,
    /// The run stopped before the bound without blowing up.
    Inconclusive,
    /// The run aborted on a numerical breakdown.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub case: StoppingCase,
    pub theta: f64,
    pub bstar_theta: f64,
    pub k_theta: f64,
    pub gamma_margin: f64,
    pub bound: f64,
    pub cap: f64,
    /// Upper end of the blowup bracket, when blowup was detected.
    pub t_b: Option<f64>,
    pub stop_time: f64,
    pub verdict: Verdict,
}

/// Compares one run with the blowup-time bound at `theta = min(t_lambda, 1)`
/// using the realized discrete running max of the driver.
pub fn bound_check_per_path(
    output: &RunOutput,
    path: &BrownianPath,
    params: &Parameters,
) -> Result<PathCheck> {
    let report = &output.report;
    let (case, theta) = match report.t_lambda {
        Some(t) if t < 1.0 => (StoppingCase::EarlyStop, t),
        _ => (StoppingCase::LateStop, 1.0),
    };
    let bstar_theta = if report.final_bstar == 0.0 && report.bstar_t_lambda == Some(0.0) {
        0.0
    } else {
        path.running_max(theta.min(path.horizon()))?
    };
    let k = k_theta(params, theta, bstar_theta)?;
    let cond = gamma_condition(params.gamma, k, params.p, params.n);
    let bound = blowup_bound_thm31(params.gamma, k, params.p, params.delta, params.alpha, params.n);
    let limit = bound.value * (1.0 + BOUND_ALLOWANCE);
    let t_b = if report.blew_up { report.t_hi } else { None };
    let verdict = if !cond.holds {
        Verdict::NotApplicable
    } else {
        match t_b {
            Some(t) if t <= limit => Verdict::Satisfied,
            Some(_) => Verdict::Violated,
            None if report.stop_time > limit => Verdict::Violated,
            None => Verdict::Inconclusive,
        }
    };
    Ok(PathCheck {
        case,
        theta,
        bstar_theta,
        k_theta: k,
        gamma_margin: cond.margin,
        bound: bound.value,
        cap: bound.cap,
        t_b,
        stop_time: report.stop_time,
        verdict,
    })
}

/// Linear interpolation of `value(sample)` at time `t`.
fn interpolate(samples: &[Sample], t: f64, value: impl Fn(&Sample) -> f64) -> Option<f64> {
    let i = samples.partition_point(|s| s.t < t);
    if i == samples.len() {
        return None;
    }
    if i == 0 || samples[i].t == t {
        return Some(value(&samples[i]));
    }
    let (a, b) = (&samples[i - 1], &samples[i]);
    let w = (t - a.t) / (b.t - a.t);
    Some(value(a) + w * (value(b) - value(a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma43Check {
    /// `h(t_lambda)`, interpolated between samples.
    pub h_at_t_lambda: f64,
    pub h_star: f64,
    /// `(h* - h(t_lambda)) / h*`; nonpositive when the inequality holds.
    pub relative_violation: f64,
}

/// `h(t_lambda) >= h*_lambda` on a run that reached `t_lambda`.
pub fn lemma43_check(output: &RunOutput) -> Option<Lemma43Check> {
    let t = output.report.t_lambda?;
    let h_star = output.report.h_star_lambda?;
    let h = interpolate(&output.trajectory.samples, t, |s| s.mean_vbeta)?;
    Some(Lemma43Check {
        h_at_t_lambda: h,
        h_star,
        relative_violation: (h_star - h) / h_star,
    })
}

/// Largest `|d_z v|` on `z >= r_split` over `profiles`, from one-sided
/// differences between neighbouring nodes.
pub fn estimate_c1(profiles: &[Profile], grid: &RadialGrid, r_split: f64) -> f64 {
    let start = ((r_split / grid.h).floor() as usize).min(grid.intervals - 1);
    profiles
        .iter()
        .flat_map(|pr| pr.v[start..].windows(2).map(|w| (w[1] - w[0]).abs() / grid.h))
        .fold(0.0, f64::max)
}

/// Profiles of `output.early` up to `t_hat`, plus the first one after it.
pub fn profiles_through(profiles: &[Profile], t_hat: f64) -> &[Profile] {
    let i = profiles.partition_point(|p| p.t <= t_hat);
    &profiles[..(i + 1).min(profiles.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma44Check {
    /// Largest `v / envelope` over checked points; at most 1 when the
    /// envelope holds.
    pub worst_ratio: f64,
    pub at_t: f64,
    pub at_z: f64,
    pub profiles_checked: usize,
}

/// Checks `v(z,t) <= (2 h^ell(t) / (eps (k-1)))^(1/(k-1)) z^(-2/(k-1))` for
/// `0 < z <= 1/2` on every profile with `t <= t_hat`.
pub fn lemma44_check(
    profiles: &[Profile],
    grid: &RadialGrid,
    inp: &StoppingInputs,
    eps: f64,
    t_hat: f64,
) -> Result<Lemma44Check> {
    let StoppingInputs { beta, k, ell, .. } = *inp;
    let mut out = Lemma44Check {
        worst_ratio: 0.0,
        at_t: f64::NAN,
        at_z: f64::NAN,
        profiles_checked: 0,
    };
    let last = grid.nearest(0.5);
    for pr in profiles.iter().filter(|p| p.t <= t_hat) {
        let h = mean_power(&pr.v, beta, grid)?;
        let amp = (2.0 * h.powf(ell) / (eps * (k - 1.0))).powf(1.0 / (k - 1.0));
        for i in 1..=last {
            let z = grid.z[i];
            let ratio = pr.v[i] / (amp * z.powf(-2.0 / (k - 1.0)));
            if ratio > out.worst_ratio {
                out.worst_ratio = ratio;
                out.at_t = pr.t;
                out.at_z = z;
            }
        }
        out.profiles_checked += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSandwichCheck {
    /// `max (K_theta - K(t)) / K(t)` over samples with `t <= theta`.
    pub lower_violation: f64,
    /// `max (K(t) - upper) / upper`.
    pub upper_violation: f64,
    pub upper: f64,
    pub samples: usize,
}

/// `K_theta <= K(t) <= xi0^-q exp(3q theta/2 + q B*_theta)` for sampled
/// `t <= theta`; meaningful when `theta <= t_lambda`.
pub fn k_sandwich_check(
    traj: &Trajectory,
    params: &Parameters,
    theta: f64,
    bstar_theta: f64,
) -> Result<KSandwichCheck> {
    let lower = k_theta(params, theta, bstar_theta)?;
    let q = params.q;
    let upper = (-q * params.xi0.ln() + 1.5 * q * theta + q * bstar_theta).exp();
    let mut out = KSandwichCheck {
        lower_violation: f64::NEG_INFINITY,
        upper_violation: f64::NEG_INFINITY,
        upper,
        samples: 0,
    };
    for s in traj.samples.iter().filter(|s| s.t <= theta) {
        out.lower_violation = out.lower_violation.max((lower - s.k) / s.k);
        out.upper_violation = out.upper_violation.max((s.k - upper) / upper);
        out.samples += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionOracleCheck {
    /// Blowup time of `v' = K_max v^p` from `max v0`.
    pub ode_time: f64,
    pub k_max: f64,
    /// Upper end of the numerical bracket.
    pub t_b: f64,
    /// `t_b >= ode_time` up to `tol`.
    pub holds: bool,
}

/// Diffusion cannot make the maximum blow up before the pure-reaction ODE
/// started at the maximum with `K` replaced by its running max.
pub fn reaction_oracle_check(output: &RunOutput, params: &Parameters, tol: f64) -> Option<ReactionOracleCheck> {
    let t_b = output.report.t_hi.filter(|_| output.report.blew_up)?;
    let samples = &output.trajectory.samples;
    let vmax0 = samples.first()?.vmax;
    let k_max = samples.iter().map(|s| s.k).fold(0.0, f64::max);
    let p = params.p;
    let ode_time = vmax0.powf(1.0 - p) / (k_max * (p - 1.0));
    Some(ReactionOracleCheck {
        ode_time,
        k_max,
        t_b,
        holds: t_b >= ode_time * (1.0 - tol),
    })
}

/// Where a stopping-time constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    User,
    /// Estimated from a simulated trajectory.
    Simulation,
    /// Derived from the initial profile alone.
    InitialProfile,
}

/// Realized quantities fed to [`evaluate_all`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizedInputs {
    pub theta: f64,
    pub bstar_theta: f64,
    pub t_lambda: f64,
    pub bstar_t_lambda: f64,
    #[serde(default)]
    pub theta0: Option<f64>,
    #[serde(default)]
    pub h0: Option<f64>,
    #[serde(default)]
    pub c0: Option<f64>,
    /// A constant gradient bound used for every `R`.
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub ell: Option<f64>,
    #[serde(default)]
    pub convention: ExponentConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub params: Parameters,
    pub inputs: RealizedInputs,
    pub k_theta: f64,
    pub gamma_condition: GammaCondition,
    pub blowup_bound: BlowupBound,
    pub tau_at_zero: f64,
    pub probability: Option<ProbabilityBound>,
    pub selection: Option<BetaK>,
    pub h0: f64,
    pub h0_source: ConstantSource,
    pub h_star: Option<HStar>,
    pub c0: f64,
    pub c0_source: ConstantSource,
    pub c1_source: ConstantSource,
    pub eps_star: Option<EpsStar>,
    pub t_hat: Option<THatBound>,
}

/// `-phi'(1/2) gamma 2^-(n-1)`: the `t = 0` contribution to the `C0` estimate.
pub fn c0_initial(params: &Parameters) -> f64 {
    let d = phi_prime(0.5, params.delta, params.alpha).expect("1/2 lies in [0,1]");
    -d * params.gamma * 2f64.powi(1 - params.n as i32)
}

/// `alpha gamma R^(-alpha-1)`, the gradient bound of the initial profile on
/// `[R, 1]`.
pub fn c1_initial(params: &Parameters, r_split: f64) -> f64 {
    params.alpha * params.gamma * r_split.powf(-params.alpha - 1.0)
}

/// Evaluates every closed-form expression for one set of realized inputs.
/// Missing constants default to values derived from the initial profile on
/// `grid`.
pub fn evaluate_all(params: &Parameters, inputs: &RealizedInputs, grid: &RadialGrid) -> Result<BoundsRecord> {
    let k = k_theta(params, inputs.theta, inputs.bstar_theta)?;
    let cond = gamma_condition(params.gamma, k, params.p, params.n);
    let bound = blowup_bound_thm31(params.gamma, k, params.p, params.delta, params.alpha, params.n);
    let tau0 = tau_profile(0.0, params.gamma, k, params.p, params.alpha, params.delta)?;
    let probability = inputs
        .theta0
        .map(|t0| {
            probability_bound_cor32(t0, params.gamma, params.lambda, params.xi0, params.p, params.q, params.n)
        })
        .transpose()?;
    let selection = select_beta_k(params).ok();
    let (c0, c0_source) = match inputs.c0 {
        Some(c) => (c, ConstantSource::User),
        None => (c0_initial(params), ConstantSource::InitialProfile),
    };
    let c1_source = if inputs.c1.is_some() {
        ConstantSource::User
    } else {
        ConstantSource::InitialProfile
    };
    let mut record = BoundsRecord {
        params: *params,
        inputs: *inputs,
        k_theta: k,
        gamma_condition: cond,
        blowup_bound: bound,
        tau_at_zero: tau0,
        probability,
        selection,
        h0: f64::NAN,
        h0_source: ConstantSource::User,
        h_star: None,
        c0,
        c0_source,
        c1_source,
        eps_star: None,
        t_hat: None,
    };
    let Some(sel) = selection else {
        return Ok(record);
    };
    let (h0, h0_source) = match inputs.h0 {
        Some(h) => (h, ConstantSource::User),
        None => (
            mean_power(&grid.initial_profile(params), sel.beta, grid)?,
            ConstantSource::InitialProfile,
        ),
    };
    record.h0 = h0;
    record.h0_source = h0_source;
    let h_star = h_star_lambda(params, sel.beta, h0, inputs.t_lambda, inputs.bstar_t_lambda)?;
    let stopping = StoppingInputs {
        beta: sel.beta,
        k: sel.k,
        ell: inputs.ell.unwrap_or(sel.ell),
        h0,
        t_lambda: inputs.t_lambda,
        bstar_t_lambda: inputs.bstar_t_lambda,
    };
    let eps = eps_star(params, &stopping, c0)?;
    let c1 = |r: f64| inputs.c1.unwrap_or_else(|| c1_initial(params, r));
    let t_hat = t_hat_lower_bound(
        params,
        &stopping,
        h_star.value,
        &eps,
        c1,
        &default_r_grid(DEFAULT_R_POINTS),
        inputs.convention,
    )?;
    record.h_star = Some(h_star);
    record.eps_star = Some(eps);
    record.t_hat = Some(t_hat);
    Ok(record)
}
