//! Pathwise integration of the radial system
//!
//! ```text
//! d_t v = d_zz v + (n-1)/z d_z v + K(t) v^p,   d_z v(1) = 0,
//! d xi  = (-xi + e^(-rt) mean(v^r) / xi^s) dt + xi dB,
//! ```
//!
//! with `K(t) = e^(-(p-1)t) / xi^q`. The inhibitor is advanced through the
//! monotone process `xi_hat = e^(3t/2 - B) xi`, whose differential
//! `e^(-rt + 3t/2 - B) mean(v^r) / xi^s dt` has no noise term; a trapezoid
//! rule on that nonnegative integrand makes `xi_hat` non-decreasing step by
//! step.
//!
//! Each step applies backward-Euler diffusion on a conservative finite-volume
//! stencil (an M-matrix, so positivity, the lower bound `v >= gamma`,
//! monotonicity in `z` and the mean are all preserved), followed by the exact
//! flow of `v' = K v^p` with `K` frozen at the step start.
//!
//! Step end points lie on the dyadic tick lattice of the driving path, so any
//! bridge refinement the solver asks for is canonical.

mod monitor;
pub mod tridiag;
mod trajectory;

pub use monitor::{estimate_c0, monitor_lemma21, C0Estimate, Lemma21Diagnostics};
pub use trajectory::{
    stopping_time_t_lambda, BlowupReport, EarlyProfiles, InvariantWorst, Profile, Sample,
    Trajectory, Trigger,
};

use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::brownian::{BrownianPath, Tick, DEFAULT_PATH_DT, TICKS_PER_INTERVAL};
use crate::error::{Error, Result};
use crate::model::{Parameters, RadialGrid, DEFAULT_GRID_INTERVALS};
use crate::power::Power;

/// How the reaction coefficient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReactionMode {
    /// `K(t) = e^(-(p-1)t) / xi^q`.
    Coupled,
    /// `K` held at a fixed value.
    Frozen { k0: f64 },
    /// No reaction term.
    Off,
}

/// Switches for the individual terms, used by the analytic test cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Switches {
    pub diffusion: bool,
    pub reaction: ReactionMode,
    /// The `mean(v^r) / xi^s` source of the inhibitor equation.
    pub inhibitor_source: bool,
    /// With noise off, `B` is treated as identically zero and the inhibitor
    /// solves `d xi = (-xi + ...) dt`, so `xi_hat = e^t xi`.
    pub noise: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Switches {
            diffusion: true,
            reaction: ReactionMode::Coupled,
            inhibitor_source: true,
            noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Controls {
    /// Number of grid intervals `N` (the grid has `N + 1` nodes).
    pub grid_intervals: usize,
    pub horizon: f64,
    /// Base spacing of the driving path.
    pub path_dt: f64,
    /// Blowup is declared once `max v` reaches this value.
    pub blowup_threshold: f64,
    /// Blowup is declared if the admissible step falls below this.
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of each step-size limit used by the proposer.
    pub safety: f64,
    /// Steps with `K max(v)^(p-1) dt` above this are rejected.
    pub growth_cap: f64,
    /// Steps raising `xi_hat` by more than this fraction are rejected.
    pub xi_growth_cap: f64,
    /// Times at which full profiles are stored.
    pub snapshot_times: Vec<f64>,
    /// Exponent of the tracked mean `h = mean(v^beta)`; chosen from the
    /// parameters when absent.
    pub beta: Option<f64>,
    /// Full profiles are retained while `t <= early_window`.
    pub early_window: f64,
    pub max_early_profiles: usize,
    pub switches: Switches,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            grid_intervals: DEFAULT_GRID_INTERVALS,
            horizon: 20.0,
            path_dt: DEFAULT_PATH_DT,
            blowup_threshold: 1e10,
            dt_min: 1e-14,
            dt_max: 1e-3,
            safety: 0.9,
            growth_cap: 0.1,
            xi_growth_cap: 0.05,
            snapshot_times: vec![0.0],
            beta: None,
            early_window: 1.0,
            max_early_profiles: 1024,
            switches: Switches::default(),
        }
    }
}

impl Controls {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("horizon", self.horizon),
            ("path_dt", self.path_dt),
            ("blowup_threshold", self.blowup_threshold),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("growth_cap", self.growth_cap),
            ("xi_growth_cap", self.xi_growth_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::domain(format!("safety must lie in (0,1], got {}", self.safety)));
        }
        if self.dt_min >= self.dt_max {
            return Err(Error::domain("dt_min must be below dt_max"));
        }
        if self.early_window < 0.0 || self.early_window.is_nan() {
            return Err(Error::domain("early_window must be nonnegative"));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::domain(format!("beta must lie in (0,1], got {b}")));
            }
        }
        if self.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::domain("snapshot times must be finite and nonnegative"));
        }
        if self.max_early_profiles < 2 {
            return Err(Error::domain("max_early_profiles must be at least 2"));
        }
        if let ReactionMode::Frozen { k0 } = self.switches.reaction {
            if !(k0 >= 0.0 && k0.is_finite()) {
                return Err(Error::domain(format!("frozen K must be nonnegative, got {k0}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialState {
    pub tick: Tick,
    pub t: f64,
    pub v: Vec<f64>,
    pub xi: f64,
    pub xi_hat: f64,
    pub b: f64,
    pub bstar: f64,
    pub k_t: f64,
    pub mean_vr: f64,
    pub mean_vbeta: f64,
    pub vmax: f64,
}

/// `mean(v^m) = sum_i w_i v_i^m`.
pub fn mean_power(v: &[f64], m: f64, grid: &RadialGrid) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::domain(format!("exponent must be nonnegative, got {m}")));
    }
    if v.len() != grid.len() {
        return Err(Error::domain("field and grid lengths differ"));
    }
    if let Some(bad) = v.iter().find(|x| !(**x >= -1e-14)) {
        return Err(Error::domain(format!("field entry {bad} is negative")));
    }
    Ok(mean_power_unchecked(v, Power::new(m), &grid.weights))
}

fn mean_power_unchecked(v: &[f64], pow: Power, weights: &[f64]) -> f64 {
    v.iter()
        .zip(weights)
        .map(|(&x, &w)| w * pow.apply(x.max(0.0)))
        .sum()
}

fn dvdz_at(v: &[f64], grid: &RadialGrid, i: usize) -> f64 {
    (v[i + 1] - v[i - 1]) / (2.0 * grid.h)
}

fn pow2_floor(x: u128) -> u128 {
    1u128 << (127 - x.leading_zeros())
}

/// Largest admissible step (in ticks) from `from` not exceeding `cap`: a
/// power of two dividing `from`, or a whole number of base intervals when
/// `from` sits on the base grid.
fn quantize(from: Tick, cap: Tick) -> Tick {
    debug_assert!(cap >= 1);
    if from.is_multiple_of(TICKS_PER_INTERVAL) && cap >= TICKS_PER_INTERVAL {
        return cap / TICKS_PER_INTERVAL * TICKS_PER_INTERVAL;
    }
    let len = pow2_floor(cap);
    if from == 0 {
        len
    } else {
        len.min(from & from.wrapping_neg())
    }
}

/// Everything produced by a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: BlowupReport,
    pub snapshots: Vec<Profile>,
    pub early: EarlyProfiles,
    pub final_state: RadialState,
}

/// A run that stopped on an error; `output` holds the partial run when one
/// had started.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub output: Option<Box<RunOutput>>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { error, output: None }
    }
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}

pub struct Solver {
    params: Parameters,
    controls: Controls,
    grid: RadialGrid,
    beta: f64,
    pow_r: Power,
    pow_beta: Power,
    pow_pm1: Power,
    /// `xi = exp(-drift t + sigma B) xi_hat`.
    drift: f64,
    sigma: f64,
    half: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Solver {
    pub fn new(params: &Parameters, controls: &Controls) -> Result<Self> {
        controls.validate()?;
        let grid = RadialGrid::uniform(controls.grid_intervals, params.n)?;
        let beta = match controls.beta {
            Some(b) => b,
            None if params.blowup_regime => bounds::select_beta_k(params)?.beta,
            None => 1.0,
        };
        let (drift, sigma) = if controls.switches.noise {
            (1.5, 1.0)
        } else {
            (1.0, 0.0)
        };
        let len = grid.len();
        Ok(Solver {
            params: *params,
            controls: controls.clone(),
            half: grid.nearest(0.5).clamp(1, len - 2),
            grid,
            beta,
            pow_r: Power::new(params.r),
            pow_beta: Power::new(beta),
            pow_pm1: Power::new(params.p - 1.0),
            drift,
            sigma,
            lower: vec![0.0; len],
            diag: vec![0.0; len],
            upper: vec![0.0; len],
            rhs: vec![0.0; len],
            scratch: vec![0.0; len],
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn controls(&self) -> &Controls {
        &self.controls
    }

    fn k_of(&self, t: f64, ln_xi: f64) -> f64 {
        match self.controls.switches.reaction {
            ReactionMode::Coupled => (-(self.params.p - 1.0) * t - self.params.q * ln_xi).exp(),
            ReactionMode::Frozen { k0 } => k0,
            ReactionMode::Off => 0.0,
        }
    }

    fn field_stats(&self, v: &[f64]) -> (f64, f64, f64) {
        let mut mean_vr = 0.0;
        let mut mean_vb = 0.0;
        let mut vmax = f64::NEG_INFINITY;
        for (&x, &w) in v.iter().zip(&self.grid.weights) {
            mean_vr += w * self.pow_r.apply(x);
            mean_vb += w * self.pow_beta.apply(x);
            vmax = vmax.max(x);
        }
        (mean_vr, mean_vb, vmax)
    }

    /// `e^(-rt + drift t - sigma B) mean(v^r) / xi^s`, evaluated in logs.
    fn xi_hat_rate(&self, t: f64, mean_vr: f64, b: f64, ln_xi: f64) -> f64 {
        if !self.controls.switches.inhibitor_source || mean_vr <= 0.0 {
            return 0.0;
        }
        let Parameters { r, s, .. } = self.params;
        (mean_vr.ln() - r * t + self.drift * t - self.sigma * b - s * ln_xi).exp()
    }

    pub fn initial_state(&self) -> RadialState {
        self.state_at_zero(self.grid.initial_profile(&self.params))
            .expect("the initial profile is positive and sized to the grid")
    }

    /// A `t = 0` state with field `v` on the grid nodes.
    pub fn state_at_zero(&self, v: Vec<f64>) -> Result<RadialState> {
        if v.len() != self.grid.len() {
            return Err(Error::domain(format!(
                "field has {} values for {} nodes",
                v.len(),
                self.grid.len()
            )));
        }
        if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::domain("field values must be positive and finite"));
        }
        let (mean_vr, mean_vbeta, vmax) = self.field_stats(&v);
        let xi0 = self.params.xi0;
        Ok(RadialState {
            tick: 0,
            t: 0.0,
            v,
            xi: xi0,
            xi_hat: xi0,
            b: 0.0,
            bstar: 0.0,
            k_t: self.k_of(0.0, xi0.ln()),
            mean_vr,
            mean_vbeta,
            vmax,
        })
    }

    /// Advances `state` by `dt`, rounded to the nearest lattice tick.
    pub fn step(
        &mut self,
        state: &RadialState,
        path: &mut BrownianPath,
        dt: f64,
    ) -> Result<RadialState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        let end = path.tick_nearest(state.t + dt);
        if end <= state.tick {
            return Err(Error::domain(format!("dt = {dt} is below the path resolution")));
        }
        self.step_ticks(state, path, end - state.tick, true)
    }

    /// Advances `state` by `len` ticks. With `xi_cap` off the relative
    /// growth limit on `xi_hat` is not enforced.
    pub fn step_ticks(
        &mut self,
        state: &RadialState,
        path: &mut BrownianPath,
        len: Tick,
        xi_cap: bool,
    ) -> Result<RadialState> {
        let end = state.tick + len;
        if len == 0 || end > path.last_tick() {
            return Err(Error::domain(format!(
                "step to t = {} is not covered by the path (horizon {})",
                path.time_of(end),
                path.horizon()
            )));
        }
        let p = self.params.p;
        let t0 = state.t;
        let t1 = path.time_of(end);
        let dt = t1 - t0;
        let k = state.k_t;

        let load = k * self.pow_pm1.apply(state.vmax) * dt;
        if load > self.controls.growth_cap || (p - 1.0) * load > 0.5 {
            return Err(Error::StepRejected(format!(
                "reaction load K v^(p-1) dt = {load:.3e} at t = {t0}"
            )));
        }

        let mut v = vec![0.0; state.v.len()];
        if self.controls.switches.diffusion {
            self.diffuse(&state.v, dt, &mut v);
        } else {
            v.copy_from_slice(&state.v);
        }
        if k > 0.0 {
            let c = (p - 1.0) * k * dt;
            let e = -1.0 / (p - 1.0);
            for x in &mut v {
                let base = 1.0 - c * self.pow_pm1.apply(*x);
                *x *= base.powf(e);
            }
        }
        if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::NumericalBreakdown {
                t: t1,
                reason: format!("field value {bad} after step of size {dt:e}"),
            });
        }
        let (mean_vr, mean_vbeta, vmax) = self.field_stats(&v);

        let (b1, bstar1) = if self.controls.switches.noise {
            let b1 = path.value_at(end);
            (b1, state.bstar.max(path.max_abs_between(state.tick, end)))
        } else {
            (0.0, 0.0)
        };

        let ln_xi0 = state.xi.ln();
        let g0 = self.xi_hat_rate(t0, state.mean_vr, state.b, ln_xi0);
        let g1 = self.xi_hat_rate(t1, mean_vr, b1, ln_xi0);
        let increment = 0.5 * dt * (g0 + g1);
        if xi_cap && increment > self.controls.xi_growth_cap * state.xi_hat {
            return Err(Error::StepRejected(format!(
                "xi_hat would grow by {:.3e} relative at t = {t0}",
                increment / state.xi_hat
            )));
        }
        let xi_hat = state.xi_hat + increment;
        let ln_xi = -self.drift * t1 + self.sigma * b1 + xi_hat.ln();
        let xi = ln_xi.exp();
        if !(xi.is_finite() && xi > 0.0) {
            return Err(Error::NumericalBreakdown {
                t: t1,
                reason: format!("inhibitor left (0, inf): xi_hat = {xi_hat}"),
            });
        }

        Ok(RadialState {
            tick: end,
            t: t1,
            v,
            xi,
            xi_hat,
            b: b1,
            bstar: bstar1,
            k_t: self.k_of(t1, ln_xi),
            mean_vr,
            mean_vbeta,
            vmax,
        })
    }

    /// Backward Euler solved for the increment `v_new - v_old`, whose right
    /// side is built from neighbour differences. Rounding errors then scale
    /// with the increment rather than with `v`, so nearly flat profiles stay
    /// monotone.
    fn diffuse(&mut self, old: &[f64], dt: f64, out: &mut [f64]) {
        let g = &self.grid.face_conductance;
        let w = &self.grid.weights;
        let last = old.len() - 1;
        for i in 0..=last {
            let gl = if i > 0 { dt * g[i - 1] } else { 0.0 };
            let gr = if i < last { dt * g[i] } else { 0.0 };
            self.lower[i] = -gl;
            self.upper[i] = -gr;
            self.diag[i] = w[i] + gl + gr;
            let left = if i > 0 { gl * (old[i - 1] - old[i]) } else { 0.0 };
            let right = if i < last { gr * (old[i + 1] - old[i]) } else { 0.0 };
            self.rhs[i] = left + right;
        }
        tridiag::solve_into(
            &self.lower,
            &self.diag,
            &self.upper,
            &self.rhs,
            &mut self.scratch,
            out,
        );
        for (x, v) in out.iter_mut().zip(old) {
            *x += v;
        }
    }

    fn sample_of(&self, s: &RadialState, dt: f64) -> Sample {
        Sample {
            t: s.t,
            xi: s.xi,
            xi_hat: s.xi_hat,
            b: s.b,
            bstar: s.bstar,
            v0: s.v[0],
            vmax: s.vmax,
            mean_vr: s.mean_vr,
            mean_vbeta: s.mean_vbeta,
            k: s.k_t,
            dt,
            dvdz_half: dvdz_at(&s.v, &self.grid, self.half),
        }
    }

    fn track_invariants(&self, worst: &mut InvariantWorst, s: &RadialState) {
        let d = monitor_lemma21(&s.v, &self.grid, self.params.gamma, self.beta);
        worst.lower_bound = worst.lower_bound.max(d.lower_bound);
        worst.monotone = worst.monotone.max(d.monotone);
        worst.mean_bound = worst.mean_bound.max(d.mean_bound);
        let ident = (self.sigma * s.b - self.drift * s.t).exp() * s.xi_hat;
        worst.xi_hat_identity = worst.xi_hat_identity.max((ident - s.xi).abs() / s.xi);
        if let ReactionMode::Coupled = self.controls.switches.reaction {
            let k = (-(self.params.p - 1.0) * s.t).exp() / s.xi.powf(self.params.q);
            worst.k_identity = worst.k_identity.max((k - s.k_t).abs() / s.k_t);
        }
    }

    /// Largest step the proposer allows from `s`, in time units.
    fn propose(&self, s: &RadialState) -> f64 {
        let c = &self.controls;
        let mut dt = c.dt_max;
        let p = self.params.p;
        let load_rate = s.k_t * self.pow_pm1.apply(s.vmax);
        if load_rate > 0.0 {
            dt = dt.min(c.safety * c.growth_cap / load_rate);
            dt = dt.min(c.safety * 0.5 / ((p - 1.0) * load_rate));
        }
        let g = self.xi_hat_rate(s.t, s.mean_vr, s.b, s.xi.ln());
        if g > 0.0 {
            dt = dt.min(c.safety * c.xi_growth_cap * s.xi_hat / g);
        }
        dt
    }

    /// Integrates from the initial profile until blowup or the horizon.
    pub fn run(&mut self, path: &mut BrownianPath) -> std::result::Result<RunOutput, RunFailure> {
        let state = self.initial_state();
        self.run_from(state, path)
    }

    pub fn run_from(
        &mut self,
        mut state: RadialState,
        path: &mut BrownianPath,
    ) -> std::result::Result<RunOutput, RunFailure> {
        let c = self.controls.clone();
        if path.horizon() < c.horizon * (1.0 - 1e-12) {
            return Err(Error::domain(format!(
                "path covers [0, {}] but the horizon is {}",
                path.horizon(),
                c.horizon
            ))
            .into());
        }
        let end = path.tick_floor(c.horizon).min(path.last_tick());
        let tick_len = path.tick_len();
        let mut targets: Vec<Tick> = c
            .snapshot_times
            .iter()
            .map(|&t| path.tick_nearest(t))
            .filter(|&k| k >= state.tick && k <= end)
            .collect();
        targets.sort_unstable();
        targets.dedup();
        let mut rec = Recorder {
            traj: Trajectory::default(),
            snapshots: Vec::new(),
            targets,
            next_target: 0,
            early: EarlyProfiles::default(),
            early_open: c.early_window >= state.t,
            early_stride: 1,
            early_window: c.early_window,
            early_cap: c.max_early_profiles,
            level: self.params.lambda * self.params.xi0,
            worst: InvariantWorst::default(),
        };
        let mut accepted = 0u64;
        let mut rejected = 0u64;
        rec.record(self, &state, 0.0, 0);

        let mut trigger = Trigger::Horizon;
        let mut bracket = None;
        let mut failure = None;
        let mut retry: Option<Tick> = None;
        // Remaining distance to the earliest lattice point known to exceed
        // the threshold; set while localizing the crossing.
        let mut crossing: Option<Tick> = None;

        while state.tick < end {
            if state.vmax >= c.blowup_threshold {
                trigger = Trigger::Threshold;
                bracket = Some((state.t, state.t));
                break;
            }
            let limit = rec.next_target().unwrap_or(end).min(end) - state.tick;
            let desired = match (retry, crossing) {
                (Some(r), _) => r,
                (None, Some(x)) => (x / 2).max(1),
                (None, None) => {
                    let dt = self.propose(&state);
                    ((dt / tick_len).floor() as u128).max(1)
                }
            };
            let len = quantize(state.tick, desired.min(limit).max(1));
            let dt = len as f64 * tick_len;
            if dt < c.dt_min {
                let (lo, hi) = match crossing {
                    Some(x) => {
                        trigger = Trigger::Threshold;
                        (state.t, path.time_of(state.tick + x))
                    }
                    None => {
                        trigger = Trigger::DtFloor;
                        let p = self.params.p;
                        let rest = if state.k_t > 0.0 {
                            state.vmax.powf(1.0 - p) / (state.k_t * (p - 1.0))
                        } else {
                            c.dt_min
                        };
                        (state.t, state.t + rest)
                    }
                };
                bracket = Some((lo, hi));
                break;
            }
            match self.step_ticks(&state, path, len, crossing.is_none()) {
                Ok(next) if next.vmax >= c.blowup_threshold => {
                    retry = None;
                    crossing = Some(len);
                    if dt <= 2.0 * c.dt_min {
                        trigger = Trigger::Threshold;
                        bracket = Some((state.t, next.t));
                        break;
                    }
                }
                Ok(next) => {
                    retry = None;
                    accepted += 1;
                    crossing = crossing.and_then(|x| x.checked_sub(len)).filter(|&x| x > 0);
                    let prev = state.xi_hat;
                    state = next;
                    rec.worst.min_xi_hat_increment =
                        rec.worst.min_xi_hat_increment.min((state.xi_hat - prev) / prev);
                    rec.record(self, &state, dt, accepted);
                }
                Err(Error::StepRejected(_)) => {
                    rejected += 1;
                    retry = Some((len / 2).max(1));
                    if len == 1 {
                        trigger = Trigger::DtFloor;
                        bracket = Some((state.t, state.t + tick_len));
                        break;
                    }
                }
                Err(e) => {
                    trigger = Trigger::Breakdown;
                    failure = Some(e);
                    break;
                }
            }
        }

        let Recorder {
            traj,
            snapshots,
            early,
            worst,
            ..
        } = rec;
        let beta = self.beta;
        let t_lambda = stopping_time_t_lambda(&traj, self.params.lambda, self.params.xi0);
        let bstar_t_lambda = t_lambda.map(|t| {
            if c.switches.noise {
                path.running_max(t.min(path.horizon())).unwrap_or(state.bstar)
            } else {
                0.0
            }
        });
        let h_star = t_lambda.zip(bstar_t_lambda).and_then(|(t, b)| {
            bounds::h_star_lambda(&self.params, beta, traj.samples[0].mean_vbeta, t, b)
                .ok()
                .map(|h| h.value)
        });
        let t_hat_lambda =
            h_star.and_then(|h| trajectory::first_crossing(&traj.samples, h, |s| s.mean_vbeta));

        let blew_up = matches!(trigger, Trigger::Threshold | Trigger::DtFloor);
        let report = BlowupReport {
            blew_up,
            trigger,
            t_lo: bracket.map(|b| b.0),
            t_hi: bracket.map(|b| b.1),
            stop_time: state.t,
            t_lambda,
            bstar_t_lambda,
            t_hat_lambda,
            h_star_lambda: h_star,
            beta,
            final_bstar: state.bstar,
            final_vmax: state.vmax,
            steps_accepted: accepted,
            steps_rejected: rejected,
            path_dt: path.dt(),
            worst,
        };
        let output = RunOutput {
            trajectory: traj,
            report,
            snapshots,
            early,
            final_state: state,
        };
        match failure {
            None => Ok(output),
            Some(error) => Err(RunFailure {
                error,
                output: Some(Box::new(output)),
            }),
        }
    }
}

struct Recorder {
    traj: Trajectory,
    snapshots: Vec<Profile>,
    targets: Vec<Tick>,
    next_target: usize,
    early: EarlyProfiles,
    early_open: bool,
    early_stride: u64,
    early_window: f64,
    early_cap: usize,
    level: f64,
    worst: InvariantWorst,
}

impl Recorder {
    fn next_target(&self) -> Option<Tick> {
        self.targets.get(self.next_target).copied()
    }

    fn record(&mut self, solver: &Solver, s: &RadialState, dt: f64, accepted: u64) {
        self.traj.samples.push(solver.sample_of(s, dt));
        solver.track_invariants(&mut self.worst, s);
        while let Some(target) = self.next_target().filter(|&k| k <= s.tick) {
            if target == s.tick {
                self.snapshots.push(Profile {
                    t: s.t,
                    v: s.v.clone(),
                });
            }
            self.next_target += 1;
        }
        if !self.early_open {
            return;
        }
        if s.t > self.early_window {
            self.early_open = false;
            self.early.window_closed = true;
            return;
        }
        let reached = s.xi_hat >= self.level;
        if reached || accepted.is_multiple_of(self.early_stride) {
            self.early.profiles.push(Profile {
                t: s.t,
                v: s.v.clone(),
            });
        }
        if self.early.profiles.len() >= self.early_cap {
            // keep every other profile and the newest one
            let last = self.early.profiles.pop();
            let mut i = 0;
            self.early.profiles.retain(|_| {
                i += 1;
                i % 2 == 1
            });
            self.early.profiles.extend(last);
            self.early_stride *= 2;
            self.early.truncated = true;
        }
        if reached {
            self.early_open = false;
        }
    }
}

/// Samples a driver for `controls` and runs one path.
pub fn run_seeded(
    params: &Parameters,
    controls: &Controls,
    seed: u64,
) -> std::result::Result<(RunOutput, BrownianPath), RunFailure> {
    let mut path = BrownianPath::sample(controls.horizon, controls.path_dt, seed)?;
    let mut solver = Solver::new(params, controls)?;
    let out = solver.run(&mut path)?;
    Ok((out, path))
}

/// Runs `params` on an existing path.
pub fn run(
    params: &Parameters,
    path: &mut BrownianPath,
    controls: &Controls,
) -> std::result::Result<RunOutput, RunFailure> {
    Solver::new(params, controls)?.run(path)
}
