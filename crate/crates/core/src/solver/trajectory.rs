use serde::{Deserialize, Serialize};

/// Diagnostics recorded after every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub xi: f64,
    pub xi_hat: f64,
    pub b: f64,
    pub bstar: f64,
    /// `v` at the origin.
    pub v0: f64,
    pub vmax: f64,
    pub mean_vr: f64,
    pub mean_vbeta: f64,
    pub k: f64,
    /// Step that produced this sample; 0 for the initial sample.
    pub dt: f64,
    /// Centred difference of `v` at the node nearest `z = 1/2`.
    pub dvdz_half: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// A full field snapshot on the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub t: f64,
    pub v: Vec<f64>,
}

/// Profiles retained from the start of a run until `xi_hat` first reaches
/// `lambda * xi0` (inclusive), or until the early window closes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EarlyProfiles {
    pub profiles: Vec<Profile>,
    /// Set when the retention cap was hit; the profiles are then discarded.
    pub truncated: bool,
    /// Set when the window closed before `t_lambda`.
    pub window_closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// `max v` reached the blowup threshold.
    Threshold,
    /// The admissible step fell below `dt_min`.
    DtFloor,
    /// The horizon was reached without blowup.
    Horizon,
    /// The run aborted on a NaN or negative field.
    Breakdown,
}

/// Worst values of the monitored invariants over all accepted states.
/// Monitor entries are relative violations (positive means violated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantWorst {
    /// Smallest `(xi_hat_new - xi_hat_old) / xi_hat_old` over steps.
    pub min_xi_hat_increment: f64,
    /// `(gamma - min v) / gamma`.
    pub lower_bound: f64,
    /// `max (v_{i+1} - v_i) / max v`.
    pub monotone: f64,
    /// `(max z^n v^beta - mean v^beta) / mean v^beta`.
    pub mean_bound: f64,
    /// Relative defect of `xi_hat = exp(3t/2 - B) xi`.
    pub xi_hat_identity: f64,
    /// Relative defect of `K = exp(-(p-1)t) / xi^q`.
    pub k_identity: f64,
}

impl Default for InvariantWorst {
    fn default() -> Self {
        InvariantWorst {
            min_xi_hat_increment: f64::INFINITY,
            lower_bound: f64::NEG_INFINITY,
            monotone: f64::NEG_INFINITY,
            mean_bound: f64::NEG_INFINITY,
            xi_hat_identity: 0.0,
            k_identity: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub blew_up: bool,
    pub trigger: Trigger,
    /// Blowup bracket `[t_lo, t_hi]`, present when `blew_up`.
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
    /// Time of the last state.
    pub stop_time: f64,
    /// `None` when `xi_hat` never reached `lambda * xi0` before the stop.
    pub t_lambda: Option<f64>,
    pub bstar_t_lambda: Option<f64>,
    /// First time `mean v^beta >= h*_lambda`.
    pub t_hat_lambda: Option<f64>,
    pub h_star_lambda: Option<f64>,
    pub beta: f64,
    pub final_bstar: f64,
    pub final_vmax: f64,
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    /// Base spacing of the driver path; every `B*` value in this report is a
    /// discrete max at this resolution (plus solver refinements).
    pub path_dt: f64,
    pub worst: InvariantWorst,
}

impl BlowupReport {
    pub fn bracket(&self) -> Option<(f64, f64)> {
        self.t_lo.zip(self.t_hi)
    }
}

/// First time the series `value(sample)` reaches `level`, linearly
/// interpolated within the bracketing step.
pub(crate) fn first_crossing(
    samples: &[Sample],
    level: f64,
    value: impl Fn(&Sample) -> f64,
) -> Option<f64> {
    let first = samples.first()?;
    if value(first) >= level {
        return Some(first.t);
    }
    samples.windows(2).find_map(|w| {
        let (a, b) = (value(&w[0]), value(&w[1]));
        (b >= level).then(|| {
            if b > a {
                w[0].t + (w[1].t - w[0].t) * (level - a) / (b - a)
            } else {
                w[1].t
            }
        })
    })
}

/// `t_lambda = inf { t : xi_hat(t) >= lambda xi0 }`; `None` when never reached.
pub fn stopping_time_t_lambda(traj: &Trajectory, lambda: f64, xi0: f64) -> Option<f64> {
    first_crossing(&traj.samples, lambda * xi0, |s| s.xi_hat)
}
