use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::model::RadialGrid;
use crate::power::Power;

/// Relative violations of the three pointwise properties of a solution.
/// Each entry is positive only when the property fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma21Diagnostics {
    /// `(gamma - min v) / gamma`.
    pub lower_bound: f64,
    /// `max_i (v_{i+1} - v_i) / max v`.
    pub monotone: f64,
    /// `(max_i z_i^n v_i^beta - mean v^beta) / mean v^beta`.
    pub mean_bound: f64,
}

impl Lemma21Diagnostics {
    pub fn worst(&self) -> f64 {
        self.lower_bound.max(self.monotone).max(self.mean_bound)
    }
}

/// Checks `v >= gamma`, `d_z v <= 0` and `z^n v^beta <= mean v^beta` on a
/// field.
pub fn monitor_lemma21(v: &[f64], grid: &RadialGrid, gamma: f64, beta: f64) -> Lemma21Diagnostics {
    let pow = Power::new(beta);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rise = v
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut mean = 0.0;
    let mut peak = f64::NEG_INFINITY;
    for ((&vi, &w), &zn) in v.iter().zip(&grid.weights).zip(&grid.z_pow_n) {
        let vb = pow.apply(vi);
        mean += w * vb;
        peak = peak.max(zn * vb);
    }
    Lemma21Diagnostics {
        lower_bound: (gamma - min) / gamma,
        monotone: rise / max,
        mean_bound: (peak - mean) / mean,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0Estimate {
    /// `-max_t d_z v(1/2, t) * 2^-(n-1)`, clipped below at 0.
    pub value: f64,
    /// Time of the sample attaining the maximum derivative.
    pub t_at: f64,
    /// Set when a nonnegative derivative was observed and the value clipped.
    pub clipped: bool,
}

/// Numerical stand-in for the constant in `d_z v(1/2, t) <= -C0 2^(n-1)`,
/// taken over the samples with `t <= t_end`.
pub fn estimate_c0(traj: &Trajectory, n: u32, t_end: f64) -> Option<C0Estimate> {
    let worst = traj
        .samples
        .iter()
        .take_while(|s| s.t <= t_end)
        .max_by(|a, b| a.dvdz_half.total_cmp(&b.dvdz_half))?;
    let raw = -worst.dvdz_half * 2f64.powi(1 - n as i32);
    Some(C0Estimate {
        value: raw.max(0.0),
        t_at: worst.t,
        clipped: raw <= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_meets_mean_bound_with_margin() {
        let grid = RadialGrid::uniform(64, 3).unwrap();
        let v = vec![5.0; grid.len()];
        let d = monitor_lemma21(&v, &grid, 5.0, 0.5);
        assert_eq!(d.lower_bound, 0.0);
        assert_eq!(d.monotone, 0.0);
        // equality at z = 1 only
        assert!(d.mean_bound.abs() < 1e-14);
    }

    #[test]
    fn increasing_field_is_flagged() {
        let grid = RadialGrid::uniform(16, 2).unwrap();
        let v: Vec<f64> = grid.z.iter().map(|z| 1.0 + z).collect();
        let d = monitor_lemma21(&v, &grid, 1.0, 1.0);
        assert!(d.monotone > 0.0);
        assert!(d.mean_bound > 0.0);
    }
}
