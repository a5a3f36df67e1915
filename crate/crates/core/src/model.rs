//! Parameters, the isotropic initial profile `phi`, the radial grid, and the
//! change of variables `v = e^t u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to the strict inequalities of the admissibility and
/// blowup-regime conditions.
pub const STRICT_SLACK: f64 = 1e-12;

/// Default number of grid intervals.
pub const DEFAULT_GRID_INTERVALS: usize = 1024;

/// Parameters as supplied by a user or config file, before validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParameters {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    /// Spatial dimension.
    pub n: u32,
    /// Corner of the initial profile, in (0, 1).
    pub delta: f64,
    /// Amplitude of the initial data `v0 = gamma * phi`.
    pub gamma: f64,
    /// Initial inhibitor value.
    pub xi0: f64,
    /// Stopping-time level, `t_lambda = inf { t : xi_hat(t) >= lambda * xi0 }`.
    pub lambda: f64,
}

impl RawParameters {
    /// The reference case `(p, q, r, s, n) = (2, 1, 2, 0, 3)` with
    /// `delta = 0.5, gamma = 100, xi0 = 1, lambda = 2`.
    pub fn reference() -> Self {
        RawParameters {
            p: 2.0,
            q: 1.0,
            r: 2.0,
            s: 0.0,
            n: 3,
            delta: 0.5,
            gamma: 100.0,
            xi0: 1.0,
            lambda: 2.0,
        }
    }
}

/// Validated parameters. Construct with [`Parameters::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub n: u32,
    pub delta: f64,
    pub gamma: f64,
    pub xi0: f64,
    pub lambda: f64,
    /// `2 / (p - 1)`, stored once so every consumer sees the same bits.
    pub alpha: f64,
    /// `p >= r` and `(p - 1)/r > 2/(n + 2)`.
    pub blowup_regime: bool,
}

fn strictly_less(a: f64, b: f64) -> bool {
    b - a > STRICT_SLACK * a.abs().max(b.abs())
}

impl Parameters {
    pub fn validate(raw: RawParameters) -> Result<Self> {
        let RawParameters {
            p,
            q,
            r,
            s,
            n,
            delta,
            gamma,
            xi0,
            lambda,
        } = raw;
        for (name, v) in [
            ("p", p),
            ("q", q),
            ("r", r),
            ("s", s),
            ("delta", delta),
            ("gamma", gamma),
            ("xi0", xi0),
            ("lambda", lambda),
        ] {
            if !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite, got {v}")));
            }
        }
        if p <= 1.0 {
            return Err(Error::domain(format!("p must exceed 1, got {p}")));
        }
        if q <= 0.0 || r <= 0.0 {
            return Err(Error::domain(format!("q and r must be positive, got q={q}, r={r}")));
        }
        if s < 0.0 {
            return Err(Error::domain(format!("s must be nonnegative, got {s}")));
        }
        if n == 0 {
            return Err(Error::domain("dimension n must be at least 1"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
        }
        if gamma <= 0.0 {
            return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
        }
        if xi0 <= 0.0 {
            return Err(Error::domain(format!("xi0 must be positive, got {xi0}")));
        }
        if lambda <= 1.0 {
            return Err(Error::domain(format!("lambda must exceed 1, got {lambda}")));
        }

        let ratio = (p - 1.0) / r;
        let ceiling = q / (s + 1.0);
        if !strictly_less(ratio, ceiling) {
            return Err(Error::AdmissibilityViolation(format!(
                "(p-1)/r = {ratio} is not strictly below q/(s+1) = {ceiling}"
            )));
        }
        let blowup_regime = p >= r && strictly_less(2.0 / (f64::from(n) + 2.0), ratio);

        Ok(Parameters {
            p,
            q,
            r,
            s,
            n,
            delta,
            gamma,
            xi0,
            lambda,
            alpha: 2.0 / (p - 1.0),
            blowup_regime,
        })
    }

    pub fn raw(&self) -> RawParameters {
        RawParameters {
            p: self.p,
            q: self.q,
            r: self.r,
            s: self.s,
            n: self.n,
            delta: self.delta,
            gamma: self.gamma,
            xi0: self.xi0,
            lambda: self.lambda,
        }
    }

    pub fn dim(&self) -> f64 {
        f64::from(self.n)
    }

    /// Same parameters with a different amplitude.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Parameters::validate(RawParameters { gamma, ..self.raw() })
    }
}

fn check_unit(z: f64) -> Result<()> {
    if (0.0..=1.0).contains(&z) {
        Ok(())
    } else {
        Err(Error::domain(format!("z must lie in [0,1], got {z}")))
    }
}

/// The initial profile: `z^-alpha` on `[delta, 1]`, and the matching
/// downward parabola `delta^-alpha (1 + alpha/2) - (alpha/2) delta^(-alpha-2) z^2`
/// on `[0, delta)`.
pub fn phi(z: f64, delta: f64, alpha: f64) -> Result<f64> {
    check_unit(z)?;
    Ok(if z >= delta {
        z.powf(-alpha)
    } else {
        delta.powf(-alpha) * (1.0 + 0.5 * alpha) - 0.5 * alpha * delta.powf(-alpha - 2.0) * z * z
    })
}

/// `phi'(z)`, closed form on each branch.
pub fn phi_prime(z: f64, delta: f64, alpha: f64) -> Result<f64> {
    check_unit(z)?;
    Ok(if z >= delta {
        -alpha * z.powf(-alpha - 1.0)
    } else {
        -alpha * delta.powf(-alpha - 2.0) * z
    })
}

/// `phi''(z)`, closed form on each branch.
pub fn phi_second(z: f64, delta: f64, alpha: f64) -> Result<f64> {
    check_unit(z)?;
    Ok(if z >= delta {
        alpha * (alpha + 1.0) * z.powf(-alpha - 2.0)
    } else {
        -alpha * delta.powf(-alpha - 2.0)
    })
}

#[derive(Debug, Clone, Copy)]
enum Branch {
    Inner,
    Outer,
}

/// `(phi'' + (n-1)/z phi' + alpha n phi^p, scale)` on a forced branch, where
/// `scale` is the sum of the absolute values of the three terms.
fn phi_margin_on(branch: Branch, z: f64, params: &Parameters) -> (f64, f64) {
    let Parameters {
        p, delta, alpha, ..
    } = *params;
    let n = params.dim();
    let (f, d1, d2) = match branch {
        Branch::Outer => (
            z.powf(-alpha),
            -alpha * z.powf(-alpha - 1.0),
            alpha * (alpha + 1.0) * z.powf(-alpha - 2.0),
        ),
        Branch::Inner => {
            let c = delta.powf(-alpha - 2.0);
            (
                delta.powf(-alpha) * (1.0 + 0.5 * alpha) - 0.5 * alpha * c * z * z,
                -alpha * c * z,
                -alpha * c,
            )
        }
    };
    let t1 = d2;
    let t2 = (n - 1.0) / z * d1;
    let t3 = alpha * n * f.powf(p);
    (t1 + t2 + t3, t1.abs() + t2.abs() + t3.abs())
}

/// Result of scanning the differential inequality for `phi` over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiMarginReport {
    /// Minimum of `phi'' + (n-1)/z phi' + alpha n phi^p` over interior nodes.
    pub min_margin: f64,
    /// Minimum of the margin divided by the sum of the absolute values of its
    /// three terms; insensitive to the overall scale `delta^(-alpha-2)`.
    pub min_relative_margin: f64,
    /// Node attaining `min_relative_margin`.
    pub argmin_z: f64,
    /// One-sided limits at `z = delta` from the inner and outer branch.
    pub inner_limit_at_delta: f64,
    pub outer_limit_at_delta: f64,
    pub inner_relative_limit_at_delta: f64,
    pub outer_relative_limit_at_delta: f64,
}

impl PhiMarginReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_relative_margin >= -tol
            && self.inner_relative_limit_at_delta >= -tol
            && self.outer_relative_limit_at_delta >= -tol
            && self.inner_limit_at_delta.is_finite()
            && self.outer_limit_at_delta.is_finite()
    }
}

/// Evaluates `phi'' + (n-1)/z phi' + alpha n phi^p` at every interior node
/// of `grid` using the closed-form derivatives, plus both one-sided limits at
/// the corner `z = delta`.
pub fn verify_phi_inequality(params: &Parameters, grid: &RadialGrid) -> PhiMarginReport {
    let mut min_margin = f64::INFINITY;
    let mut min_rel = f64::INFINITY;
    let mut argmin_z = f64::NAN;
    for &z in &grid.z[1..grid.z.len() - 1] {
        let branch = if z >= params.delta {
            Branch::Outer
        } else {
            Branch::Inner
        };
        let (m, scale) = phi_margin_on(branch, z, params);
        min_margin = min_margin.min(m);
        let rel = m / scale;
        if rel < min_rel {
            min_rel = rel;
            argmin_z = z;
        }
    }
    let (inner, inner_scale) = phi_margin_on(Branch::Inner, params.delta, params);
    let (outer, outer_scale) = phi_margin_on(Branch::Outer, params.delta, params);
    PhiMarginReport {
        min_margin,
        min_relative_margin: min_rel,
        argmin_z,
        inner_limit_at_delta: inner,
        outer_limit_at_delta: outer,
        inner_relative_limit_at_delta: inner / inner_scale,
        outer_relative_limit_at_delta: outer / outer_scale,
    }
}

/// Relative mismatch of the two branches of `phi` at `z = delta`:
/// `(value mismatch, first-derivative mismatch)`.
pub fn phi_c1_mismatch(delta: f64, alpha: f64) -> (f64, f64) {
    let c = delta.powf(-alpha - 2.0);
    let inner = delta.powf(-alpha) * (1.0 + 0.5 * alpha) - 0.5 * alpha * c * delta * delta;
    let outer = delta.powf(-alpha);
    let inner_d = -alpha * c * delta;
    let outer_d = -alpha * delta.powf(-alpha - 1.0);
    (
        (inner - outer).abs() / outer.abs(),
        (inner_d - outer_d).abs() / outer_d.abs(),
    )
}

/// Uniform vertex-centred radial grid on `[0, 1]` for the unit ball in
/// dimension `n`.
///
/// Node `i` owns the dual cell `[z_i - h/2, z_i + h/2] ∩ [0, 1]`; its weight
/// is the closed-form integral of `n z^(n-1)` over that cell, so the weights
/// are nonnegative and telescope to exactly 1. The same cells define the
/// conservative diffusion stencil in the solver, which makes the weighted
/// mean of `v` an exact discrete invariant of pure diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub intervals: usize,
    pub dim: u32,
    pub h: f64,
    pub z: Vec<f64>,
    /// Quadrature weights for `mean(f) = ∫_0^1 f(z) n z^(n-1) dz`.
    pub weights: Vec<f64>,
    /// `n z^(n-1) / h` at each face `z_{i+1/2}`, `i = 0..N-1`.
    pub face_conductance: Vec<f64>,
    /// `z_i^n`.
    pub z_pow_n: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(intervals: usize, dim: u32) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::domain(format!("grid needs at least 2 intervals, got {intervals}")));
        }
        if dim == 0 {
            return Err(Error::domain("dimension n must be at least 1"));
        }
        let nf = f64::from(dim);
        let h = 1.0 / intervals as f64;
        let z: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
        // Cumulative measure up to each face; the last face is z = 1.
        let mut cum: Vec<f64> = (0..intervals)
            .map(|i| ((i as f64 + 0.5) * h).powi(dim as i32))
            .collect();
        cum.push(1.0);
        let mut weights = Vec::with_capacity(intervals + 1);
        let mut prev = 0.0;
        for &c in &cum {
            weights.push(c - prev);
            prev = c;
        }
        let face_conductance = (0..intervals)
            .map(|i| nf * ((i as f64 + 0.5) * h).powi(dim as i32 - 1) / h)
            .collect();
        let z_pow_n = z.iter().map(|&zi| zi.powi(dim as i32)).collect();
        Ok(RadialGrid {
            intervals,
            dim,
            h,
            z,
            weights,
            face_conductance,
            z_pow_n,
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Weighted mean of `f(z_i)`.
    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.z
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// Index of the node closest to `z`.
    pub fn nearest(&self, z: f64) -> usize {
        ((z / self.h).round() as usize).min(self.intervals)
    }

    /// `gamma * phi` sampled on the nodes.
    pub fn initial_profile(&self, params: &Parameters) -> Vec<f64> {
        self.z
            .iter()
            .map(|&z| params.gamma * phi(z, params.delta, params.alpha).expect("node in [0,1]"))
            .collect()
    }
}

pub fn u_from_v(v: f64, t: f64) -> f64 {
    (-t).exp() * v
}

pub fn v_from_u(u: f64, t: f64) -> f64 {
    t.exp() * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(p: f64, q: f64, r: f64, s: f64, n: u32) -> RawParameters {
        RawParameters {
            p,
            q,
            r,
            s,
            n,
            ..RawParameters::reference()
        }
    }

    #[test]
    fn reference_case_is_valid_and_in_blowup_regime() {
        let params = Parameters::validate(raw(2.0, 1.0, 2.0, 0.0, 3)).unwrap();
        assert!(params.blowup_regime);
        assert_eq!(params.alpha, 2.0);
    }

    #[test]
    fn boundary_of_admissibility_is_rejected() {
        let err = Parameters::validate(raw(2.0, 1.0, 2.0, 1.0, 3)).unwrap_err();
        assert!(matches!(err, Error::AdmissibilityViolation(_)));
    }

    #[test]
    fn one_dimensional_case_is_admissible_but_outside_regime() {
        let params = Parameters::validate(raw(2.0, 1.0, 2.0, 0.0, 1)).unwrap();
        assert!(!params.blowup_regime);
    }

    #[test]
    fn domain_errors() {
        let base = RawParameters::reference();
        for bad in [
            RawParameters { delta: 1.0, ..base },
            RawParameters { delta: 0.0, ..base },
            RawParameters { gamma: 0.0, ..base },
            RawParameters { xi0: -1.0, ..base },
            RawParameters { lambda: 1.0, ..base },
            RawParameters { p: 1.0, ..base },
            RawParameters { n: 0, ..base },
            RawParameters { gamma: f64::NAN, ..base },
        ] {
            assert!(matches!(Parameters::validate(bad), Err(Error::Domain(_))), "{bad:?}");
        }
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(1.0, 0.5, 2.0).unwrap(), 1.0);
        assert!((phi(0.5, 0.5, 2.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((phi(0.5 - 1e-12, 0.5, 2.0).unwrap() - 4.0).abs() < 1e-9);
        assert!((phi(0.0, 0.5, 2.0).unwrap() - 8.0).abs() < 1e-15);
        assert!(phi(1.5, 0.5, 2.0).is_err());
        assert!(phi(-0.1, 0.5, 2.0).is_err());
    }

    #[test]
    fn phi_margin_at_one_matches_hand_value() {
        let params = Parameters::validate(RawParameters::reference()).unwrap();
        let (m, _) = phi_margin_on(Branch::Outer, 1.0, &params);
        let a = params.alpha;
        assert!((m - (a * a + 2.0 * a)).abs() < 1e-12);
    }

    #[test]
    fn phi_inequality_on_reference_case() {
        let params = Parameters::validate(RawParameters::reference()).unwrap();
        let grid = RadialGrid::uniform(10_000, params.n).unwrap();
        let report = verify_phi_inequality(&params, &grid);
        assert!(report.min_margin >= 0.0, "{report:?}");
        assert!(report.holds(1e-10));
        // the inner limit at the corner is exactly zero in exact arithmetic
        assert!(report.inner_limit_at_delta.abs() < 1e-10);
        assert!(report.outer_limit_at_delta > 0.0);
    }

    #[test]
    fn u_v_change_of_variables() {
        assert_eq!(u_from_v(5.0, 0.0), 5.0);
        assert!((v_from_u(1.0, 2f64.ln()) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_weights() {
        for n in 1..=4u32 {
            let grid = RadialGrid::uniform(256, n).unwrap();
            let total: f64 = grid.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-13);
            assert!(grid.weights.iter().all(|&w| w >= 0.0));
            assert_eq!(grid.z[0], 0.0);
            assert_eq!(*grid.z.last().unwrap(), 1.0);
            assert!(grid.z.windows(2).all(|w| w[0] < w[1]));
            let nf = f64::from(n);
            for m in 0..=2 {
                let got = grid.mean_of(|z| z.powi(m));
                let exact = nf / (nf + f64::from(m));
                assert!((got - exact).abs() <= 2.0 * grid.h * grid.h, "n={n} m={m}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn mean_of_identity_in_three_dimensions() {
        let grid = RadialGrid::uniform(1024, 3).unwrap();
        assert!((grid.mean_of(|z| z) - 0.75).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn phi_is_c1_at_corner(delta in 0.02f64..0.98, alpha in 0.05f64..20.0) {
            let (dv, dd) = phi_c1_mismatch(delta, alpha);
            prop_assert!(dv <= 1e-12 && dd <= 1e-12, "dv={dv} dd={dd}");
        }

        #[test]
        fn phi_is_strictly_decreasing(delta in 0.05f64..0.95, alpha in 0.1f64..8.0) {
            let mut prev = f64::INFINITY;
            for i in 0..=200 {
                let z = i as f64 / 200.0;
                let f = phi(z, delta, alpha).unwrap();
                prop_assert!(f < prev, "z={z}");
                prev = f;
            }
        }

        #[test]
        fn validate_is_idempotent(
            p in 1.05f64..4.0, r in 0.5f64..4.0, s in 0.0f64..2.0,
            slack in 1.1f64..3.0, n in 1u32..6,
        ) {
            let q = slack * (p - 1.0) / r * (s + 1.0);
            let once = Parameters::validate(raw(p, q, r, s, n)).unwrap();
            let twice = Parameters::validate(once.raw()).unwrap();
            prop_assert_eq!(once, twice);
            prop_assert!((once.alpha * (p - 1.0) - 2.0).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn round_trip_u_v(u in 1e-6f64..1e6, t in 0.0f64..30.0) {
            let back = u_from_v(v_from_u(u, t), t);
            prop_assert!((back - u).abs() <= 1e-14 * u);
        }
    }
}
