//! The driving Brownian path.
//!
//! A path is a uniform base grid of spacing `dt` plus any number of refined
//! nodes at dyadic subdivisions of the base intervals. Time is addressed by
//! integer ticks: one base interval is `2^BRIDGE_LEVELS` ticks.
//!
//! Refined values follow the Lévy construction: the node at a dyadic offset is
//! a Brownian-bridge draw between its two dyadic parents, using a normal
//! variate keyed by `(seed, interval, offset)` on a counter-based ChaCha
//! stream. A node's value therefore depends only on its address, never on the
//! order in which nodes were requested.

use std::collections::BTreeMap;
use std::ops::Bound;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dyadic refinement depth below the base spacing.
pub const BRIDGE_LEVELS: u32 = 40;

/// Ticks per base interval.
pub const TICKS_PER_INTERVAL: u128 = 1 << BRIDGE_LEVELS;

/// Default base spacing of driver paths.
pub const DEFAULT_PATH_DT: f64 = 1e-3;

/// Integer time address on the dyadic lattice of a path.
pub type Tick = u128;

#[derive(Debug, Clone)]
pub struct BrownianPath {
    seed: u64,
    dt: f64,
    base: Vec<f64>,
    /// Running max of `|B|` over base nodes only.
    base_max: Vec<f64>,
    refined: BTreeMap<Tick, f64>,
    keyed: ChaCha8Rng,
}

fn unit_open(x: u64) -> f64 {
    // (0, 1]
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl BrownianPath {
    /// Samples `B` on `0, dt, 2dt, ..., K dt` with `K = ceil(horizon/dt)`.
    pub fn sample(horizon: f64, dt: f64, seed: u64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!(
                "path horizon and dt must be positive, got T={horizon}, dt={dt}"
            )));
        }
        let steps = ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let sd = dt.sqrt();
        let mut values = Vec::with_capacity(steps + 1);
        let mut b = 0.0;
        values.push(b);
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            b += sd * z;
            values.push(b);
        }
        Self::from_values(dt, values, seed)
    }

    /// Wraps explicit base values `B(k dt)`. `values[0]` must be 0.
    pub fn from_values(dt: f64, values: Vec<f64>, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::domain("a path needs at least two nodes"));
        }
        if values[0] != 0.0 {
            return Err(Error::domain(format!("B(0) must be 0, got {}", values[0])));
        }
        let mut base_max = Vec::with_capacity(values.len());
        let mut m = 0.0f64;
        for &v in &values {
            m = m.max(v.abs());
            base_max.push(m);
        }
        Ok(BrownianPath {
            seed,
            dt,
            base: values,
            base_max,
            refined: BTreeMap::new(),
            keyed: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Last time covered by the path.
    pub fn horizon(&self) -> f64 {
        (self.base.len() - 1) as f64 * self.dt
    }

    pub fn last_tick(&self) -> Tick {
        (self.base.len() as u128 - 1) * TICKS_PER_INTERVAL
    }

    /// Duration of one tick.
    pub fn tick_len(&self) -> f64 {
        self.dt / TICKS_PER_INTERVAL as f64
    }

    pub fn time_of(&self, tick: Tick) -> f64 {
        let k = tick / TICKS_PER_INTERVAL;
        let o = tick % TICKS_PER_INTERVAL;
        k as f64 * self.dt + o as f64 * self.tick_len()
    }

    /// Largest tick whose time does not exceed `t` (clamped at 0).
    pub fn tick_floor(&self, t: f64) -> Tick {
        if t <= 0.0 {
            return 0;
        }
        let x = t / self.dt;
        let k = x.floor();
        let o = ((x - k) * TICKS_PER_INTERVAL as f64).floor();
        let mut tick = k as u128 * TICKS_PER_INTERVAL + (o as u128).min(TICKS_PER_INTERVAL - 1);
        while tick > 0 && self.time_of(tick) > t {
            tick -= 1;
        }
        while tick < self.last_tick() && self.time_of(tick + 1) <= t {
            tick += 1;
        }
        tick
    }

    /// Tick nearest to `t`.
    pub fn tick_nearest(&self, t: f64) -> Tick {
        let lo = self.tick_floor(t);
        if (t - self.time_of(lo)) > 0.5 * self.tick_len() {
            lo + 1
        } else {
            lo
        }
    }

    /// Number of nodes (base plus refined).
    pub fn node_count(&self) -> usize {
        self.base.len() + self.refined.len()
    }

    /// Value at an existing node, without refining.
    pub fn get(&self, tick: Tick) -> Option<f64> {
        let k = tick / TICKS_PER_INTERVAL;
        let o = tick % TICKS_PER_INTERVAL;
        if o == 0 {
            self.base.get(k as usize).copied()
        } else {
            self.refined.get(&tick).copied()
        }
    }

    fn keyed_normal(&self, interval: u128, offset: u128) -> f64 {
        let mut rng = self.keyed.clone();
        rng.set_stream(interval as u64 + 1);
        rng.set_word_pos(offset * 4);
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_open(rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Value at `tick`, inserting it and its dyadic ancestors if needed.
    ///
    /// # Panics
    /// If `tick` lies beyond the path.
    pub fn value_at(&mut self, tick: Tick) -> f64 {
        assert!(tick <= self.last_tick(), "tick beyond path horizon");
        if let Some(v) = self.get(tick) {
            return v;
        }
        let k = tick / TICKS_PER_INTERVAL;
        let o = tick % TICKS_PER_INTERVAL;
        let low = o & o.wrapping_neg();
        let left = self.value_at(tick - low);
        let right = self.value_at(tick + low);
        let width = 2.0 * low as f64 * self.tick_len();
        let v = 0.5 * (left + right) + (0.25 * width).sqrt() * self.keyed_normal(k, o);
        self.refined.insert(tick, v);
        v
    }

    /// Inserts a bridge node at the lattice point nearest to `t`.
    pub fn refine(&mut self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < self.horizon()) {
            return Err(Error::domain(format!(
                "refinement time {t} outside (0, {})",
                self.horizon()
            )));
        }
        let tick = self.tick_nearest(t);
        Ok(self.value_at(tick))
    }

    /// Max of `|B|` over nodes at or before `tick`.
    pub fn running_max_ticks(&self, tick: Tick) -> f64 {
        let k = ((tick / TICKS_PER_INTERVAL) as usize).min(self.base.len() - 1);
        let refined = self
            .refined
            .range(..=tick)
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        self.base_max[k].max(refined)
    }

    /// `B*_t`: max of `|B|` over the discrete nodes in `[0, t]`.
    pub fn running_max(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon() * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::domain(format!(
                "running max requested at t={t} outside [0, {}]",
                self.horizon()
            )));
        }
        Ok(self.running_max_ticks(self.tick_floor(t)))
    }

    /// Max of `|B|` over nodes in `(lo, hi]`; 0 if there are none.
    pub fn max_abs_between(&self, lo: Tick, hi: Tick) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let first = (lo / TICKS_PER_INTERVAL + 1) as usize;
        let last = ((hi / TICKS_PER_INTERVAL) as usize).min(self.base.len() - 1);
        let mut m = 0.0f64;
        if first <= last {
            m = self.base[first..=last].iter().fold(m, |m, v| m.max(v.abs()));
        }
        self.refined
            .range((Bound::Excluded(lo), Bound::Included(hi)))
            .fold(m, |m, (_, v)| m.max(v.abs()))
    }

    /// All nodes `(t, B(t))` in time order.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut refined = self.refined.iter().peekable();
        for (k, &b) in self.base.iter().enumerate() {
            let tick = k as u128 * TICKS_PER_INTERVAL;
            while let Some((&rt, &rv)) = refined.peek() {
                if rt < tick {
                    out.push((self.time_of(rt), rv));
                    refined.next();
                } else {
                    break;
                }
            }
            out.push((self.time_of(tick), b));
        }
        out
    }

    /// Rows `(t, B, B*)` over all nodes.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let mut m = 0.0f64;
        self.nodes()
            .into_iter()
            .map(|(t, b)| {
                m = m.max(b.abs());
                (t, b, m)
            })
            .collect()
    }
}

/// Upper bound `P(B*_t >= A) <= sqrt(t)/sqrt(2 pi) * (4/A) * exp(-A^2/(2t))`.
pub fn tail_bound(t: f64, a: f64) -> Result<f64> {
    if !(t > 0.0) || !(a > 0.0) {
        return Err(Error::domain(format!("tail bound needs t, A > 0, got t={t}, A={a}")));
    }
    Ok((t / std::f64::consts::TAU).sqrt() * (4.0 / a) * (-a * a / (2.0 * t)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sampling_is_deterministic() {
        let a = BrownianPath::sample(1.0, 1e-3, 42).unwrap();
        let b = BrownianPath::sample(1.0, 1e-3, 42).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        let c = BrownianPath::sample(1.0, 1e-3, 43).unwrap();
        assert_ne!(a.nodes(), c.nodes());
        assert_eq!(a.nodes().len(), 1001);
    }

    #[test]
    fn invalid_inputs() {
        assert!(BrownianPath::sample(0.0, 1e-3, 1).is_err());
        assert!(BrownianPath::sample(1.0, -1e-3, 1).is_err());
        let mut p = BrownianPath::sample(1.0, 1e-2, 1).unwrap();
        assert!(p.refine(1.5).is_err());
        assert!(p.refine(0.0).is_err());
        assert!(p.running_max(2.0).is_err());
        assert!(tail_bound(0.0, 1.0).is_err());
        assert!(tail_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn law_of_b1() {
        let m = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for seed in 0..m {
            let p = BrownianPath::sample(1.0, 1e-3, seed).unwrap();
            let b = p.base[p.base.len() - 1];
            s1 += b;
            s2 += b * b;
        }
        let mean = s1 / m as f64;
        let var = s2 / m as f64 - mean * mean;
        assert!(mean.abs() <= 3.0 / (m as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() <= 0.02, "var {var}");
    }

    #[test]
    fn refinement_keeps_existing_nodes() {
        let mut p = BrownianPath::sample(1.0, 1e-2, 7).unwrap();
        let before = p.nodes();
        p.refine(0.123_456).unwrap();
        p.refine(0.5 + 1e-9).unwrap();
        let after = p.nodes();
        for node in &before {
            assert!(after.contains(node));
        }
        assert!(after.len() > before.len());
        assert!(after.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn bridge_variance_at_midpoint() {
        let m = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for seed in 0..m {
            let mut p = BrownianPath::from_values(1.0, vec![0.0, 0.0], seed).unwrap();
            let v = p.refine(0.5).unwrap();
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / m as f64;
        let var = s2 / m as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 0.25).abs() <= 0.005, "var {var}");
    }

    #[test]
    fn refinement_order_does_not_matter() {
        let times = [0.0037, 0.25, 0.5, 0.3751, 0.7, 0.0001];
        let mut a = BrownianPath::sample(1.0, 0.01, 11).unwrap();
        let mut b = a.clone();
        for &t in &times {
            a.refine(t).unwrap();
        }
        for &t in times.iter().rev() {
            b.refine(t).unwrap();
        }
        assert_eq!(a.nodes(), b.nodes());
    }

    #[test]
    fn running_max_basics() {
        let mut p = BrownianPath::sample(1.0, 1e-3, 3).unwrap();
        assert_eq!(p.running_max(0.0).unwrap(), 0.0);
        let before: Vec<f64> = (0..=100).map(|i| p.running_max(i as f64 / 100.0).unwrap()).collect();
        assert!(before.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..50 {
            p.refine(0.0005 + i as f64 * 0.0173).unwrap();
        }
        for (i, b) in before.iter().enumerate() {
            let after = p.running_max(i as f64 / 100.0).unwrap();
            assert!(after >= *b);
        }
        let rows = p.rows();
        for (t, b, m) in rows {
            assert!(m >= b.abs());
            assert_eq!(p.running_max(t).unwrap(), m);
        }
    }

    #[test]
    fn incremental_max_matches_running_max() {
        let mut p = BrownianPath::sample(2.0, 1e-3, 5).unwrap();
        let mut tick: Tick = 0;
        let mut m = 0.0f64;
        let step = TICKS_PER_INTERVAL * 3 / 2 + 12_345;
        while tick + step <= p.last_tick() {
            p.value_at(tick + step / 3);
            let next = tick + step;
            p.value_at(next);
            m = m.max(p.max_abs_between(tick, next));
            tick = next;
            assert_eq!(m, p.running_max_ticks(tick));
        }
    }

    #[test]
    fn expected_sup_of_abs_b() {
        // E sup_{[0,1]} |B| = sqrt(pi/2) = 1.2533 in continuous time; the
        // discrete max at dt = 1e-3 sits slightly below.
        let m = 100_000;
        let total: f64 = (0..m)
            .map(|seed| BrownianPath::sample(1.0, 1e-3, 1_000_000 + seed).unwrap().running_max(1.0).unwrap())
            .sum();
        let mean = total / m as f64;
        assert!((mean - 1.25).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn tail_bound_values() {
        assert!((tail_bound(1.0, 2.0).unwrap() - 0.107_981_933_026_376_13).abs() < 1e-15);
        assert!((tail_bound(1.0, 3.0).unwrap() - 0.005_909_131_215_917_344).abs() < 1e-16);
        assert!(tail_bound(1.0, 40.0).unwrap() < 1e-300);
    }

    proptest! {
        #[test]
        fn tail_bound_monotonicity(a in 0.2f64..6.0, frac in 0.01f64..0.99) {
            let t_max = a * a / 2.0;
            let t1 = frac * t_max;
            let t2 = (frac + 0.01).min(1.0) * t_max;
            prop_assert!(tail_bound(t1, a).unwrap() <= tail_bound(t2, a).unwrap());
            prop_assert!(tail_bound(1.0, a + 0.1).unwrap() < tail_bound(1.0, a).unwrap());
        }
    }
}
