use proptest::prelude::*;

use sgm_core::brownian::{tail_bound, BrownianPath};
use sgm_core::ensemble::{derive_seed, wilson_interval, Z99};
use sgm_core::model::{u_from_v, v_from_u};
use sgm_core::solver::mean_power;
use sgm_core::{Parameters, RadialGrid, RawParameters};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distinct_indices_get_distinct_seeds(base in any::<u64>(), i in 0u64..1_000_000, j in 0u64..1_000_000) {
        prop_assume!(i != j);
        prop_assert_ne!(derive_seed(base, i), derive_seed(base, j));
    }

    #[test]
    fn wilson_interval_contains_the_point_estimate(n in 1usize..100_000, frac in 0.0f64..=1.0) {
        let hits = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(hits, n, Z99);
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12);
        prop_assert!(p - 1e-12 <= hi && hi <= 1.0);
    }

    #[test]
    fn tail_bound_falls_with_level_and_rises_with_time(t in 0.01f64..10.0, a in 0.5f64..20.0, da in 0.01f64..5.0) {
        let ta = tail_bound(t, a).unwrap();
        let ta2 = tail_bound(t, a + da).unwrap();
        prop_assert!(ta2 < ta || ta == 0.0);
        prop_assert!(tail_bound(t * 1.5, a).unwrap() >= ta);
    }

    #[test]
    fn change_of_variables_round_trips(u in 1e-6f64..1e6, t in 0.0f64..20.0) {
        let back = u_from_v(v_from_u(u, t), t);
        prop_assert!(((back - u) / u).abs() <= 1e-14);
    }

    #[test]
    fn power_means_are_ordered(vals in prop::collection::vec(0.1f64..100.0, 33), beta in 0.05f64..1.0, extra in 0.0f64..2.0) {
        let grid = RadialGrid::uniform(32, 3).unwrap();
        let r = beta + extra;
        let mb = mean_power(&vals, beta, &grid).unwrap().powf(1.0 / beta);
        let mr = mean_power(&vals, r, &grid).unwrap().powf(1.0 / r);
        prop_assert!(mb <= mr * (1.0 + 1e-12));
    }

    #[test]
    fn running_max_is_monotone_and_dominates(seed in any::<u64>(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let path = BrownianPath::sample(1.0, 1e-2, seed).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(path.running_max(lo).unwrap() <= path.running_max(hi).unwrap());
        for (t, b, m) in path.rows() {
            prop_assert!(m >= b.abs());
            prop_assert_eq!(path.running_max(t).unwrap(), m);
        }
    }

    #[test]
    fn admissible_draws_validate_idempotently(p in 1.05f64..4.0, r in 0.5f64..4.0, s in 0.0f64..2.0, slack in 0.01f64..3.0, n in 1u32..6) {
        let q = (p - 1.0) / r * (s + 1.0) + slack;
        let raw = RawParameters { p, q, r, s, n, ..RawParameters::reference() };
        let params = Parameters::validate(raw).unwrap();
        prop_assert_eq!(Parameters::validate(params.raw()).unwrap(), params);
        prop_assert!((params.alpha * (p - 1.0) - 2.0).abs() <= 1e-15 * 4.0);
        let regime = p >= r && (p - 1.0) / r > 2.0 / (n as f64 + 2.0);
        prop_assert_eq!(params.blowup_regime, regime);
    }
}
