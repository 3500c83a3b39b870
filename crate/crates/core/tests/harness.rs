use delayguard::harness::{self, SweepSpec, VictimGroup};
use delayguard::model::validate;
use delayguard::{io, rta};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn rand_fixed_sum_sums_exactly_and_is_unbiased() {
    let (n, total, draws) = (5usize, 0.5, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sums = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for _ in 0..draws {
        let u = harness::rand_fixed_sum(n, total, &mut rng).unwrap();
        assert!((u.iter().sum::<f64>() - total).abs() < 1e-12);
        assert!(u.iter().all(|&x| x > 0.0 && x < 1.0));
        for (i, x) in u.iter().enumerate() {
            sums[i] += x;
            sq[i] += x * x;
        }
    }
    let expected = total / n as f64;
    for i in 0..n {
        let mean = sums[i] / draws as f64;
        let sd = (sq[i] / draws as f64 - mean * mean).sqrt();
        let se = sd / (draws as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "coordinate {i}: {mean} vs {expected}");
    }
}

#[test]
fn low_utilization_is_almost_always_schedulable() {
    for n in [5, 10, 20] {
        let mut spec = SweepSpec::new(n, 3);
        spec.ranges.truncate(1);
        for row in harness::schedulability_sweep(&spec).unwrap() {
            assert!(row.percent >= 95.0, "n={n} {:?}: {}", row.group, row.percent);
        }
    }
}

#[test]
fn sweep_is_a_function_of_spec_and_seed() {
    let spec = SweepSpec {
        sets_per_range: 10,
        ..SweepSpec::new(6, 42)
    };
    assert_eq!(harness::schedulability_sweep(&spec).unwrap(), harness::schedulability_sweep(&spec).unwrap());
}

#[test]
fn priority_groups_split_in_thirds() {
    assert_eq!(VictimGroup::Hp.ranks(10), 1..=3);
    assert_eq!(VictimGroup::Mp.ranks(10), 4..=6);
    assert_eq!(VictimGroup::Lp.ranks(10), 7..=10);
}

#[test]
fn sweep_rejects_too_few_tasks() {
    assert!(harness::schedulability_sweep(&SweepSpec::new(2, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_sets_are_valid_near_target_and_round_trip(seed in any::<u64>(), n in 1usize..20, frac in 0.02f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = harness::generate_taskset(n, frac, &mut rng).unwrap();
        prop_assert!(validate(&ts).is_empty());
        prop_assert_eq!(ts.len(), n);
        for t in ts.tasks() {
            prop_assert!(harness::PERIOD_MENU.contains(&t.period));
            prop_assert!(t.wcet >= 1 && t.wcet < t.period && t.wcet <= harness::MAX_WCET);
        }
        // priorities are rate-monotonic
        let order = ts.by_priority();
        prop_assert!(order.windows(2).all(|w| w[0].period <= w[1].period));
        prop_assert_eq!(io::parse_taskset(&io::taskset_to_string(&ts)).unwrap(), ts.clone());
        // the analysis never panics on generated input
        let _ = rta::peak_delay(order[0], &ts);
    }
}

#[test]
fn achieved_utilization_is_within_tolerance_for_feasible_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut within = 0;
    let trials = 500;
    for i in 0..trials {
        let target = 0.1 + 0.8 * (i as f64 / trials as f64);
        let ts = harness::generate_taskset(5, target, &mut rng).unwrap();
        within += usize::from((ts.utilization() - target).abs() <= 0.05);
    }
    assert_eq!(within, trials);
}
