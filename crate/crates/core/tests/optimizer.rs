mod common;

use delayguard::milp::{build_milp, solve_milp};
use delayguard::overlap::{solve_delays, OverlapProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(seed: u64) -> OverlapProblem {
    common::random_overlap_problem(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn term_is_bounded(seed in any::<u64>()) {
        let p = problem(seed);
        for k in 1..=p.victim_jobs() {
            for d in 0..=p.max_delay {
                for (j, u) in p.untrusted.iter().enumerate() {
                    for m in 1..=u.jobs(p.hyperperiod) {
                        let o = p.overlap_term(k, d, j, m);
                        prop_assert!(o >= 0);
                        prop_assert!(o <= (p.aew + p.victim_response - p.wcet).min(u.response));
                    }
                }
            }
        }
    }

    #[test]
    fn separable_optimum_is_the_joint_optimum(seed in any::<u64>()) {
        let p = problem(seed);
        let sol = solve_delays(&p);
        prop_assert_eq!(sol.objective, common::exhaustive_optimum(&p));
        prop_assert_eq!(p.total_overlap(&sol.delays).unwrap(), sol.objective);
    }

    #[test]
    fn optimum_beats_random_sequences(seed in any::<u64>()) {
        let p = problem(seed);
        let best = solve_delays(&p).objective;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        for _ in 0..10_000 {
            let d: Vec<i64> = (0..p.victim_jobs()).map(|_| rng.random_range(0..=p.max_delay)).collect();
            prop_assert!(best <= p.total_overlap(&d).unwrap());
        }
    }

    #[test]
    fn branch_and_bound_agrees(seed in any::<u64>()) {
        let p = problem(seed);
        let sol = solve_milp(&build_milp(&p)).unwrap();
        prop_assert!((sol.objective - solve_delays(&p).objective as f64).abs() < 1e-6);
    }

    #[test]
    fn linearization_is_exact(seed in any::<u64>()) {
        let p = problem(seed);
        let inst = build_milp(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A);
        for _ in 0..5 {
            let d: Vec<i64> = (0..p.victim_jobs()).map(|_| rng.random_range(0..=p.max_delay)).collect();
            prop_assert!(inst.verify_linearization(&d));
        }
    }
}

#[test]
fn smallest_delay_wins_ties() {
    for seed in 0..200 {
        let p = problem(seed);
        let sol = solve_delays(&p);
        for (k, &d) in (1..).zip(&sol.delays) {
            let best = p.job_overlap(k, d);
            assert!((0..d).all(|e| p.job_overlap(k, e) > best));
        }
    }
}
