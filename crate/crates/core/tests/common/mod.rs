#![allow(dead_code)]

use delayguard::model::Millis;
use delayguard::overlap::{AewAnchor, OverlapConventions, OverlapProblem, UntrustedBound, UntrustedTask};
use rand::Rng;

const DIVISORS_OF_200: [Millis; 7] = [10, 20, 25, 40, 50, 100, 200];

/// A random overlap instance with at most three untrusted tasks, H ≤ 200,
/// and a joint delay space small enough to enumerate.
pub fn random_overlap_problem<R: Rng>(rng: &mut R) -> OverlapProblem {
    loop {
        let period = DIVISORS_OF_200[rng.random_range(0..DIVISORS_OF_200.len())];
        let mut untrusted = Vec::new();
        for id in 0..rng.random_range(0..=3u32) {
            let tj = DIVISORS_OF_200[rng.random_range(0..DIVISORS_OF_200.len())];
            untrusted.push(UntrustedTask {
                id: id + 2,
                period: tj,
                wcet: 1,
                response: rng.random_range(1..=tj.min(40)),
            });
        }
        let hyperperiod = delayguard::model::hyperperiod_of(
            std::iter::once(period).chain(untrusted.iter().map(|u| u.period)),
        )
        .unwrap();
        let jobs = (hyperperiod / period) as u32;
        if jobs > 6 {
            continue;
        }
        let wcet = rng.random_range(1..=period.min(10));
        let victim_response = rng.random_range(wcet..=period.min(wcet + 10));
        let slack = period - victim_response;
        let mut max_delay = rng.random_range(0..=slack.min(12));
        while (max_delay as f64 + 1.0).powi(jobs as i32) > 60_000.0 {
            max_delay -= 1;
        }
        let conventions = OverlapConventions {
            anchor: if rng.random_bool(0.5) { AewAnchor::EarliestFinish } else { AewAnchor::WorstCaseFinish },
            untrusted_bound: UntrustedBound::DelayedVictim,
        };
        return OverlapProblem {
            victim: 1,
            period,
            wcet,
            aew: rng.random_range(0..=10),
            max_delay,
            victim_response,
            hyperperiod,
            untrusted,
            conventions,
        };
    }
}

/// Minimum total overlap over every joint delay assignment.
pub fn exhaustive_optimum(p: &OverlapProblem) -> Millis {
    let n = p.victim_jobs() as usize;
    let mut delays = vec![0; n];
    let mut best = Millis::MAX;
    loop {
        best = best.min(p.total_overlap(&delays).unwrap());
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            delays[i] += 1;
            if delays[i] <= p.max_delay {
                break;
            }
            delays[i] = 0;
            i += 1;
        }
    }
}
