//! Worst-case overlap between a victim's attack-effective windows and the
//! execution windows of untrusted jobs, and the per-job delay optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Millis, TaskId, TaskSet};
use crate::rta::{self, Wcrt};

/// Where a victim job's attack-effective window starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AewAnchor {
    /// Earliest possible finish `r + δ + C`; the window then ends at the
    /// worst-case finish plus Ω.
    #[default]
    EarliestFinish,
    /// Worst-case finish `r + δ + R_i`, giving a window of exactly Ω.
    WorstCaseFinish,
}

/// How untrusted response-time bounds are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UntrustedBound {
    /// Lower-priority untrusted tasks see the victim delayed by at least
    /// Δmax; higher-priority ones use the classic bound.
    #[default]
    DelayedVictim,
    /// Classic delay-free bound for every untrusted task.
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapConventions {
    pub anchor: AewAnchor,
    pub untrusted_bound: UntrustedBound,
}

impl OverlapConventions {
    /// Worst-case-finish anchoring with classic untrusted bounds; on the
    /// rate-monotonic automotive set this gives a 45 ms baseline and an
    /// 18 ms optimum.
    pub fn case_study() -> Self {
        Self {
            anchor: AewAnchor::WorstCaseFinish,
            untrusted_bound: UntrustedBound::Classic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UntrustedTask {
    pub id: TaskId,
    pub period: Millis,
    pub wcet: Millis,
    /// `R_j(Δmax)`.
    pub response: Millis,
}

impl UntrustedTask {
    pub fn jobs(&self, hyperperiod: Millis) -> u32 {
        (hyperperiod / self.period) as u32
    }
}

/// Everything the overlap objective needs, with all response-time bounds
/// already fixed at Δmax. Releases are synchronous over one hyperperiod.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapProblem {
    pub victim: TaskId,
    pub period: Millis,
    pub wcet: Millis,
    pub aew: Millis,
    pub max_delay: Millis,
    /// `R_i(Δmax)`.
    pub victim_response: Millis,
    pub hyperperiod: Millis,
    pub untrusted: Vec<UntrustedTask>,
    pub conventions: OverlapConventions,
}

fn bounded(w: Wcrt, id: TaskId, what: &str) -> Result<Millis> {
    w.value()
        .ok_or_else(|| Error::Config(format!("task {id} has no finite {what} response-time bound: {w:?}")))
}

impl OverlapProblem {
    pub fn new(ts: &TaskSet, victim: TaskId, max_delay: Millis, conventions: OverlapConventions) -> Result<Self> {
        let v = ts.task(victim)?;
        if !v.is_control() {
            return Err(Error::Config(format!("victim {victim} is not a control task")));
        }
        if max_delay < 0 {
            return Err(Error::Config(format!("max delay {max_delay} must be non-negative")));
        }
        let victim_response = bounded(rta::victim_wcrt_uniform(v, ts, max_delay), victim, "delayed victim")?;
        let untrusted = ts
            .untrusted_tasks()
            .map(|t| {
                let w = match conventions.untrusted_bound {
                    UntrustedBound::DelayedVictim if t.priority > v.priority => {
                        rta::lp_wcrt_with_min_delay(t, v, max_delay, ts).0
                    }
                    _ => rta::wcrt_classic(t, ts),
                };
                Ok(UntrustedTask {
                    id: t.id,
                    period: t.period,
                    wcet: t.wcet,
                    response: bounded(w, t.id, "untrusted")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            victim,
            period: v.period,
            wcet: v.wcet,
            aew: v.aew,
            max_delay,
            victim_response,
            hyperperiod: ts.hyperperiod(),
            untrusted,
            conventions,
        })
    }

    pub fn victim_jobs(&self) -> u32 {
        (self.hyperperiod / self.period) as u32
    }

    pub fn victim_release(&self, k: u32) -> Millis {
        (k as Millis - 1) * self.period
    }

    pub fn untrusted_release(&self, j: usize, m: u32) -> Millis {
        (m as Millis - 1) * self.untrusted[j].period
    }

    /// Offset of the window start from `r + δ`.
    pub fn aew_start_offset(&self) -> Millis {
        match self.conventions.anchor {
            AewAnchor::EarliestFinish => self.wcet,
            AewAnchor::WorstCaseFinish => self.victim_response,
        }
    }

    /// Offset of the window end from `r + δ`.
    pub fn aew_end_offset(&self) -> Millis {
        self.victim_response + self.aew
    }

    /// Overlap of victim job k (delayed by δ) with job m of the j-th
    /// untrusted task, both indices 1-based.
    pub fn overlap_term(&self, k: u32, delay: Millis, j: usize, m: u32) -> Millis {
        let r = self.victim_release(k) + delay;
        let rj = self.untrusted_release(j, m);
        let hi = (r + self.aew_end_offset()).min(rj + self.untrusted[j].response);
        let lo = (r + self.aew_start_offset()).max(rj);
        (hi - lo).max(0)
    }

    /// Overlap contributed by victim job k under delay δ.
    pub fn job_overlap(&self, k: u32, delay: Millis) -> Millis {
        let mut total = 0;
        for (j, u) in self.untrusted.iter().enumerate() {
            for m in 1..=u.jobs(self.hyperperiod) {
                total += self.overlap_term(k, delay, j, m);
            }
        }
        total
    }

    pub fn total_overlap(&self, delays: &[Millis]) -> Result<Millis> {
        if delays.len() != self.victim_jobs() as usize {
            return Err(Error::InvalidDelaySequence {
                task: self.victim,
                reason: format!("expected {} delays, got {}", self.victim_jobs(), delays.len()),
            });
        }
        Ok(delays
            .iter()
            .zip(1..)
            .map(|(&d, k)| self.job_overlap(k, d))
            .sum())
    }

    pub fn baseline(&self) -> Millis {
        (1..=self.victim_jobs()).map(|k| self.job_overlap(k, 0)).sum()
    }

    /// The Big-M constant `H + max_j R_j + R_i + Ω`.
    pub fn big_m(&self) -> Millis {
        let rj = self.untrusted.iter().map(|u| u.response).max().unwrap_or(0);
        self.hyperperiod + rj + self.victim_response + self.aew
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DelaySolution {
    pub delays: Vec<Millis>,
    pub objective: Millis,
    pub baseline: Millis,
}

/// Minimizes the total overlap. Each job's contribution depends only on its
/// own delay, so every job is optimized separately; ties go to the smallest
/// delay.
pub fn solve_delays(problem: &OverlapProblem) -> DelaySolution {
    let delays: Vec<Millis> = (1..=problem.victim_jobs())
        .map(|k| {
            (0..=problem.max_delay)
                .min_by_key(|&d| (problem.job_overlap(k, d), d))
                .unwrap_or(0)
        })
        .collect();
    let objective = delays.iter().zip(1..).map(|(&d, k)| problem.job_overlap(k, d)).sum();
    DelaySolution {
        delays,
        objective,
        baseline: problem.baseline(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    /// Victim job at 0 against an untrusted task of period `tj` (job m is
    /// released at `(m - 1) tj`).
    fn pair(c: Millis, r_i: Millis, omega: Millis, tj: Millis, r_j: Millis) -> OverlapProblem {
        OverlapProblem {
            victim: 1,
            period: 20,
            wcet: c,
            aew: omega,
            max_delay: 0,
            victim_response: r_i,
            hyperperiod: 20,
            untrusted: vec![UntrustedTask { id: 2, period: tj, wcet: 1, response: r_j }],
            conventions: OverlapConventions::default(),
        }
    }

    #[test]
    fn interval_intersection_example() {
        // [2, 7] ∩ [4, 7]
        assert_eq!(pair(2, 2, 5, 4, 3).overlap_term(1, 0, 0, 2), 3);
    }

    #[test]
    fn untrusted_job_before_window_is_zero() {
        assert_eq!(pair(2, 2, 5, 4, 2).overlap_term(1, 0, 0, 1), 0);
    }

    #[test]
    fn empty_window_is_zero() {
        let p = pair(3, 3, 0, 1, 10);
        assert!((1..=20).all(|m| p.overlap_term(1, 0, 0, m) == 0));
    }

    #[test]
    fn case_study_reduction() {
        let ts = scenarios::table2_rm();
        let p = OverlapProblem::new(&ts, 3, 8, OverlapConventions::case_study()).unwrap();
        assert_eq!(p.victim_response, 4);
        assert_eq!(p.baseline(), 45);
        let sol = solve_delays(&p);
        assert_eq!(sol.objective, 18);
        assert_eq!(p.total_overlap(&[8, 0, 5, 0, 5, 8, 5, 0, 5, 0]).unwrap(), 18);
    }

    #[test]
    fn zero_max_delay_keeps_baseline() {
        let ts = scenarios::table2_rm();
        let p = OverlapProblem::new(&ts, 3, 0, OverlapConventions::case_study()).unwrap();
        let sol = solve_delays(&p);
        assert!(sol.delays.iter().all(|&d| d == 0));
        assert_eq!(sol.objective, sol.baseline);
    }

    #[test]
    fn no_untrusted_tasks_means_no_overlap() {
        let ts = TaskSet::new(
            scenarios::table2()
                .into_tasks()
                .into_iter()
                .filter(|t| !t.is_untrusted())
                .collect(),
        )
        .unwrap();
        let p = OverlapProblem::new(&ts, 3, 5, OverlapConventions::default()).unwrap();
        assert_eq!(p.baseline(), 0);
        assert_eq!(solve_delays(&p).objective, 0);
    }
}
