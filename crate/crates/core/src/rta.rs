//! Response-time analysis for preemptive fixed-priority scheduling, extended
//! with job-level release delays of one victim task.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DelaySequence, Millis, TaskId, TaskSet, TaskSpec};

/// Outcome of a response-time fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Wcrt {
    Bounded { response: Millis },
    /// An iterate exceeded `limit` (the effective deadline).
    Infeasible { iterate: Millis, limit: Millis },
    /// The iteration cap (10·H) was reached without convergence.
    IterationCap { iterate: Millis },
}

impl Wcrt {
    pub fn value(self) -> Option<Millis> {
        match self {
            Self::Bounded { response } => Some(response),
            _ => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, Self::Bounded { .. })
    }
}

fn ceil_div(a: Millis, b: Millis) -> Millis {
    a.div_euclid(b) + Millis::from(a.rem_euclid(b) != 0)
}

fn floor_div(a: Millis, b: Millis) -> Millis {
    a.div_euclid(b)
}

/// Iterates `r <- step(r)` from `start` until convergence, an iterate above
/// `limit`, or `cap` iterations.
fn fixed_point(start: Millis, limit: Millis, cap: u64, step: impl Fn(Millis) -> Millis) -> (Wcrt, u64) {
    let mut r = start;
    if r > limit {
        return (Wcrt::Infeasible { iterate: r, limit }, 0);
    }
    for it in 1..=cap {
        let next = step(r);
        if next > limit {
            return (Wcrt::Infeasible { iterate: next, limit }, it);
        }
        if next == r {
            return (Wcrt::Bounded { response: r }, it);
        }
        r = next;
    }
    (Wcrt::IterationCap { iterate: r }, cap)
}

fn iteration_cap(ts: &TaskSet) -> u64 {
    (ts.hyperperiod() as u64).saturating_mul(10).max(10)
}

fn hp_demand<'a>(hp: impl Iterator<Item = &'a TaskSpec>, window: Millis) -> Millis {
    hp.map(|t| ceil_div(window, t.period) * t.wcet).sum()
}

/// Classic fixed-priority WCRT, `R = C + Σ_hp ⌈R/T_j⌉ C_j`, bounded by D.
pub fn wcrt_classic(task: &TaskSpec, ts: &TaskSet) -> Wcrt {
    wcrt_classic_counted(task, ts).0
}

fn wcrt_classic_counted(task: &TaskSpec, ts: &TaskSet) -> (Wcrt, u64) {
    fixed_point(task.wcet, task.deadline, iteration_cap(ts), |r| {
        task.wcet + hp_demand(ts.higher_priority(task), r)
    })
}

/// Work carried in at `release` by higher-priority jobs released strictly
/// before it whose `[release, release + C)` span still covers `release`.
pub fn carry_in_interference(victim: &TaskSpec, ts: &TaskSet, release: Millis) -> Millis {
    ts.higher_priority(victim)
        .map(|t| {
            let jobs = ceil_div(release, t.period) - floor_div(release - t.wcet, t.period) - 1;
            jobs.max(0) * t.wcet
        })
        .sum()
}

/// WCRT of the 1-based victim job `k` released `delay` after its nominal
/// release; the effective deadline is `D - delay`.
pub fn victim_job_wcrt(victim: &TaskSpec, ts: &TaskSet, k: u32, delay: Millis) -> Wcrt {
    victim_job_wcrt_counted(victim, ts, k, delay).0
}

fn victim_job_wcrt_counted(victim: &TaskSpec, ts: &TaskSet, k: u32, delay: Millis) -> (Wcrt, u64) {
    debug_assert!(delay >= 0);
    let release = victim.release(k) + delay;
    let carry = carry_in_interference(victim, ts, release);
    fixed_point(
        victim.wcet,
        victim.deadline - delay,
        iteration_cap(ts),
        |r| victim.wcet + carry + hp_demand(ts.higher_priority(victim), r),
    )
}

/// Largest per-job WCRT when every victim job is delayed by `delay`.
pub fn victim_wcrt_uniform(victim: &TaskSpec, ts: &TaskSet, delay: Millis) -> Wcrt {
    let n = (ts.hyperperiod() / victim.period) as u32;
    let mut worst = Wcrt::Bounded { response: 0 };
    for k in 1..=n {
        match victim_job_wcrt(victim, ts, k, delay) {
            w @ Wcrt::Bounded { response } => {
                if worst.value().is_some_and(|cur| response > cur) {
                    worst = w;
                }
            }
            other => return other,
        }
    }
    worst
}

/// WCRT of a task below the victim when victim releases are delayed by at
/// least `min(Δ)`.
pub fn lp_task_wcrt_under_delay(
    task: &TaskSpec,
    victim: &TaskSpec,
    delays: &DelaySequence,
    ts: &TaskSet,
) -> Result<Wcrt> {
    if task.priority <= victim.priority || task.id == victim.id {
        return Err(Error::NotLowerPriority {
            task: task.id,
            victim: victim.id,
        });
    }
    Ok(lp_wcrt_with_min_delay(task, victim, delays.min(), ts).0)
}

pub(crate) fn lp_wcrt_with_min_delay(
    task: &TaskSpec,
    victim: &TaskSpec,
    min_delay: Millis,
    ts: &TaskSet,
) -> (Wcrt, u64) {
    fixed_point(task.wcet, task.deadline, iteration_cap(ts), |r| {
        let others = hp_demand(ts.higher_priority(task).filter(|t| t.id != victim.id), r);
        let victim_jobs = ceil_div(r - min_delay, victim.period).max(0);
        task.wcet + others + victim_jobs * victim.wcet
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobWcrt {
    pub job: u32,
    pub delay: Millis,
    pub effective_deadline: Millis,
    pub wcrt: Wcrt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RtaResult {
    pub task_id: TaskId,
    pub per_job_wcrt: Vec<JobWcrt>,
    pub feasible: bool,
    pub iterations: u64,
}

/// Per-job analysis of the victim under a delay sequence.
pub fn analyze_victim(victim: &TaskSpec, ts: &TaskSet, delays: &DelaySequence) -> RtaResult {
    let n = (ts.hyperperiod() / victim.period) as u32;
    let mut iterations = 0;
    let per_job_wcrt: Vec<_> = (1..=n)
        .map(|k| {
            let delay = delays.for_job(k);
            let (wcrt, it) = victim_job_wcrt_counted(victim, ts, k, delay);
            iterations += it;
            JobWcrt {
                job: k,
                delay,
                effective_deadline: victim.deadline - delay,
                wcrt,
            }
        })
        .collect();
    RtaResult {
        task_id: victim.id,
        feasible: per_job_wcrt.iter().all(|j| j.wcrt.is_feasible()),
        per_job_wcrt,
        iterations,
    }
}

/// Task-level analysis of every task in the set for a victim and its delay
/// sequence: per-job results for the victim, Eq.-style jitter analysis for the
/// tasks below it and the classic bound for those above.
pub fn analyze_all(ts: &TaskSet, victim: Option<&DelaySequence>) -> Result<Vec<RtaResult>> {
    let victim_task = victim.map(|d| ts.task(d.victim)).transpose()?;
    let mut out = Vec::with_capacity(ts.len());
    for task in ts.by_priority() {
        let result = match (victim_task, victim) {
            (Some(v), Some(d)) if v.id == task.id => analyze_victim(v, ts, d),
            (Some(v), Some(d)) if task.priority > v.priority => {
                let (wcrt, iterations) = lp_wcrt_with_min_delay(task, v, d.min(), ts);
                single(task, wcrt, iterations)
            }
            _ => {
                let (wcrt, iterations) = wcrt_classic_counted(task, ts);
                single(task, wcrt, iterations)
            }
        };
        out.push(result);
    }
    Ok(out)
}

fn single(task: &TaskSpec, wcrt: Wcrt, iterations: u64) -> RtaResult {
    RtaResult {
        task_id: task.id,
        per_job_wcrt: vec![JobWcrt {
            job: 1,
            delay: 0,
            effective_deadline: task.deadline,
            wcrt,
        }],
        feasible: wcrt.is_feasible(),
        iterations,
    }
}

/// Whether a uniform delay keeps the victim and every lower-priority task
/// schedulable.
pub fn uniform_delay_schedulable(victim: &TaskSpec, ts: &TaskSet, delay: Millis) -> bool {
    let n = (ts.hyperperiod() / victim.period) as u32;
    (1..=n).all(|k| victim_job_wcrt(victim, ts, k, delay).is_feasible())
        && ts
            .lower_priority(victim)
            .all(|t| lp_wcrt_with_min_delay(t, victim, delay, ts).0.is_feasible())
}

/// Largest uniform delay in `[0, T_v - C_v]` that keeps the set schedulable,
/// found by a descending scan (the feasible set need not be an interval).
pub fn peak_delay(victim: &TaskSpec, ts: &TaskSet) -> Option<Millis> {
    (0..=victim.period - victim.wcet)
        .rev()
        .find(|&d| uniform_delay_schedulable(victim, ts, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{table1, table2};

    #[test]
    fn classic_examples() {
        let ts = table1();
        assert_eq!(wcrt_classic(ts.task(2).unwrap(), &ts).value(), Some(4));
        assert_eq!(wcrt_classic(ts.task(1).unwrap(), &ts).value(), Some(1));
        let bad = TaskSet::new(vec![TaskSpec::new(1, 10, 5).with_deadline(4)]).unwrap();
        assert!(!wcrt_classic(&bad.tasks()[0], &bad).is_feasible());
    }

    #[test]
    fn carry_in_examples() {
        let ts = table1();
        let v = ts.task(2).unwrap();
        assert_eq!(carry_in_interference(v, &ts, 6), 0);
        assert_eq!(carry_in_interference(v, &ts, 16), 0);
        assert_eq!(carry_in_interference(v, &ts, 0), 0);

        let ts = TaskSet::new(vec![
            TaskSpec::new(1, 5, 2).with_priority(1),
            TaskSpec::new(2, 10, 1).with_priority(2),
        ])
        .unwrap();
        assert_eq!(carry_in_interference(ts.task(2).unwrap(), &ts, 6), 2);
    }

    #[test]
    fn victim_examples() {
        let ts = table1();
        let v = ts.task(2).unwrap();
        assert_eq!(victim_job_wcrt(v, &ts, 1, 6).value(), Some(4));
        assert_eq!(victim_job_wcrt(v, &ts, 2, 6).value(), Some(4));
        assert!(!victim_job_wcrt(v, &ts, 1, 7).is_feasible());
        assert!(!victim_job_wcrt(v, &ts, 2, 7).is_feasible());
        let top = ts.task(1).unwrap();
        assert_eq!(victim_job_wcrt(top, &ts, 1, 0).value(), Some(1));
    }

    #[test]
    fn lp_examples() {
        let ts = table1();
        let v = ts.task(2).unwrap();
        let d6 = DelaySequence::uniform(&ts, 2, 6).unwrap();
        let r3 = lp_task_wcrt_under_delay(ts.task(3).unwrap(), v, &d6, &ts).unwrap();
        let r4 = lp_task_wcrt_under_delay(ts.task(4).unwrap(), v, &d6, &ts).unwrap();
        assert_eq!((r3.value(), r4.value()), (Some(4), Some(10)));

        let d0 = DelaySequence::zeros(&ts, 2).unwrap();
        for id in [3, 4] {
            let t = ts.task(id).unwrap();
            assert_eq!(
                lp_task_wcrt_under_delay(t, v, &d0, &ts).unwrap(),
                wcrt_classic(t, &ts)
            );
        }
        assert!(matches!(
            lp_task_wcrt_under_delay(ts.task(1).unwrap(), v, &d0, &ts),
            Err(Error::NotLowerPriority { .. })
        ));
    }

    #[test]
    fn peak_examples() {
        let ts = table1();
        assert_eq!(peak_delay(ts.task(2).unwrap(), &ts), Some(6));
        let ts = table2();
        let peaks: Vec<_> = [1, 2, 3]
            .iter()
            .map(|&id| peak_delay(ts.task(id).unwrap(), &ts))
            .collect();
        assert_eq!(peaks, vec![Some(8), Some(35), Some(13)]);

        let alone = TaskSet::new(vec![TaskSpec::new(1, 20, 4).with_deadline(15)]).unwrap();
        assert_eq!(peak_delay(&alone.tasks()[0], &alone), Some(11));
    }

    #[test]
    fn peak_is_tight() {
        for ts in [table1(), table2()] {
            for v in ts.control_tasks() {
                let p = peak_delay(v, &ts).unwrap();
                assert!(uniform_delay_schedulable(v, &ts, p));
                if p < v.period - v.wcet {
                    assert!(!uniform_delay_schedulable(v, &ts, p + 1));
                }
            }
        }
    }

    #[test]
    fn analysis_result_shape() {
        let ts = table1();
        let d = DelaySequence::uniform(&ts, 2, 6).unwrap();
        let r = analyze_victim(ts.task(2).unwrap(), &ts, &d);
        assert!(r.feasible);
        assert_eq!(r.per_job_wcrt.len(), 2);
        assert!(r.per_job_wcrt.iter().all(|j| j.effective_deadline == 4));
        let all = analyze_all(&ts, Some(&d)).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|r| r.feasible));
    }
}
