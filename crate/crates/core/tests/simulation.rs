use delayguard::cosim::{cosimulate, AttackConfig, CosimConfig};
use delayguard::harness::{self, Case, CaseStudyParams};
use delayguard::model::{DelaySequence, Millis, TaskSet, TaskSpec};
use delayguard::sim::{run_pfp_d, run_schedule, simulate_pfp, EventKind, SchedMode, ScheduleTrace, SimConfig};
use delayguard::{plants, rta, scenarios};
use proptest::prelude::*;

fn attack_only(ts: &TaskSet, attacker: u32, victim: u32, horizon: Millis) -> delayguard::cosim::RunReport {
    let config = CosimConfig {
        sim: SimConfig::new(SchedMode::Pfp, horizon, 0),
        attack: Some(AttackConfig {
            attacker,
            victim,
            start: 0,
            bias: vec![1.0],
        }),
    };
    cosimulate(ts, &[], &config).unwrap()
}

/// Victim (10, 2) with a 3 ms window, a filler of `filler` ms, then the
/// attacker (10, 1).
fn posterior_set(filler: Millis) -> TaskSet {
    TaskSet::new(vec![
        TaskSpec::new(1, 10, 2).with_priority(1).control(3),
        TaskSpec::new(2, 10, filler).with_priority(2),
        TaskSpec::new(3, 10, 1).with_priority(3).untrusted(),
    ])
    .unwrap()
}

#[test]
fn attacker_before_victim_only_attempts() {
    let ts = TaskSet::new(vec![
        TaskSpec::new(1, 10, 1).with_priority(1).untrusted(),
        TaskSpec::new(2, 10, 2).with_priority(2).control(3),
    ])
    .unwrap();
    let r = attack_only(&ts, 1, 2, 10);
    assert_eq!((r.fdi_attempts, r.fdi_hits), (1, 0));
}

#[test]
fn last_tick_of_window_is_a_hit() {
    // victim finishes at 2, attacker runs tick 4 = 2 + 3 - 1
    let r = attack_only(&posterior_set(2), 3, 1, 10);
    assert_eq!((r.fdi_attempts, r.fdi_hits), (1, 1));
    // one tick later the window has closed
    let r = attack_only(&posterior_set(3), 3, 1, 10);
    assert_eq!((r.fdi_attempts, r.fdi_hits), (1, 0));
}

#[test]
fn attacker_must_be_untrusted() {
    let ts = posterior_set(2);
    let config = CosimConfig {
        sim: SimConfig::new(SchedMode::Pfp, 10, 0),
        attack: Some(AttackConfig {
            attacker: 2,
            victim: 1,
            start: 0,
            bias: vec![1.0],
        }),
    };
    assert!(cosimulate(&ts, &[], &config).is_err());
}

/// Hits recomputed from the trace: attacker jobs with an execution tick
/// inside some victim window.
fn offline_hits(trace: &ScheduleTrace, attacker: u32, victim: u32, aew: Millis, start: Millis) -> usize {
    let finishes: Vec<Millis> = trace.jobs_of(victim).filter_map(|j| j.finish).collect();
    let mut hits = 0;
    for job in trace.jobs_of(attacker) {
        let Some(finish) = job.finish else { continue };
        let ticks = (job.release..finish).filter(|&t| t >= start && trace.timeline[t as usize] == Some(attacker));
        let mut ticks = ticks.peekable();
        if ticks.peek().is_none() {
            continue;
        }
        if ticks.any(|t| finishes.iter().any(|&f| f <= t && t < f + aew)) {
            hits += 1;
        }
    }
    hits
}

#[test]
fn case_ii_hits_match_offline_oracle_and_recur() {
    let ts = scenarios::table2();
    let params = CaseStudyParams::default();
    let setup = harness::prepare_case_study(&ts, &plants::table2_plants(), params.conventions).unwrap();
    let report = harness::run_case(&setup, Case::Ii, &params, 3).unwrap();
    let a = &params.attack;
    let oracle = offline_hits(&report.trace, a.attacker, a.victim, ts.task(a.victim).unwrap().aew, a.start);
    assert_eq!(report.fdi_hits, oracle);
    assert!(report.fdi_hits <= report.fdi_attempts);

    // one hit per hyperperiod once the phasing aligns
    let h = ts.hyperperiod();
    let hit_times: Vec<Millis> = report
        .trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::FdiHit)
        .map(|e| e.time)
        .collect();
    let per_h: Vec<usize> = (0..params.horizon / h)
        .map(|i| hit_times.iter().filter(|&&t| t / h == i).count())
        .collect();
    assert!(per_h[1..].iter().all(|&c| c == per_h[1] && c > 0), "{per_h:?}");
}

#[test]
fn case_i_has_no_hits_and_certified_cases_miss_no_deadline() {
    let ts = scenarios::table2();
    let params = CaseStudyParams::default();
    let setup = harness::prepare_case_study(&ts, &plants::table2_plants(), params.conventions).unwrap();
    for case in Case::ALL {
        let r = harness::run_case(&setup, case, &params, 11).unwrap();
        if case == Case::I {
            assert_eq!(r.fdi_attempts, 0);
            assert_eq!(r.fdi_hits, 0);
        }
        assert_eq!(r.deadline_misses, 0, "{case:?}");
        assert_eq!(r.loops.len(), 3);
    }
}

#[test]
fn case_iv_hits_fewer_than_case_ii() {
    let ts = scenarios::table2();
    let params = CaseStudyParams::default();
    let setup = harness::prepare_case_study(&ts, &plants::table2_plants(), params.conventions).unwrap();
    let runs = harness::case_study(&setup, &params, 5).unwrap();
    assert!(runs[3].0.fdi_hits < runs[1].0.fdi_hits);
    assert!(runs[1].0.cost > runs[0].0.cost);
}

#[test]
fn cosimulation_is_deterministic() {
    let ts = scenarios::table2();
    let params = CaseStudyParams::default();
    let setup = harness::prepare_case_study(&ts, &plants::table2_plants(), params.conventions).unwrap();
    let a = harness::run_case(&setup, Case::Iii, &params, 8).unwrap();
    let b = harness::run_case(&setup, Case::Iii, &params, 8).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noise_free_loop_without_attack_converges() {
    let ts = scenarios::table2();
    let mut plant = plants::ttc();
    plant.process_noise = plant.process_noise.scale(0.0);
    plant.measurement_noise = plant.measurement_noise.scale(0.0);
    let config = CosimConfig {
        sim: SimConfig::new(SchedMode::Pfp, 3000, 0),
        attack: None,
    };
    let r = cosimulate(&ts, &[plant], &config).unwrap();
    let last = r.loops[0].samples.last().unwrap();
    assert!(last.x.iter().all(|v| v.abs() < 1e-3), "{:?}", last.x);
}

/// Checks, tick by tick, that the running job is the highest-priority
/// eligible one and that the CPU idles only when nothing is eligible.
fn check_dispatch(ts: &TaskSet, trace: &ScheduleTrace) {
    for (t, running) in trace.timeline.iter().enumerate() {
        let t = t as Millis;
        let eligible = trace
            .jobs
            .iter()
            .filter(|j| j.release + j.delay <= t && j.finish.is_none_or(|f| f > t))
            .map(|j| ts.task(j.task).unwrap().priority)
            .min();
        match (running, eligible) {
            (None, None) => {}
            (Some(id), Some(best)) => assert_eq!(ts.task(*id).unwrap().priority, best, "tick {t}"),
            other => panic!("tick {t}: {other:?}"),
        }
    }
}

fn small_taskset() -> impl Strategy<Value = TaskSet> {
    prop::collection::vec((prop::sample::select(vec![5i64, 10, 20, 40]), 1i64..4), 2..5).prop_filter_map(
        "overloaded",
        |spec| {
            let tasks: Vec<TaskSpec> = spec
                .iter()
                .zip(1..)
                .map(|(&(t, c), id)| TaskSpec::new(id, t, c.min(t - 1)))
                .collect();
            let ts = delayguard::model::assign_rm_priorities(&TaskSet::new(tasks).ok()?);
            (ts.utilization() <= 1.0).then_some(ts)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dispatch_is_priority_correct_and_work_conserving(ts in small_taskset(), seed in 0u64..1000) {
        let victim = ts.by_priority()[0].id;
        let peak = rta::peak_delay(ts.task(victim).unwrap(), &ts).unwrap_or(0);
        let n = ts.jobs_per_hyperperiod(victim).unwrap() as usize;
        let delays: Vec<Millis> = (0..n).map(|i| ((seed as usize + 7 * i) % (peak as usize + 1)) as Millis).collect();
        let mut cfg = SimConfig::new(SchedMode::PfpD, 2 * ts.hyperperiod(), seed)
            .with_sequence(DelaySequence::new(&ts, victim, delays).unwrap());
        cfg.forced_alarms = vec![(0, victim)];
        let trace = run_pfp_d(&ts, &cfg).unwrap();
        check_dispatch(&ts, &trace);
        check_dispatch(&ts, &simulate_pfp(&ts, ts.hyperperiod()));
    }

    #[test]
    fn applied_delays_are_a_rotation_of_the_sequence(alarm_sample in 0u32..10) {
        let ts = scenarios::table2_rm();
        let seq: Vec<Millis> = vec![8, 0, 5, 0, 5, 8, 5, 0, 5, 1];
        let mut cfg = SimConfig::new(SchedMode::PfpD, 600, 0)
            .with_sequence(DelaySequence::new(&ts, 3, seq.clone()).unwrap());
        cfg.forced_alarms = vec![(alarm_sample as Millis * 20, 3)];
        let trace = run_schedule(&ts, &cfg).unwrap();
        let applied: Vec<Millis> = trace.jobs_of(3).skip(alarm_sample as usize).take(10).map(|j| j.delay).collect();
        let mut rotated = seq.clone();
        rotated.rotate_left(alarm_sample as usize);
        prop_assert_eq!(applied, rotated);
    }
}
