//! Tick-driven uniprocessor scheduler: plain preemptive fixed priority,
//! the delay-on-detection variant driven by stored job-level delay
//! sequences, and a random-delay baseline.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DelaySequence, Millis, TaskId, TaskSet};
use crate::rta;

/// Named RNG sub-streams so each random source can be replayed alone.
pub mod streams {
    pub const DELAY: u64 = 1;
    pub const NOISE: u64 = 16;
}

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedMode {
    /// Plain preemptive fixed priority; alarms are recorded only.
    Pfp,
    /// On an alarm the task's stored delay sequence is applied.
    PfpD,
    /// On an alarm the task's releases get random (Laplace) delays.
    RandomDelay,
}

/// Laplace delay distribution, clipped to `[0, Δpeak]` and rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomDelayParams {
    /// Location as a fraction of the peak delay.
    pub location: f64,
    /// Scale as a fraction of the peak delay.
    pub scale: f64,
}

impl Default for RandomDelayParams {
    fn default() -> Self {
        Self {
            location: 0.5,
            scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: SchedMode,
    /// Simulated span `T_RES` in ms.
    pub horizon: Millis,
    pub seed: u64,
    pub delay_store: BTreeMap<TaskId, DelaySequence>,
    #[serde(default)]
    pub random_delay: RandomDelayParams,
    /// Alarms injected at the first sampling instant at or after the given
    /// time, for schedule-only runs.
    #[serde(default)]
    pub forced_alarms: Vec<(Millis, TaskId)>,
    #[serde(default = "yes")]
    pub record_events: bool,
}

fn yes() -> bool {
    true
}

pub const DEFAULT_HORIZON: Millis = 3000;

impl SimConfig {
    pub fn new(mode: SchedMode, horizon: Millis, seed: u64) -> Self {
        Self {
            mode,
            horizon,
            seed,
            delay_store: BTreeMap::new(),
            random_delay: RandomDelayParams::default(),
            forced_alarms: Vec::new(),
            record_events: true,
        }
    }

    pub fn with_sequence(mut self, seq: DelaySequence) -> Self {
        self.delay_store.insert(seq.victim, seq);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    JobRelease,
    JobDefer,
    JobStart,
    JobPreempt,
    JobFinish,
    DeadlineMiss,
    AewOpen,
    AewClose,
    FdiAttempt,
    FdiHit,
    DetectorAlarm,
    ModeSwitch,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub time: Millis,
    pub kind: EventKind,
    pub task: TaskId,
    pub job: u32,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobRecord {
    pub task: TaskId,
    /// 1-based job number since time 0.
    pub job: u32,
    pub release: Millis,
    pub delay: Millis,
    pub start: Option<Millis>,
    pub finish: Option<Millis>,
    pub deadline_miss: bool,
}

impl JobRecord {
    /// Finish relative to the delayed release.
    pub fn response(&self) -> Option<Millis> {
        self.finish.map(|f| f - self.release - self.delay)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScheduleTrace {
    pub events: Vec<Event>,
    pub jobs: Vec<JobRecord>,
    /// Which task ran in each tick (`None` when idle).
    #[serde(skip)]
    pub timeline: Vec<Option<TaskId>>,
}

impl ScheduleTrace {
    pub fn deadline_misses(&self) -> usize {
        self.jobs.iter().filter(|j| j.deadline_miss).count()
    }

    pub fn jobs_of(&self, task: TaskId) -> impl Iterator<Item = &JobRecord> {
        self.jobs.iter().filter(move |j| j.task == task)
    }

    /// Measured overlap of each `task` job's window `[f, f + Ω)` with the
    /// release-to-finish span of jobs of the `untrusted` tasks.
    pub fn measured_overlap(&self, task: TaskId, aew: Millis, untrusted: &[TaskId]) -> Millis {
        let spans: Vec<(Millis, Millis)> = self
            .jobs
            .iter()
            .filter(|j| untrusted.contains(&j.task))
            .filter_map(|j| j.finish.map(|f| (j.release, f)))
            .collect();
        self.jobs_of(task)
            .filter_map(|j| j.finish)
            .map(|f| {
                spans
                    .iter()
                    .map(|&(r, e)| ((f + aew).min(e) - f.max(r)).max(0))
                    .sum::<Millis>()
            })
            .sum()
    }

    /// One event per line: `time event task job detail`.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&format!("{} {} {} {} {}\n", e.time, e.kind, e.task, e.job, e.detail));
        }
        s
    }
}

/// Inverse-CDF Laplace draw.
fn laplace(rng: &mut ChaCha8Rng, location: f64, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[derive(Debug, Clone)]
enum DelayState {
    Off,
    Sequence { delays: Vec<Millis>, idx: usize },
    Random { peak: Millis, feasible: Vec<Vec<bool>>, location: f64, scale: f64 },
}

#[derive(Debug, Clone)]
struct Job {
    task: usize,
    record: JobRecord,
    eligible: Millis,
    remaining: Millis,
    deadline: Millis,
}

/// Outcome of one executed tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tick {
    /// Task and job number executing in `[t, t + 1)`.
    pub running: Option<(TaskId, u32)>,
    /// Job that completed at `t + 1`.
    pub finished: Option<(TaskId, u32)>,
}

pub struct Scheduler<'a> {
    ts: &'a TaskSet,
    config: &'a SimConfig,
    jobs: Vec<Job>,
    pending: Vec<usize>,
    running: Option<usize>,
    delay: Vec<DelayState>,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    timeline: Vec<Option<TaskId>>,
}

impl<'a> Scheduler<'a> {
    pub fn new(ts: &'a TaskSet, config: &'a SimConfig) -> Self {
        Self {
            ts,
            config,
            jobs: Vec::new(),
            pending: Vec::new(),
            running: None,
            delay: vec![DelayState::Off; ts.len()],
            rng: substream(config.seed, streams::DELAY),
            events: Vec::new(),
            timeline: Vec::new(),
        }
    }

    fn index_of(&self, id: TaskId) -> Result<usize> {
        self.ts.tasks().iter().position(|t| t.id == id).ok_or(Error::UnknownTask(id))
    }

    pub fn log(&mut self, time: Millis, kind: EventKind, task: TaskId, job: u32, detail: impl Into<String>) {
        if self.config.record_events {
            self.events.push(Event {
                time,
                kind,
                task,
                job,
                detail: detail.into(),
            });
        }
    }

    /// Record of job `number` (1-based) of task `id`, once released.
    pub fn job(&self, id: TaskId, number: u32) -> Option<&JobRecord> {
        self.jobs.iter().rev().map(|j| &j.record).find(|r| r.task == id && r.job == number)
    }

    pub fn is_delaying(&self, id: TaskId) -> bool {
        self.index_of(id)
            .map(|i| !matches!(self.delay[i], DelayState::Off))
            .unwrap_or(false)
    }

    /// Reacts to a detector alarm raised for `id` at sampling instant `t`.
    /// Returns true when the task switched into a delaying mode.
    pub fn alarm(&mut self, id: TaskId, t: Millis) -> Result<bool> {
        let i = self.index_of(id)?;
        let task = &self.ts.tasks()[i];
        let sample = (t / task.period) as u32;
        self.log(t, EventKind::DetectorAlarm, id, sample + 1, "");
        if !matches!(self.delay[i], DelayState::Off) {
            return Ok(false);
        }
        match self.config.mode {
            SchedMode::Pfp => return Ok(false),
            SchedMode::PfpD => {
                let seq = self.config.delay_store.get(&id).ok_or(Error::MissingDelaySequence(id))?;
                let idx = sample as usize % seq.delays.len();
                self.delay[i] = DelayState::Sequence {
                    delays: seq.delays.clone(),
                    idx,
                };
                self.log(t, EventKind::ModeSwitch, id, sample + 1, format!("pfp_d job_idx={idx}"));
            }
            SchedMode::RandomDelay => {
                let peak = rta::peak_delay(task, self.ts).unwrap_or(0);
                let n = (self.ts.hyperperiod() / task.period) as u32;
                let feasible = (1..=n)
                    .map(|k| (0..=peak).map(|d| rta::victim_job_wcrt(task, self.ts, k, d).is_feasible()).collect())
                    .collect();
                let p = self.config.random_delay;
                if !(p.scale > 0.0 && p.location.is_finite() && p.scale.is_finite()) {
                    return Err(Error::Config(format!("bad random delay parameters {p:?}")));
                }
                self.delay[i] = DelayState::Random {
                    peak,
                    feasible,
                    location: p.location * peak as f64,
                    scale: p.scale * peak as f64,
                };
                self.log(t, EventKind::ModeSwitch, id, sample + 1, "random_delay");
            }
        }
        Ok(true)
    }

    fn next_delay(&mut self, i: usize, t: Millis) -> Millis {
        let h = self.ts.hyperperiod();
        let period = self.ts.tasks()[i].period;
        match &mut self.delay[i] {
            DelayState::Off => 0,
            DelayState::Sequence { delays, idx } => {
                if t % h == 0 {
                    *idx = 0;
                }
                let d = delays[*idx];
                *idx = (*idx + 1) % delays.len();
                d
            }
            DelayState::Random {
                peak,
                feasible,
                location,
                scale,
            } => {
                let pos = ((t % h) / period) as usize;
                let raw = laplace(&mut self.rng, *location, *scale);
                let mut d = raw.round().clamp(0.0, *peak as f64) as Millis;
                while d > 0 && !feasible[pos][d as usize] {
                    d -= 1;
                }
                d
            }
        }
    }

    /// Releases, deadline checks and one tick of execution in `[t, t + 1)`.
    pub fn tick(&mut self, t: Millis) -> Tick {
        for i in 0..self.ts.len() {
            let task = &self.ts.tasks()[i];
            if t % task.period != 0 {
                continue;
            }
            let (id, deadline) = (task.id, task.deadline);
            let number = (t / task.period) as u32 + 1;
            let delay = self.next_delay(i, t);
            self.log(t, EventKind::JobRelease, id, number, "");
            if delay > 0 {
                self.log(t, EventKind::JobDefer, id, number, format!("until {}", t + delay));
            }
            self.jobs.push(Job {
                task: i,
                record: JobRecord {
                    task: id,
                    job: number,
                    release: t,
                    delay,
                    start: None,
                    finish: None,
                    deadline_miss: false,
                },
                eligible: t + delay,
                remaining: self.ts.tasks()[i].wcet,
                deadline: t + deadline,
            });
            self.pending.push(self.jobs.len() - 1);
        }

        let mut missed = Vec::new();
        for &j in &self.pending {
            if self.jobs[j].deadline == t && !self.jobs[j].record.deadline_miss {
                missed.push(j);
            }
        }
        for j in missed {
            self.jobs[j].record.deadline_miss = true;
            let (task, job) = (self.jobs[j].record.task, self.jobs[j].record.job);
            self.log(t, EventKind::DeadlineMiss, task, job, "");
        }

        let tasks = self.ts.tasks();
        let choice = self
            .pending
            .iter()
            .copied()
            .filter(|&j| self.jobs[j].eligible <= t)
            .min_by_key(|&j| (tasks[self.jobs[j].task].priority, self.jobs[j].record.release));
        if let Some(prev) = self.running {
            if Some(prev) != choice && self.jobs[prev].remaining > 0 {
                let (task, job) = (self.jobs[prev].record.task, self.jobs[prev].record.job);
                self.log(t, EventKind::JobPreempt, task, job, "");
            }
        }
        let mut outcome = Tick {
            running: None,
            finished: None,
        };
        if let Some(j) = choice {
            let (task, job) = (self.jobs[j].record.task, self.jobs[j].record.job);
            if self.running != Some(j) {
                let detail = if self.jobs[j].record.start.is_some() { "resume" } else { "" };
                self.log(t, EventKind::JobStart, task, job, detail);
            }
            if self.jobs[j].record.start.is_none() {
                self.jobs[j].record.start = Some(t);
            }
            self.jobs[j].remaining -= 1;
            outcome.running = Some((task, job));
            if self.jobs[j].remaining == 0 {
                self.jobs[j].record.finish = Some(t + 1);
                self.pending.retain(|&p| p != j);
                self.log(t + 1, EventKind::JobFinish, task, job, "");
                let aew = self.ts.tasks()[self.jobs[j].task].aew;
                if self.ts.tasks()[self.jobs[j].task].is_control() && aew > 0 {
                    self.log(t + 1, EventKind::AewOpen, task, job, "");
                    self.log(t + 1 + aew, EventKind::AewClose, task, job, "");
                }
                outcome.finished = Some((task, job));
                self.running = None;
            } else {
                self.running = Some(j);
            }
        } else {
            self.running = None;
        }
        self.timeline.push(outcome.running.map(|r| r.0));
        outcome
    }

    pub fn finish(mut self) -> ScheduleTrace {
        self.events.sort_by_key(|e| e.time);
        ScheduleTrace {
            events: self.events,
            jobs: self.jobs.into_iter().map(|j| j.record).collect(),
            timeline: self.timeline,
        }
    }
}

/// Schedule-only run. Alarms come from `forced_alarms`; each is delivered
/// at the task's first sampling instant at or after its time.
pub fn run_schedule(ts: &TaskSet, config: &SimConfig) -> Result<ScheduleTrace> {
    let mut sched = Scheduler::new(ts, config);
    let mut alarms = config.forced_alarms.clone();
    alarms.sort();
    for t in 0..config.horizon {
        for &(at, id) in &alarms {
            let task = ts.task(id)?;
            if t >= at && t % task.period == 0 && t - at < task.period && !sched.is_delaying(id) {
                sched.alarm(id, t)?;
            }
        }
        sched.tick(t);
    }
    Ok(sched.finish())
}

/// Plain preemptive fixed-priority schedule over `[0, horizon)`.
pub fn simulate_pfp(ts: &TaskSet, horizon: Millis) -> ScheduleTrace {
    let config = SimConfig::new(SchedMode::Pfp, horizon, 0);
    run_schedule(ts, &config).expect("plain schedule has no configuration errors")
}

/// Delay-on-detection schedule with the stored sequences of `config`.
pub fn run_pfp_d(ts: &TaskSet, config: &SimConfig) -> Result<ScheduleTrace> {
    let mut cfg = config.clone();
    cfg.mode = SchedMode::PfpD;
    run_schedule(ts, &cfg)
}
