//! Closed-loop co-simulation: plants sampled by their control tasks, a
//! chi-square detector per loop, and a posterior false-data-injection
//! attacker that corrupts a victim's buffered output from inside its
//! attack-effective window.

use std::collections::{BTreeMap, HashSet};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{discretize_with_delay, synthesize_gains, AugmentedSystem, ControllerGains, GaussianNoise, PlantModel};
use crate::detector::DetectorState;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Millis, TaskId, TaskSet, TaskSpec};
use crate::rta;
use crate::sim::{self, EventKind, ScheduleTrace, SchedMode, Scheduler, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub attacker: TaskId,
    pub victim: TaskId,
    /// First tick at which the attacker acts.
    pub start: Millis,
    /// Added to the victim's buffered control output on a hit.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosimConfig {
    pub sim: SimConfig,
    pub attack: Option<AttackConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub time: Millis,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub u: Vec<f64>,
    /// Cumulative cost up to and including this sample.
    pub cost: f64,
    pub g: f64,
    pub threshold: f64,
    pub alarm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopReport {
    pub task: TaskId,
    pub plant: String,
    pub cost: f64,
    pub alarms: usize,
    pub first_alarm: Option<Millis>,
    pub switched_at: Option<Millis>,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: SchedMode,
    pub seed: u64,
    pub loops: Vec<LoopReport>,
    pub fdi_attempts: usize,
    pub fdi_hits: usize,
    pub deadline_misses: usize,
    /// Measured window overlap with untrusted jobs per control task.
    pub measured_overlap: BTreeMap<TaskId, Millis>,
    pub trace: ScheduleTrace,
}

impl RunReport {
    pub fn loop_for(&self, task: TaskId) -> Option<&LoopReport> {
        self.loops.iter().find(|l| l.task == task)
    }
}

fn neg(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| -x).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

struct Loop<'a> {
    plant: &'a PlantModel,
    task: TaskSpec,
    /// Uniform-delay response bound per delay, for gain selection.
    bounds: Vec<Millis>,
    systems: BTreeMap<Millis, AugmentedSystem>,
    gains: BTreeMap<Millis, ControllerGains>,
    w: GaussianNoise,
    v: GaussianNoise,
    rng: ChaCha8Rng,
    /// `None` for noise-free plants, whose residue covariance is zero.
    detector: Option<DetectorState>,
    x: Vec<f64>,
    z_hat: Vec<f64>,
    /// Latency key of the gains used for the current sample.
    key: Millis,
    innovation: Vec<f64>,
    /// Commands awaiting actuation, by job number.
    commands: BTreeMap<u32, Vec<f64>>,
    last_command: Vec<f64>,
    /// Output buffer contents written by the latest finished job.
    buffered: Vec<f64>,
    latency: Option<Millis>,
    applied: Vec<f64>,
    changes: Vec<(Millis, Vec<f64>)>,
    report: LoopReport,
}

impl<'a> Loop<'a> {
    fn new(plant: &'a PlantModel, task: &TaskSpec, ts: &TaskSet, seed: u64, index: u64) -> Result<Self> {
        plant.check()?;
        let peak = rta::peak_delay(task, ts).unwrap_or(0);
        let bounds = (0..=peak)
            .map(|d| {
                rta::victim_wcrt_uniform(task, ts, d)
                    .value()
                    .map_or(task.period, |r| (d + r).min(task.period))
            })
            .collect();
        let p = plant.inputs();
        let mut z_hat = vec![0.0; plant.states() + p];
        z_hat[..plant.states()].copy_from_slice(&plant.x0);
        let mut this = Self {
            plant,
            task: task.clone(),
            bounds,
            systems: BTreeMap::new(),
            gains: BTreeMap::new(),
            w: GaussianNoise::new(&plant.process_noise)?,
            v: GaussianNoise::new(&plant.measurement_noise)?,
            rng: sim::substream(seed, sim::streams::NOISE + index),
            detector: None,
            x: plant.x0.clone(),
            z_hat,
            key: 0,
            innovation: vec![0.0; plant.outputs()],
            commands: BTreeMap::new(),
            last_command: vec![0.0; p],
            buffered: vec![0.0; p],
            latency: None,
            applied: vec![0.0; p],
            changes: Vec::new(),
            report: LoopReport {
                task: task.id,
                plant: plant.name.clone(),
                cost: 0.0,
                alarms: 0,
                first_alarm: None,
                switched_at: None,
                samples: Vec::new(),
            },
        };
        this.key = this.latency_for_delay(0);
        if !plant.noiseless() {
            let nominal = this.gains_at(this.key)?.residue_cov;
            let params = &plant.detector;
            this.detector = Some(DetectorState::with_far(&nominal, params.window, params.false_alarm_rate)?);
        }
        Ok(this)
    }

    fn latency_for_delay(&self, delay: Millis) -> Millis {
        self.bounds.get(delay as usize).copied().unwrap_or(self.task.period)
    }

    fn system_at(&mut self, latency: Millis) -> Result<AugmentedSystem> {
        if !self.systems.contains_key(&latency) {
            let sys = discretize_with_delay(self.plant, self.task.period, latency)?;
            self.systems.insert(latency, sys);
        }
        Ok(self.systems[&latency].clone())
    }

    fn gains_at(&mut self, latency: Millis) -> Result<ControllerGains> {
        if !self.gains.contains_key(&latency) {
            let sys = self.system_at(latency)?;
            let g = synthesize_gains(&sys, self.plant)?;
            self.gains.insert(latency, g);
        }
        Ok(self.gains[&latency].clone())
    }

    /// Advances plant and estimator over the period ending at `end`.
    fn close_period(&mut self, end: Millis) -> Result<()> {
        let period = self.task.period;
        let start = end - period;
        let dt = 1e-3;
        let n = self.plant.states();

        self.changes.sort_by_key(|c| c.0);
        let (now, later): (Vec<_>, Vec<_>) = self.changes.drain(..).partition(|c| c.0 < end);
        self.changes = later;
        let mut bu = vec![0.0; n];
        let mut from = start;
        for (at, u) in now {
            let seg = self.plant.b.mul_vec(&self.applied);
            for (acc, s) in bu.iter_mut().zip(seg) {
                *acc += (at - from) as f64 * dt * s;
            }
            from = at;
            self.applied = u;
        }
        let seg = self.plant.b.mul_vec(&self.applied);
        for (acc, s) in bu.iter_mut().zip(seg) {
            *acc += (end - from) as f64 * dt * s;
        }
        let ax = self.plant.a.mul_vec(&self.x);
        let w = self.w.sample(&mut self.rng);
        for i in 0..n {
            self.x[i] += period as f64 * dt * ax[i] + bu[i] + w[i];
        }

        let latency = self.latency.take().unwrap_or(period).min(period);
        let l_gain = self.gains_at(self.key)?.l_aug;
        let sys = self.system_at(latency)?;
        let mut next = sys.phi_aug.mul_vec(&self.z_hat);
        next = add(&next, &sys.gamma_aug.mul_vec(&self.last_command));
        next = add(&next, &l_gain.mul_vec(&self.innovation));
        self.z_hat = next;
        Ok(())
    }

    /// Measures at sampling instant `t` and returns whether the detector
    /// alarmed.
    fn sample(&mut self, t: Millis) -> bool {
        let mut y = self.plant.c.mul_vec(&self.x);
        y = add(&y, &self.v.sample(&mut self.rng));
        let c_aug = Matrix::hstack(&self.plant.c, &Matrix::zeros(self.plant.outputs(), self.plant.inputs()));
        self.innovation = y.iter().zip(c_aug.mul_vec(&self.z_hat)).map(|(a, b)| a - b).collect();
        let (g, threshold, alarm) = match self.detector.as_mut() {
            Some(d) => {
                let out = d.step(&self.innovation);
                (out.g, d.threshold(), out.alarm)
            }
            None => (0.0, f64::INFINITY, false),
        };
        if alarm {
            self.report.alarms += 1;
            self.report.first_alarm.get_or_insert(t);
        }
        self.report.samples.push(SampleRecord {
            time: t,
            x: self.x.clone(),
            x_hat: self.z_hat[..self.plant.states()].to_vec(),
            u: Vec::new(),
            cost: self.report.cost,
            g,
            threshold,
            alarm,
        });
        alarm
    }

    /// Computes the command of job `number`, released with `delay`.
    fn command(&mut self, number: u32, delay: Millis) -> Result<()> {
        self.key = self.latency_for_delay(delay);
        let k = self.gains_at(self.key)?.k_aug;
        let u = neg(k.mul_vec(&self.z_hat));
        let mut z = self.x.clone();
        z.extend_from_slice(&self.applied);
        self.report.cost += self.plant.q_aug.quad_form(&z) + self.plant.r.quad_form(&u);
        if let Some(s) = self.report.samples.last_mut() {
            s.u = u.clone();
            s.cost = self.report.cost;
        }
        self.commands.insert(number, u.clone());
        self.last_command = u;
        Ok(())
    }

    fn finished(&mut self, number: u32, release: Millis, at: Millis) {
        if let Some(u) = self.commands.remove(&number) {
            self.buffered = u.clone();
            self.changes.push((at, u));
        }
        self.latency = Some(at - release);
    }
}

/// Runs the task set with one closed loop per plant (matched to its task by
/// `plant.task`) for `config.sim.horizon` ms.
pub fn cosimulate(ts: &TaskSet, plants: &[PlantModel], config: &CosimConfig) -> Result<RunReport> {
    let sc = &config.sim;
    let mut loops = Vec::new();
    for (i, plant) in plants.iter().enumerate() {
        let id = plant
            .task
            .ok_or_else(|| Error::Config(format!("plant {} is not bound to a task", plant.name)))?;
        let task = ts.task(id)?;
        if !task.is_control() {
            return Err(Error::Config(format!("plant {} is bound to non-control task {id}", plant.name)));
        }
        loops.push(Loop::new(plant, task, ts, sc.seed, i as u64)?);
    }
    if let Some(a) = &config.attack {
        if !ts.task(a.attacker)?.is_untrusted() {
            return Err(Error::Config(format!("attacker {} is not an untrusted task", a.attacker)));
        }
        let v = ts.task(a.victim)?;
        if let Some(l) = loops.iter().find(|l| l.task.id == a.victim) {
            if a.bias.len() != l.plant.inputs() {
                return Err(Error::Dimension(format!(
                    "attack bias has {} entries, plant {} has {} inputs",
                    a.bias.len(),
                    l.plant.name,
                    l.plant.inputs()
                )));
            }
        }
        if v.aew <= 0 {
            return Err(Error::Config(format!("victim {} has an empty attack-effective window", a.victim)));
        }
    }

    let mut forced = sc.forced_alarms.clone();
    forced.sort();
    let mut sched = Scheduler::new(ts, sc);
    let (mut attempts, mut hits) = (0, 0);
    let mut hit_jobs: HashSet<u32> = HashSet::new();
    let mut victim_finish: Option<(u32, Millis)> = None;

    for t in 0..=sc.horizon {
        for l in loops.iter_mut() {
            if t % l.task.period != 0 {
                continue;
            }
            if t > 0 {
                l.close_period(t)?;
            }
            if t == sc.horizon {
                continue;
            }
            let mut alarm = l.sample(t);
            alarm |= forced
                .iter()
                .any(|&(at, id)| id == l.task.id && t >= at && t - at < l.task.period);
            if alarm && sched.alarm(l.task.id, t)? {
                l.report.switched_at = Some(t);
            }
        }
        for &(at, id) in &forced {
            let task = ts.task(id)?;
            let has_loop = loops.iter().any(|l| l.task.id == id);
            if !has_loop && t >= at && t % task.period == 0 && t - at < task.period && !sched.is_delaying(id) {
                sched.alarm(id, t)?;
            }
        }
        if t == sc.horizon {
            break;
        }

        let tick = sched.tick(t);
        for l in loops.iter_mut() {
            if t % l.task.period == 0 {
                let number = (t / l.task.period) as u32 + 1;
                let delay = sched.job(l.task.id, number).map_or(0, |j| j.delay);
                l.command(number, delay)?;
            }
        }

        if let (Some(a), Some((id, job))) = (&config.attack, tick.running) {
            if id == a.attacker && t >= a.start {
                attempts += 1;
                sched.log(t, EventKind::FdiAttempt, id, job, "");
                let omega = ts.task(a.victim)?.aew;
                if let Some((vjob, f)) = victim_finish {
                    if f <= t && t < f + omega && hit_jobs.insert(job) {
                        hits += 1;
                        sched.log(t, EventKind::FdiHit, id, job, format!("victim job {vjob}"));
                        if let Some(l) = loops.iter_mut().find(|l| l.task.id == a.victim) {
                            let corrupted = add(&l.buffered, &a.bias);
                            l.changes.push((t, corrupted));
                        }
                    }
                }
            }
        }

        if let Some((id, job)) = tick.finished {
            if let Some(l) = loops.iter_mut().find(|l| l.task.id == id) {
                let release = (job as Millis - 1) * l.task.period;
                l.finished(job, release, t + 1);
            }
            if config.attack.as_ref().is_some_and(|a| a.victim == id) {
                victim_finish = Some((job, t + 1));
            }
        }
    }

    let trace = sched.finish();
    let untrusted: Vec<TaskId> = ts.untrusted_tasks().map(|t| t.id).collect();
    let measured_overlap = ts
        .control_tasks()
        .map(|t| (t.id, trace.measured_overlap(t.id, t.aew, &untrusted)))
        .collect();
    Ok(RunReport {
        mode: sc.mode,
        seed: sc.seed,
        loops: loops.into_iter().map(|l| l.report).collect(),
        fdi_attempts: attempts,
        fdi_hits: hits,
        deadline_misses: trace.deadline_misses(),
        measured_overlap,
        trace,
    })
}
