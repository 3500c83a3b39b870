//! Synthetic task-set generation, schedulability sweeps and the four-case
//! automotive study.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{max_admissible_delay, PlantModel};
use crate::cosim::{cosimulate, AttackConfig, CosimConfig, RunReport};
use crate::error::{Error, Result};
use crate::model::{assign_rm_priorities, DelaySequence, Millis, TaskId, TaskSet, TaskSpec};
use crate::overlap::{solve_delays, DelaySolution, OverlapConventions, OverlapProblem};
use crate::rta;
use crate::sim::{SchedMode, SimConfig, DEFAULT_HORIZON};

pub const GENERATION_STREAM: u64 = 1 << 40;
pub const PERIOD_MENU: [Millis; 7] = [5, 10, 20, 50, 100, 200, 1000];
pub const MAX_WCET: Millis = 50;
const UTILIZATION_TOLERANCE: f64 = 0.05;
const GENERATION_RETRIES: usize = 1000;

/// Stafford's RandFixedSum for a single vector: `n` values in `[0, 1]`
/// summing to `total`, uniform over that slice of the unit cube.
pub fn rand_fixed_sum<R: Rng + ?Sized>(n: usize, total: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 || !(total > 0.0 && total < n as f64) {
        return Err(Error::Config(format!("RandFixedSum needs 0 < U < n, got n = {n}, U = {total}")));
    }
    let nf = n as f64;
    let k = (total.floor() as usize).min(n - 1);
    let s = total.clamp(k as f64, k as f64 + 1.0);
    let s1: Vec<f64> = (0..n).map(|q| s - k as f64 + q as f64).collect();
    let s2: Vec<f64> = (0..n).map(|q| (k + n - q) as f64 - s).collect();

    let mut w = vec![vec![0.0; n + 1]; n];
    w[0][1] = f64::MAX;
    let mut t = vec![vec![0.0; n]; n.saturating_sub(1)];
    let tiny = f64::from_bits(1);
    for i in 2..=n {
        let fi = i as f64;
        for c in 0..i {
            let a = w[i - 2][c + 1] * s1[c] / fi;
            let b = w[i - 2][c] * s2[n - i + c] / fi;
            w[i - 1][c + 1] = a + b;
            let sum = w[i - 1][c + 1] + tiny;
            t[i - 2][c] = if s2[n - i + c] > s1[c] { b / sum } else { 1.0 - a / sum };
        }
    }

    let mut x = vec![0.0; n];
    let (mut s, mut j) = (s, k);
    let (mut sm, mut pr) = (0.0, 1.0);
    for i in (1..n).rev() {
        let e = rng.random::<f64>() <= t[i - 1][j];
        let sx = rng.random::<f64>().powf(1.0 / i as f64);
        sm += (1.0 - sx) * pr * s / (i as f64 + 1.0);
        pr *= sx;
        x[n - i - 1] = sm + if e { pr } else { 0.0 };
        if e {
            s -= 1.0;
            j -= 1;
        }
    }
    x[n - 1] = sm + pr * s;
    x.shuffle(rng);
    debug_assert!((x.iter().sum::<f64>() - total).abs() < 1e-9 * nf);
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VictimGroup {
    Hp,
    Mp,
    Lp,
}

impl VictimGroup {
    pub const ALL: [VictimGroup; 3] = [VictimGroup::Hp, VictimGroup::Mp, VictimGroup::Lp];

    /// 1-based priority ranks of the group: thirds, with HP and MP rounded
    /// down and LP taking the remainder.
    pub fn ranks(self, n: usize) -> std::ops::RangeInclusive<usize> {
        let (a, b) = (n / 3, 2 * n / 3);
        match self {
            VictimGroup::Hp => 1..=a,
            VictimGroup::Mp => a + 1..=b,
            VictimGroup::Lp => b + 1..=n,
        }
    }
}

/// Ten utilization ranges `[0.02 + 0.1 i, 0.18 + 0.1 i]`.
pub fn utilization_ranges() -> Vec<(f64, f64)> {
    (0..10).map(|i| (0.02 + 0.1 * i as f64, 0.18 + 0.1 * i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_tasks: usize,
    pub sets_per_range: usize,
    pub ranges: Vec<(f64, f64)>,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(n_tasks: usize, seed: u64) -> Self {
        Self {
            n_tasks,
            sets_per_range: 100,
            ranges: utilization_ranges(),
            seed,
        }
    }
}

/// Integer WCET for a utilization share, clamped to `[1, min(50, T - 1)]`.
pub fn wcet_for(u: f64, period: Millis) -> Millis {
    ((u * period as f64).round() as Millis).clamp(1, MAX_WCET.min(period - 1))
}

/// Draws a rate-monotonic task set with total utilization `target`
/// (within ±0.05 after rounding). Each task's period is drawn from the
/// menu entries that represent its share without clamping; if none does,
/// from the whole menu.
pub fn generate_taskset<R: Rng + ?Sized>(n: usize, target: f64, rng: &mut R) -> Result<TaskSet> {
    let mut last = None;
    for _ in 0..GENERATION_RETRIES {
        let shares = rand_fixed_sum(n, target, rng)?;
        let tasks: Vec<TaskSpec> = shares
            .iter()
            .zip(1..)
            .map(|(&u, id)| {
                let fits: Vec<Millis> = PERIOD_MENU
                    .iter()
                    .copied()
                    .filter(|&p| {
                        let c = (u * p as f64).round() as Millis;
                        c >= 1 && c <= MAX_WCET.min(p - 1)
                    })
                    .collect();
                let menu = if fits.is_empty() { &PERIOD_MENU[..] } else { &fits[..] };
                let period = menu[rng.random_range(0..menu.len())];
                TaskSpec::new(id, period, wcet_for(u, period))
            })
            .collect();
        let ts = assign_rm_priorities(&TaskSet::new(tasks)?);
        if (ts.utilization() - target).abs() <= UTILIZATION_TOLERANCE {
            return Ok(ts);
        }
        last = Some(ts);
    }
    last.ok_or_else(|| Error::Config("task-set generation failed".into()))
}

fn unit_rng(seed: u64, range: usize, set: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GENERATION_STREAM | (range as u64) << 20 | set as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_tasks: usize,
    pub range: usize,
    pub u_low: f64,
    pub u_high: f64,
    pub group: VictimGroup,
    pub schedulable: usize,
    pub sets: usize,
    pub percent: f64,
}

/// Percentage of generated sets whose victim (one task drawn uniformly
/// from the group) has a positive peak delay, per range and group.
pub fn schedulability_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let n = spec.n_tasks;
    if n < 3 {
        return Err(Error::Config(format!("sweep needs at least 3 tasks for three groups, got {n}")));
    }
    let units: Vec<(usize, usize)> = (0..spec.ranges.len())
        .flat_map(|r| (0..spec.sets_per_range).map(move |s| (r, s)))
        .collect();
    let outcomes: Vec<[bool; 3]> = units
        .par_iter()
        .map(|&(r, s)| {
            let mut rng = unit_rng(spec.seed, r, s);
            let (lo, hi) = spec.ranges[r];
            let target = rng.random_range(lo..hi);
            let ts = generate_taskset(n, target, &mut rng)?;
            let order = ts.by_priority();
            let mut out = [false; 3];
            for (g, group) in VictimGroup::ALL.iter().enumerate() {
                let ranks = group.ranks(n);
                let rank = rng.random_range(ranks);
                let victim = order[rank - 1];
                out[g] = rta::peak_delay(victim, &ts).is_some_and(|d| d > 0);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (r, &(lo, hi)) in spec.ranges.iter().enumerate() {
        for (g, &group) in VictimGroup::ALL.iter().enumerate() {
            let hits = units
                .iter()
                .zip(&outcomes)
                .filter(|((ur, _), o)| *ur == r && o[g])
                .count();
            rows.push(SweepRow {
                n_tasks: n,
                range: r,
                u_low: lo,
                u_high: hi,
                group,
                schedulable: hits,
                sets: spec.sets_per_range,
                percent: 100.0 * hits as f64 / spec.sets_per_range.max(1) as f64,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// No attack, plain fixed priority.
    I,
    /// Attack, plain fixed priority.
    Ii,
    /// Attack, random delays after detection.
    Iii,
    /// Attack, optimized delay sequences after detection.
    Iv,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::I, Case::Ii, Case::Iii, Case::Iv];

    pub fn mode(self) -> SchedMode {
        match self {
            Case::I | Case::Ii => SchedMode::Pfp,
            Case::Iii => SchedMode::RandomDelay,
            Case::Iv => SchedMode::PfpD,
        }
    }

    pub fn attacked(self) -> bool {
        self != Case::I
    }

    pub fn parse(s: &str) -> Option<Case> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Some(Case::I),
            "ii" | "2" => Some(Case::Ii),
            "iii" | "3" => Some(Case::Iii),
            "iv" | "4" => Some(Case::Iv),
            _ => None,
        }
    }
}

/// Injected acceleration offset for the TTC victim. Case (ii) only clears
/// the cost threshold from about 15 upward, and above about 30 the damage
/// done before detection pushes case (iv) over it as well.
pub const DEFAULT_FDI_BIAS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyParams {
    pub attack: AttackConfig,
    pub horizon: Millis,
    pub conventions: OverlapConventions,
    pub threshold_factor: f64,
}

impl Default for CaseStudyParams {
    fn default() -> Self {
        Self {
            attack: AttackConfig {
                attacker: 4,
                victim: 3,
                start: 100,
                bias: vec![DEFAULT_FDI_BIAS],
            },
            horizon: DEFAULT_HORIZON,
            conventions: OverlapConventions::case_study(),
            threshold_factor: crate::control::DEFAULT_THRESHOLD_FACTOR,
        }
    }
}

/// Offline artifacts shared by the four cases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseStudySetup {
    #[serde(skip)]
    pub taskset: TaskSet,
    #[serde(skip)]
    pub plants: Vec<PlantModel>,
    /// Per control task: `(task, Δmax, optimizer result)`.
    pub sequences: Vec<(TaskId, Millis, DelaySolution)>,
}

impl CaseStudySetup {
    pub fn sequence_for(&self, task: TaskId) -> Option<&(TaskId, Millis, DelaySolution)> {
        self.sequences.iter().find(|s| s.0 == task)
    }
}

/// Analysis, control design and delay optimization for every control task
/// that has a plant.
pub fn prepare_case_study(ts: &TaskSet, plants: &[PlantModel], conventions: OverlapConventions) -> Result<CaseStudySetup> {
    let mut sequences = Vec::new();
    for plant in plants {
        let Some(id) = plant.task else { continue };
        let task = ts.task(id)?;
        let report = max_admissible_delay(plant, task, ts)?;
        let dmax = report
            .max_delay
            .ok_or_else(|| Error::Config(format!("task {id} has no admissible delay")))?;
        let problem = OverlapProblem::new(ts, id, dmax, conventions)?;
        sequences.push((id, dmax, solve_delays(&problem)));
    }
    Ok(CaseStudySetup {
        taskset: ts.clone(),
        plants: plants.to_vec(),
        sequences,
    })
}

pub fn case_config(setup: &CaseStudySetup, case: Case, params: &CaseStudyParams, seed: u64) -> Result<CosimConfig> {
    let mut sim = SimConfig::new(case.mode(), params.horizon, seed);
    for (id, _, sol) in &setup.sequences {
        sim = sim.with_sequence(DelaySequence::new(&setup.taskset, *id, sol.delays.clone())?);
    }
    Ok(CosimConfig {
        sim,
        attack: case.attacked().then(|| params.attack.clone()),
    })
}

pub fn run_case(setup: &CaseStudySetup, case: Case, params: &CaseStudyParams, seed: u64) -> Result<RunReport> {
    cosimulate(&setup.taskset, &setup.plants, &case_config(setup, case, params, seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub case: Case,
    pub seed: u64,
    pub fdi_attempts: usize,
    pub fdi_hits: usize,
    /// Cumulative cost of the attacked loop.
    pub cost: f64,
    /// `threshold_factor` times the case (i) cost under the same seed.
    pub threshold: f64,
    pub first_alarm: Option<Millis>,
    pub switched_at: Option<Millis>,
    pub overlap_per_hyperperiod: f64,
    pub deadline_misses: usize,
}

/// Runs all four cases under one seed.
pub fn case_study(setup: &CaseStudySetup, params: &CaseStudyParams, seed: u64) -> Result<Vec<(CaseSummary, RunReport)>> {
    let victim = params.attack.victim;
    let mut out: Vec<(CaseSummary, RunReport)> = Vec::new();
    let mut threshold = f64::NAN;
    let hyperperiods = params.horizon as f64 / setup.taskset.hyperperiod() as f64;
    for case in Case::ALL {
        let report = run_case(setup, case, params, seed)?;
        let lp = report
            .loop_for(victim)
            .ok_or_else(|| Error::Config(format!("no plant bound to victim {victim}")))?;
        if case == Case::I {
            threshold = params.threshold_factor * lp.cost;
        }
        let summary = CaseSummary {
            case,
            seed,
            fdi_attempts: report.fdi_attempts,
            fdi_hits: report.fdi_hits,
            cost: lp.cost,
            threshold,
            first_alarm: lp.first_alarm,
            switched_at: lp.switched_at,
            overlap_per_hyperperiod: report.measured_overlap.get(&victim).copied().unwrap_or(0) as f64 / hyperperiods,
            deadline_misses: report.deadline_misses,
        };
        out.push((summary, report));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_is_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(rand_fixed_sum(1, 0.4, &mut rng).unwrap(), vec![0.4]);
    }

    #[test]
    fn rejects_out_of_range_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(rand_fixed_sum(3, 3.0, &mut rng).is_err());
        assert!(rand_fixed_sum(3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn group_thirds() {
        assert_eq!(VictimGroup::Hp.ranks(10), 1..=3);
        assert_eq!(VictimGroup::Mp.ranks(10), 4..=6);
        assert_eq!(VictimGroup::Lp.ranks(10), 7..=10);
        assert_eq!(VictimGroup::Hp.ranks(5), 1..=1);
        assert_eq!(VictimGroup::Lp.ranks(5), 4..=5);
    }

    #[test]
    fn wcet_clamps() {
        assert_eq!(wcet_for(0.001, 10), 1);
        assert_eq!(wcet_for(0.99, 10), 9);
        assert_eq!(wcet_for(0.9, 1000), 50);
    }
}
