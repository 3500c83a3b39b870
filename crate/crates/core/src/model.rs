//! Task-set data model shared by the analysis, optimization and simulation
//! layers.
//!
//! All times live on a global integer millisecond grid. Jobs are indexed from
//! 1: the k-th job of a task is nominally released at `(k - 1) * period`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer milliseconds.
pub type Millis = i64;

pub type TaskId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trust {
    Trusted,
    Untrusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Control,
    NonControl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub period: Millis,
    pub wcet: Millis,
    pub deadline: Millis,
    /// Lower number means higher priority.
    pub priority: u32,
    pub trust: Trust,
    pub kind: TaskKind,
    /// Attack effective window width; zero for non-control tasks.
    pub aew: Millis,
}

impl TaskSpec {
    /// Implicit-deadline trusted non-control task; priority is left at 0 and
    /// is expected to be assigned afterwards.
    pub fn new(id: TaskId, period: Millis, wcet: Millis) -> Self {
        Self {
            id,
            period,
            wcet,
            deadline: period,
            priority: 0,
            trust: Trust::Trusted,
            kind: TaskKind::NonControl,
            aew: 0,
        }
    }

    pub fn with_deadline(mut self, deadline: Millis) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = priority;
        self
    }

    pub fn untrusted(mut self) -> Self {
        self.trust = Trust::Untrusted;
        self
    }

    pub fn control(mut self, aew: Millis) -> Self {
        self.kind = TaskKind::Control;
        self.aew = aew;
        self
    }

    pub fn is_control(&self) -> bool {
        self.kind == TaskKind::Control
    }

    pub fn is_untrusted(&self) -> bool {
        self.trust == Trust::Untrusted
    }

    /// Nominal release of the 1-based job `k`.
    pub fn release(&self, k: u32) -> Millis {
        (Millis::from(k) - 1) * self.period
    }

    pub fn utilization(&self) -> f64 {
        self.wcet as f64 / self.period as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    tasks: Vec<TaskSpec>,
    hyperperiod: Millis,
}

impl TaskSet {
    /// Builds a task set and caches its hyperperiod. Structural invariants
    /// (deadlines, unique priorities, ...) are checked by [`validate`], not
    /// here, so that malformed sets can still be inspected.
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self> {
        let hyperperiod = hyperperiod_of(tasks.iter().map(|t| t.period))?;
        Ok(Self { tasks, hyperperiod })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn hyperperiod(&self) -> Millis {
        self.hyperperiod
    }

    pub fn task(&self, id: TaskId) -> Result<&TaskSpec> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or(Error::UnknownTask(id))
    }

    /// Number of jobs of `id` released in one hyperperiod.
    pub fn jobs_per_hyperperiod(&self, id: TaskId) -> Result<u32> {
        let t = self.task(id)?;
        Ok((self.hyperperiod / t.period) as u32)
    }

    /// Tasks with strictly higher priority than `task`.
    pub fn higher_priority<'a>(&'a self, task: &'a TaskSpec) -> impl Iterator<Item = &'a TaskSpec> {
        self.tasks
            .iter()
            .filter(move |t| t.id != task.id && t.priority < task.priority)
    }

    /// Tasks with strictly lower priority than `task`.
    pub fn lower_priority<'a>(&'a self, task: &'a TaskSpec) -> impl Iterator<Item = &'a TaskSpec> {
        self.tasks
            .iter()
            .filter(move |t| t.id != task.id && t.priority > task.priority)
    }

    pub fn control_tasks(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.iter().filter(|t| t.is_control())
    }

    pub fn untrusted_tasks(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.iter().filter(|t| t.is_untrusted())
    }

    /// Tasks sorted from highest to lowest priority.
    pub fn by_priority(&self) -> Vec<&TaskSpec> {
        let mut v: Vec<_> = self.tasks.iter().collect();
        v.sort_by_key(|t| (t.priority, t.id));
        v
    }

    pub fn utilization(&self) -> f64 {
        self.tasks.iter().map(TaskSpec::utilization).sum()
    }

    pub fn into_tasks(self) -> Vec<TaskSpec> {
        self.tasks
    }
}

pub fn hyperperiod(taskset: &TaskSet) -> Millis {
    taskset.hyperperiod
}

/// Least common multiple of the given periods; overflow is an error.
pub fn hyperperiod_of(periods: impl IntoIterator<Item = Millis>) -> Result<Millis> {
    let mut acc: Option<Millis> = None;
    for p in periods {
        if p <= 0 {
            return Err(Error::Invalid(vec![format!("period {p} must be positive")]));
        }
        acc = Some(match acc {
            None => p,
            Some(a) => {
                let g = gcd(a, p);
                (a / g).checked_mul(p).ok_or(Error::HyperperiodOverflow)?
            }
        });
    }
    acc.ok_or(Error::EmptyTaskSet)
}

fn gcd(mut a: Millis, mut b: Millis) -> Millis {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Rate-monotonic priorities: shorter period first, ties by ascending id.
/// Returns a new set; the task order of the input is preserved.
pub fn assign_rm_priorities(taskset: &TaskSet) -> TaskSet {
    let mut order: Vec<(Millis, TaskId, usize)> = taskset
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.period, t.id, i))
        .collect();
    order.sort();
    let mut tasks = taskset.tasks.clone();
    for (rank, (_, _, idx)) in order.into_iter().enumerate() {
        tasks[idx].priority = rank as u32 + 1;
    }
    TaskSet {
        tasks,
        hyperperiod: taskset.hyperperiod,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonPositivePeriod { task: TaskId },
    NonPositiveWcet { task: TaskId },
    WcetExceedsDeadline { task: TaskId },
    DeadlineExceedsPeriod { task: TaskId },
    DuplicateId { task: TaskId },
    DuplicatePriority { priority: u32 },
    AewOnNonControl { task: TaskId },
    NegativeAew { task: TaskId },
    UntrustedControl { task: TaskId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositivePeriod { task } => write!(f, "task {task}: period must be > 0"),
            Self::NonPositiveWcet { task } => write!(f, "task {task}: 0 < C"),
            Self::WcetExceedsDeadline { task } => write!(f, "task {task}: C ≤ D"),
            Self::DeadlineExceedsPeriod { task } => write!(f, "task {task}: D ≤ T"),
            Self::DuplicateId { task } => write!(f, "task id {task} is not unique"),
            Self::DuplicatePriority { priority } => {
                write!(f, "unique priorities: priority {priority} is shared")
            }
            Self::AewOnNonControl { task } => {
                write!(f, "task {task}: AEW width only allowed on control tasks")
            }
            Self::NegativeAew { task } => write!(f, "task {task}: AEW width must be ≥ 0"),
            Self::UntrustedControl { task } => {
                write!(f, "task {task}: untrusted tasks must be non-control")
            }
        }
    }
}

/// Reports every violated task/task-set invariant; empty means valid.
pub fn validate(taskset: &TaskSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    let mut prios = std::collections::BTreeMap::<u32, usize>::new();
    for t in &taskset.tasks {
        if t.period <= 0 {
            out.push(Violation::NonPositivePeriod { task: t.id });
        }
        if t.wcet <= 0 {
            out.push(Violation::NonPositiveWcet { task: t.id });
        }
        if t.wcet > t.deadline {
            out.push(Violation::WcetExceedsDeadline { task: t.id });
        }
        if t.deadline > t.period {
            out.push(Violation::DeadlineExceedsPeriod { task: t.id });
        }
        if !ids.insert(t.id) {
            out.push(Violation::DuplicateId { task: t.id });
        }
        *prios.entry(t.priority).or_default() += 1;
        if t.aew < 0 {
            out.push(Violation::NegativeAew { task: t.id });
        }
        if t.aew > 0 && !t.is_control() {
            out.push(Violation::AewOnNonControl { task: t.id });
        }
        if t.is_untrusted() && t.is_control() {
            out.push(Violation::UntrustedControl { task: t.id });
        }
    }
    out.extend(
        prios
            .into_iter()
            .filter(|&(_, n)| n > 1)
            .map(|(priority, _)| Violation::DuplicatePriority { priority }),
    );
    out
}

/// Like [`validate`] but folds violations into an error.
pub fn ensure_valid(taskset: &TaskSet) -> Result<()> {
    let v = validate(taskset);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(v.iter().map(ToString::to_string).collect()))
    }
}

/// Per-job release offsets of one victim task over a hyperperiod, applied
/// cyclically: job k (1-based) is delayed by `delays[(k - 1) % len]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySequence {
    pub victim: TaskId,
    pub delays: Vec<Millis>,
}

impl DelaySequence {
    /// Checks length `H / T_v` and `0 ≤ δ ≤ D_v - C_v` for every entry.
    pub fn new(taskset: &TaskSet, victim: TaskId, delays: Vec<Millis>) -> Result<Self> {
        let seq = Self { victim, delays };
        seq.check(taskset)?;
        Ok(seq)
    }

    pub fn zeros(taskset: &TaskSet, victim: TaskId) -> Result<Self> {
        Self::uniform(taskset, victim, 0)
    }

    pub fn uniform(taskset: &TaskSet, victim: TaskId, delay: Millis) -> Result<Self> {
        let n = taskset.jobs_per_hyperperiod(victim)? as usize;
        Self::new(taskset, victim, vec![delay; n])
    }

    pub fn check(&self, taskset: &TaskSet) -> Result<()> {
        let task = taskset.task(self.victim)?;
        let n = taskset.jobs_per_hyperperiod(self.victim)? as usize;
        let err = |reason: String| Error::InvalidDelaySequence {
            task: self.victim,
            reason,
        };
        if self.delays.len() != n {
            return Err(err(format!(
                "expected {n} entries (H / T), got {}",
                self.delays.len()
            )));
        }
        let bound = task.deadline - task.wcet;
        if let Some((j, d)) = self
            .delays
            .iter()
            .enumerate()
            .find(|(_, &d)| d < 0 || d > bound)
        {
            return Err(err(format!("entry {} = {d} outside [0, {bound}]", j + 1)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Delay applied to the 1-based job `k`.
    pub fn for_job(&self, k: u32) -> Millis {
        self.delays[(k as usize - 1) % self.delays.len()]
    }

    pub fn min(&self) -> Millis {
        self.delays.iter().copied().min().unwrap_or(0)
    }

    pub fn max(&self) -> Millis {
        self.delays.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use crate::scenarios::*;
    use super::*;
    use proptest::prelude::*;

    fn set_with_periods(periods: &[Millis]) -> TaskSet {
        TaskSet::new(
            periods
                .iter()
                .enumerate()
                .map(|(i, &p)| TaskSpec::new(i as TaskId + 1, p, 1))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hyperperiod_examples() {
        assert_eq!(set_with_periods(&[5, 10, 20, 20]).hyperperiod(), 20);
        assert_eq!(set_with_periods(&[7]).hyperperiod(), 7);
        assert_eq!(set_with_periods(&[10, 40, 20, 100, 100, 40]).hyperperiod(), 200);
    }

    #[test]
    fn hyperperiod_errors() {
        assert!(matches!(TaskSet::new(vec![]), Err(Error::EmptyTaskSet)));
        let huge = [Millis::MAX / 2 - 1, Millis::MAX / 2 - 3];
        assert!(matches!(
            hyperperiod_of(huge),
            Err(Error::HyperperiodOverflow)
        ));
    }

    #[test]
    fn rm_priorities() {
        let ts = assign_rm_priorities(&set_with_periods(&[5, 10, 20, 20]));
        let order: Vec<_> = ts.by_priority().iter().map(|t| t.id).collect();
        assert_eq!(order, vec![1, 2, 3, 4]);

        let ts = assign_rm_priorities(&set_with_periods(&[10, 10, 10]));
        let order: Vec<_> = ts.by_priority().iter().map(|t| t.id).collect();
        assert_eq!(order, vec![1, 2, 3]);

        let ts = assign_rm_priorities(&set_with_periods(&[100, 5]));
        assert_eq!(ts.task(2).unwrap().priority, 1);
    }

    #[test]
    fn validate_examples() {
        assert!(validate(&table1()).is_empty());
        assert!(validate(&table2()).is_empty());

        let bad = TaskSet::new(vec![TaskSpec::new(1, 10, 5).with_deadline(4).with_priority(1)])
            .unwrap();
        let v = validate(&bad);
        assert_eq!(v, vec![Violation::WcetExceedsDeadline { task: 1 }]);
        assert!(v[0].to_string().contains("C ≤ D"));

        let dup = TaskSet::new(vec![
            TaskSpec::new(1, 10, 1).with_priority(1),
            TaskSpec::new(2, 10, 1).with_priority(1),
        ])
        .unwrap();
        let v = validate(&dup);
        assert_eq!(v, vec![Violation::DuplicatePriority { priority: 1 }]);
        assert!(v[0].to_string().contains("unique priorities"));
    }

    #[test]
    fn delay_sequence_bounds() {
        let ts = table1();
        assert!(DelaySequence::new(&ts, 2, vec![6, 7]).is_ok());
        assert!(DelaySequence::new(&ts, 2, vec![6, 8]).is_err());
        assert!(DelaySequence::new(&ts, 2, vec![6]).is_err());
        let s = DelaySequence::new(&ts, 2, vec![1, 4]).unwrap();
        assert_eq!((s.for_job(1), s.for_job(2), s.for_job(3)), (1, 4, 1));
    }

    fn arb_taskset() -> impl Strategy<Value = TaskSet> {
        prop::collection::vec((1i64..60, 1i64..5), 1..7).prop_map(|v| {
            TaskSet::new(
                v.into_iter()
                    .enumerate()
                    .map(|(i, (p, c))| TaskSpec::new(i as TaskId + 1, p + c, c))
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn hyperperiod_divisible(ts in arb_taskset()) {
            for t in ts.tasks() {
                prop_assert_eq!(ts.hyperperiod() % t.period, 0);
            }
        }

        #[test]
        fn rm_idempotent_and_permutation_stable(ts in arb_taskset(), seed in any::<u64>()) {
            let once = assign_rm_priorities(&ts);
            let twice = assign_rm_priorities(&once);
            prop_assert_eq!(&once, &twice);

            let mut tasks = ts.tasks().to_vec();
            let n = tasks.len();
            tasks.rotate_left((seed as usize) % n);
            let shuffled = assign_rm_priorities(&TaskSet::new(tasks).unwrap());
            for t in once.tasks() {
                prop_assert_eq!(t.priority, shuffled.task(t.id).unwrap().priority);
            }
            prop_assert!(validate(&once).is_empty());
        }

        #[test]
        fn single_violation_detected(ts in arb_taskset(), which in 0usize..4, idx in any::<prop::sample::Index>()) {
            let ts = assign_rm_priorities(&ts);
            prop_assert!(validate(&ts).is_empty());
            let mut tasks = ts.tasks().to_vec();
            let i = idx.index(tasks.len());
            match which {
                0 => tasks[i].deadline = tasks[i].wcet - 1,
                1 => tasks[i].deadline = tasks[i].period + 1,
                2 => tasks[i].aew = 3,
                _ => {
                    let j = (i + 1) % tasks.len();
                    if i == j { tasks[i].wcet = 0 } else { tasks[i].priority = tasks[j].priority }
                }
            }
            let bad = TaskSet::new(tasks).unwrap();
            prop_assert!(!validate(&bad).is_empty());
        }
    }
}
