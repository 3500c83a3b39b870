//! JSON file formats for task sets, plants and delay sequences, plus the
//! trace and CSV writers.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::PlantModel;
use crate::cosim::RunReport;
use crate::error::{Error, Result};
use crate::model::{assign_rm_priorities, ensure_valid, DelaySequence, Millis, TaskId, TaskKind, TaskSet, TaskSpec, Trust};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub id: TaskId,
    pub period_ms: Millis,
    pub wcet_ms: Millis,
    pub deadline_ms: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
    pub trust: Trust,
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aew_ms: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetFile {
    pub tasks: Vec<TaskRecord>,
}

impl From<&TaskSpec> for TaskRecord {
    fn from(t: &TaskSpec) -> Self {
        Self {
            id: t.id,
            period_ms: t.period,
            wcet_ms: t.wcet,
            deadline_ms: t.deadline,
            priority: Some(t.priority),
            trust: t.trust,
            kind: t.kind,
            aew_ms: t.is_control().then_some(t.aew),
        }
    }
}

impl TaskSetFile {
    /// Priorities are explicit when every record carries one and
    /// rate-monotonic when none does; a mix is rejected.
    pub fn into_taskset(self) -> Result<TaskSet> {
        let given = self.tasks.iter().filter(|t| t.priority.is_some()).count();
        if given != 0 && given != self.tasks.len() {
            return Err(Error::Invalid(vec![format!(
                "priorities given for {given} of {} tasks; give all or none",
                self.tasks.len()
            )]));
        }
        let tasks = self
            .tasks
            .iter()
            .map(|r| TaskSpec {
                id: r.id,
                period: r.period_ms,
                wcet: r.wcet_ms,
                deadline: r.deadline_ms,
                priority: r.priority.unwrap_or(0),
                trust: r.trust,
                kind: r.kind,
                aew: r.aew_ms.unwrap_or(0),
            })
            .collect();
        let mut ts = TaskSet::new(tasks)?;
        if given == 0 {
            ts = assign_rm_priorities(&ts);
        }
        ensure_valid(&ts)?;
        Ok(ts)
    }
}

pub fn taskset_to_file(ts: &TaskSet) -> TaskSetFile {
    TaskSetFile {
        tasks: ts.tasks().iter().map(TaskRecord::from).collect(),
    }
}

pub fn parse_taskset(text: &str) -> Result<TaskSet> {
    serde_json::from_str::<TaskSetFile>(text)?.into_taskset()
}

pub fn taskset_to_string(ts: &TaskSet) -> String {
    serde_json::to_string_pretty(&taskset_to_file(ts)).expect("task records always serialize")
}

pub fn read_taskset(path: &Path) -> Result<TaskSet> {
    parse_taskset(&std::fs::read_to_string(path)?)
}

/// A single object or a list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

/// Plant file: one plant object or a list. Matrices are row-major nested
/// lists.
pub fn parse_plants(text: &str) -> Result<Vec<PlantModel>> {
    let plants: Vec<PlantModel> = serde_json::from_str::<OneOrMany<PlantModel>>(text)?.into();
    for p in &plants {
        p.check()?;
    }
    Ok(plants)
}

pub fn read_plants(path: &Path) -> Result<Vec<PlantModel>> {
    parse_plants(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRecord {
    victim: TaskId,
    delays: Vec<Millis>,
}

/// Delay-sequence file: `{"victim": id, "delays": [...]}` or a list of
/// such objects. Each sequence is checked against the task set.
pub fn parse_sequences(text: &str, ts: &TaskSet) -> Result<Vec<DelaySequence>> {
    let records: Vec<SequenceRecord> = serde_json::from_str::<OneOrMany<SequenceRecord>>(text)?.into();
    records
        .into_iter()
        .map(|r| DelaySequence::new(ts, r.victim, r.delays))
        .collect()
}

pub fn read_sequences(path: &Path, ts: &TaskSet) -> Result<Vec<DelaySequence>> {
    parse_sequences(&std::fs::read_to_string(path)?, ts)
}

pub fn sequences_to_string(seqs: &[DelaySequence]) -> String {
    let text = if seqs.len() == 1 {
        serde_json::to_string_pretty(&seqs[0])
    } else {
        serde_json::to_string_pretty(seqs)
    };
    text.expect("delay sequences always serialize") + "\n"
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

/// Plot-ready samples of every loop:
/// `t,task,x_*,xhat_*,u_*,J_cumulative,g,Th`.
pub fn samples_csv(report: &RunReport) -> String {
    let mut out = String::new();
    for l in &report.loops {
        let Some(first) = l.samples.first() else { continue };
        let (n, p) = (first.x.len(), first.u.len());
        let mut header = vec!["t".to_string(), "task".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("xhat{i}")));
        header.extend((0..p).map(|i| format!("u{i}")));
        header.extend(["J_cumulative", "g", "Th"].map(String::from));
        if out.is_empty() {
            out.push_str(&header.join(","));
            out.push('\n');
        }
        for s in &l.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.time as f64 / 1000.0,
                l.task,
                join(&s.x),
                join(&s.x_hat),
                join(&s.u),
                s.cost,
                s.g,
                s.threshold
            );
        }
    }
    out
}
