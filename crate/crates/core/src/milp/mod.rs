//! Big-M mixed-integer formulation of the overlap objective, an exact
//! branch-and-bound solver for it, a linearization checker and an LP-format
//! writer.

mod bnb;
pub mod simplex;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::Millis;
use crate::overlap::OverlapProblem;
use simplex::{LinearProgram, LpOutcome, Row, Sense};

pub use bnb::{solve_milp, BnbStats, MilpSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub upper: f64,
}

/// Constraint families, one per linearized inequality plus the delay box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    AGeVictim,
    AGeUntrusted,
    ALeVictim,
    ALeUntrusted,
    BLeVictim,
    BLeUntrusted,
    BGeVictim,
    BGeUntrusted,
    ZNonneg,
    ZGeDiff,
    ZLeDiff,
    ZLeBigM,
    DelayLower,
    DelayUpper,
}

impl Family {
    pub fn is_linearization(self) -> bool {
        !matches!(self, Self::DelayLower | Self::DelayUpper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub family: Family,
    pub coeffs: Vec<(usize, f64)>,
    #[serde(skip)]
    pub sense: Sense,
    pub rhs: f64,
}

/// Variable indices of one (victim job, untrusted task, untrusted job)
/// triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Triple {
    pub k: u32,
    pub j: usize,
    pub m: u32,
    pub a: usize,
    pub b: usize,
    pub z: usize,
    pub ya: usize,
    pub yb: usize,
    pub o: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpInstance {
    pub big_m: f64,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Objective coefficients (all z variables with weight 1).
    pub objective: Vec<(usize, f64)>,
    pub triples: Vec<Triple>,
    /// `delays[k - 1]` is the index of δ_k.
    pub delays: Vec<usize>,
    pub problem: OverlapProblem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MilpCounts {
    pub continuous_auxiliary: usize,
    pub delay_variables: usize,
    pub binaries: usize,
    pub linearization_constraints: usize,
    pub delay_constraints: usize,
    pub per_family: BTreeMap<Family, usize>,
}

pub fn build_milp(problem: &OverlapProblem) -> MilpInstance {
    build_milp_with_big_m(problem, problem.big_m() as f64)
}

/// Builds the instance with an explicit Big-M; a too-small value produces
/// an instance that no longer represents the overlap exactly.
pub fn build_milp_with_big_m(problem: &OverlapProblem, big_m: f64) -> MilpInstance {
    let mut variables = Vec::new();
    let mut add = |name: String, kind: VarKind, upper: f64| {
        variables.push(Variable { name, kind, upper });
        variables.len() - 1
    };
    let n = problem.victim_jobs();
    let delays: Vec<usize> = (1..=n)
        .map(|k| add(format!("d_{k}"), VarKind::Continuous, f64::INFINITY))
        .collect();
    let mut triples = Vec::new();
    for k in 1..=n {
        for (j, u) in problem.untrusted.iter().enumerate() {
            for m in 1..=u.jobs(problem.hyperperiod) {
                let tag = format!("{k}_{}_{m}", u.id);
                triples.push(Triple {
                    k,
                    j,
                    m,
                    a: add(format!("a_{tag}"), VarKind::Continuous, big_m),
                    b: add(format!("b_{tag}"), VarKind::Continuous, big_m),
                    z: add(format!("z_{tag}"), VarKind::Continuous, big_m),
                    ya: add(format!("ya_{tag}"), VarKind::Binary, 1.0),
                    yb: add(format!("yb_{tag}"), VarKind::Binary, 1.0),
                    o: add(format!("o_{tag}"), VarKind::Binary, 1.0),
                });
            }
        }
    }

    let mut constraints = Vec::new();
    let mut c = |family, coeffs: Vec<(usize, f64)>, sense, rhs: f64| {
        constraints.push(Constraint {
            family,
            coeffs,
            sense,
            rhs,
        })
    };
    let bm = big_m;
    let (start, end) = (problem.aew_start_offset() as f64, problem.aew_end_offset() as f64);
    for t in &triples {
        use Family::*;
        use Sense::*;
        let d = delays[t.k as usize - 1];
        let ri = problem.victim_release(t.k) as f64;
        let rj = problem.untrusted_release(t.j, t.m) as f64;
        let rj_end = rj + problem.untrusted[t.j].response as f64;
        c(AGeVictim, vec![(t.a, 1.0), (d, -1.0)], Ge, ri + start);
        c(AGeUntrusted, vec![(t.a, 1.0)], Ge, rj);
        c(ALeVictim, vec![(t.a, 1.0), (d, -1.0), (t.ya, bm)], Le, ri + start + bm);
        c(ALeUntrusted, vec![(t.a, 1.0), (t.ya, -bm)], Le, rj);
        c(BLeVictim, vec![(t.b, 1.0), (d, -1.0)], Le, ri + end);
        c(BLeUntrusted, vec![(t.b, 1.0)], Le, rj_end);
        c(BGeVictim, vec![(t.b, 1.0), (d, -1.0), (t.yb, -bm)], Ge, ri + end - bm);
        c(BGeUntrusted, vec![(t.b, 1.0), (t.yb, bm)], Ge, rj_end);
        c(ZNonneg, vec![(t.z, 1.0)], Ge, 0.0);
        c(ZGeDiff, vec![(t.z, 1.0), (t.b, -1.0), (t.a, 1.0)], Ge, 0.0);
        c(ZLeDiff, vec![(t.z, 1.0), (t.b, -1.0), (t.a, 1.0), (t.o, bm)], Le, bm);
        c(ZLeBigM, vec![(t.z, 1.0), (t.o, -bm)], Le, 0.0);
    }
    for &d in &delays {
        c(Family::DelayLower, vec![(d, 1.0)], Sense::Ge, 0.0);
        c(Family::DelayUpper, vec![(d, 1.0)], Sense::Le, problem.max_delay as f64);
    }
    let objective = triples.iter().map(|t| (t.z, 1.0)).collect();
    MilpInstance {
        big_m,
        variables,
        constraints,
        objective,
        triples,
        delays,
        problem: problem.clone(),
    }
}

impl MilpInstance {
    pub fn counts(&self) -> MilpCounts {
        let mut per_family = BTreeMap::new();
        for c in &self.constraints {
            *per_family.entry(c.family).or_insert(0) += 1;
        }
        let binaries = self.variables.iter().filter(|v| v.kind == VarKind::Binary).count();
        MilpCounts {
            continuous_auxiliary: 3 * self.triples.len(),
            delay_variables: self.delays.len(),
            binaries,
            linearization_constraints: self.constraints.iter().filter(|c| c.family.is_linearization()).count(),
            delay_constraints: self.constraints.iter().filter(|c| !c.family.is_linearization()).count(),
            per_family,
        }
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| i)
    }

    /// The whole instance as a linear relaxation.
    pub fn relaxation(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.variables.len());
        for &(i, c) in &self.objective {
            lp.objective[i] += c;
        }
        lp.upper = self.variables.iter().map(|v| v.upper).collect();
        lp.rows = self
            .constraints
            .iter()
            .map(|c| Row {
                coeffs: c.coeffs.clone(),
                sense: c.sense,
                rhs: c.rhs,
            })
            .collect();
        lp
    }

    /// Binaries whose value is implied (or can be fixed without losing an
    /// optimum) for every δ in the delay box.
    pub fn propagate_fixings(&self) -> Vec<(usize, f64)> {
        let p = &self.problem;
        let (start, end) = (p.aew_start_offset(), p.aew_end_offset());
        let mut fixed = Vec::new();
        for t in &self.triples {
            let ri = p.victim_release(t.k);
            let rj = p.untrusted_release(t.j, t.m);
            let rj_end = rj + p.untrusted[t.j].response;
            let (f_lo, f_hi) = (ri + start, ri + start + p.max_delay);
            let (g_lo, g_hi) = (ri + end, ri + end + p.max_delay);
            if rj >= f_hi {
                fixed.push((t.ya, 0.0));
            } else if rj <= f_lo {
                fixed.push((t.ya, 1.0));
            }
            if rj_end <= g_lo {
                fixed.push((t.yb, 0.0));
            } else if rj_end >= g_hi {
                fixed.push((t.yb, 1.0));
            }
            let diff_hi = g_hi.min(rj_end) - f_lo.max(rj);
            let diff_lo = g_lo.min(rj_end) - f_hi.max(rj);
            if diff_hi <= 0 {
                fixed.push((t.o, 0.0));
            } else if diff_lo >= 0 {
                fixed.push((t.o, 1.0));
            }
        }
        fixed
    }

    /// Checks that, for the given delays, each triple's constraints admit a
    /// completion and the smallest feasible `z` equals the direct overlap.
    pub fn verify_linearization(&self, delays: &[Millis]) -> bool {
        if delays.len() != self.delays.len() || delays.iter().any(|&d| d < 0 || d > self.problem.max_delay) {
            return false;
        }
        let mut rows_of: BTreeMap<usize, Vec<&Constraint>> = BTreeMap::new();
        for c in &self.constraints {
            if c.family.is_linearization() {
                // every linearization row touches its triple's z, a or b
                let owner = c.coeffs.iter().map(|&(i, _)| i).find(|i| !self.delays.contains(i));
                if let Some(v) = owner {
                    rows_of.entry(v).or_default().push(c);
                }
            }
        }
        self.triples.iter().all(|t| {
            let delay = delays[t.k as usize - 1] as f64;
            let own: Vec<&Constraint> = [t.a, t.b, t.z]
                .iter()
                .flat_map(|v| rows_of.get(v).into_iter().flatten().copied())
                .collect();
            let want = self.problem.overlap_term(t.k, delays[t.k as usize - 1], t.j, t.m) as f64;
            let mut best: Option<f64> = None;
            for bits in 0..8u8 {
                let fixed = |v: usize| -> Option<f64> {
                    if v == self.delays[t.k as usize - 1] {
                        Some(delay)
                    } else if v == t.ya {
                        Some((bits & 1) as f64)
                    } else if v == t.yb {
                        Some(((bits >> 1) & 1) as f64)
                    } else if v == t.o {
                        Some(((bits >> 2) & 1) as f64)
                    } else {
                        None
                    }
                };
                let local = |v: usize| [t.a, t.b, t.z].iter().position(|&x| x == v);
                let mut lp = LinearProgram::new(3);
                lp.objective[2] = 1.0;
                lp.upper = vec![self.big_m; 3];
                for c in &own {
                    let mut rhs = c.rhs;
                    let mut coeffs = Vec::new();
                    for &(v, a) in &c.coeffs {
                        match (fixed(v), local(v)) {
                            (Some(x), _) => rhs -= a * x,
                            (None, Some(l)) => coeffs.push((l, a)),
                            (None, None) => unreachable!("row leaves its triple"),
                        }
                    }
                    lp.rows.push(Row {
                        coeffs,
                        sense: c.sense,
                        rhs,
                    });
                }
                if let LpOutcome::Optimal { value, .. } = lp.solve() {
                    best = Some(best.map_or(value, |b: f64| b.min(value)));
                }
            }
            matches!(best, Some(v) if (v - want).abs() < 1e-6)
        })
    }

    /// CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let name = |i: usize| &self.variables[i].name;
        let term = |i: usize, c: f64| {
            let sign = if c < 0.0 { "-" } else { "+" };
            format!("{sign} {} {}", c.abs(), name(i))
        };
        let mut s = String::new();
        let _ = writeln!(s, "\\ overlap minimization for victim task {}", self.problem.victim);
        let _ = writeln!(s, "Minimize");
        let obj: Vec<String> = self.objective.iter().map(|&(i, c)| term(i, c)).collect();
        let _ = writeln!(s, " obj: {}", if obj.is_empty() { "0 d_1".into() } else { obj.join(" ") });
        let _ = writeln!(s, "Subject To");
        for (n, c) in self.constraints.iter().enumerate() {
            let lhs: Vec<String> = c.coeffs.iter().map(|&(i, a)| term(i, a)).collect();
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " c{}: {} {op} {}", n + 1, lhs.join(" "), c.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for v in &self.variables {
            if v.kind == VarKind::Continuous {
                if v.upper.is_finite() {
                    let _ = writeln!(s, " 0 <= {} <= {}", v.name, v.upper);
                } else {
                    let _ = writeln!(s, " {} >= 0", v.name);
                }
            }
        }
        let _ = writeln!(s, "Binaries");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Binary) {
            let _ = writeln!(s, " {}", v.name);
        }
        let _ = writeln!(s, "End");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::{OverlapConventions, UntrustedTask};
    use crate::scenarios;

    fn minimal() -> OverlapProblem {
        OverlapProblem {
            victim: 1,
            period: 10,
            wcet: 2,
            aew: 5,
            max_delay: 3,
            victim_response: 2,
            hyperperiod: 10,
            untrusted: vec![UntrustedTask { id: 2, period: 10, wcet: 1, response: 3 }],
            conventions: OverlapConventions::default(),
        }
    }

    #[test]
    fn minimal_instance_counts() {
        let c = build_milp(&minimal()).counts();
        assert_eq!(c.continuous_auxiliary, 3);
        assert_eq!(c.binaries, 3);
        assert_eq!(c.linearization_constraints, 12);
        assert_eq!(c.delay_constraints, 2);
    }

    #[test]
    fn case_study_counts() {
        let ts = scenarios::table2_rm();
        let p = OverlapProblem::new(&ts, 3, 8, OverlapConventions::case_study()).unwrap();
        let c = build_milp(&p).counts();
        assert_eq!(c.continuous_auxiliary + c.delay_variables, 280);
        assert_eq!(c.linearization_constraints, 1080);
        assert_eq!(c.binaries, 270);
    }

    #[test]
    fn no_untrusted_jobs_leaves_only_delay_box() {
        let mut p = minimal();
        p.untrusted.clear();
        let inst = build_milp(&p);
        assert!(inst.objective.is_empty());
        assert!(inst.constraints.iter().all(|c| !c.family.is_linearization()));
        assert!(inst.verify_linearization(&[2]));
    }

    #[test]
    fn big_m_rule() {
        let p = minimal();
        assert_eq!(build_milp(&p).big_m, (10 + 3 + 2 + 5) as f64);
    }

    #[test]
    fn verifies_every_delay_of_minimal_instance() {
        let inst = build_milp(&minimal());
        for d in 0..=3 {
            assert!(inst.verify_linearization(&[d]));
        }
        assert!(!inst.verify_linearization(&[4]));
    }

    #[test]
    fn too_small_big_m_is_detected() {
        let ts = scenarios::table2_rm();
        let p = OverlapProblem::new(&ts, 3, 8, OverlapConventions::case_study()).unwrap();
        let inst = build_milp_with_big_m(&p, 50.0);
        assert!(!inst.verify_linearization(&[0; 10]));
    }

    #[test]
    fn lp_dump_lists_all_sections() {
        let text = build_milp(&minimal()).to_lp_format();
        for section in ["Minimize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section), "{section}");
        }
        assert!(text.matches(" c").count() >= 14);
        assert!(text.contains("ya_1_2_1"));
    }
}
