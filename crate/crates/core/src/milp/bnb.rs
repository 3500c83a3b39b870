use serde::Serialize;

use super::simplex::{LinearProgram, LpOutcome, Row};
use super::MilpInstance;
use crate::model::Millis;

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BnbStats {
    pub components: usize,
    pub nodes: usize,
    pub fixed_by_propagation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpSolution {
    pub objective: f64,
    pub delays: Vec<Millis>,
    pub values: Vec<f64>,
    pub stats: BnbStats,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Exact solve of the instance. Binaries implied by the delay box are fixed
/// up front, the constraint graph is split into independent components and
/// each component is solved by depth-first branch-and-bound on its LP
/// relaxation. The objective has integer coefficients over integer data, so
/// relaxation bounds are rounded up before pruning.
pub fn solve_milp(inst: &MilpInstance) -> Option<MilpSolution> {
    let full = inst.relaxation();
    let n = full.vars();
    let is_binary: Vec<bool> = {
        let mut v = vec![false; n];
        inst.binaries().for_each(|i| v[i] = true);
        v
    };
    let mut lower = full.lower.clone();
    let mut upper = full.upper.clone();
    let fixings = inst.propagate_fixings();
    for &(i, v) in &fixings {
        lower[i] = v;
        upper[i] = v;
    }

    let mut parent: Vec<usize> = (0..n).collect();
    for r in &full.rows {
        for w in r.coeffs.windows(2) {
            let (a, b) = (find(&mut parent, w[0].0), find(&mut parent, w[1].0));
            parent[a] = b;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let root = find(&mut parent, v);
        groups.entry(root).or_default().push(v);
    }

    let mut stats = BnbStats {
        components: groups.len(),
        fixed_by_propagation: fixings.len(),
        ..Default::default()
    };
    let mut values = vec![0.0; n];
    let mut objective = 0.0;
    for vars in groups.values() {
        let mut local = vec![usize::MAX; n];
        for (l, &g) in vars.iter().enumerate() {
            local[g] = l;
        }
        let mut lp = LinearProgram::new(vars.len());
        for (l, &g) in vars.iter().enumerate() {
            lp.objective[l] = full.objective[g];
            lp.lower[l] = lower[g];
            lp.upper[l] = upper[g];
        }
        lp.rows = full
            .rows
            .iter()
            .filter(|r| r.coeffs.first().is_some_and(|&(v, _)| local[v] != usize::MAX))
            .map(|r| Row {
                coeffs: r.coeffs.iter().map(|&(v, c)| (local[v], c)).collect(),
                sense: r.sense,
                rhs: r.rhs,
            })
            .collect();
        let binaries: Vec<usize> = vars
            .iter()
            .enumerate()
            .filter(|(_, &g)| is_binary[g])
            .map(|(l, _)| l)
            .collect();
        let (value, x) = branch_and_bound(lp, &binaries, &mut stats.nodes)?;
        objective += value;
        for (l, &g) in vars.iter().enumerate() {
            values[g] = x[l];
        }
    }
    let delays = inst.delays.iter().map(|&d| values[d].round() as Millis).collect();
    Some(MilpSolution {
        objective,
        delays,
        values,
        stats,
    })
}

fn branch_and_bound(root: LinearProgram, binaries: &[usize], nodes: &mut usize) -> Option<(f64, Vec<f64>)> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stack = vec![(root.lower.clone(), root.upper.clone())];
    let mut lp = root;
    while let Some((lo, hi)) = stack.pop() {
        *nodes += 1;
        lp.lower = lo;
        lp.upper = hi;
        let LpOutcome::Optimal { x, value } = lp.solve() else {
            continue;
        };
        let bound = (value - INT_TOL).ceil();
        if best.as_ref().is_some_and(|(b, _)| bound >= *b - INT_TOL) {
            continue;
        }
        let branch = binaries
            .iter()
            .map(|&i| (i, (x[i] - x[i].round()).abs()))
            .filter(|&(_, f)| f > INT_TOL)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match branch {
            None => best = Some((value, x)),
            Some((i, _)) => {
                let mut down = (lp.lower.clone(), lp.upper.clone());
                down.1[i] = 0.0;
                let mut up = (lp.lower.clone(), lp.upper.clone());
                up.0[i] = 1.0;
                // explore the side the relaxation leans toward first
                if x[i] >= 0.5 {
                    stack.push(down);
                    stack.push(up);
                } else {
                    stack.push(up);
                    stack.push(down);
                }
            }
        }
    }
    best
}
