//! Dense two-phase primal simplex with Bland's rule. Sized for the small
//! per-component relaxations produced by the overlap MILP.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cᵀx` subject to the rows and `lower ≤ x ≤ upper` (infinite upper
/// bounds allowed, lower bounds finite and non-negative).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    /// Row-major `m × (cols + 1)`; the last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    artificial_from: usize,
}

impl Tableau {
    /// Shifts `x = lower + x'`, turns finite upper bounds into rows and
    /// adds slack, surplus and artificial columns.
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.vars();
        let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
        for r in &lp.rows {
            let mut dense = vec![0.0; n];
            let mut rhs = r.rhs;
            for &(j, c) in &r.coeffs {
                dense[j] += c;
                rhs -= c * lp.lower[j];
            }
            rows.push((dense, r.sense, rhs));
        }
        for j in 0..n {
            if lp.upper[j].is_finite() {
                let mut dense = vec![0.0; n];
                dense[j] = 1.0;
                rows.push((dense, Sense::Le, lp.upper[j] - lp.lower[j]));
            }
        }
        for (dense, sense, rhs) in &mut rows {
            if *rhs < 0.0 {
                dense.iter_mut().for_each(|c| *c = -*c);
                *rhs = -*rhs;
                *sense = match sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
        }
        let m = rows.len();
        let slacks = rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let artificials = rows.iter().filter(|r| r.1 != Sense::Le).count();
        let artificial_from = n + slacks;
        let cols = artificial_from + artificials;
        let mut t = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let (mut s, mut a) = (n, artificial_from);
        for (i, (dense, sense, rhs)) in rows.into_iter().enumerate() {
            t[i][..n].copy_from_slice(&dense);
            t[i][cols] = rhs;
            match sense {
                Sense::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Sense::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Sense::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }
        Self {
            t,
            basis,
            cols,
            artificial_from,
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f.abs() > 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Minimizes `cost` over columns `< limit`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], limit: usize) -> bool {
        let rhs = self.cols;
        loop {
            let mut in_basis = vec![false; self.cols];
            self.basis.iter().for_each(|&b| in_basis[b] = true);
            let entering = (0..limit).find(|&j| {
                if in_basis[j] {
                    return false;
                }
                let d = cost[j] - self.t.iter().zip(&self.basis).map(|(r, &b)| cost[b] * r[j]).sum::<f64>();
                d < -EPS
            });
            let Some(col) = entering else { return true };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, r) in self.t.iter().enumerate() {
                if r[col] > EPS {
                    let ratio = r[rhs] / r[col];
                    let better = match best {
                        None => true,
                        Some((br, _, bb)) => ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < bb),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            let Some((_, row, _)) = best else { return false };
            self.pivot(row, col);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let n = lp.vars();
        let rhs = self.cols;
        if self.artificial_from < self.cols {
            let mut cost = vec![0.0; self.cols];
            cost[self.artificial_from..].iter_mut().for_each(|c| *c = 1.0);
            self.optimize(&cost, self.cols);
            let infeas: f64 = self
                .t
                .iter()
                .zip(&self.basis)
                .filter(|(_, &b)| b >= self.artificial_from)
                .map(|(r, _)| r[rhs])
                .sum();
            let scale = 1.0 + self.t.iter().map(|r| r[rhs].abs()).fold(0.0, f64::max);
            if infeas > 1e-7 * scale {
                return LpOutcome::Infeasible;
            }
            // drive remaining artificials out of the basis
            let mut i = 0;
            while i < self.t.len() {
                if self.basis[i] >= self.artificial_from {
                    match (0..self.artificial_from).find(|&j| self.t[i][j].abs() > EPS) {
                        Some(j) => self.pivot(i, j),
                        None => {
                            self.t.remove(i);
                            self.basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }
        let mut cost = vec![0.0; self.cols];
        cost[..n].copy_from_slice(&lp.objective);
        if !self.optimize(&cost, self.artificial_from) {
            return LpOutcome::Unbounded;
        }
        let mut x = lp.lower.clone();
        for (r, &b) in self.t.iter().zip(&self.basis) {
            if b < n {
                x[b] += r[rhs];
            }
        }
        let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, value }
    }
}
