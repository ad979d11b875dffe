//! Dense two-phase simplex for the small relaxations solved by the
//! branch-and-bound planner.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub n: usize,
    /// Minimised objective.
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Cmp, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-9;

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self { n, c: vec![0.0; n], rows: Vec::new() }
    }

    pub fn add(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n);
        self.rows.push((coeffs, cmp, rhs));
    }

    /// Minimises over x ≥ 0.
    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    // m constraint rows then the objective row; last column is the rhs
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    n_struct: usize,
    artificial: Vec<usize>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let slacks = lp.rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        // normalise to b >= 0 first so we know which rows need artificials
        let rows: Vec<(Vec<f64>, Cmp, f64)> = lp
            .rows
            .iter()
            .map(|(a, cmp, b)| {
                if *b < 0.0 {
                    let flipped = match cmp {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (a.clone(), *cmp, *b)
                }
            })
            .collect();
        let arts = rows.iter().filter(|r| r.1 != Cmp::Le).count();
        let width = lp.n + slacks + arts + 1;
        let mut t = vec![vec![0.0; width]; m + 1];
        let mut basis = vec![0; m];
        let mut artificial = Vec::new();
        let (mut s, mut a) = (lp.n, lp.n + slacks);
        for (i, (coeffs, cmp, b)) in rows.iter().enumerate() {
            t[i][..lp.n].copy_from_slice(coeffs);
            t[i][width - 1] = *b;
            match cmp {
                Cmp::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Cmp::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    artificial.push(a);
                    a += 1;
                }
                Cmp::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    artificial.push(a);
                    a += 1;
                }
            }
        }
        Self { t, basis, width, n_struct: lp.n, artificial }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.t[row][col];
        for j in 0..w {
            self.t[row][j] /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f.abs() > 0.0 {
                for j in 0..w {
                    r[j] -= f * pivot_row[j];
                }
            }
        }
        self.basis[row] = col;
    }

    /// Loads `cost` into the objective row, priced out against the basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let m = self.m();
        let w = self.width;
        let mut obj = vec![0.0; w];
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..w {
                    obj[j] -= cb * self.t[i][j];
                }
            }
        }
        self.t[m] = obj;
    }

    /// Returns false when unbounded.
    fn optimise(&mut self, allowed: &dyn Fn(usize) -> bool) -> bool {
        let m = self.m();
        let w = self.width;
        let mut iterations = 0usize;
        loop {
            iterations += 1;
            let bland = iterations > 50 * (m + w);
            let mut col = None;
            let mut best = -EPS;
            for j in 0..w - 1 {
                if !allowed(j) {
                    continue;
                }
                let rc = self.t[m][j];
                if rc < best {
                    col = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = col else { return true };
            let mut row = None;
            let mut ratio = f64::INFINITY;
            for i in 0..m {
                let a = self.t[i][col];
                if a > EPS {
                    let r = self.t[i][w - 1] / a;
                    if r < ratio - EPS || (row.is_some() && (r - ratio).abs() <= EPS && self.basis[i] < self.basis[row.unwrap()]) {
                        ratio = r;
                        row = Some(i);
                    }
                }
            }
            let Some(row) = row else { return false };
            self.pivot(row, col);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let m = self.m();
        let w = self.width;
        if !self.artificial.is_empty() {
            let mut cost = vec![0.0; w - 1];
            for &a in &self.artificial {
                cost[a] = 1.0;
            }
            self.set_objective(&cost);
            self.optimise(&|_| true);
            if -self.t[m][w - 1] > 1e-7 {
                return LpOutcome::Infeasible;
            }
            // drive remaining artificials out of the basis where possible
            let first_art = self.artificial[0];
            for i in 0..m {
                if self.basis[i] >= first_art {
                    if let Some(j) = (0..first_art).find(|&j| self.t[i][j].abs() > EPS) {
                        self.pivot(i, j);
                    }
                }
            }
        }
        let first_art = self.artificial.first().copied().unwrap_or(w - 1);
        self.set_objective(&lp.c);
        if !self.optimise(&|j| j < first_art) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; self.n_struct];
        for i in 0..m {
            if self.basis[i] < self.n_struct {
                x[self.basis[i]] = self.t[i][w - 1];
            }
        }
        let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { x, objective }
    }
}
