//! Dense two-phase primal simplex with Bland's rule.
//!
//! Sized for the handful of variables a device split needs; every variable is
//! implicitly `>= 0`.

use crate::error::{Error, Result};

pub const ITERATION_CAP: usize = 1_000_000;
const EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Constraint {
            coeffs,
            relation,
            rhs,
        }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(x);
        let scale = tol * (1.0 + self.rhs.abs().max(lhs.abs()));
        match self.relation {
            Relation::Eq => (lhs - self.rhs).abs() <= scale,
            Relation::Ge => lhs >= self.rhs - scale,
            Relation::Le => lhs <= self.rhs + scale,
        }
    }
}

/// Minimize `objective . x` subject to `constraints`, `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    /// `rows x (cols + 1)`; last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.a[r][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        self.a[row][col] = 1.0;
        let pivot_row = self.a[row].clone();
        for (r, line) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Reduced costs of `cost` against the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.a[r][j];
                }
            }
        }
        d
    }

    /// One Bland's-rule iteration restricted to `allowed` columns.
    fn step(&mut self, cost: &[f64], allowed: usize) -> Step {
        let d = self.reduced_costs(cost);
        let scale = 1.0 + cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let Some(enter) = (0..allowed).find(|&j| d[j] < -EPS * scale) else {
            return Step::Optimal;
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.a.len() {
            let coef = self.a[r][enter];
            if coef > EPS {
                let ratio = self.rhs(r) / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= EPS * (1.0 + lratio.abs());
                        if (!tie && ratio < lratio) || (tie && self.basis[r] < self.basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        match leave {
            None => Step::Unbounded,
            Some((row, _)) => {
                self.pivot(row, enter);
                Step::Pivoted
            }
        }
    }

    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<bool> {
        loop {
            if self.iterations >= ITERATION_CAP {
                return Err(Error::NumericalFailure(format!(
                    "simplex exceeded {ITERATION_CAP} iterations"
                )));
            }
            match self.step(cost, allowed) {
                Step::Optimal => return Ok(true),
                Step::Unbounded => return Ok(false),
                Step::Pivoted => {}
            }
        }
    }
}

/// Sparse terms, relation, right-hand side.
type Row = (Vec<(usize, f64)>, Relation, f64);

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars;
    if lp.objective.len() != n {
        return Err(Error::Invariant("objective length != num_vars".into()));
    }
    // Normalize to non-negative right-hand sides.
    let rows: Vec<Row> = lp
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Eq => Relation::Eq,
                    Relation::Ge => Relation::Le,
                    Relation::Le => Relation::Ge,
                };
                (
                    c.coeffs.iter().map(|&(j, a)| (j, -a)).collect(),
                    flipped,
                    -c.rhs,
                )
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            }
        })
        .collect();

    let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let art_count = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let first_art = n + slack_count;
    let cols = first_art + art_count;

    let mut a = Vec::with_capacity(rows.len());
    let mut basis = Vec::with_capacity(rows.len());
    let (mut next_slack, mut next_art) = (n, first_art);
    for (coeffs, rel, rhs) in &rows {
        let mut line = vec![0.0; cols + 1];
        for &(j, v) in coeffs {
            if j >= n {
                return Err(Error::Invariant(format!(
                    "constraint references variable {j} >= {n}"
                )));
            }
            line[j] += v;
        }
        line[cols] = *rhs;
        match rel {
            Relation::Le => {
                line[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                line[next_slack] = -1.0;
                next_slack += 1;
                line[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                line[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        a.push(line);
    }
    let mut t = Tableau {
        a,
        basis,
        cols,
        iterations: 0,
    };

    // Phase 1: minimize the sum of artificials.
    if art_count > 0 {
        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        t.optimize(&cost, cols)?;
        let infeasibility: f64 = t
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= first_art)
            .map(|(r, _)| t.rhs(r))
            .sum();
        let rhs_scale = 1.0 + rows.iter().fold(0.0f64, |m, r| m.max(r.2));
        if infeasibility > 1e-9 * rhs_scale {
            return Err(Error::Infeasible);
        }
        // Drive zero-level artificials out of the basis, dropping redundant rows.
        let mut r = 0;
        while r < t.a.len() {
            if t.basis[r] >= first_art {
                match (0..first_art).find(|&j| t.a[r][j].abs() > 1e-9) {
                    Some(j) => t.pivot(r, j),
                    None => {
                        t.a.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    // Phase 2 over structural and slack columns only.
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    if !t.optimize(&cost, first_art)? {
        return Err(Error::NumericalFailure("objective is unbounded".into()));
    }

    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(r).max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        iterations: t.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(num_vars: usize, objective: Vec<f64>, constraints: Vec<Constraint>) -> LinearProgram {
        LinearProgram {
            num_vars,
            objective,
            constraints,
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let p = lp(
            2,
            vec![-3.0, -5.0],
            vec![
                Constraint::new(vec![(0, 1.0)], Relation::Le, 4.0),
                Constraint::new(vec![(1, 2.0)], Relation::Le, 12.0),
                Constraint::new(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0),
            ],
        );
        let s = solve(&p).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective + 36.0).abs() < 1e-12);
    }

    #[test]
    fn min_max_split() {
        // min T s.t. T >= 1*x0, T >= 2*x1, x0 + x1 = 3 -> x0 = 2, x1 = 1, T = 2.
        let p = lp(
            3,
            vec![0.0, 0.0, 1.0],
            vec![
                Constraint::new(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 3.0),
                Constraint::new(vec![(2, 1.0), (0, -1.0)], Relation::Ge, 0.0),
                Constraint::new(vec![(2, 1.0), (1, -2.0)], Relation::Ge, 0.0),
            ],
        );
        let s = solve(&p).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!((s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = lp(
            1,
            vec![1.0],
            vec![
                Constraint::new(vec![(0, 1.0)], Relation::Le, 1.0),
                Constraint::new(vec![(0, 1.0)], Relation::Ge, 2.0),
            ],
        );
        assert!(matches!(solve(&p), Err(Error::Infeasible)));
        let p = lp(
            1,
            vec![-1.0],
            vec![Constraint::new(vec![(0, 1.0)], Relation::Ge, 1.0)],
        );
        assert!(matches!(solve(&p), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn redundant_equalities() {
        let p = lp(
            2,
            vec![1.0, 2.0],
            vec![
                Constraint::new(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0),
                Constraint::new(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0),
            ],
        );
        let s = solve(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_flip() {
        // -x <= -3  <=>  x >= 3.
        let p = lp(
            1,
            vec![1.0],
            vec![Constraint::new(vec![(0, -1.0)], Relation::Le, -3.0)],
        );
        let s = solve(&p).unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook largest-coefficient rule.
        let p = lp(
            4,
            vec![-0.75, 150.0, -0.02, 6.0],
            vec![
                Constraint::new(
                    vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)],
                    Relation::Le,
                    0.0,
                ),
                Constraint::new(
                    vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)],
                    Relation::Le,
                    0.0,
                ),
                Constraint::new(vec![(2, 1.0)], Relation::Le, 1.0),
            ],
        );
        let s = solve(&p).unwrap();
        assert!((s.objective + 0.05).abs() < 1e-12, "{}", s.objective);
    }
}
