//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Slow but short enough to audit, and it shares no code with HiGHS, which
//! makes it useful as a second opinion on small problems.

use std::time::Instant;

use super::{LpProblem, LpSolution, LpSolver, LpStatus, SolveOptions};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    /// Refuse problems whose standard form has more columns than this.
    pub max_columns: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self { max_columns: 4000 }
    }
}

/// How an original variable maps onto non-negative standard-form columns.
#[derive(Clone, Copy)]
enum Map {
    /// `x = lower + y`
    Shifted(usize, f64),
    /// `x = upper - y`
    Mirrored(usize, f64),
    /// `x = y⁺ - y⁻`
    Split(usize, usize),
}

struct Tableau {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost · y` over the current basis, considering only columns
    /// allowed by `eligible`.
    fn optimize(
        &mut self,
        cost: &[f64],
        eligible: &dyn Fn(usize) -> bool,
        tol: f64,
        iterations: &mut u64,
        limit: u64,
    ) -> Outcome {
        loop {
            // Reduced costs d_j = c_j - c_B B⁻¹ a_j.
            let mut entering = None;
            for j in 0..self.cols {
                if !eligible(j) || self.basis.contains(&j) {
                    continue;
                }
                let d = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| cost[b] * self.t[i][j])
                        .sum::<f64>();
                if d < -tol {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return Outcome::Optimal;
            };
            if *iterations >= limit {
                return Outcome::IterationLimit;
            }
            let rhs = self.cols;
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][c];
                if a > tol {
                    let ratio = self.t[i][rhs] / a;
                    let better = match leaving {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - tol || (ratio <= lr + tol && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leaving else {
                return Outcome::Unbounded;
            };
            self.pivot(r, c);
            *iterations += 1;
        }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution> {
        problem.validate()?;
        let started = Instant::now();
        let tol = options.tolerance.min(1e-9);
        let n = problem.num_vars();

        let mut maps = Vec::with_capacity(n);
        let mut ncols = 0usize;
        let mut cap_rows = Vec::new();
        for j in 0..n {
            let (lo, up) = (problem.lower()[j], problem.upper()[j]);
            let map = if lo.is_finite() {
                if up.is_finite() {
                    cap_rows.push((ncols, up - lo));
                }
                Map::Shifted(ncols, lo)
            } else if up.is_finite() {
                Map::Mirrored(ncols, up)
            } else {
                ncols += 1;
                Map::Split(ncols - 1, ncols)
            };
            ncols += 1;
            maps.push(map);
        }

        // Rows in terms of y: (coefficients, rhs, is_equality).
        let mut rows: Vec<(Vec<(usize, f64)>, f64, bool)> = Vec::new();
        for (block, eq) in [(&problem.ineq, false), (&problem.eq, true)] {
            for r in 0..block.rows() {
                let mut coeffs = Vec::new();
                let mut rhs = block.rhs()[r];
                for (j, a) in block.row(r) {
                    match maps[j] {
                        Map::Shifted(c, lo) => {
                            coeffs.push((c, a));
                            rhs -= a * lo;
                        }
                        Map::Mirrored(c, up) => {
                            coeffs.push((c, -a));
                            rhs -= a * up;
                        }
                        Map::Split(p, m) => {
                            coeffs.push((p, a));
                            coeffs.push((m, -a));
                        }
                    }
                }
                rows.push((coeffs, rhs, eq));
            }
        }
        for (c, width) in cap_rows {
            rows.push((vec![(c, 1.0)], width, false));
        }

        let slacks = rows.iter().filter(|r| !r.2).count();
        let m = rows.len();
        let structural = ncols + slacks;
        let total = structural + m;
        if total > self.max_columns {
            return Err(Error::TooLarge {
                variables: total,
                cap: self.max_columns,
            });
        }

        let mut t = vec![vec![0.0; total + 1]; m];
        let mut slack = ncols;
        for (i, (coeffs, rhs, eq)) in rows.iter().enumerate() {
            for &(c, a) in coeffs {
                t[i][c] += a;
            }
            if !eq {
                t[i][slack] = 1.0;
                slack += 1;
            }
            t[i][total] = *rhs;
            if *rhs < 0.0 {
                for v in t[i].iter_mut() {
                    *v = -*v;
                }
            }
            t[i][structural + i] = 1.0;
        }
        let mut tab = Tableau {
            t,
            basis: (structural..total).collect(),
            cols: total,
        };

        let limit = options.iteration_limit.unwrap_or(u64::MAX);
        let mut iterations = 0u64;
        let phase1: Vec<f64> = (0..total).map(|j| if j >= structural { 1.0 } else { 0.0 }).collect();
        let outcome = tab.optimize(&phase1, &|_| true, tol, &mut iterations, limit);
        let mut sol = LpSolution::new(problem, LpStatus::Optimal);
        if let Outcome::IterationLimit = outcome {
            sol.status = LpStatus::IterationLimit;
            sol.iterations = iterations;
            return Ok(sol);
        }
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= structural)
            .map(|i| tab.t[i][total])
            .sum();
        let scale = rows.iter().map(|r| r.1.abs()).fold(1.0, f64::max);
        if infeasibility > 1e-7 * scale {
            sol.status = LpStatus::Infeasible;
            sol.iterations = iterations;
            return Ok(sol);
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= structural {
                if let Some(c) = (0..structural).find(|&c| tab.t[i][c].abs() > 1e-9) {
                    tab.pivot(i, c);
                }
            }
        }

        let mut cost = vec![0.0; total];
        for (j, map) in maps.iter().enumerate() {
            let c = problem.cost()[j];
            match *map {
                Map::Shifted(k, _) => cost[k] = c,
                Map::Mirrored(k, _) => cost[k] = -c,
                Map::Split(p, q) => {
                    cost[p] = c;
                    cost[q] = -c;
                }
            }
        }
        let outcome = tab.optimize(&cost, &|j| j < structural, tol, &mut iterations, limit);
        sol.iterations = iterations;
        match outcome {
            Outcome::Unbounded => sol.status = LpStatus::Unbounded,
            Outcome::IterationLimit => sol.status = LpStatus::IterationLimit,
            Outcome::Optimal => {
                let mut y = vec![0.0; total];
                for (i, &b) in tab.basis.iter().enumerate() {
                    y[b] = tab.t[i][total];
                }
                let x: Vec<f64> = maps
                    .iter()
                    .map(|map| match *map {
                        Map::Shifted(k, lo) => lo + y[k],
                        Map::Mirrored(k, up) => up - y[k],
                        Map::Split(p, q) => y[p] - y[q],
                    })
                    .collect();
                sol.objective = Some(problem.objective_at(&x));
                sol.primal = Some(x);
            }
        }
        sol.seconds = started.elapsed().as_secs_f64();
        Ok(sol)
    }
}
