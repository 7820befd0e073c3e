//! Dense bounded-variable primal simplex for small box-bounded programs
//!
//! ```text
//! minimize    c'x
//! subject to  A x <= b
//!             l <= x <= u      (l, u finite)
//! ```
//!
//! Nonbasic variables sit at one of their bounds, so the returned point is
//! always a vertex of the feasible polytope. Pricing is Dantzig's rule until
//! `5 * (m + n)` iterations have elapsed, after which Bland's rule takes
//! over to rule out cycling. Each constraint row is scaled by its largest
//! coefficient before solving; tolerances apply to the scaled rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-11;
const RATIO_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = objective.len();
        check_len("lower bounds", n, lower.len())?;
        check_len("upper bounds", n, upper.len())?;
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("objective contains NaN or infinity"));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::validation(format!(
                    "variable {j} has a non-finite bound"
                )));
            }
            if l > u {
                return Err(Error::validation(format!(
                    "variable {j} has lower bound {l} above upper bound {u}"
                )));
            }
        }
        Ok(LinearProgram {
            objective,
            lower,
            upper,
            rows: Vec::new(),
            rhs: Vec::new(),
        })
    }

    /// Adds the constraint `coeffs . x <= rhs`.
    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) -> Result<()> {
        check_len("constraint row", self.objective.len(), coeffs.len())?;
        if !rhs.is_finite() || coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::validation("constraint contains NaN or infinity"));
        }
        self.rows.push(coeffs);
        self.rhs.push(rhs);
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn constraints(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.rows.iter().map(Vec::as_slice).zip(self.rhs.iter().copied())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of any row or bound at `x`, with row violations
    /// measured relative to `max(1, |b_i|, max_j |a_ij|)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints().map(|(a, b)| {
            let scale = a.iter().fold(b.abs().max(1.0), |m, v| m.max(v.abs()));
            (dot(a, x) - b) / scale
        });
        let bounds = x
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((v, l), u)| (l - v).max(v - u));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve_lp(program: &LinearProgram) -> Result<LpSolution> {
    Simplex::new(program).run()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Simplex<'a> {
    program: &'a LinearProgram,
    m: usize,
    n: usize,
    /// Columns: structurals, then one slack per row, then artificials.
    ncols: usize,
    /// Scaled constraint rows in `[A_s | I | artificial]` form, kept for
    /// the final re-solve of basic values.
    original: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    tableau: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    reduced: Vec<f64>,
    artificials: Vec<usize>,
    iterations: usize,
}

impl<'a> Simplex<'a> {
    fn new(program: &'a LinearProgram) -> Self {
        let m = program.num_constraints();
        let n = program.num_vars();

        let scaled: Vec<(Vec<f64>, f64)> = program
            .constraints()
            .map(|(a, b)| {
                let s = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let s = if s > 0.0 { s } else { 1.0 };
                (a.iter().map(|v| v / s).collect(), b / s)
            })
            .collect();

        // Nonbasic structurals start at their lower bound.
        let residual: Vec<f64> = scaled
            .iter()
            .map(|(a, b)| b - dot(a, &program.lower))
            .collect();
        let needs_art: Vec<usize> = (0..m).filter(|&i| residual[i] < 0.0).collect();
        let ncols = n + m + needs_art.len();

        let mut original = vec![vec![0.0; ncols]; m];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut value = vec![0.0; ncols];
        value[..n].copy_from_slice(&program.lower);
        let mut artificials = Vec::with_capacity(needs_art.len());
        for i in 0..m {
            let (a, b) = &scaled[i];
            if residual[i] >= 0.0 {
                original[i][..n].copy_from_slice(a);
                original[i][n + i] = 1.0;
                rhs[i] = *b;
                basis[i] = n + i;
                value[n + i] = residual[i];
            } else {
                let art = n + m + artificials.len();
                for (dst, src) in original[i][..n].iter_mut().zip(a) {
                    *dst = -src;
                }
                original[i][n + i] = -1.0;
                original[i][art] = 1.0;
                rhs[i] = -b;
                basis[i] = art;
                value[art] = -residual[i];
                artificials.push(art);
            }
        }

        let mut lower = vec![0.0; ncols];
        let mut upper = vec![f64::INFINITY; ncols];
        lower[..n].copy_from_slice(&program.lower);
        upper[..n].copy_from_slice(&program.upper);

        let mut is_basic = vec![false; ncols];
        for &b in &basis {
            is_basic[b] = true;
        }
        let tableau = original.iter().flatten().copied().collect();

        Simplex {
            program,
            m,
            n,
            ncols,
            original,
            rhs,
            tableau,
            lower,
            upper,
            value,
            at_upper: vec![false; ncols],
            basis,
            is_basic,
            reduced: vec![0.0; ncols],
            artificials,
            iterations: 0,
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        if !self.artificials.is_empty() {
            let mut cost = vec![0.0; self.ncols];
            for &a in &self.artificials {
                cost[a] = 1.0;
            }
            self.optimize(&cost)?;
            let infeasibility: f64 = self.artificials.iter().map(|&a| self.value[a]).sum();
            if infeasibility > FEAS_TOL {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    values: Vec::new(),
                    objective_value: f64::NAN,
                });
            }
            for &a in &self.artificials {
                self.upper[a] = 0.0;
                if !self.is_basic[a] {
                    self.value[a] = 0.0;
                    self.at_upper[a] = false;
                }
            }
        }

        let mut cost = vec![0.0; self.ncols];
        cost[..self.n].copy_from_slice(&self.program.objective);
        self.optimize(&cost)?;
        self.polish();

        let values: Vec<f64> = (0..self.n)
            .map(|j| self.value[j].clamp(self.lower[j], self.upper[j]))
            .collect();
        let objective_value = self.program.objective_at(&values);
        Ok(LpSolution {
            status: LpStatus::Optimal,
            values,
            objective_value,
        })
    }

    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        self.reduced.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tableau[i * self.ncols..(i + 1) * self.ncols];
                for (d, t) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * t;
                }
            }
        }
        let cmax = cost.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if cmax == 0.0 {
            return Ok(());
        }
        let opt_tol = OPT_TOL * cmax;
        let bland_after = 5 * (self.m + self.n);
        let limit = 50 * (self.m + self.ncols) + 1000;
        let mut local_iters = 0usize;

        loop {
            let bland = local_iters >= bland_after;
            let Some((q, dir)) = self.price(opt_tol, bland) else {
                return Ok(());
            };
            self.step(q, dir, bland)?;
            local_iters += 1;
            self.iterations += 1;
            if local_iters > limit {
                return Err(Error::Internal(format!(
                    "simplex exceeded {limit} iterations"
                )));
            }
        }
    }

    /// Picks the entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, opt_tol: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            if self.is_basic[j] || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced[j];
            let (score, dir) = if self.at_upper[j] {
                (d, -1.0)
            } else {
                (-d, 1.0)
            };
            if score <= opt_tol {
                continue;
            }
            if bland {
                return Some((j, dir));
            }
            match best {
                Some((_, _, s)) if s >= score => {}
                _ => best = Some((j, dir, score)),
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn step(&mut self, q: usize, dir: f64, bland: bool) -> Result<()> {
        let nc = self.ncols;
        let flip = self.upper[q] - self.lower[q];
        let mut leave: Option<(usize, f64, f64)> = None; // (row, theta, |alpha|)
        for i in 0..self.m {
            let alpha = self.tableau[i * nc + q];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let rate = -dir * alpha;
            let theta = if rate < 0.0 {
                (self.value[b] - self.lower[b]) / -rate
            } else if self.upper[b].is_finite() {
                (self.upper[b] - self.value[b]) / rate
            } else {
                continue;
            };
            let theta = theta.max(0.0);
            let replace = match leave {
                None => true,
                Some((r, best, mag)) => {
                    if theta < best - RATIO_TIE {
                        true
                    } else if theta <= best + RATIO_TIE {
                        if bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > mag
                        }
                    } else {
                        false
                    }
                }
            };
            if replace {
                leave = Some((i, theta, alpha.abs()));
            }
        }

        match leave {
            Some((_, theta, _)) if theta < flip => {}
            _ if flip.is_finite() => {
                // Bound flip: the entering variable reaches its opposite bound first.
                for i in 0..self.m {
                    let alpha = self.tableau[i * nc + q];
                    if alpha != 0.0 {
                        self.value[self.basis[i]] -= dir * flip * alpha;
                    }
                }
                self.at_upper[q] = !self.at_upper[q];
                self.value[q] = if self.at_upper[q] {
                    self.upper[q]
                } else {
                    self.lower[q]
                };
                return Ok(());
            }
            _ => {
                return Err(Error::Internal(
                    "unbounded direction in a box-bounded program".into(),
                ))
            }
        }
        let (r, theta, _) = leave.expect("checked above");

        for i in 0..self.m {
            let alpha = self.tableau[i * nc + q];
            if alpha != 0.0 {
                self.value[self.basis[i]] -= dir * theta * alpha;
            }
        }
        let leaving = self.basis[r];
        let rate = -dir * self.tableau[r * nc + q];
        if rate < 0.0 {
            self.value[leaving] = self.lower[leaving];
            self.at_upper[leaving] = false;
        } else {
            self.value[leaving] = self.upper[leaving];
            self.at_upper[leaving] = true;
        }
        self.value[q] += dir * theta;
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.at_upper[q] = false;
        self.basis[r] = q;

        let pivot = self.tableau[r * nc + q];
        for v in &mut self.tableau[r * nc..(r + 1) * nc] {
            *v /= pivot;
        }
        let pivot_row: Vec<f64> = self.tableau[r * nc..(r + 1) * nc].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.tableau[i * nc + q];
            if factor != 0.0 {
                for (v, p) in self.tableau[i * nc..(i + 1) * nc].iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                self.tableau[i * nc + q] = 0.0;
            }
        }
        let dq = self.reduced[q];
        if dq != 0.0 {
            for (d, p) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= dq * p;
            }
            self.reduced[q] = 0.0;
        }
        Ok(())
    }

    /// Recomputes basic values from the scaled rows to shed accumulated
    /// tableau round-off.
    fn polish(&mut self) {
        if self.m == 0 {
            return;
        }
        let basis_matrix =
            DMatrix::from_fn(self.m, self.m, |i, k| self.original[i][self.basis[k]]);
        let rhs = DVector::from_fn(self.m, |i, _| {
            let nonbasic: f64 = (0..self.ncols)
                .filter(|&j| !self.is_basic[j])
                .map(|j| self.original[i][j] * self.value[j])
                .sum();
            self.rhs[i] - nonbasic
        });
        if let Some(sol) = basis_matrix.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                for (k, &b) in self.basis.iter().enumerate() {
                    self.value[b] = sol[k];
                }
            }
        }
    }
}
