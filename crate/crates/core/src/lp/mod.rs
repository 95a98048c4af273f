//! A small deterministic linear-program solver.
//!
//! Problems are stated as `minimize c·v` subject to sparse rows `a·v ≤ b`,
//! `e·v = d` and lower bounds `v ≥ lb`. The solver is a two-phase revised
//! simplex with a dense basis inverse (see [`simplex`]). Every optimum is
//! checked for primal feasibility, dual feasibility and the duality gap before
//! it is returned.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

mod simplex;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("lp dimension mismatch: {0}")]
    Dimension(String),
    #[error("lp has a non-finite entry: {0}")]
    NonFinite(String),
    #[error("simplex iteration cap of {0} reached")]
    IterationLimit(usize),
    #[error("lp numerical failure: {0}")]
    Numerical(String),
}

/// Solver tolerances and limits.
#[derive(Clone, Debug)]
pub struct LpConfig {
    /// Primal feasibility (residuals, phase-1 objective).
    pub feas_tol: f64,
    /// Reduced-cost threshold for optimality.
    pub opt_tol: f64,
    /// Relative duality gap accepted on an optimum.
    pub duality_tol: f64,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: f64,
    /// Iteration cap; `None` scales with problem size.
    pub max_iterations: Option<usize>,
    /// Rebuild the basis inverse from scratch every this many pivots.
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
    /// Relative size of the right-hand-side relaxation used against
    /// degeneracy; 0 disables it.
    pub perturbation: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            duality_tol: 1e-7,
            pivot_tol: 1e-7,
            max_iterations: None,
            refactor_every: 100,
            degenerate_limit: 50,
            perturbation: 1e-6,
        }
    }
}

/// One sparse row. Repeated indices are summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * v[j]).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub inequalities: Vec<Constraint>,
    pub equalities: Vec<Constraint>,
    pub lower: Vec<f64>,
}

impl LpProblem {
    /// `num_vars` variables, zero objective, lower bounds 0.
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            inequalities: Vec::new(),
            equalities: Vec::new(),
            lower: vec![0.0; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.inequalities.push(Constraint::new(coeffs, rhs));
        self.inequalities.len() - 1
    }

    pub fn add_ge(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        let neg = coeffs.into_iter().map(|(j, a)| (j, -a)).collect();
        self.add_le(neg, -rhs)
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.equalities.push(Constraint::new(coeffs, rhs));
        self.equalities.len() - 1
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n {
            return Err(LpError::Dimension(format!(
                "{} lower bounds for {n} variables",
                self.lower.len()
            )));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::NonFinite(format!("objective coefficient {j}")));
        }
        if let Some(j) = self.lower.iter().position(|c| !c.is_finite()) {
            return Err(LpError::NonFinite(format!("lower bound {j}")));
        }
        let rows = self
            .inequalities
            .iter()
            .map(|r| ("inequality", r))
            .chain(self.equalities.iter().map(|r| ("equality", r)));
        for (i, (kind, row)) in rows.enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("{kind} row {i} right-hand side")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Dimension(format!(
                        "{kind} row {i} references variable {j} of {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("{kind} row {i}, variable {j}")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `v`.
    pub fn primal_residual(&self, v: &[f64]) -> f64 {
        let ineq = self.inequalities.iter().map(|r| (r.eval(v) - r.rhs).max(0.0));
        let eq = self.equalities.iter().map(|r| (r.eval(v) - r.rhs).abs());
        let bounds = v.iter().zip(&self.lower).map(|(x, l)| (l - x).max(0.0));
        ineq.chain(eq).chain(bounds).fold(0.0, f64::max)
    }

    /// CPLEX LP text format; variables are named `x0, x1, ...`, rows `c*`
    /// (inequalities) and `e*` (equalities).
    pub fn to_lp_format(&self) -> String {
        fn terms(out: &mut String, coeffs: &[(usize, f64)]) {
            if coeffs.is_empty() {
                out.push_str(" 0 x0");
            }
            for &(j, a) in coeffs {
                let sign = if a < 0.0 { '-' } else { '+' };
                let _ = write!(out, " {sign} {:e} x{j}", a.abs());
            }
        }
        let mut out = String::from("\\ pslab lp\nMinimize\n obj:");
        let obj: Vec<(usize, f64)> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, &c)| (j, c))
            .collect();
        terms(&mut out, &obj);
        out.push_str("\nSubject To\n");
        for (i, r) in self.inequalities.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            terms(&mut out, &r.coeffs);
            let _ = writeln!(out, " <= {:e}", r.rhs);
        }
        for (i, r) in self.equalities.iter().enumerate() {
            let _ = write!(out, " e{i}:");
            terms(&mut out, &r.coeffs);
            let _ = writeln!(out, " = {:e}", r.rhs);
        }
        out.push_str("Bounds\n");
        for (j, &l) in self.lower.iter().enumerate() {
            if l != 0.0 {
                let _ = writeln!(out, " x{j} >= {l:e}");
            }
        }
        out.push_str("End\n");
        out
    }

    pub fn write_lp(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_lp_format())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value; `+inf` if infeasible, `-inf` if unbounded.
    pub value: f64,
    pub primal: Vec<f64>,
    /// Sensitivity of the optimal value to each row's right-hand side,
    /// inequalities first, then equalities. Nonpositive for inequalities.
    pub dual: Vec<f64>,
    pub iterations: usize,
    /// `|primal − dual| / max(1, |primal|)`.
    pub duality_gap: f64,
    pub primal_residual: f64,
    /// Most negative reduced cost (clamped at 0).
    pub dual_infeasibility: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_with(p, &LpConfig::default())
}

pub fn solve_lp_with(p: &LpProblem, cfg: &LpConfig) -> Result<LpSolution, LpError> {
    p.check()?;
    simplex::solve(p, cfg, false)
}

/// Phase 1 only: true iff the minimum total artificial infeasibility is at
/// most the feasibility tolerance.
pub fn feasible(p: &LpProblem) -> Result<bool, LpError> {
    feasible_with(p, &LpConfig::default())
}

pub fn feasible_with(p: &LpProblem, cfg: &LpConfig) -> Result<bool, LpError> {
    p.check()?;
    Ok(simplex::solve(p, cfg, true)?.status != LpStatus::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_bound() {
        let mut p = LpProblem::new(1);
        p.objective[0] = 1.0;
        p.add_ge(vec![(0, 1.0)], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.primal[0] - 1.0).abs() < 1e-12);
        assert!((s.dual[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_simplex() {
        let mut p = LpProblem::new(2);
        p.objective = vec![1.0, 1.0];
        p.add_eq(vec![(0, 1.0), (1, 1.0)], 1.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut p = LpProblem::new(1);
        p.add_ge(vec![(0, 1.0)], 1.0);
        p.add_le(vec![(0, 1.0)], 0.0);
        assert!(!feasible(&p).unwrap());
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);

        let mut q = LpProblem::new(1);
        q.add_le(vec![(0, 1.0)], 1.0);
        assert!(feasible(&q).unwrap());
        q.objective[0] = 1.0;
        let mut u = LpProblem::new(2);
        u.objective = vec![-1.0, 0.0];
        u.add_le(vec![(0, 1.0), (1, -1.0)], 1.0);
        assert_eq!(solve_lp(&u).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn grid_policy_simplex_membership() {
        // y = (0.2, 0.8) lies in the 2-route simplex.
        let mut p = LpProblem::new(2);
        p.add_eq(vec![(0, 1.0), (1, 1.0)], 1.0);
        p.add_eq(vec![(0, 1.0)], 0.2);
        assert!(feasible(&p).unwrap());
    }

    #[test]
    fn lower_bounds_shift() {
        let mut p = LpProblem::new(2);
        p.objective = vec![1.0, 2.0];
        p.lower = vec![-3.0, 1.0];
        p.add_ge(vec![(0, 1.0), (1, 1.0)], 0.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - (-1.0 + 2.0)).abs() < 1e-12, "{}", s.value);
        assert!((s.primal[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let mut p = LpProblem::new(3);
        p.objective = vec![1.0, 2.0, 3.0];
        p.add_eq(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0);
        p.add_eq(vec![(0, 2.0), (1, 2.0), (2, 2.0)], 2.0);
        p.add_eq(vec![(2, 1.0)], 0.5);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 2.0).abs() < 1e-12);
        assert!(s.duality_gap <= 1e-7);
    }

    #[test]
    fn max_flow_three_vars() {
        // max v0 + v1 + v2 with capacity-like rows; optimum 6 at (2, 1, 3).
        let mut p = LpProblem::new(3);
        p.objective = vec![-1.0, -1.0, -1.0];
        p.add_le(vec![(0, 1.0), (1, 1.0)], 3.0);
        p.add_le(vec![(1, 1.0), (2, 1.0)], 4.0);
        p.add_le(vec![(0, 1.0)], 2.0);
        p.add_le(vec![(2, 1.0)], 3.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value + 6.0).abs() < 1e-12);
        assert_eq!(s.value, vertex_enumeration(&p).unwrap());
    }

    #[test]
    fn lp_format_dump() {
        let mut p = LpProblem::new(2);
        p.objective = vec![1.0, -2.0];
        p.lower[1] = -1.0;
        p.add_le(vec![(0, 1.0), (1, 1.0)], 3.0);
        p.add_eq(vec![(0, 1.0)], 1.0);
        let text = p.to_lp_format();
        assert!(text.contains("obj: + 1e0 x0 - 2e0 x1"));
        assert!(text.contains(" c0: + 1e0 x0 + 1e0 x1 <= 3e0"));
        assert!(text.contains(" e0: + 1e0 x0 = 1e0"));
        assert!(text.contains(" x1 >= -1e0"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let mut p = LpProblem::new(1);
        p.add_le(vec![(3, 1.0)], 1.0);
        assert!(matches!(solve_lp(&p), Err(LpError::Dimension(_))));
        let mut q = LpProblem::new(1);
        q.objective[0] = f64::NAN;
        assert!(matches!(solve_lp(&q), Err(LpError::NonFinite(_))));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under textbook Dantzig pricing.
        let mut p = LpProblem::new(4);
        p.objective = vec![-0.75, 150.0, -0.02, 6.0];
        p.add_le(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], 0.0);
        p.add_le(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], 0.0);
        p.add_le(vec![(2, 1.0)], 1.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value + 0.05).abs() < 1e-12, "{}", s.value);
    }

    #[test]
    fn relaxation_does_not_hide_infeasibility() {
        // x ≤ 0 and x ≥ 1e-8: the relaxed rows admit x, the true ones do not.
        let mut p = LpProblem::new(1);
        p.add_le(vec![(0, 1.0)], 0.0);
        p.add_ge(vec![(0, 1.0)], 1e-8);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
        assert!(!feasible(&p).unwrap());
        let plain = LpConfig { perturbation: 0.0, ..LpConfig::default() };
        assert_eq!(solve_lp_with(&p, &plain).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn relaxed_solve_returns_an_exact_vertex() {
        // Many rows tight at zero around a simplex.
        let n = 6;
        let mut p = LpProblem::new(n);
        p.objective = (0..n).map(|j| ((j * 7) % 5) as f64 - 2.0).collect();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p.add_le(vec![(i, 1.0), (j, -1.0 - (i + j) as f64 / 10.0)], 0.0);
                }
            }
        }
        p.add_eq((0..n).map(|j| (j, 1.0)).collect(), 1.0);
        let plain = LpConfig { perturbation: 0.0, ..LpConfig::default() };
        let a = solve_lp(&p).unwrap();
        let b = solve_lp_with(&p, &plain).unwrap();
        assert_eq!(a.status, LpStatus::Optimal);
        assert!((a.value - b.value).abs() < 1e-12, "{} vs {}", a.value, b.value);
        assert!(a.primal_residual <= 1e-12);
    }

    /// Exhaustive vertex enumeration over every choice of `n` tight rows
    /// (including bounds) for tiny problems without equalities.
    fn vertex_enumeration(p: &LpProblem) -> Option<f64> {
        let n = p.num_vars();
        let mut rows: Vec<(Vec<f64>, f64)> = p
            .inequalities
            .iter()
            .map(|r| {
                let mut a = vec![0.0; n];
                r.coeffs.iter().for_each(|&(j, v)| a[j] += v);
                (a, r.rhs)
            })
            .collect();
        for j in 0..n {
            let mut a = vec![0.0; n];
            a[j] = -1.0;
            rows.push((a, -p.lower[j]));
        }
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut m: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
            let mut b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
            if let Some(v) = gauss(&mut m, &mut b) {
                let ok = rows
                    .iter()
                    .all(|(a, r)| a.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() <= r + 1e-9);
                if ok {
                    let val: f64 = p.objective.iter().zip(&v).map(|(c, x)| c * x).sum();
                    best = Some(best.map_or(val, |b| b.min(val)));
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < rows.len() - n + i {
                    idx[i] += 1;
                    for t in i + 1..n {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss(m: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
            if m[p][c].abs() < 1e-12 {
                return None;
            }
            m.swap(c, p);
            b.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..n {
                        m[r][k] -= f * m[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
        Some((0..n).map(|i| b[i] / m[i][i]).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_vertex_enumeration(
            c in proptest::collection::vec(-3i32..4, 3),
            a in proptest::collection::vec(proptest::collection::vec(-2i32..4, 3), 1..5),
            b in proptest::collection::vec(0i32..6, 5),
        ) {
            let mut p = LpProblem::new(3);
            p.objective = c.iter().map(|&v| v as f64).collect();
            for (row, &rhs) in a.iter().zip(&b) {
                p.add_le(row.iter().enumerate().map(|(j, &v)| (j, v as f64)).collect(), rhs as f64);
            }
            // Box the region so every instance is bounded.
            for j in 0..3 {
                p.add_le(vec![(j, 1.0)], 5.0);
            }
            let s = solve_lp(&p).unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            let oracle = vertex_enumeration(&p).unwrap();
            prop_assert!((s.value - oracle).abs() < 1e-9, "{} vs {}", s.value, oracle);
            prop_assert!(s.duality_gap <= 1e-7);
            prop_assert!(s.primal_residual <= 1e-9);
        }

        #[test]
        fn deterministic(
            c in proptest::collection::vec(-3i32..4, 4),
            a in proptest::collection::vec(proptest::collection::vec(-2i32..4, 4), 1..6),
        ) {
            let mut p = LpProblem::new(4);
            p.objective = c.iter().map(|&v| v as f64).collect();
            for row in &a {
                p.add_le(row.iter().enumerate().map(|(j, &v)| (j, v as f64)).collect(), 2.0);
            }
            p.add_eq((0..4).map(|j| (j, 1.0)).collect(), 1.0);
            let s1 = solve_lp(&p).unwrap();
            let s2 = solve_lp(&p).unwrap();
            prop_assert_eq!(s1.status, s2.status);
            prop_assert_eq!(s1.value.to_bits(), s2.value.to_bits());
            prop_assert_eq!(s1.primal, s2.primal);
        }
    }
}
