//! Two-phase revised simplex.
//!
//! The problem is brought to standard form `A·u = b, u ≥ 0` by shifting
//! variables to their lower bounds, adding one slack per inequality and
//! flipping rows with negative right-hand sides. Rows whose slack cannot start
//! basic get an artificial column. The basis inverse is held in product form:
//! a dense inverse from the last refactorization followed by one sparse eta
//! column per pivot. Refactorization eliminates slack and artificial unit
//! columns directly and inverts only the remaining structural block.
//!
//! Pricing is Dantzig's rule over cyclic sections of the columns. After a run
//! of degenerate pivots the solver switches to Bland's rule until a pivot makes
//! strict progress, which rules out cycling. The ratio test is Harris's
//! two-pass variant. Degenerate problems are solved on a slightly perturbed
//! right-hand side; the exact right-hand side is then restored and any
//! infeasibility removed by dual simplex pivots.

use super::{LpConfig, LpError, LpProblem, LpSolution, LpStatus};

/// Pivot-column entries below this are treated as zero.
const NOISE: f64 = 1e-12;

struct Standard {
    m: usize,
    n_struct: usize,
    /// Sparse columns (CSC).
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    /// Per row: +1 or -1 if the row was flipped.
    row_sign: Vec<f64>,
    /// First artificial column.
    art_start: usize,
    ncols: usize,
}

impl Standard {
    fn build(p: &LpProblem) -> (Self, Vec<usize>) {
        let n = p.num_vars();
        let n_ineq = p.inequalities.len();
        let m = n_ineq + p.equalities.len();
        let rows: Vec<_> = p.inequalities.iter().chain(&p.equalities).collect();

        // Merge duplicate entries, shift by lower bounds.
        let mut b = Vec::with_capacity(m);
        let mut row_sign = Vec::with_capacity(m);
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut dense = vec![0.0; n];
        let mut touched = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let mut rhs = r.rhs;
            for &(j, a) in &r.coeffs {
                if dense[j] == 0.0 {
                    touched.push(j);
                }
                dense[j] += a;
                rhs -= a * p.lower[j];
            }
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            touched.sort_unstable();
            touched.dedup();
            for &j in &touched {
                if dense[j] != 0.0 {
                    cols[j].push((i, sign * dense[j]));
                }
                dense[j] = 0.0;
            }
            touched.clear();
            b.push(sign * rhs);
            row_sign.push(sign);
        }

        let mut col_start = vec![0];
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        for c in &cols {
            for &(i, a) in c {
                row_idx.push(i);
                vals.push(a);
            }
            col_start.push(row_idx.len());
        }
        // Slacks.
        for i in 0..n_ineq {
            row_idx.push(i);
            vals.push(row_sign[i]);
            col_start.push(row_idx.len());
        }
        // Initial basis: slack where it enters with +1, artificial otherwise.
        let art_start = n + n_ineq;
        let mut basis = Vec::with_capacity(m);
        let mut next_art = art_start;
        for i in 0..m {
            if i < n_ineq && row_sign[i] > 0.0 {
                basis.push(n + i);
            } else {
                row_idx.push(i);
                vals.push(1.0);
                col_start.push(row_idx.len());
                basis.push(next_art);
                next_art += 1;
            }
        }
        let ncols = next_art;
        (
            Self {
                m,
                n_struct: n,
                col_start,
                row_idx,
                vals,
                b,
                row_sign,
                art_start,
                ncols,
            },
            basis,
        )
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_start[j]..self.col_start[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.art_start
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

/// Elementary column transform of one pivot: `E = I + (η − e_p) e_pᵀ` with
/// `η_p = 1/α_p` and `η_i = −α_i/α_p`.
struct Eta {
    p: usize,
    pivot_inv: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

struct Tableau<'a> {
    sf: &'a Standard,
    cfg: &'a LpConfig,
    /// Dense inverse of the basis at the last refactorization, row per basis
    /// position. The current inverse is `E_k ⋯ E_1 · binv`.
    binv: Vec<f64>,
    etas: Vec<Eta>,
    basis: Vec<usize>,
    /// Position of each column in the basis, if basic.
    pos: Vec<Option<usize>>,
    xb: Vec<f64>,
    /// Right-hand side the basic solution is computed from.
    rhs: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    since_refactor: usize,
}

impl<'a> Tableau<'a> {
    fn new(sf: &'a Standard, cfg: &'a LpConfig, basis: Vec<usize>, rhs: Vec<f64>) -> Result<Self, LpError> {
        let mut pos = vec![None; sf.ncols];
        for (i, &j) in basis.iter().enumerate() {
            pos[j] = Some(i);
        }
        let max_iterations = cfg
            .max_iterations
            .unwrap_or_else(|| 10_000usize.max(50 * (sf.m + sf.ncols)));
        let mut t = Self {
            sf,
            cfg,
            binv: vec![0.0; sf.m * sf.m],
            etas: Vec::new(),
            basis,
            pos,
            xb: vec![0.0; sf.m],
            rhs,
            iterations: 0,
            max_iterations,
            since_refactor: 0,
        };
        t.refactor()?;
        Ok(t)
    }

    /// Rebuild `B^{-1}` and `x_B` from the current basis. Basic columns with
    /// a single nonzero (slacks, artificials) are eliminated directly; only
    /// the block of the remaining columns on the rows they leave uncovered is
    /// inverted densely, so the cost is `O(t^3 + nnz·t + m^2)` for `t`
    /// structural basics.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.sf.m;
        let mut owner: Vec<Option<(usize, f64)>> = vec![None; m];
        let mut structural = Vec::new();
        for (c, &j) in self.basis.iter().enumerate() {
            let r = self.sf.col_start[j]..self.sf.col_start[j + 1];
            if r.len() == 1 {
                let i = self.sf.row_idx[r.start];
                if owner[i].is_none() {
                    owner[i] = Some((c, self.sf.vals[r.start]));
                    continue;
                }
            }
            structural.push(c);
        }
        let rows_t: Vec<usize> = (0..m).filter(|&i| owner[i].is_none()).collect();
        let t = structural.len();
        let mut local = vec![usize::MAX; m];
        for (a, &i) in rows_t.iter().enumerate() {
            local[i] = a;
        }
        let mut block = vec![0.0; t * t];
        let mut xrows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for (b, &c) in structural.iter().enumerate() {
            for (i, v) in self.sf.col(self.basis[c]) {
                if local[i] != usize::MAX {
                    block[local[i] * t + b] = v;
                } else {
                    xrows[i].push((b, v));
                }
            }
        }
        let yinv = invert_dense(&mut block, t)?;
        let binv = &mut self.binv;
        binv.iter_mut().for_each(|v| *v = 0.0);
        for (b, &c) in structural.iter().enumerate() {
            for (a, &i) in rows_t.iter().enumerate() {
                binv[c * m + i] = yinv[b * t + a];
            }
        }
        let mut w = vec![0.0; t];
        for (i, o) in owner.iter().enumerate() {
            let Some((c, v)) = *o else { continue };
            binv[c * m + i] = 1.0 / v;
            if xrows[i].is_empty() {
                continue;
            }
            w.iter_mut().for_each(|x| *x = 0.0);
            for &(b, xv) in &xrows[i] {
                for (wa, &ya) in w.iter_mut().zip(&yinv[b * t..(b + 1) * t]) {
                    *wa += xv * ya;
                }
            }
            for (a, &r) in rows_t.iter().enumerate() {
                binv[c * m + r] = -w[a] / v;
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&self.rhs).map(|(x, y)| x * y).sum();
            self.xb[i] = if v.abs() < self.cfg.feas_tol * 1e-3 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        self.etas.clear();
        Ok(())
    }

    /// `uᵀ B^{-1}`.
    fn btran(&self, mut u: Vec<f64>) -> Vec<f64> {
        let m = self.sf.m;
        for eta in self.etas.iter().rev() {
            let mut acc = u[eta.p] * eta.pivot_inv;
            for (&i, &v) in eta.idx.iter().zip(&eta.val) {
                acc += u[i] * v;
            }
            u[eta.p] = acc;
        }
        let mut out = vec![0.0; m];
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                for (o, &b) in out.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                    *o += ui * b;
                }
            }
        }
        out
    }

    /// Row `p` of `B^{-1}`.
    fn binv_row(&self, p: usize) -> Vec<f64> {
        let mut u = vec![0.0; self.sf.m];
        u[p] = 1.0;
        self.btran(u)
    }

    /// `y = c_B B^{-1}`.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        self.btran(self.basis.iter().map(|&j| cost[j]).collect())
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.sf.col(j).map(|(i, v)| y[i] * v).sum::<f64>()
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.sf.m;
        let mut alpha = vec![0.0; m];
        for (k, v) in self.sf.col(j) {
            for (i, a) in alpha.iter_mut().enumerate() {
                *a += self.binv[i * m + k] * v;
            }
        }
        for eta in &self.etas {
            let vp = alpha[eta.p];
            if vp != 0.0 {
                alpha[eta.p] = vp * eta.pivot_inv;
                for (&i, &v) in eta.idx.iter().zip(&eta.val) {
                    alpha[i] += v * vp;
                }
            }
        }
        alpha
    }

    fn pivot(&mut self, p: usize, q: usize, alpha: &[f64], theta: f64) -> Result<(), LpError> {
        for (i, x) in self.xb.iter_mut().enumerate() {
            if i != p {
                *x -= theta * alpha[i];
                if x.abs() < self.cfg.feas_tol * 1e-3 {
                    *x = 0.0;
                }
            }
        }
        self.xb[p] = theta;
        let pivot_inv = 1.0 / alpha[p];
        let (idx, val) = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != p && a != 0.0)
            .map(|(i, &a)| (i, -a * pivot_inv))
            .unzip();
        self.etas.push(Eta { p, pivot_inv, idx, val });
        let leaving = self.basis[p];
        self.pos[leaving] = None;
        self.basis[p] = q;
        self.pos[q] = Some(p);
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.cfg.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// Run simplex iterations for `cost` over the columns allowed by `enterable`.
    fn run(&mut self, cost: &[f64], enterable: &dyn Fn(usize) -> bool) -> Result<PhaseEnd, LpError> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut rejected: Vec<usize> = Vec::new();
        let mut y = self.duals(cost);
        let allowed: Vec<bool> = (0..self.sf.ncols).map(enterable).collect();
        let mut cursor = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let entering = self.price(cost, &y, &allowed, &rejected, bland, &mut cursor);
            let Some((q, d_q)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let alpha = self.ftran(q);

            let leave = self.ratio_test(&alpha, enterable, bland);
            let Some((p, theta)) = leave else {
                // Entries too small to pivot on but not clearly nonpositive:
                // set the column aside until the basis changes.
                if alpha.iter().any(|&a| a > NOISE) {
                    rejected.push(q);
                    continue;
                }
                return Ok(PhaseEnd::Unbounded);
            };
            rejected.clear();
            if theta <= 0.0 {
                degenerate_run += 1;
                if degenerate_run >= self.cfg.degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            // y' = y + (d_q / α_p) ρ_p with ρ_p the pivot row of the old inverse.
            let step = d_q / alpha[p];
            let rho = self.binv_row(p);
            self.pivot(p, q, &alpha, theta)?;
            if self.since_refactor == 0 {
                y = self.duals(cost);
            } else {
                y.iter_mut().zip(&rho).for_each(|(yi, r)| *yi += step * r);
            }
        }
    }

    /// Entering column. Dantzig pricing scans the columns cyclically from
    /// `cursor` in sections of `max(ncols / 8, 1024)` and stops after the
    /// first section that holds an improving column (partial pricing).
    /// Bland's rule scans everything and takes the lowest improving index.
    fn price(
        &self,
        cost: &[f64],
        y: &[f64],
        allowed: &[bool],
        rejected: &[usize],
        bland: bool,
        cursor: &mut usize,
    ) -> Option<(usize, f64)> {
        let n = self.sf.ncols;
        let (starts, rows, vals) = (&self.sf.col_start, &self.sf.row_idx, &self.sf.vals);
        let reduced = |j: usize| {
            let mut d = cost[j];
            for k in starts[j]..starts[j + 1] {
                d -= y[rows[k]] * vals[k];
            }
            d
        };
        let eligible = |j: usize| allowed[j] && self.pos[j].is_none();
        if bland {
            return (0..n)
                .filter(|&j| eligible(j))
                .map(|j| (j, reduced(j)))
                .find(|&(j, d)| d < -self.cfg.opt_tol && !rejected.contains(&j));
        }
        let section = (n / 8).max(1024);
        let mut best: Option<(usize, f64)> = None;
        let mut j = *cursor % n.max(1);
        for scanned in 1..=n {
            if eligible(j) {
                let d = reduced(j);
                if d < -self.cfg.opt_tol && best.is_none_or(|(_, b)| d < b) && !rejected.contains(&j) {
                    best = Some((j, d));
                }
            }
            j += 1;
            if j == n {
                j = 0;
            }
            if scanned % section == 0 && best.is_some() {
                break;
            }
        }
        *cursor = j;
        best
    }

    /// Leaving row and step length. Zero-valued artificials that the entering
    /// column would move leave first with a zero step. Otherwise a Harris
    /// two-pass test: the step bound is relaxed by the feasibility tolerance
    /// and, among rows within that bound, the largest pivot wins. Under
    /// Bland's rule the exact minimum ratio with the lowest basic index is
    /// used instead.
    fn ratio_test(&self, alpha: &[f64], enterable: &dyn Fn(usize) -> bool, bland: bool) -> Option<(usize, f64)> {
        let tol = self.cfg.pivot_tol;
        let mut forced: Option<usize> = None;
        for (i, &a) in alpha.iter().enumerate() {
            let j = self.basis[i];
            if self.sf.is_artificial(j) && !enterable(j) && a.abs() > tol && forced.is_none_or(|f| a.abs() > alpha[f].abs()) {
                forced = Some(i);
            }
        }
        if let Some(i) = forced {
            return Some((i, 0.0));
        }
        if bland {
            let mut leave: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if a <= tol {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((l, best)) => ratio < best || (ratio == best && self.basis[i] < self.basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            return leave;
        }
        let slack = self.cfg.feas_tol;
        let bound = alpha
            .iter()
            .zip(&self.xb)
            .filter(|(&a, _)| a > tol)
            .map(|(&a, &x)| (x.max(0.0) + slack) / a)
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let mut leave: Option<usize> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a > tol && self.xb[i].max(0.0) / a <= bound && leave.is_none_or(|l| a > alpha[l]) {
                leave = Some(i);
            }
        }
        leave.map(|i| (i, self.xb[i].max(0.0) / alpha[i]))
    }

    /// Dual simplex from a dual-feasible basis until `x_B ≥ 0`. Returns
    /// `false` when a negative row has no eligible entering column, which
    /// proves primal infeasibility.
    fn dual_cleanup(&mut self, cost: &[f64], enterable: &dyn Fn(usize) -> bool) -> Result<bool, LpError> {
        let m = self.sf.m;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let leaving = (0..m)
                .filter(|&i| self.xb[i] < -self.cfg.feas_tol)
                .min_by(|&a, &b| self.xb[a].total_cmp(&self.xb[b]));
            let Some(p) = leaving else { return Ok(true) };
            let y = self.duals(cost);
            let rho = self.binv_row(p);
            let mut cand = Vec::new();
            let mut noise = false;
            for j in 0..self.sf.ncols {
                if self.pos[j].is_some() || !enterable(j) {
                    continue;
                }
                let a: f64 = self.sf.col(j).map(|(i, v)| rho[i] * v).sum();
                if a < -self.cfg.pivot_tol {
                    cand.push((j, a, self.reduced_cost(cost, &y, j).max(0.0)));
                } else if a < -NOISE {
                    noise = true;
                }
            }
            if cand.is_empty() {
                if noise {
                    return Err(LpError::Numerical("dual simplex found only tiny pivots".into()));
                }
                return Ok(false);
            }
            let bound = cand
                .iter()
                .map(|&(_, a, d)| (d + self.cfg.opt_tol) / -a)
                .fold(f64::INFINITY, f64::min);
            let (q, _, _) = cand
                .iter()
                .filter(|&&(_, a, d)| d / -a <= bound)
                .fold(None::<(usize, f64, f64)>, |best, &c| match best {
                    Some(b) if b.1.abs() >= c.1.abs() => Some(b),
                    _ => Some(c),
                })
                .expect("bound is attained");
            let alpha = self.ftran(q);
            let theta = self.xb[p] / alpha[p];
            self.pivot(p, q, &alpha, theta)?;
        }
    }

    /// Pivot zero-valued artificials out of the basis where possible.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let m = self.sf.m;
        for p in 0..m {
            if !self.sf.is_artificial(self.basis[p]) {
                continue;
            }
            let row = self.binv_row(p);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.sf.art_start {
                if self.pos[j].is_some() {
                    continue;
                }
                let v: f64 = self.sf.col(j).map(|(i, a)| row[i] * a).sum();
                if v.abs() > self.cfg.pivot_tol && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                self.pivot(p, q, &alpha, self.xb[p])?;
            }
        }
        Ok(())
    }
}

pub(super) fn solve(p: &LpProblem, cfg: &LpConfig, phase1_only: bool) -> Result<LpSolution, LpError> {
    if cfg.perturbation > 0.0 {
        match solve_from(p, cfg, phase1_only, true) {
            Err(e @ (LpError::Numerical(_) | LpError::IterationLimit(_))) => {
                log::debug!("perturbed solve failed ({e}); retrying without perturbation");
            }
            r => return r,
        }
    }
    solve_from(p, cfg, phase1_only, false)
}

/// Deterministic relaxation of the rows whose slack starts basic: row `i`
/// gets `ε (1 + |b_i|) u_i` with `u_i ∈ [0.5, 1)` from a golden-ratio sequence.
fn perturbed_rhs(sf: &Standard, basis: &[usize], scale: f64) -> Vec<f64> {
    let mut b = sf.b.clone();
    for (i, &j) in basis.iter().enumerate() {
        if !sf.is_artificial(j) {
            let u = 0.5 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract();
            b[i] += scale * (1.0 + b[i].abs()) * u;
        }
    }
    b
}

fn solve_from(p: &LpProblem, cfg: &LpConfig, phase1_only: bool, perturb: bool) -> Result<LpSolution, LpError> {
    let n = p.num_vars();
    let (sf, basis) = Standard::build(p);
    let rhs = if perturb { perturbed_rhs(&sf, &basis, cfg.perturbation) } else { sf.b.clone() };
    let infeasible = |iterations| LpSolution {
        status: LpStatus::Infeasible,
        value: f64::INFINITY,
        primal: Vec::new(),
        dual: Vec::new(),
        iterations,
        duality_gap: 0.0,
        primal_residual: f64::INFINITY,
        dual_infeasibility: 0.0,
    };

    let mut t = Tableau::new(&sf, cfg, basis, rhs)?;
    if sf.ncols > sf.art_start {
        let mut c1 = vec![0.0; sf.ncols];
        c1[sf.art_start..].iter_mut().for_each(|c| *c = 1.0);
        t.run(&c1, &|_| true)?;
        let infeas: f64 = t
            .basis
            .iter()
            .zip(&t.xb)
            .filter(|(&j, _)| sf.is_artificial(j))
            .map(|(_, &x)| x)
            .sum();
        if infeas > cfg.feas_tol {
            return Ok(infeasible(t.iterations));
        }
        t.drive_out_artificials()?;
    }

    let mut c2 = vec![0.0; sf.ncols];
    c2[..n].copy_from_slice(&p.objective);
    let primal_of = |t: &Tableau| -> Vec<f64> {
        let mut v = p.lower.clone();
        for (&j, &x) in t.basis.iter().zip(&t.xb) {
            if j < n {
                v[j] += x;
            }
        }
        v
    };
    let art_start = sf.art_start;
    let mut perturbed = perturb;
    let restore = |t: &mut Tableau, cost: &[f64]| -> Result<bool, LpError> {
        t.rhs = sf.b.clone();
        t.refactor()?;
        t.dual_cleanup(cost, &|j| j < art_start)
    };
    if phase1_only {
        if perturb && !restore(&mut t, &vec![0.0; sf.ncols])? {
            return Ok(infeasible(t.iterations));
        }
        let primal = primal_of(&t);
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            value: p.objective.iter().zip(&primal).map(|(c, x)| c * x).sum(),
            primal_residual: p.primal_residual(&primal),
            primal,
            dual: Vec::new(),
            iterations: t.iterations,
            duality_gap: 0.0,
            dual_infeasibility: 0.0,
        });
    }

    let mut retried = false;
    loop {
        match t.run(&c2, &|j| j < art_start)? {
            PhaseEnd::Unbounded => {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    value: f64::NEG_INFINITY,
                    primal: Vec::new(),
                    dual: Vec::new(),
                    iterations: t.iterations,
                    duality_gap: 0.0,
                    primal_residual: 0.0,
                    dual_infeasibility: 0.0,
                });
            }
            PhaseEnd::Optimal => {}
        }
        if perturbed {
            perturbed = false;
            if !restore(&mut t, &c2)? {
                return Ok(infeasible(t.iterations));
            }
            continue;
        }
        let primal = primal_of(&t);
        let value: f64 = p.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();
        let y = t.duals(&c2);
        let shift: f64 = p.objective.iter().zip(&p.lower).map(|(c, l)| c * l).sum();
        let dual_value: f64 = y.iter().zip(&sf.b).map(|(a, b)| a * b).sum::<f64>() + shift;
        let duality_gap = (value - dual_value).abs() / value.abs().max(1.0);
        let dual_infeasibility = (0..art_start)
            .map(|j| -t.reduced_cost(&c2, &y, j))
            .fold(0.0, f64::max);
        let primal_residual = p.primal_residual(&primal);
        let ok = duality_gap <= cfg.duality_tol
            && primal_residual <= cfg.feas_tol * (1.0 + max_abs_rhs(p))
            && dual_infeasibility <= cfg.opt_tol;
        if !ok {
            if !retried {
                // Refresh the factorization and let the simplex clean up.
                retried = true;
                t.refactor()?;
                continue;
            }
            return Err(LpError::Numerical(format!(
                "optimum failed checks: duality gap {duality_gap:e}, residual {primal_residual:e}, \
                 dual infeasibility {dual_infeasibility:e}"
            )));
        }
        let dual = y.iter().zip(&sf.row_sign).map(|(a, s)| a * s).collect();
        log::debug!(
            "lp optimal: {} rows, {} vars, {} iterations, value {value}",
            sf.m,
            sf.n_struct,
            t.iterations
        );
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            value,
            primal,
            dual,
            iterations: t.iterations,
            duality_gap,
            primal_residual,
            dual_infeasibility,
        });
    }
}

fn max_abs_rhs(p: &LpProblem) -> f64 {
    p.inequalities
        .iter()
        .chain(&p.equalities)
        .map(|r| r.rhs.abs())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inverse of the row-major `n × n` matrix `a` (destroyed),
/// with partial pivoting.
fn invert_dense(a: &mut [f64], n: usize) -> Result<Vec<f64>, LpError> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()).then(j.cmp(&i)))
            .expect("nonempty range");
        let piv = a[p * n + c];
        if piv.abs() < 1e-13 {
            return Err(LpError::Numerical("singular basis during refactorization".into()));
        }
        if p != c {
            for k in 0..n {
                a.swap(p * n + k, c * n + k);
                inv.swap(p * n + k, c * n + k);
            }
        }
        let inv_piv = 1.0 / piv;
        for k in 0..n {
            a[c * n + k] *= inv_piv;
            inv[c * n + k] *= inv_piv;
        }
        for r in 0..n {
            if r == c {
                continue;
            }
            let f = a[r * n + c];
            if f != 0.0 {
                for k in 0..n {
                    a[r * n + k] -= f * a[c * n + k];
                    inv[r * n + k] -= f * inv[c * n + k];
                }
            }
        }
    }
    Ok(inv)
}
