//! The planner's optimal-mechanism LP, baselines, the multi-population
//! comparison, partition sweeps and the classic-equilibrium reductions.
//!
//! Planner variables are `σ(y|s)` for every state and every `K`-tuple of grid
//! policies. Variable `s·|grid|^K + t` holds state `s` and the profile whose
//! mixed-radix index is `t`, group 1 most significant.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::costs::{atomic_traveler_cost, dot, obedience_coefficient, profile_flow, route_costs_at};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpSolution, LpStatus};
use crate::mechanism::{RecommendationRule, RuleAtom, Scenario, StateRule};
use crate::model::{FlowObjective, FlowProfile};
use crate::policy::{enumerate_policy_grid, PartitionProfile, PolicyGrid};
use crate::util::{checked_pow, tuple_from_index};

/// Default cap on `|S|·|grid|^K` planner variables.
pub const DEFAULT_VAR_CAP: u128 = 200_000;
/// Default cap on profiles enumerated by the baselines.
pub const DEFAULT_PROFILE_CAP: u128 = 1_000_000;
/// Wardrop tolerance of the no-information baseline.
pub const WARDROP_TOL: f64 = 1e-7;
/// Weights at or below this are dropped when reading a rule off an LP optimum.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Layout of planner variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarMap {
    pub num_states: usize,
    pub grid_len: usize,
    pub num_groups: usize,
    pub profiles_per_state: usize,
}

impl VarMap {
    fn new(num_states: usize, grid_len: usize, num_groups: usize, cap: u128) -> Result<Self> {
        let per_state = checked_pow(grid_len, num_groups).unwrap_or(u128::MAX);
        let needed = per_state.saturating_mul(num_states as u128);
        if needed > cap {
            return Err(Error::CapExceeded {
                what: "planner variables",
                needed,
                cap,
            });
        }
        Ok(Self {
            num_states,
            grid_len,
            num_groups,
            profiles_per_state: per_state as usize,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_states * self.profiles_per_state
    }

    pub fn index(&self, state: usize, profile: &[usize]) -> usize {
        state * self.profiles_per_state + crate::util::tuple_index(profile, self.grid_len)
    }

    pub fn profile(&self, var: usize) -> (usize, Vec<usize>) {
        let mut out = vec![0; self.num_groups];
        tuple_from_index(var % self.profiles_per_state, self.grid_len, self.num_groups, &mut out);
        (var / self.profiles_per_state, out)
    }
}

/// A deviation in an atomic obedience row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    Route(usize),
    Grid(usize),
}

/// What each inequality row of a planner LP expresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowLabel {
    /// Group `group` told grid policy `policy` must not prefer pure `route`.
    Obedience { group: usize, policy: usize, route: usize },
    /// Traveler `traveler` told `policy` must not prefer `deviation`.
    Atomic { traveler: usize, policy: usize, deviation: Deviation },
    /// Population `group` told `policy`: its mass on `route` must not prefer `alternative`.
    RouteWise { group: usize, policy: usize, route: usize, alternative: usize },
}

/// A planner LP together with its variable layout and row labels.
#[derive(Clone, Debug)]
pub struct PlannerLp {
    pub problem: LpProblem,
    pub grid: PolicyGrid,
    pub vars: VarMap,
    /// One label per inequality row.
    pub rows: Vec<RowLabel>,
}

impl PlannerLp {
    /// Reads a rule off LP weights: drops weights at or below `1e-12` and
    /// renormalizes each state.
    pub fn rule_from_weights(&self, scen: &Scenario, weights: &[f64]) -> RecommendationRule {
        let per = self.vars.profiles_per_state;
        let states = scen
            .network()
            .states()
            .iter()
            .enumerate()
            .map(|(s, name)| {
                let mut atoms: Vec<RuleAtom> = (0..per)
                    .filter(|&t| weights[s * per + t] > WEIGHT_FLOOR)
                    .map(|t| RuleAtom {
                        profile: self.vars.profile(s * per + t).1,
                        weight: weights[s * per + t],
                    })
                    .collect();
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                atoms.iter_mut().for_each(|a| a.weight /= total);
                StateRule { state: name.clone(), atoms }
            })
            .collect();
        RecommendationRule {
            grid_m: self.grid.resolution(),
            num_groups: self.vars.num_groups,
            states,
        }
    }

    /// Value of every inequality row at `weights`, summed in variable order.
    pub fn row_values(&self, weights: &[f64]) -> Vec<f64> {
        self.problem
            .inequalities
            .iter()
            .map(|r| {
                let mut acc = 0.0;
                for &(j, a) in &r.coeffs {
                    acc += a * weights[j];
                }
                acc
            })
            .collect()
    }
}

/// Route costs `rc[s][t]` and flows for every (state, profile).
struct ProfileTable {
    flows: Vec<Vec<f64>>,
    costs: Vec<Vec<f64>>,
}

fn profile_table(scen: &Scenario, grid: &PolicyGrid, vars: &VarMap, masses: &[f64]) -> ProfileTable {
    let r = scen.network().num_routes();
    let mut flows = Vec::with_capacity(vars.num_vars());
    let mut costs = Vec::with_capacity(vars.num_vars());
    let mut profile = vec![0; vars.num_groups];
    for j in 0..vars.num_vars() {
        let s = j / vars.profiles_per_state;
        tuple_from_index(j % vars.profiles_per_state, vars.grid_len, vars.num_groups, &mut profile);
        let mut f = vec![0.0; r];
        profile_flow(grid, &profile, masses, &mut f);
        costs.push(route_costs_at(scen, &f, s));
        flows.push(f);
    }
    ProfileTable { flows, costs }
}

fn base_problem(
    scen: &Scenario,
    vars: &VarMap,
    table: &ProfileTable,
    objective: &dyn FlowObjective,
) -> LpProblem {
    let prior = scen.network().prior();
    let mut lp = LpProblem::new(vars.num_vars());
    for j in 0..vars.num_vars() {
        let s = j / vars.profiles_per_state;
        lp.objective[j] = prior[s] * objective.eval(scen.network(), scen.costs(), &table.flows[j], s);
    }
    for s in 0..vars.num_states {
        let start = s * vars.profiles_per_state;
        lp.add_eq((start..start + vars.profiles_per_state).map(|j| (j, 1.0)).collect(), 1.0);
    }
    lp
}

pub fn build_planner_lp(scen: &Scenario) -> Result<PlannerLp> {
    build_planner_lp_with(scen, &scen.objective(), DEFAULT_VAR_CAP)
}

/// The nonatomic planner LP with an explicit objective and variable cap.
pub fn build_planner_lp_with(scen: &Scenario, objective: &dyn FlowObjective, cap: u128) -> Result<PlannerLp> {
    let net = scen.network();
    let grid = enumerate_policy_grid(net.num_routes(), scen.grid_m())?;
    let vars = VarMap::new(net.num_states(), grid.len(), scen.num_groups(), cap)?;
    let table = profile_table(scen, &grid, &vars, &scen.group_masses());
    let mut lp = base_problem(scen, &vars, &table, objective);

    let nr = net.num_routes();
    let g_len = grid.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); scen.num_groups() * g_len * nr];
    let mut profile = vec![0; vars.num_groups];
    let prior = net.prior();
    for j in 0..vars.num_vars() {
        let s = j / vars.profiles_per_state;
        tuple_from_index(j % vars.profiles_per_state, g_len, vars.num_groups, &mut profile);
        let rc = &table.costs[j];
        for (k, &g) in profile.iter().enumerate() {
            let own = dot(grid.policy(g), rc);
            for (r_hat, &c_hat) in rc.iter().enumerate() {
                let coef = obedience_coefficient(prior[s], own, c_hat);
                if coef != 0.0 {
                    rows[(k * g_len + g) * nr + r_hat].push((j, coef));
                }
            }
        }
    }
    let mut labels = Vec::with_capacity(rows.len());
    for (i, coeffs) in rows.into_iter().enumerate() {
        lp.add_le(coeffs, 0.0);
        labels.push(RowLabel::Obedience {
            group: i / (g_len * nr),
            policy: (i / nr) % g_len,
            route: i % nr,
        });
    }
    Ok(PlannerLp {
        problem: lp,
        grid,
        vars,
        rows: labels,
    })
}

/// LP diagnostics carried alongside a solved mechanism.
#[derive(Clone, Debug, Serialize)]
pub struct LpStats {
    pub num_vars: usize,
    pub num_rows: usize,
    pub iterations: usize,
    pub duality_gap: f64,
    pub primal_residual: f64,
}

impl LpStats {
    fn new(lp: &LpProblem, sol: &LpSolution) -> Self {
        Self {
            num_vars: lp.num_vars(),
            num_rows: lp.inequalities.len() + lp.equalities.len(),
            iterations: sol.iterations,
            duality_gap: sol.duality_gap,
            primal_residual: sol.primal_residual,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mechanism {
    pub rule: RecommendationRule,
    pub value: f64,
    pub stats: LpStats,
}

fn solve_planner(scen: &Scenario, plp: &PlannerLp) -> Result<Mechanism> {
    let sol = solve_lp(&plp.problem)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => {
            return Err(Error::Lp(crate::lp::LpError::Numerical("planner lp reported unbounded".into())))
        }
    }
    Ok(Mechanism {
        rule: plp.rule_from_weights(scen, &sol.primal),
        value: sol.value,
        stats: LpStats::new(&plp.problem, &sol),
    })
}

/// Optimal nonatomic mechanism on the scenario's grid and partition.
pub fn solve_optimal_mechanism(scen: &Scenario) -> Result<Mechanism> {
    solve_planner(scen, &build_planner_lp(scen)?)
}

pub fn solve_optimal_mechanism_with(scen: &Scenario, objective: &dyn FlowObjective, cap: u128) -> Result<Mechanism> {
    solve_planner(scen, &build_planner_lp_with(scen, objective, cap)?)
}

fn for_each_profile(
    grid: &PolicyGrid,
    k: usize,
    cap: u128,
    mut f: impl FnMut(&[usize]),
) -> Result<()> {
    let count = checked_pow(grid.len(), k).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "recommendation profiles",
            needed: count,
            cap,
        });
    }
    let mut profile = vec![0; k];
    for t in 0..count as usize {
        tuple_from_index(t, grid.len(), k, &mut profile);
        f(&profile);
    }
    Ok(())
}

/// `Σ_s p(s) · min` over grid-induced flows of the objective.
pub fn baseline_full_information(scen: &Scenario) -> Result<f64> {
    let net = scen.network();
    let grid = enumerate_policy_grid(net.num_routes(), scen.grid_m())?;
    let masses = scen.group_masses();
    let obj = scen.objective();
    let mut best = vec![f64::INFINITY; net.num_states()];
    let mut flow = vec![0.0; net.num_routes()];
    for_each_profile(&grid, scen.num_groups(), DEFAULT_PROFILE_CAP, |p| {
        profile_flow(&grid, p, &masses, &mut flow);
        for (s, b) in best.iter_mut().enumerate() {
            *b = b.min(obj.eval(net, scen.costs(), &flow, s));
        }
    })?;
    Ok(best.iter().zip(net.prior()).map(|(b, p)| p * b).sum())
}

/// The uninformative benchmark: an ε-Wardrop flow of the prior-averaged game.
#[derive(Clone, Debug, Serialize)]
pub struct NoInformation {
    pub flow: FlowProfile,
    /// A profile of grid indices inducing `flow`.
    pub profile: Vec<usize>,
    pub value: f64,
    /// Largest prior-expected cost of a used route minus the smallest.
    pub wardrop_gap: f64,
}

/// Searches grid-induced flows for one whose used routes are within `1e-7` of
/// the cheapest prior-expected route cost; the lexicographically smallest
/// such flow wins.
pub fn baseline_no_information(scen: &Scenario) -> Result<NoInformation> {
    let net = scen.network();
    let grid = enumerate_policy_grid(net.num_routes(), scen.grid_m())?;
    let masses = scen.group_masses();
    let prior = net.prior();
    let mut flow = vec![0.0; net.num_routes()];
    let mut best: Option<(Vec<f64>, Vec<usize>, f64)> = None;
    let mut best_gap = f64::INFINITY;
    for_each_profile(&grid, scen.num_groups(), DEFAULT_PROFILE_CAP, |p| {
        profile_flow(&grid, p, &masses, &mut flow);
        let mut avg = vec![0.0; net.num_routes()];
        for (s, &ps) in prior.iter().enumerate() {
            for (a, c) in avg.iter_mut().zip(route_costs_at(scen, &flow, s)) {
                *a += ps * c;
            }
        }
        let min = avg.iter().copied().fold(f64::INFINITY, f64::min);
        let gap = flow
            .iter()
            .zip(&avg)
            .filter(|(f, _)| **f > 1e-12)
            .map(|(_, a)| a - min)
            .fold(0.0, f64::max);
        best_gap = best_gap.min(gap);
        if gap <= WARDROP_TOL {
            let smaller = best.as_ref().is_none_or(|(bf, _, _)| {
                flow.iter().zip(bf).find(|(a, b)| a != b).is_some_and(|(a, b)| a < b)
            });
            if smaller {
                best = Some((flow.clone(), p.to_vec(), gap));
            }
        }
    })?;
    let (flow, profile, wardrop_gap) = best.ok_or(Error::NoGridWardrop { best_gap })?;
    let obj = scen.objective();
    let value = prior
        .iter()
        .enumerate()
        .map(|(s, p)| p * obj.eval(net, scen.costs(), &flow, s))
        .sum();
    Ok(NoInformation {
        flow: FlowProfile(flow),
        profile,
        value,
        wardrop_gap,
    })
}

/// Point mass on the no-information profile in every state.
pub fn no_information_rule(scen: &Scenario) -> Result<RecommendationRule> {
    let base = baseline_no_information(scen)?;
    let profiles = vec![base.profile; scen.network().num_states()];
    Ok(RecommendationRule::point_masses(scen, scen.grid_m(), profiles))
}

/// Obedience notion for the multi-population comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MpObedience {
    /// Every route in a population's recommended flow is individually a best
    /// response given that recommendation.
    #[default]
    RouteWise,
    /// The population's recommended split as a whole is a best response; this
    /// coincides with the publicness-specific constraints.
    Mixed,
}

/// Multi-population LP: population `k`'s recommendation is the flow
/// `x^k D · y^k` for a grid policy `y^k`.
pub fn build_mp_bcwe_lp(scen: &Scenario, obedience: MpObedience) -> Result<PlannerLp> {
    build_mp_bcwe_lp_with(scen, obedience, DEFAULT_VAR_CAP)
}

pub fn build_mp_bcwe_lp_with(scen: &Scenario, obedience: MpObedience, cap: u128) -> Result<PlannerLp> {
    if obedience == MpObedience::Mixed {
        return build_planner_lp_with(scen, &scen.objective(), cap);
    }
    let net = scen.network();
    let grid = enumerate_policy_grid(net.num_routes(), scen.grid_m())?;
    let vars = VarMap::new(net.num_states(), grid.len(), scen.num_groups(), cap)?;
    let masses = scen.group_masses();
    let table = profile_table(scen, &grid, &vars, &masses);
    let mut lp = base_problem(scen, &vars, &table, &scen.objective());
    let nr = net.num_routes();
    let g_len = grid.len();
    let prior = net.prior();
    let idx = |k: usize, g: usize, r: usize, a: usize| ((k * g_len + g) * nr + r) * nr + a;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); scen.num_groups() * g_len * nr * nr];
    let mut profile = vec![0; vars.num_groups];
    for j in 0..vars.num_vars() {
        let s = j / vars.profiles_per_state;
        tuple_from_index(j % vars.profiles_per_state, g_len, vars.num_groups, &mut profile);
        let rc = &table.costs[j];
        for (k, &g) in profile.iter().enumerate() {
            for (r, &y_r) in grid.policy(g).iter().enumerate() {
                if y_r == 0.0 {
                    continue;
                }
                let f_r = masses[k] * y_r;
                for (a, &c_a) in rc.iter().enumerate() {
                    let coef = prior[s] * f_r * (rc[r] - c_a);
                    if a != r && coef != 0.0 {
                        rows[idx(k, g, r, a)].push((j, coef));
                    }
                }
            }
        }
    }
    let mut labels = Vec::new();
    for k in 0..scen.num_groups() {
        for g in 0..g_len {
            for r in 0..nr {
                if grid.policy(g)[r] == 0.0 {
                    continue;
                }
                for a in (0..nr).filter(|&a| a != r) {
                    lp.add_le(std::mem::take(&mut rows[idx(k, g, r, a)]), 0.0);
                    labels.push(RowLabel::RouteWise {
                        group: k,
                        policy: g,
                        route: r,
                        alternative: a,
                    });
                }
            }
        }
    }
    Ok(PlannerLp {
        problem: lp,
        grid,
        vars,
        rows: labels,
    })
}

pub fn mp_bcwe_value(scen: &Scenario, obedience: MpObedience) -> Result<f64> {
    mp_bcwe_value_with(scen, obedience, DEFAULT_VAR_CAP)
}

pub fn mp_bcwe_value_with(scen: &Scenario, obedience: MpObedience, cap: u128) -> Result<f64> {
    let plp = build_mp_bcwe_lp_with(scen, obedience, cap)?;
    Ok(solve_planner(scen, &plp)?.value)
}

/// Partition profiles with every factor a positive multiple of `step`, in
/// lexicographic order.
pub fn partition_grid(k: usize, step: f64) -> Result<Vec<PartitionProfile>> {
    if k == 0 {
        return Err(Error::validation("K must be at least 1"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::validation(format!("partition step {step} must lie in (0, 1]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("partition step {step} does not divide 1")));
    }
    let n = n as usize;
    let mut out = Vec::new();
    let mut parts = vec![0usize; k];
    fn rec(pos: usize, left: usize, parts: &mut Vec<usize>, n: usize, out: &mut Vec<PartitionProfile>) {
        let k = parts.len();
        if pos == k - 1 {
            if left >= 1 {
                parts[pos] = left;
                out.push(PartitionProfile(parts.iter().map(|&c| c as f64 / n as f64).collect()));
            }
            return;
        }
        for c in 1..left {
            parts[pos] = c;
            rec(pos + 1, left - c, parts, n, out);
        }
    }
    rec(0, n, &mut parts, n, &mut out);
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub x: Vec<f64>,
    pub value: Option<f64>,
    pub status: String,
    pub solve_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub num_groups: usize,
    pub rows: Vec<SweepRow>,
    /// Row index of the smallest `J*`; the earliest row wins ties.
    pub argmin: Option<usize>,
}

impl SweepTable {
    /// CSV `[x1..xK, J*, status, solve_ms]`; `solve_ms` is written as 0
    /// unless `timing` is set, so that repeated runs are byte-identical.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=self.num_groups).map(|k| format!("x{k}")).collect();
        header.extend(["J*".into(), "status".into(), "solve_ms".into()]);
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
            rec.push(r.value.map_or(String::new(), |v| v.to_string()));
            rec.push(r.status.clone());
            rec.push(if timing { format!("{:.3}", r.solve_ms) } else { "0".into() });
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Solves the planner LP for every partition on the step grid (in parallel).
pub fn sweep_partitions(scen: &Scenario, k: usize, step: f64) -> Result<SweepTable> {
    let cells = partition_grid(k, step)?;
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|x| {
            let t0 = Instant::now();
            let result = scen.with_partition(x.clone()).and_then(|s| solve_optimal_mechanism(&s));
            let solve_ms = t0.elapsed().as_secs_f64() * 1e3;
            let (value, status) = match result {
                Ok(m) => (Some(m.value), "optimal".to_string()),
                Err(Error::Infeasible) => (None, "infeasible".to_string()),
                Err(Error::CapExceeded { .. }) => (None, "cap_exceeded".to_string()),
                Err(e) => (None, format!("error: {e}")),
            };
            SweepRow {
                x: x.0.clone(),
                value,
                status,
                solve_ms,
            }
        })
        .collect();
    let mut argmin: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(v) = r.value {
            if argmin.is_none_or(|a| v < rows[a].value.unwrap()) {
                argmin = Some(i);
            }
        }
    }
    Ok(SweepTable {
        num_groups: k,
        rows,
        argmin,
    })
}

/// Mixed-strategy Bayes correlated Wardrop constraints for a single
/// population, written directly from edge costs: for each grid policy `y` and
/// pure route `r̂`, `Σ_s p(s) σ(y|s) [Σ_r y_r Σ_{e∈r} C_e − Σ_{e∈r̂} C_e] ≤ 0`.
/// Rows are ordered by `(y, r̂)`, columns by `(s, y)`.
pub fn mixed_bcwe_lp(scen: &Scenario) -> Result<LpProblem> {
    if scen.num_groups() != 1 {
        return Err(Error::validation("mixed-strategy BCWE needs K = 1"));
    }
    let net = scen.network();
    let grid = enumerate_policy_grid(net.num_routes(), scen.grid_m())?;
    let n_s = net.num_states();
    let d = net.demand() * scen.partition()[0];
    let mut lp = LpProblem::new(n_s * grid.len());
    let mut costs = vec![vec![Vec::new(); grid.len()]; n_s];
    for (g, y) in grid.iter().enumerate() {
        let flow: Vec<f64> = y.iter().map(|v| v * d).collect();
        for (s, row) in costs.iter_mut().enumerate() {
            let loads: Vec<f64> = (0..net.num_edges())
                .map(|e| net.routes_through(e).iter().map(|&r| flow[r]).sum())
                .collect();
            row[g] = net
                .routes()
                .iter()
                .map(|edges| edges.iter().map(|&e| scen.costs().edge_cost(e, loads[e], s)).sum::<f64>())
                .collect::<Vec<f64>>();
        }
    }
    for (g, y) in grid.iter().enumerate() {
        for r_hat in 0..net.num_routes() {
            let mut coeffs = Vec::new();
            for s in 0..n_s {
                let c = &costs[s][g];
                let own: f64 = y.iter().zip(c).map(|(a, b)| a * b).sum();
                let v = net.prior()[s] * (own - c[r_hat]);
                if v != 0.0 {
                    coeffs.push((s * grid.len() + g, v));
                }
            }
            lp.add_le(coeffs, 0.0);
        }
    }
    Ok(lp)
}

/// Which deviations the atomic planner LP guards against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AtomicDeviations {
    #[default]
    Pure,
    Grid,
}

/// Planner LP for a weighted-atomic scenario: one obedience row per
/// (traveler, recommended policy, deviation); the deviant moves its own weight.
pub fn build_atomic_planner_lp(scen: &Scenario, deviations: AtomicDeviations) -> Result<PlannerLp> {
    let publicness = scen
        .atomic()
        .ok_or_else(|| Error::validation("scenario has no atomic population"))?;
    let net = scen.network();
    let grid = enumerate_policy_grid(net.num_routes(), scen.grid_m())?;
    let vars = VarMap::new(net.num_states(), grid.len(), scen.num_groups(), DEFAULT_VAR_CAP)?;
    let masses = publicness.group_weights(scen.num_groups());
    let table = profile_table(scen, &grid, &vars, &masses);
    let mut lp = base_problem(scen, &vars, &table, &scen.objective());
    let prior = net.prior();
    let devs: Vec<(Deviation, Vec<f64>)> = match deviations {
        AtomicDeviations::Pure => (0..net.num_routes())
            .map(|r| (Deviation::Route(r), crate::policy::Policy::pure(net.num_routes(), r).0))
            .collect(),
        AtomicDeviations::Grid => grid.iter().enumerate().map(|(g, y)| (Deviation::Grid(g), y.to_vec())).collect(),
    };
    let mut labels = Vec::new();
    let mut profile = vec![0; vars.num_groups];
    for i in 0..publicness.n {
        let k = publicness.group_of[i];
        let w_i = publicness.weights[i];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); grid.len() * devs.len()];
        for j in 0..vars.num_vars() {
            let s = j / vars.profiles_per_state;
            tuple_from_index(j % vars.profiles_per_state, grid.len(), vars.num_groups, &mut profile);
            let g = profile[k];
            let y_k = grid.policy(g);
            let obey = atomic_traveler_cost(scen, &table.flows[j], w_i, y_k, y_k, s);
            for (d, (_, y_hat)) in devs.iter().enumerate() {
                let dev = atomic_traveler_cost(scen, &table.flows[j], w_i, y_k, y_hat, s);
                let coef = obedience_coefficient(prior[s], obey, dev);
                if coef != 0.0 {
                    rows[g * devs.len() + d].push((j, coef));
                }
            }
        }
        for (idx, coeffs) in rows.into_iter().enumerate() {
            lp.add_le(coeffs, 0.0);
            labels.push(RowLabel::Atomic {
                traveler: i,
                policy: idx / devs.len(),
                deviation: devs[idx % devs.len()].0,
            });
        }
    }
    Ok(PlannerLp {
        problem: lp,
        grid,
        vars,
        rows: labels,
    })
}

pub fn solve_atomic_mechanism(scen: &Scenario, deviations: AtomicDeviations) -> Result<Mechanism> {
    solve_planner(scen, &build_atomic_planner_lp(scen, deviations)?)
}

/// Bayes correlated equilibrium constraints written by direct enumeration of
/// pure route profiles `(r_1, ..., r_n)`: for traveler `i`, recommended `r_i`
/// and alternative `r̂`, `Σ_s p(s) Σ_{r_-i} ω_i [C_{r_i}(ℓ(r)) − C_r̂(ℓ(r̂, r_-i))] σ(r|s) ≤ 0`.
/// Columns are `(s, r_1, ..., r_n)` with `r_1` most significant; rows `(i, r_i, r̂)`.
pub fn bce_lp(scen: &Scenario) -> Result<LpProblem> {
    let publicness = scen
        .atomic()
        .ok_or_else(|| Error::validation("scenario has no atomic population"))?;
    let n = publicness.n;
    if scen.num_groups() != n || (0..n).any(|i| publicness.group_of[i] != i) {
        return Err(Error::validation("BCE constraints need one traveler per group, in order"));
    }
    let net = scen.network();
    let nr = net.num_routes();
    let per_state = checked_pow(nr, n).filter(|&c| c <= DEFAULT_VAR_CAP).ok_or(Error::CapExceeded {
        what: "pure route profiles",
        needed: checked_pow(nr, n).unwrap_or(u128::MAX),
        cap: DEFAULT_VAR_CAP,
    })? as usize;
    let mut lp = LpProblem::new(per_state * net.num_states());
    let edge_loads = |routes: &[usize]| -> Vec<f64> {
        let mut l = vec![0.0; net.num_edges()];
        for (i, &r) in routes.iter().enumerate() {
            for &e in &net.routes()[r] {
                l[e] += publicness.weights[i];
            }
        }
        l
    };
    let cost = |route: usize, loads: &[f64], s: usize| -> f64 {
        net.routes()[route].iter().map(|&e| scen.costs().edge_cost(e, loads[e], s)).sum()
    };
    let mut prof = vec![0; n];
    for i in 0..n {
        for r_i in 0..nr {
            for r_hat in 0..nr {
                let mut coeffs = Vec::new();
                for s in 0..net.num_states() {
                    for t in 0..per_state {
                        tuple_from_index(t, nr, n, &mut prof);
                        if prof[i] != r_i {
                            continue;
                        }
                        let w = publicness.weights[i];
                        let here = w * cost(r_i, &edge_loads(&prof), s);
                        let mut alt = prof.clone();
                        alt[i] = r_hat;
                        let there = w * cost(r_hat, &edge_loads(&alt), s);
                        let v = net.prior()[s] * (here - there);
                        if v != 0.0 {
                            coeffs.push((s * per_state + t, v));
                        }
                    }
                }
                lp.add_le(coeffs, 0.0);
            }
        }
    }
    Ok(lp)
}

/// Lifts a rule for partition `x` to the refinement that splits group
/// `group` into two groups with shares `left` and `x^group − left`, both
/// receiving the original group's recommendation.
pub fn lift_rule(rule: &RecommendationRule, group: usize) -> RecommendationRule {
    let mut out = rule.clone();
    out.num_groups += 1;
    for st in &mut out.states {
        for a in &mut st.atoms {
            let g = a.profile[group];
            a.profile.insert(group + 1, g);
        }
    }
    out
}

/// Refines a partition by splitting `group` at share `left`.
pub fn split_partition(x: &PartitionProfile, group: usize, left: f64) -> Result<PartitionProfile> {
    let mut v = x.0.clone();
    let right = v[group] - left;
    if !(left > 0.0 && right > 0.0) {
        return Err(Error::validation(format!("cannot split x^{} = {} at {left}", group + 1, v[group])));
    }
    v[group] = left;
    v.insert(group + 1, right);
    PartitionProfile::new(v)
}
