//! Network, state-dependent edge costs, and the flow → load → cost maps.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fmt_num;

const PRIOR_TOL: f64 = 1e-12;
const DEMAND_TOL: f64 = 1e-9;

/// Single origin–destination network: edges, routes over edges, states with a
/// prior, and the aggregate demand `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    edges: Vec<String>,
    routes: Vec<Vec<usize>>,
    states: Vec<String>,
    prior: Vec<f64>,
    demand: f64,
    /// For each edge, the routes that traverse it.
    edge_routes: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(
        edges: Vec<String>,
        routes: Vec<Vec<usize>>,
        states: Vec<String>,
        prior: Vec<f64>,
        demand: f64,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if edges.is_empty() {
            problems.push("network has no edges".to_string());
        }
        if routes.is_empty() {
            problems.push("network has no routes".to_string());
        }
        for (r, route) in routes.iter().enumerate() {
            if route.is_empty() {
                problems.push(format!("route {r} is empty"));
            }
            for (pos, &e) in route.iter().enumerate() {
                if e >= edges.len() {
                    problems.push(format!("route {r} references unknown edge {e}"));
                }
                if route[..pos].contains(&e) {
                    problems.push(format!("route {r} repeats edge {e}"));
                }
            }
        }
        if states.is_empty() {
            problems.push("network has no states".to_string());
        }
        if prior.len() != states.len() {
            problems.push(format!(
                "prior has {} entries for {} states",
                prior.len(),
                states.len()
            ));
        }
        if prior.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            problems.push("prior has a negative or non-finite entry".to_string());
        }
        let mass: f64 = prior.iter().sum();
        if (mass - 1.0).abs() > PRIOR_TOL {
            problems.push(format!("prior sums to {}", fmt_num(mass)));
        }
        if !(demand > 0.0) || !demand.is_finite() {
            problems.push(format!("demand must be positive, got {}", fmt_num(demand)));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }

        let mut edge_routes = vec![Vec::new(); edges.len()];
        for (r, route) in routes.iter().enumerate() {
            for &e in route {
                edge_routes[e].push(r);
            }
        }
        Ok(Self {
            edges,
            routes,
            states,
            prior,
            demand,
            edge_routes,
        })
    }

    pub fn edges(&self) -> &[String] {
        &self.edges
    }

    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn demand(&self) -> f64 {
        self.demand
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn routes_through(&self, edge: usize) -> &[usize] {
        &self.edge_routes[edge]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub(crate) fn check_state(&self, s: usize) -> Result<()> {
        if s < self.states.len() {
            Ok(())
        } else {
            Err(Error::InvalidState {
                index: s,
                count: self.states.len(),
            })
        }
    }

    /// Writes `ℓ_e = Σ_{r∋e} f_r` into `loads`. Callers guarantee lengths.
    pub(crate) fn loads_into(&self, flow: &[f64], loads: &mut [f64]) {
        for (load, users) in loads.iter_mut().zip(&self.edge_routes) {
            *load = users.iter().map(|&r| flow[r]).sum();
        }
    }
}

/// Per-(edge, state) polynomial edge costs `C_e(ℓ, s) = Σ_d a_d ℓ^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    /// `coeffs[e][s]` is the coefficient vector `(a_0, a_1, …)`.
    coeffs: Vec<Vec<Vec<f64>>>,
}

impl CostModel {
    pub fn new(coeffs: Vec<Vec<Vec<f64>>>, net: &Network) -> Result<Self> {
        let mut problems = Vec::new();
        if coeffs.len() != net.num_edges() {
            problems.push(format!(
                "cost model has {} edges, network has {}",
                coeffs.len(),
                net.num_edges()
            ));
        }
        for (e, per_state) in coeffs.iter().enumerate() {
            if per_state.len() != net.num_states() {
                problems.push(format!(
                    "edge {e}: costs given for {} states, network has {}",
                    per_state.len(),
                    net.num_states()
                ));
            }
            for (s, poly) in per_state.iter().enumerate() {
                if poly.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
                    problems.push(format!("edge {e}, state {s}: negative or non-finite coefficient"));
                }
                if !poly.iter().any(|&a| a > 0.0) {
                    problems.push(format!("edge {e}, state {s}: cost is identically zero"));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self { coeffs })
    }

    pub fn coefficients(&self, edge: usize, state: usize) -> &[f64] {
        &self.coeffs[edge][state]
    }

    /// Highest degree with a nonzero coefficient across all edges and states.
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .flatten()
            .filter_map(|p| p.iter().rposition(|&a| a != 0.0))
            .max()
            .unwrap_or(0)
    }

    #[inline]
    pub fn edge_cost(&self, edge: usize, load: f64, state: usize) -> f64 {
        self.coeffs[edge][state]
            .iter()
            .rev()
            .fold(0.0, |acc, &a| acc * load + a)
    }

    /// Returns a copy with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .map(|ps| ps.iter().map(|p| p.iter().map(|a| a * factor).collect()).collect())
                .collect(),
        }
    }

    /// Places where an edge cost is not strictly positive or not strictly
    /// increasing. These are accepted but worth flagging.
    pub fn strictness_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (e, per_state) in self.coeffs.iter().enumerate() {
            for (s, poly) in per_state.iter().enumerate() {
                if poly.first().copied().unwrap_or(0.0) <= 0.0 {
                    out.push(format!("edge {e}, state {s}: cost is zero at zero load"));
                }
                if !poly.iter().skip(1).any(|&a| a > 0.0) {
                    out.push(format!("edge {e}, state {s}: cost is constant in load"));
                }
            }
        }
        out
    }

    /// Writes per-route costs at the given edge loads into `out`.
    pub(crate) fn route_costs_into(&self, net: &Network, loads: &[f64], state: usize, out: &mut [f64]) {
        for (c, route) in out.iter_mut().zip(net.routes()) {
            *c = route.iter().map(|&e| self.edge_cost(e, loads[e], state)).sum();
        }
    }
}

/// Per-route flows in demand units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowProfile(pub Vec<f64>);

impl FlowProfile {
    /// Checks `f_r ≥ 0` and `Σ_r f_r = D`.
    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.0.len() != net.num_routes() {
            return Err(Error::Dimension(format!(
                "flow has {} entries, network has {} routes",
                self.0.len(),
                net.num_routes()
            )));
        }
        if self.0.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::validation("flow has a negative entry"));
        }
        let total: f64 = self.0.iter().sum();
        if (total - net.demand()).abs() > DEMAND_TOL {
            return Err(Error::validation(format!(
                "flow sums to {}, demand is {}",
                fmt_num(total),
                fmt_num(net.demand())
            )));
        }
        Ok(())
    }
}

impl Deref for FlowProfile {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-edge loads in demand units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeLoadProfile(pub Vec<f64>);

impl Deref for EdgeLoadProfile {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_flow_dim(f: &[f64], net: &Network) -> Result<()> {
    if f.len() == net.num_routes() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "flow has {} entries, network has {} routes",
            f.len(),
            net.num_routes()
        )))
    }
}

pub fn edge_load_from_flow(f: &FlowProfile, net: &Network) -> Result<EdgeLoadProfile> {
    check_flow_dim(f, net)?;
    let mut loads = vec![0.0; net.num_edges()];
    net.loads_into(f, &mut loads);
    Ok(EdgeLoadProfile(loads))
}

pub fn route_cost(f: &FlowProfile, s: usize, net: &Network, costs: &CostModel) -> Result<Vec<f64>> {
    net.check_state(s)?;
    let loads = edge_load_from_flow(f, net)?;
    let mut out = vec![0.0; net.num_routes()];
    costs.route_costs_into(net, &loads, s, &mut out);
    Ok(out)
}

/// Flow-weighted network travel cost `Σ_r f_r C_r(f, s)`.
pub fn total_cost(f: &FlowProfile, s: usize, net: &Network, costs: &CostModel) -> Result<f64> {
    let rc = route_cost(f, s, net, costs)?;
    Ok(f.iter().zip(&rc).map(|(fr, cr)| fr * cr).sum())
}

/// A planner objective evaluated on a full flow profile in a given state.
pub trait FlowObjective: Sync {
    fn eval(&self, net: &Network, costs: &CostModel, flow: &[f64], state: usize) -> f64;
}

/// Built-in objective selectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `Σ_r f_r C_r(f, s)`: total travel time of the population.
    #[default]
    TotalCost,
    /// `Σ_r C_r(f, s)`: unweighted sum of route costs.
    RouteCostSum,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::TotalCost => "total_cost",
            Objective::RouteCostSum => "route_cost_sum",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "total_cost" => Ok(Objective::TotalCost),
            "route_cost_sum" => Ok(Objective::RouteCostSum),
            other => Err(format!(
                "unknown objective `{other}` (expected total_cost or route_cost_sum)"
            )),
        }
    }
}

impl FlowObjective for Objective {
    fn eval(&self, net: &Network, costs: &CostModel, flow: &[f64], state: usize) -> f64 {
        let mut loads = vec![0.0; net.num_edges()];
        net.loads_into(flow, &mut loads);
        let mut rc = vec![0.0; net.num_routes()];
        costs.route_costs_into(net, &loads, state, &mut rc);
        match self {
            Objective::TotalCost => flow.iter().zip(&rc).map(|(f, c)| f * c).sum(),
            Objective::RouteCostSum => rc.iter().sum(),
        }
    }
}

/// Per-route objective `Σ_r C̄_r(f_r, s)` where each term sees only its own
/// route flow.
pub struct PerRouteObjective<F>(pub F);

impl<F> FlowObjective for PerRouteObjective<F>
where
    F: Fn(usize, f64, usize) -> f64 + Sync,
{
    fn eval(&self, _net: &Network, _costs: &CostModel, flow: &[f64], state: usize) -> f64 {
        flow.iter().enumerate().map(|(r, &fr)| (self.0)(r, fr, state)).sum()
    }
}
