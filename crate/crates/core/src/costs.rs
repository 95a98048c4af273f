//! Expected-cost evaluation for nonatomic and weighted-atomic travelers, and
//! the planner objective.
//!
//! Expected costs are joint-weighted: they sum `p(s)·σ(y|s)` over every profile
//! in which the traveler's group receives the conditioning policy, without
//! dividing by the probability of that event. Obedience compares two such
//! sums over the same event, so the normalization cancels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mechanism::{validate, RecommendationRule, Scenario};
use crate::model::FlowObjective;
use crate::policy::{enumerate_policy_grid, AtomicPublicness, PolicyGrid};

/// What a traveler in `group` is told (`recommended`, a grid index) and what it
/// actually plays (`deviation`).
#[derive(Clone, Copy, Debug)]
pub struct ExpectedCostQuery<'a> {
    pub group: usize,
    pub recommended: usize,
    pub deviation: &'a [f64],
}

/// `f_r = Σ_k mass_k · y^k_r` for a profile of grid indices.
pub(crate) fn profile_flow(grid: &PolicyGrid, profile: &[usize], masses: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|f| *f = 0.0);
    for (&g, &mass) in profile.iter().zip(masses) {
        for (f, &y) in out.iter_mut().zip(grid.policy(g)) {
            *f += y * mass;
        }
    }
}

pub(crate) fn route_costs_at(scen: &Scenario, flow: &[f64], state: usize) -> Vec<f64> {
    let net = scen.network();
    let mut loads = vec![0.0; net.num_edges()];
    net.loads_into(flow, &mut loads);
    let mut rc = vec![0.0; net.num_routes()];
    scen.costs().route_costs_into(net, &loads, state, &mut rc);
    rc
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coefficient of `σ(y|s)` in an obedience row: prior times the cost of
/// obeying minus the cost of deviating, both at profile `y`.
#[inline]
pub(crate) fn obedience_coefficient(prior: f64, obey: f64, deviate: f64) -> f64 {
    prior * (obey - deviate)
}

/// Own cost `ω_i Σ_r ŷ_r C_r(f + ω_i(ŷ − y^k), s)` of a traveler of weight
/// `w_i` told `y_k` who plays `y_hat` while everyone else obeys `base_flow`.
pub(crate) fn atomic_traveler_cost(
    scen: &Scenario,
    base_flow: &[f64],
    w_i: f64,
    y_k: &[f64],
    y_hat: &[f64],
    state: usize,
) -> f64 {
    let flow: Vec<f64> = base_flow
        .iter()
        .zip(y_hat.iter().zip(y_k))
        .map(|(f, (d, y))| f + w_i * (d - y))
        .collect();
    w_i * dot(y_hat, &route_costs_at(scen, &flow, state))
}

/// Map from (group, policy) to the `(state, atom)` pairs of positive
/// probability in which the group receives that policy, in rule order.
type Conditioning = Vec<BTreeMap<usize, Vec<(usize, usize)>>>;

fn conditioning(scen: &Scenario, rule: &RecommendationRule) -> Conditioning {
    let prior = scen.network().prior();
    let mut cond: Conditioning = vec![BTreeMap::new(); rule.num_groups];
    for (s, st) in rule.states.iter().enumerate() {
        if prior[s] <= 0.0 {
            continue;
        }
        for (a, atom) in st.atoms.iter().enumerate() {
            if atom.weight > 0.0 {
                for (k, &g) in atom.profile.iter().enumerate() {
                    cond[k].entry(g).or_default().push((s, a));
                }
            }
        }
    }
    cond
}

/// Nonatomic expected costs for one rule; caches per-atom route costs.
pub struct NonatomicEvaluator<'a> {
    scen: &'a Scenario,
    rule: &'a RecommendationRule,
    grid: PolicyGrid,
    /// `route_costs[s][atom][r]` at the recommended profile's loads.
    route_costs: Vec<Vec<Vec<f64>>>,
    cond: Conditioning,
}

impl<'a> NonatomicEvaluator<'a> {
    pub fn new(scen: &'a Scenario, rule: &'a RecommendationRule) -> Result<Self> {
        validate(rule, scen).into_result()?;
        let grid = enumerate_policy_grid(scen.network().num_routes(), rule.grid_m)?;
        let masses = scen.group_masses();
        let mut flow = vec![0.0; scen.network().num_routes()];
        let route_costs = rule
            .states
            .iter()
            .enumerate()
            .map(|(s, st)| {
                st.atoms
                    .iter()
                    .map(|a| {
                        profile_flow(&grid, &a.profile, &masses, &mut flow);
                        route_costs_at(scen, &flow, s)
                    })
                    .collect()
            })
            .collect();
        let cond = conditioning(scen, rule);
        Ok(Self {
            scen,
            rule,
            grid,
            route_costs,
            cond,
        })
    }

    pub fn grid(&self) -> &PolicyGrid {
        &self.grid
    }

    pub fn scenario(&self) -> &Scenario {
        self.scen
    }

    pub fn rule(&self) -> &RecommendationRule {
        self.rule
    }

    /// Grid indices group `k` receives with positive probability.
    pub fn support(&self, k: usize) -> Vec<usize> {
        self.cond[k].keys().copied().collect()
    }

    /// Probability that group `k` is told `g`.
    pub fn marginal_mass(&self, k: usize, g: usize) -> f64 {
        let prior = self.scen.network().prior();
        self.cond[k].get(&g).map_or(0.0, |ev| {
            ev.iter()
                .map(|&(s, a)| prior[s] * self.rule.states[s].atoms[a].weight)
                .sum()
        })
    }

    fn event(&self, k: usize, g: usize) -> Result<&[(usize, usize)]> {
        if k >= self.rule.num_groups {
            return Err(Error::InvalidGroup {
                index: k,
                count: self.rule.num_groups,
            });
        }
        self.cond[k]
            .get(&g)
            .map(Vec::as_slice)
            .ok_or(Error::EmptyConditioning { group: k, policy: g })
    }

    /// `EC^K(ŷ; y^k, x)`.
    pub fn expected_cost(&self, q: &ExpectedCostQuery<'_>) -> Result<f64> {
        let event = self.event(q.group, q.recommended)?;
        if q.deviation.len() != self.grid.num_routes() {
            return Err(Error::Dimension(format!(
                "deviation has {} entries, network has {} routes",
                q.deviation.len(),
                self.grid.num_routes()
            )));
        }
        let prior = self.scen.network().prior();
        Ok(event
            .iter()
            .map(|&(s, a)| {
                let w = self.rule.states[s].atoms[a].weight;
                prior[s] * w * dot(q.deviation, &self.route_costs[s][a])
            })
            .sum())
    }

    /// Obedience-row value `Σ p(s)·σ(y|s)·[cost(y^k at y) − cost(r̂ at y)]`.
    /// Positive means deviating to `route` pays.
    pub fn deviation_value(&self, k: usize, g: usize, route: usize) -> Result<f64> {
        let event = self.event(k, g)?;
        let prior = self.scen.network().prior();
        let y = self.grid.policy(g);
        Ok(event
            .iter()
            .map(|&(s, a)| {
                let rc = &self.route_costs[s][a];
                let w = self.rule.states[s].atoms[a].weight;
                obedience_coefficient(prior[s], dot(y, rc), rc[route]) * w
            })
            .sum())
    }

    /// Best pure deviation for group `k` told `g`, lowest route index on ties.
    pub fn best_deviation(&self, k: usize, g: usize) -> Result<(usize, f64)> {
        let mut best = (0, f64::NEG_INFINITY);
        for r in 0..self.grid.num_routes() {
            let v = self.deviation_value(k, g, r)?;
            if v > best.1 {
                best = (r, v);
            }
        }
        Ok(best)
    }
}

/// Weighted-atomic expected costs: the deviant's own weight moves load.
pub struct AtomicEvaluator<'a> {
    scen: &'a Scenario,
    rule: &'a RecommendationRule,
    publicness: &'a AtomicPublicness,
    grid: PolicyGrid,
    /// `flows[s][atom]` when everyone obeys.
    flows: Vec<Vec<Vec<f64>>>,
    cond: Conditioning,
}

impl<'a> AtomicEvaluator<'a> {
    pub fn new(scen: &'a Scenario, rule: &'a RecommendationRule) -> Result<Self> {
        let publicness = scen
            .atomic()
            .ok_or_else(|| Error::validation("scenario has no atomic population"))?;
        validate(rule, scen).into_result()?;
        let grid = enumerate_policy_grid(scen.network().num_routes(), rule.grid_m)?;
        let masses = publicness.group_weights(scen.num_groups());
        let flows = rule
            .states
            .iter()
            .map(|st| {
                st.atoms
                    .iter()
                    .map(|a| {
                        let mut f = vec![0.0; scen.network().num_routes()];
                        profile_flow(&grid, &a.profile, &masses, &mut f);
                        f
                    })
                    .collect()
            })
            .collect();
        let cond = conditioning(scen, rule);
        Ok(Self {
            scen,
            rule,
            publicness,
            grid,
            flows,
            cond,
        })
    }

    pub fn grid(&self) -> &PolicyGrid {
        &self.grid
    }

    pub fn publicness(&self) -> &AtomicPublicness {
        self.publicness
    }

    pub fn support(&self, k: usize) -> Vec<usize> {
        self.cond[k].keys().copied().collect()
    }

    fn event(&self, traveler: usize, g: usize) -> Result<(usize, &[(usize, usize)])> {
        if traveler >= self.publicness.n {
            return Err(Error::UnknownTraveler(traveler));
        }
        let k = self.publicness.group_of[traveler];
        let ev = self.cond[k]
            .get(&g)
            .ok_or(Error::EmptyConditioning { group: k, policy: g })?;
        Ok((k, ev))
    }

    fn traveler_cost(&self, i: usize, k: usize, s: usize, a: usize, y_hat: &[f64]) -> f64 {
        let y_k = self.grid.policy(self.rule.states[s].atoms[a].profile[k]);
        atomic_traveler_cost(self.scen, &self.flows[s][a], self.publicness.weights[i], y_k, y_hat, s)
    }

    /// `EC^{n,K}_i(ŷ; y^k)`.
    pub fn expected_cost(&self, traveler: usize, g: usize, y_hat: &[f64]) -> Result<f64> {
        let (k, event) = self.event(traveler, g)?;
        if y_hat.len() != self.grid.num_routes() {
            return Err(Error::Dimension("deviation policy has wrong length".into()));
        }
        let prior = self.scen.network().prior();
        Ok(event
            .iter()
            .map(|&(s, a)| {
                let w = self.rule.states[s].atoms[a].weight;
                prior[s] * w * self.traveler_cost(traveler, k, s, a, y_hat)
            })
            .sum())
    }

    /// `EC_i(y^k) − EC_i(ŷ; y^k)` accumulated atom by atom; positive means the
    /// deviation pays.
    pub fn deviation_value(&self, traveler: usize, g: usize, y_hat: &[f64]) -> Result<f64> {
        let (k, event) = self.event(traveler, g)?;
        let prior = self.scen.network().prior();
        let y = self.grid.policy(g);
        Ok(event
            .iter()
            .map(|&(s, a)| {
                let w = self.rule.states[s].atoms[a].weight;
                let obey = self.traveler_cost(traveler, k, s, a, y);
                let dev = self.traveler_cost(traveler, k, s, a, y_hat);
                obedience_coefficient(prior[s], obey, dev) * w
            })
            .sum())
    }
}

pub fn expected_cost_nonatomic(
    scen: &Scenario,
    rule: &RecommendationRule,
    q: &ExpectedCostQuery<'_>,
) -> Result<f64> {
    NonatomicEvaluator::new(scen, rule)?.expected_cost(q)
}

pub fn expected_cost_atomic(
    scen: &Scenario,
    rule: &RecommendationRule,
    traveler: usize,
    q: &ExpectedCostQuery<'_>,
) -> Result<f64> {
    let ev = AtomicEvaluator::new(scen, rule)?;
    let k = ev.publicness().group_of.get(traveler).copied().ok_or(Error::UnknownTraveler(traveler))?;
    if k != q.group {
        return Err(Error::validation(format!(
            "traveler {traveler} is in group {k}, query is for group {}",
            q.group
        )));
    }
    ev.expected_cost(traveler, q.recommended, q.deviation)
}

/// `J = Σ_s p(s) Σ_y σ(y|s) · Objective(f(y, x), s)` under the scenario's
/// objective selector.
pub fn planner_value(rule: &RecommendationRule, scen: &Scenario) -> Result<f64> {
    planner_value_with(rule, scen, &scen.objective())
}

pub fn planner_value_with(
    rule: &RecommendationRule,
    scen: &Scenario,
    objective: &dyn FlowObjective,
) -> Result<f64> {
    validate(rule, scen).into_result()?;
    let grid = enumerate_policy_grid(scen.network().num_routes(), rule.grid_m)?;
    let masses = scen.group_masses();
    let prior = scen.network().prior();
    let mut flow = vec![0.0; scen.network().num_routes()];
    let mut total = 0.0;
    for (s, st) in rule.states.iter().enumerate() {
        for a in &st.atoms {
            profile_flow(&grid, &a.profile, &masses, &mut flow);
            total += prior[s] * a.weight * objective.eval(scen.network(), scen.costs(), &flow, s);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::mechanism::{RuleAtom, StateRule};
    use crate::policy::PartitionProfile;

    /// pigou2 restricted to a single state, with `e2` slope `slope` there.
    pub(crate) fn pigou_single_state(slope: f64, n: Option<usize>) -> Scenario {
        use crate::model::{CostModel, Network};
        let net = Network::new(
            vec!["e1".into(), "e2".into()],
            vec![vec![0], vec![1]],
            vec!["s2".into()],
            vec![1.0],
            1.0,
        )
        .unwrap();
        let costs = CostModel::new(vec![vec![vec![1.0]], vec![vec![0.0, slope]]], &net).unwrap();
        let base = Scenario::nonatomic(net, costs, PartitionProfile(vec![1.0]), 1, Default::default()).unwrap();
        match n {
            Some(n) => base
                .with_atomic(AtomicPublicness::equal_weights(&[n], 1.0).unwrap(), 1)
                .unwrap(),
            None => base,
        }
    }

    #[test]
    fn full_revelation_costs() {
        let sc = corpus::pigou2();
        let rule = corpus::pigou2_full_revelation();
        // Recommended (0,1), obeyed: 0.5 · 1 · (0.5 · 1).
        let q = ExpectedCostQuery { group: 0, recommended: 1, deviation: &[0.0, 1.0] };
        assert_eq!(expected_cost_nonatomic(&sc, &rule, &q).unwrap(), 0.25);
        // Recommended (1,0) in s2, deviating to e2 which carries no load.
        let q = ExpectedCostQuery { group: 0, recommended: 0, deviation: &[0.0, 1.0] };
        assert_eq!(expected_cost_nonatomic(&sc, &rule, &q).unwrap(), 0.0);
    }

    #[test]
    fn constant_costs_give_marginal_times_cost() {
        let sc = corpus::constant();
        let rule = RecommendationRule {
            grid_m: 2,
            num_groups: 1,
            states: vec![
                StateRule { state: "s1".into(), atoms: vec![RuleAtom { profile: vec![0], weight: 0.25 }, RuleAtom { profile: vec![1], weight: 0.75 }] },
                StateRule { state: "s2".into(), atoms: vec![RuleAtom { profile: vec![1], weight: 1.0 }] },
            ],
        };
        let ev = NonatomicEvaluator::new(&sc, &rule).unwrap();
        let q = ExpectedCostQuery { group: 0, recommended: 1, deviation: &[0.5, 0.5] };
        let expected = ev.marginal_mass(0, 1) * 1.0;
        assert!((ev.expected_cost(&q).unwrap() - expected).abs() < 1e-15);
        assert!((ev.marginal_mass(0, 1) - (0.3 * 0.75 + 0.7)).abs() < 1e-15);
    }

    #[test]
    fn empty_conditioning_event() {
        let sc = corpus::pigou2();
        let rule = corpus::pigou2_full_revelation();
        let rule = RecommendationRule { grid_m: 2, ..rule };
        // Under m = 2, index 1 is (0.5, 0.5), never recommended.
        let rule = RecommendationRule {
            states: rule
                .states
                .iter()
                .map(|s| StateRule { state: s.state.clone(), atoms: vec![RuleAtom { profile: vec![0], weight: 1.0 }] })
                .collect(),
            ..rule
        };
        let q = ExpectedCostQuery { group: 0, recommended: 1, deviation: &[1.0, 0.0] };
        assert!(matches!(
            expected_cost_nonatomic(&sc, &rule, &q),
            Err(Error::EmptyConditioning { group: 0, policy: 1 })
        ));
    }

    #[test]
    fn atomic_monopoly_and_pigou_pair() {
        // n = 1: the single traveler carries all demand.
        let sc = pigou_single_state(2.0, Some(1));
        let rule = RecommendationRule::point_masses(&sc, 1, vec![vec![0]]);
        let q = ExpectedCostQuery { group: 0, recommended: 0, deviation: &[1.0, 0.0] };
        assert_eq!(expected_cost_atomic(&sc, &rule, 0, &q).unwrap(), 1.0);

        let sc = pigou_single_state(2.0, Some(2));
        let rule = RecommendationRule::point_masses(&sc, 1, vec![vec![0]]);
        let to_e2 = ExpectedCostQuery { group: 0, recommended: 0, deviation: &[0.0, 1.0] };
        assert_eq!(expected_cost_atomic(&sc, &rule, 0, &to_e2).unwrap(), 0.5);
        let stay = ExpectedCostQuery { group: 0, recommended: 0, deviation: &[1.0, 0.0] };
        assert_eq!(expected_cost_atomic(&sc, &rule, 0, &stay).unwrap(), 0.5);
        assert!(matches!(
            expected_cost_atomic(&sc, &rule, 9, &stay),
            Err(Error::UnknownTraveler(9))
        ));
    }

    #[test]
    fn planner_values() {
        let sc = pigou_single_state(2.0, None).with_grid(2).unwrap();
        let rule = RecommendationRule::point_masses(&sc, 2, vec![vec![1]]);
        assert_eq!(planner_value(&rule, &sc).unwrap(), 1.0);

        // Uniform over atoms with objective 1 ((1,0)) and 3 ((0,1) at load 1 with slope 3).
        let sc3 = pigou_single_state(3.0, None);
        let rule = RecommendationRule {
            grid_m: 1,
            num_groups: 1,
            states: vec![StateRule {
                state: "s2".into(),
                atoms: vec![RuleAtom { profile: vec![0], weight: 0.5 }, RuleAtom { profile: vec![1], weight: 0.5 }],
            }],
        };
        assert_eq!(planner_value(&rule, &sc3).unwrap(), 2.0);
    }

    #[test]
    fn atomic_two_traveler_consistency_with_planner_value() {
        // With every traveler obeying, Σ_i EC_i(y^k) over all recommended
        // policies equals J under the total-cost objective.
        let sc = corpus::pigou2_atomic(2).with_grid(2).unwrap();
        let rule = RecommendationRule {
            grid_m: 2,
            num_groups: 1,
            states: vec![
                StateRule { state: "s1".into(), atoms: vec![RuleAtom { profile: vec![2], weight: 0.6 }, RuleAtom { profile: vec![1], weight: 0.4 }] },
                StateRule { state: "s2".into(), atoms: vec![RuleAtom { profile: vec![1], weight: 1.0 }] },
            ],
        };
        let ev = AtomicEvaluator::new(&sc, &rule).unwrap();
        let mut total = 0.0;
        for i in 0..2 {
            for g in ev.support(0) {
                let y = ev.grid().policy(g).to_vec();
                total += ev.expected_cost(i, g, &y).unwrap();
            }
        }
        // Brute-force J by enumeration of the two states.
        let j = 0.5 * (0.6 * 0.5 + 0.4 * (0.5 + 0.5 * 0.25)) + 0.5 * (0.5 + 0.5 * 1.0);
        assert!((total - j).abs() < 1e-15, "{total} vs {j}");
        assert!((planner_value(&rule, &sc).unwrap() - j).abs() < 1e-15);
    }
}
