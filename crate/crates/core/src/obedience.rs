//! Obedience checks straight from cost evaluations.
//!
//! Nonatomic gains are computed with the same per-atom coefficients as the
//! planner LP's obedience rows, so a planner rule passes here exactly when its
//! weight vector satisfies those rows.

use serde::Serialize;

use crate::costs::{atomic_traveler_cost, obedience_coefficient, profile_flow, AtomicEvaluator, NonatomicEvaluator};
use crate::error::{Error, Result};
use crate::mechanism::{validate, RecommendationRule, Scenario};
use crate::planner::Deviation;
use crate::policy::{enumerate_policy_grid, Policy};

/// The deviation attaining the largest gain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub group: usize,
    /// Set for atomic checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traveler: Option<usize>,
    /// Set for complete-information checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    /// Grid index of the recommended policy.
    pub policy: usize,
    pub recommended: Vec<f64>,
    pub deviation: Deviation,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObedienceReport {
    pub pass: bool,
    pub eps: f64,
    pub max_gain: f64,
    pub worst: Option<Witness>,
    /// Number of (traveler or group, recommendation) pairs examined.
    pub checked: usize,
}

impl ObedienceReport {
    fn new(eps: f64) -> Self {
        Self {
            pass: true,
            eps,
            max_gain: 0.0,
            worst: None,
            checked: 0,
        }
    }

    fn offer(&mut self, w: Witness) {
        self.checked += 1;
        if self.worst.is_none() || w.gain > self.max_gain {
            self.max_gain = w.gain;
            self.worst = Some(w);
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.max_gain <= self.eps;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Best pure deviation for group `k` told grid policy `g` (an index into the
/// rule's grid): the route minimizing expected cost and
/// `gain = EC(y^k; y^k) − EC(r̂; y^k)`.
pub fn best_deviation(k: usize, g: usize, rule: &RecommendationRule, scen: &Scenario) -> Result<(usize, f64)> {
    NonatomicEvaluator::new(scen, rule)?.best_deviation(k, g)
}

/// Publicness-specific mixed-strategy Bayes correlated Wardrop check.
pub fn verify_ps_bcwe(rule: &RecommendationRule, scen: &Scenario, eps: f64) -> Result<ObedienceReport> {
    let ev = NonatomicEvaluator::new(scen, rule)?;
    let mut report = ObedienceReport::new(eps);
    for k in 0..rule.num_groups {
        for g in ev.support(k) {
            let (route, gain) = ev.best_deviation(k, g)?;
            report.offer(Witness {
                group: k,
                traveler: None,
                state: None,
                policy: g,
                recommended: ev.grid().policy(g).to_vec(),
                deviation: Deviation::Route(route),
                gain,
            });
        }
    }
    Ok(report.finish())
}

/// Candidate deviations for atomic checks: pure routes, then every other grid
/// policy. Returns `(label, policy)` pairs.
fn atomic_deviations(grid: &crate::policy::PolicyGrid) -> Vec<(Deviation, Vec<f64>)> {
    let nr = grid.num_routes();
    let mut out: Vec<(Deviation, Vec<f64>)> = (0..nr).map(|r| (Deviation::Route(r), Policy::pure(nr, r).0)).collect();
    out.extend(
        (0..grid.len())
            .filter(|&g| !(0..nr).any(|r| grid.pure_index(r) == g))
            .map(|g| (Deviation::Grid(g), grid.policy(g).to_vec())),
    );
    out
}

/// Travelers with distinct (group, weight); others have identical gains.
fn distinct_travelers(scen: &Scenario) -> Vec<usize> {
    let a = scen.atomic().expect("checked by caller");
    let mut seen = std::collections::BTreeSet::new();
    (0..a.n)
        .filter(|&i| seen.insert((a.group_of[i], a.weights[i].to_bits())))
        .collect()
}

/// Upper bound on cost evaluations an atomic check may perform.
pub const ATOMIC_EVAL_CAP: u128 = 200_000_000;

/// Weighted-atomic publicness-specific Bayes correlated equilibrium check.
/// Deviations cover pure routes and the full policy grid, since the deviant's
/// own weight makes costs nonlinear in the deviation.
pub fn verify_ps_bce_atomic(rule: &RecommendationRule, scen: &Scenario, eps: f64) -> Result<ObedienceReport> {
    let ev = AtomicEvaluator::new(scen, rule)?;
    let devs = atomic_deviations(ev.grid());
    let travelers = distinct_travelers(scen);
    let atoms: usize = rule.states.iter().map(|s| s.atoms.len()).sum();
    let work = (travelers.len() as u128) * (devs.len() as u128) * (atoms as u128) * 2;
    if work > ATOMIC_EVAL_CAP {
        return Err(Error::CapExceeded {
            what: "atomic cost evaluations (reduce m or K)",
            needed: work,
            cap: ATOMIC_EVAL_CAP,
        });
    }
    let mut report = ObedienceReport::new(eps);
    for &i in &travelers {
        let k = ev.publicness().group_of[i];
        for g in ev.support(k) {
            let mut best: Option<(Deviation, f64)> = None;
            for (label, y_hat) in &devs {
                let v = ev.deviation_value(i, g, y_hat)?;
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((*label, v));
                }
            }
            let (deviation, gain) = best.expect("at least one route");
            report.offer(Witness {
                group: k,
                traveler: Some(i),
                state: None,
                policy: g,
                recommended: ev.grid().policy(g).to_vec(),
                deviation,
                gain,
            });
        }
    }
    Ok(report.finish())
}

/// Complete-information correlated-equilibrium check: each state's
/// distribution is checked on its own, without prior averaging, with atomic
/// costs.
pub fn verify_complete_info_ce(rule: &RecommendationRule, scen: &Scenario, eps: f64) -> Result<ObedienceReport> {
    let publicness = scen
        .atomic()
        .ok_or_else(|| Error::validation("scenario has no atomic population"))?;
    validate(rule, scen).into_result()?;
    let grid = enumerate_policy_grid(scen.network().num_routes(), rule.grid_m)?;
    let devs = atomic_deviations(&grid);
    let masses = publicness.group_weights(scen.num_groups());
    let mut report = ObedienceReport::new(eps);
    let mut flow = vec![0.0; scen.network().num_routes()];
    for (s, st) in rule.states.iter().enumerate() {
        let flows: Vec<Vec<f64>> = st
            .atoms
            .iter()
            .map(|a| {
                profile_flow(&grid, &a.profile, &masses, &mut flow);
                flow.clone()
            })
            .collect();
        for i in distinct_travelers(scen) {
            let k = publicness.group_of[i];
            let w_i = publicness.weights[i];
            let mut support: Vec<usize> = st.atoms.iter().filter(|a| a.weight > 0.0).map(|a| a.profile[k]).collect();
            support.sort_unstable();
            support.dedup();
            for g in support {
                let y = grid.policy(g);
                let mut best: Option<(Deviation, f64)> = None;
                for (label, y_hat) in &devs {
                    let v: f64 = st
                        .atoms
                        .iter()
                        .zip(&flows)
                        .filter(|(a, _)| a.weight > 0.0 && a.profile[k] == g)
                        .map(|(a, f)| {
                            let obey = atomic_traveler_cost(scen, f, w_i, y, y, s);
                            let dev = atomic_traveler_cost(scen, f, w_i, y, y_hat, s);
                            obedience_coefficient(1.0, obey, dev) * a.weight
                        })
                        .sum();
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((*label, v));
                    }
                }
                let (deviation, gain) = best.expect("at least one route");
                report.offer(Witness {
                    group: k,
                    traveler: Some(i),
                    state: Some(st.state.clone()),
                    policy: g,
                    recommended: y.to_vec(),
                    deviation,
                    gain,
                });
            }
        }
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::mechanism::{RuleAtom, StateRule};
    use crate::model::{CostModel, Network};
    use crate::planner::{build_planner_lp, no_information_rule, solve_optimal_mechanism};
    use crate::policy::{AtomicPublicness, PartitionProfile};

    fn single_state_pigou_atomic(slope: f64, n: usize) -> Scenario {
        let net = Network::new(vec!["e1".into(), "e2".into()], vec![vec![0], vec![1]], vec!["s2".into()], vec![1.0], 1.0)
            .unwrap();
        let costs = CostModel::new(vec![vec![vec![1.0]], vec![vec![0.0, slope]]], &net).unwrap();
        Scenario::nonatomic(net, costs, PartitionProfile(vec![1.0]), 1, Default::default())
            .unwrap()
            .with_atomic(AtomicPublicness::equal_weights(&[n], 1.0).unwrap(), 1)
            .unwrap()
    }

    #[test]
    fn full_revelation_fails_with_gain_half() {
        let sc = corpus::pigou2();
        let rule = corpus::pigou2_full_revelation();
        // Told (1,0) (index 0 at m = 1): e2 is empty in s2, so it pays 0.5 to switch.
        let (r, gain) = best_deviation(0, 0, &rule, &sc).unwrap();
        assert_eq!((r, gain), (1, 0.5));
        let rep = verify_ps_bcwe(&rule, &sc, 1e-7).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.max_gain, 0.5);
        assert_eq!(rep.worst.unwrap().deviation, Deviation::Route(1));
    }

    #[test]
    fn wardrop_point_mass_passes() {
        for (_, sc) in corpus::all() {
            let rule = no_information_rule(&sc).unwrap();
            let rep = verify_ps_bcwe(&rule, &sc, 1e-7).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
        let k3 = corpus::pigou2().with_partition(PartitionProfile(vec![0.2, 0.3, 0.5])).unwrap();
        let rule = no_information_rule(&k3).unwrap();
        assert!(verify_ps_bcwe(&rule, &k3, 1e-7).unwrap().pass);
    }

    #[test]
    fn constant_costs_zero_gain() {
        let sc = corpus::constant();
        let m = solve_optimal_mechanism(&sc).unwrap();
        let rep = verify_ps_bcwe(&m.rule, &sc, 0.0).unwrap();
        assert_eq!(rep.max_gain, 0.0);
    }

    #[test]
    fn agrees_exactly_with_lp_rows() {
        for (_, sc) in corpus::all() {
            let m = solve_optimal_mechanism(&sc).unwrap();
            let plp = build_planner_lp(&sc).unwrap();
            let rows = plp.row_values(&m.rule.to_weight_vector(plp.grid.len()));
            let rep = verify_ps_bcwe(&m.rule, &sc, 1e-7).unwrap();
            let ev = NonatomicEvaluator::new(&sc, &m.rule).unwrap();
            for (label, v) in plp.rows.iter().zip(&rows) {
                if let crate::planner::RowLabel::Obedience { group, policy, route } = *label {
                    if ev.marginal_mass(group, policy) > 0.0 {
                        assert_eq!(ev.deviation_value(group, policy, route).unwrap(), *v);
                    }
                }
            }
            assert!(rep.pass);
            assert_eq!(rep.pass, rows.iter().all(|&v| v <= 1e-7));
        }
    }

    #[test]
    fn gains_scale_with_costs() {
        let sc = corpus::pigou2();
        let rule = corpus::pigou2_full_revelation();
        let scaled = sc.with_costs(sc.costs().scaled(3.0)).unwrap();
        let a = verify_ps_bcwe(&rule, &sc, 0.0).unwrap().max_gain;
        let b = verify_ps_bcwe(&rule, &scaled, 0.0).unwrap().max_gain;
        assert!((b - 3.0 * a).abs() < 1e-12);
    }

    #[test]
    fn atomic_pair_examples() {
        let rule = |sc: &Scenario| RecommendationRule::point_masses(sc, 1, vec![vec![0]]);
        // Slope 2: staying costs 0.5, moving to e2 costs 0.5·(2·0.5): indifferent.
        let sc = single_state_pigou_atomic(2.0, 2);
        let rep = verify_ps_bce_atomic(&rule(&sc), &sc, 0.0).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.max_gain, 0.0);
        // Slope 1: moving costs 0.25 < 0.5.
        let sc = single_state_pigou_atomic(1.0, 2);
        let rep = verify_ps_bce_atomic(&rule(&sc), &sc, 1e-7).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.max_gain, 0.25);
        let ce = verify_complete_info_ce(&rule(&sc), &sc, 1e-7).unwrap();
        assert!(!ce.pass);
        assert_eq!(ce.max_gain, 0.25);
    }

    #[test]
    fn single_route_atomic_passes() {
        let net = Network::new(vec!["e".into()], vec![vec![0]], vec!["s".into()], vec![1.0], 1.0).unwrap();
        let costs = CostModel::new(vec![vec![vec![0.0, 1.0]]], &net).unwrap();
        let sc = Scenario::new(net, costs, 1, None, Some(AtomicPublicness::equal_weights(&[1], 1.0).unwrap()), 3, Default::default())
            .unwrap();
        let rule = RecommendationRule::point_masses(&sc, 3, vec![vec![0]]);
        assert!(verify_ps_bce_atomic(&rule, &sc, 0.0).unwrap().pass);
        assert!(verify_complete_info_ce(&rule, &sc, 0.0).unwrap().pass);
    }

    #[test]
    fn grid_deviation_at_least_as_good_as_pure() {
        let sc = corpus::pigou2_atomic(3).with_grid(4).unwrap();
        let rule = RecommendationRule {
            grid_m: 4,
            num_groups: 1,
            states: vec![
                StateRule { state: "s1".into(), atoms: vec![RuleAtom { profile: vec![1], weight: 0.5 }, RuleAtom { profile: vec![3], weight: 0.5 }] },
                StateRule { state: "s2".into(), atoms: vec![RuleAtom { profile: vec![2], weight: 1.0 }] },
            ],
        };
        let ev = AtomicEvaluator::new(&sc, &rule).unwrap();
        for g in ev.support(0) {
            let pure_best = (0..2)
                .map(|r| ev.deviation_value(0, g, &Policy::pure(2, r).0).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let grid_best = ev
                .grid()
                .iter()
                .map(|y| ev.deviation_value(0, g, y).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(grid_best >= pure_best);
        }
    }

    #[test]
    fn report_json_has_witness() {
        let rep = verify_ps_bcwe(&corpus::pigou2_full_revelation(), &corpus::pigou2(), 1e-7).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(v["pass"], false);
        assert_eq!(v["worst"]["deviation"]["route"], 1);
    }
}
