//! Scenarios, recommendation rules, their validation and JSON file formats.
//!
//! Scenario file:
//!
//! ```json
//! {"schema_version": 1, "edges": ["e1", "e2"], "routes": [[0], [1]],
//!  "states": ["s1", "s2"], "prior": [0.5, 0.5], "demand": 1.0,
//!  "costs": {"e1": {"s1": [1.0], "s2": [1.0]}, "e2": {"s1": [0.0, 0.5], "s2": [0.0, 2.0]}},
//!  "K": 1, "partition": [1.0], "grid_m": 10, "objective": "total_cost"}
//! ```
//!
//! `partition` may be replaced (or accompanied) by
//! `"atomic": {"n": 2, "weights": [0.5, 0.5], "group_of": [0, 0]}`.
//!
//! Rule file: `{"grid_m": 10, "K": 1, "states": {"s1": [{"profile": [10], "weight": "1"}]}}`.
//! Weights are decimal strings so that a save/load cycle is bit-exact.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostModel, Network, Objective};
use crate::policy::{grid_size, AtomicPublicness, PartitionProfile};
use crate::util::fmt_num;

pub const SCHEMA_VERSION: u32 = 1;
const RULE_MASS_TOL: f64 = 1e-9;
const PARTITION_MATCH_TOL: f64 = 1e-9;

/// A network, its costs, a publicness model, and the planner's settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    network: Network,
    costs: CostModel,
    num_groups: usize,
    partition: Option<PartitionProfile>,
    atomic: Option<AtomicPublicness>,
    grid_m: u32,
    objective: Objective,
}

impl Scenario {
    pub fn new(
        network: Network,
        costs: CostModel,
        num_groups: usize,
        partition: Option<PartitionProfile>,
        atomic: Option<AtomicPublicness>,
        grid_m: u32,
        objective: Objective,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if num_groups == 0 {
            problems.push("K must be at least 1".to_string());
        }
        if grid_m == 0 {
            problems.push("grid_m must be at least 1".to_string());
        }
        if partition.is_none() && atomic.is_none() {
            problems.push("scenario needs a partition or an atomic population".to_string());
        }
        if let Some(x) = &partition {
            if x.num_groups() != num_groups {
                problems.push(format!("partition has {} factors for K = {num_groups}", x.num_groups()));
            } else if let Err(Error::Validation(p)) = PartitionProfile::new(x.0.clone()) {
                problems.extend(p);
            }
        }
        if let Some(a) = &atomic {
            match a.validate(num_groups) {
                Err(Error::Validation(p)) => problems.extend(p),
                Err(e) => problems.push(e.to_string()),
                Ok(()) => {
                    if let Some(x) = &partition {
                        let derived = a.derived_partition(num_groups);
                        if x.iter().zip(derived.iter()).any(|(a, b)| (a - b).abs() > PARTITION_MATCH_TOL) {
                            problems.push(format!(
                                "atomic groups imply partition {:?}, scenario states {:?}",
                                derived.0, x.0
                            ));
                        }
                    }
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        for w in costs.strictness_warnings() {
            log::debug!("cost regularity: {w}");
        }
        Ok(Self {
            network,
            costs,
            num_groups,
            partition,
            atomic,
            grid_m,
            objective,
        })
    }

    pub fn nonatomic(
        network: Network,
        costs: CostModel,
        partition: PartitionProfile,
        grid_m: u32,
        objective: Objective,
    ) -> Result<Self> {
        let k = partition.num_groups();
        Self::new(network, costs, k, Some(partition), None, grid_m, objective)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn grid_m(&self) -> u32 {
        self.grid_m
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn atomic(&self) -> Option<&AtomicPublicness> {
        self.atomic.as_ref()
    }

    /// The supplied partition, or the one implied by the atomic groups.
    pub fn partition(&self) -> PartitionProfile {
        match (&self.partition, &self.atomic) {
            (Some(x), _) => x.clone(),
            (None, Some(a)) => a.derived_partition(self.num_groups),
            (None, None) => unreachable!("validated at construction"),
        }
    }

    /// Population mass of each group in the nonatomic game, `x^k D`.
    pub fn group_masses(&self) -> Vec<f64> {
        let d = self.network.demand();
        self.partition().iter().map(|x| x * d).collect()
    }

    pub fn with_grid(&self, m: u32) -> Result<Self> {
        let mut out = self.clone();
        out.grid_m = m;
        if m == 0 {
            return Err(Error::validation("grid_m must be at least 1"));
        }
        Ok(out)
    }

    pub fn with_objective(&self, objective: Objective) -> Self {
        let mut out = self.clone();
        out.objective = objective;
        out
    }

    /// Same network and costs under a new nonatomic partition (drops any
    /// atomic population).
    pub fn with_partition(&self, x: PartitionProfile) -> Result<Self> {
        Self::nonatomic(self.network.clone(), self.costs.clone(), x, self.grid_m, self.objective)
    }

    /// Same network and costs with an atomic population of `num_groups` groups.
    pub fn with_atomic(&self, atomic: AtomicPublicness, num_groups: usize) -> Result<Self> {
        Self::new(
            self.network.clone(),
            self.costs.clone(),
            num_groups,
            None,
            Some(atomic),
            self.grid_m,
            self.objective,
        )
    }

    pub fn with_costs(&self, costs: CostModel) -> Result<Self> {
        let costs = CostModel::new(
            (0..self.network.num_edges())
                .map(|e| {
                    (0..self.network.num_states())
                        .map(|s| costs.coefficients(e, s).to_vec())
                        .collect()
                })
                .collect(),
            &self.network,
        )?;
        let mut out = self.clone();
        out.costs = costs;
        Ok(out)
    }
}

/// One support point of a state's recommendation distribution: a grid-policy
/// index per group and its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleAtom {
    pub profile: Vec<usize>,
    pub weight: f64,
}

/// The distribution over recommendation profiles in one state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateRule {
    pub state: String,
    pub atoms: Vec<RuleAtom>,
}

/// State-conditional finite-support distribution over K-tuples of grid policies.
#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationRule {
    pub grid_m: u32,
    pub num_groups: usize,
    pub states: Vec<StateRule>,
}

/// Invariant violations found by [`validate`]; empty iff the rule is valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.issues))
        }
    }
}

impl RecommendationRule {
    /// One deterministic profile per state, in scenario state order.
    pub fn point_masses(scen: &Scenario, grid_m: u32, profiles: Vec<Vec<usize>>) -> Self {
        Self {
            grid_m,
            num_groups: scen.num_groups(),
            states: scen
                .network()
                .states()
                .iter()
                .zip(profiles)
                .map(|(name, profile)| StateRule {
                    state: name.clone(),
                    atoms: vec![RuleAtom { profile, weight: 1.0 }],
                })
                .collect(),
        }
    }

    pub fn atoms(&self, state: usize) -> &[RuleAtom] {
        &self.states[state].atoms
    }

    /// Reorders states to match the scenario's state order.
    pub fn align_to(&mut self, scen: &Scenario) -> Result<()> {
        let names = scen.network().states();
        let mut aligned = Vec::with_capacity(names.len());
        let mut problems = Vec::new();
        for name in names {
            match self.states.iter().position(|s| &s.state == name) {
                Some(i) => aligned.push(self.states[i].clone()),
                None => problems.push(format!("rule has no distribution for state {name}")),
            }
        }
        for s in &self.states {
            if !names.contains(&s.state) {
                problems.push(format!("rule mentions unknown state {}", s.state));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        self.states = aligned;
        Ok(())
    }

    /// Flattened weights in planner variable order: state-major, then the
    /// mixed-radix index of the profile.
    pub fn to_weight_vector(&self, grid_len: usize) -> Vec<f64> {
        let per_state = crate::util::checked_pow(grid_len, self.num_groups).unwrap() as usize;
        let mut out = vec![0.0; per_state * self.states.len()];
        for (s, st) in self.states.iter().enumerate() {
            for a in &st.atoms {
                out[s * per_state + crate::util::tuple_index(&a.profile, grid_len)] += a.weight;
            }
        }
        out
    }
}

/// Checks distributional structure against the scenario.
pub fn validate(rule: &RecommendationRule, scen: &Scenario) -> ValidationReport {
    let mut issues = Vec::new();
    if rule.num_groups != scen.num_groups() {
        issues.push(format!(
            "rule has K = {}, scenario has K = {}",
            rule.num_groups,
            scen.num_groups()
        ));
    }
    if rule.grid_m == 0 {
        issues.push("rule grid_m must be at least 1".to_string());
    }
    let names = scen.network().states();
    if rule.states.len() != names.len()
        || rule.states.iter().zip(names).any(|(a, b)| &a.state != b)
    {
        issues.push(format!(
            "rule states {:?} do not match scenario states {:?}",
            rule.states.iter().map(|s| s.state.as_str()).collect::<Vec<_>>(),
            names
        ));
    }
    let grid_len = grid_size(scen.network().num_routes(), rule.grid_m.max(1)).unwrap_or(u128::MAX);
    for st in &rule.states {
        let mut mass = 0.0;
        for (j, atom) in st.atoms.iter().enumerate() {
            if !(atom.weight >= 0.0) || !atom.weight.is_finite() {
                issues.push(format!("state {}, atom {j}: negative mass", st.state));
            }
            if atom.profile.len() != rule.num_groups {
                issues.push(format!(
                    "state {}, atom {j}: profile has {} entries for K = {}",
                    st.state,
                    atom.profile.len(),
                    rule.num_groups
                ));
            }
            if let Some(&g) = atom.profile.iter().find(|&&g| g as u128 >= grid_len) {
                issues.push(format!(
                    "state {}, atom {j}: policy index {g} outside grid of {grid_len}",
                    st.state
                ));
            }
            mass += atom.weight;
        }
        if (mass - 1.0).abs() > RULE_MASS_TOL {
            issues.push(format!("state {}: mass {}", st.state, fmt_num(mass)));
        }
    }
    ValidationReport { issues }
}

/// Grid indices group `k` receives with positive probability in some state.
pub fn marginal_support(rule: &RecommendationRule, k: usize) -> Result<BTreeSet<usize>> {
    if k >= rule.num_groups {
        return Err(Error::InvalidGroup {
            index: k,
            count: rule.num_groups,
        });
    }
    Ok(rule
        .states
        .iter()
        .flat_map(|s| &s.atoms)
        .filter(|a| a.weight > 0.0)
        .map(|a| a.profile[k])
        .collect())
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default = "schema_v1")]
    schema_version: u32,
    edges: Vec<String>,
    routes: Vec<Vec<usize>>,
    states: Vec<String>,
    prior: Vec<f64>,
    demand: f64,
    costs: IndexMap<String, IndexMap<String, Vec<f64>>>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atomic: Option<AtomicPublicness>,
    grid_m: u32,
    #[serde(default)]
    objective: Objective,
}

fn schema_v1() -> u32 {
    SCHEMA_VERSION
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    grid_m: u32,
    #[serde(rename = "K")]
    k: usize,
    states: IndexMap<String, Vec<AtomFile>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomFile {
    profile: Vec<usize>,
    weight: String,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, msg: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

pub fn scenario_from_json(text: &str, path: &Path) -> Result<Scenario> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(path, e))?;
    if let Some(v) = value.get("schema_version") {
        let found = v.as_u64().ok_or_else(|| parse_err(path, "schema_version must be an integer"))?;
        if found != SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: found as u32,
                expected: SCHEMA_VERSION,
            });
        }
    }
    // Deserialize from text (not the Value) so errors carry line and column.
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| parse_err(path, e))?;

    let network = Network::new(file.edges, file.routes, file.states, file.prior, file.demand)?;
    let mut coeffs = Vec::with_capacity(network.num_edges());
    let mut problems = Vec::new();
    for edge in network.edges() {
        let Some(per_state) = file.costs.get(edge) else {
            problems.push(format!("costs: missing edge {edge}"));
            continue;
        };
        let mut row = Vec::with_capacity(network.num_states());
        for state in network.states() {
            match per_state.get(state) {
                Some(p) => row.push(p.clone()),
                None => problems.push(format!("costs.{edge}: missing state {state}")),
            }
        }
        for state in per_state.keys() {
            if !network.states().contains(state) {
                problems.push(format!("costs.{edge}: unknown state {state}"));
            }
        }
        coeffs.push(row);
    }
    for edge in file.costs.keys() {
        if !network.edges().contains(edge) {
            problems.push(format!("costs: unknown edge {edge}"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let costs = CostModel::new(coeffs, &network)?;
    Scenario::new(
        network,
        costs,
        file.k,
        file.partition.map(PartitionProfile),
        file.atomic,
        file.grid_m,
        file.objective,
    )
}

pub fn scenario_to_json(scen: &Scenario) -> String {
    let net = scen.network();
    let costs = net
        .edges()
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let per_state = net
                .states()
                .iter()
                .enumerate()
                .map(|(s, sname)| (sname.clone(), scen.costs().coefficients(e, s).to_vec()))
                .collect();
            (name.clone(), per_state)
        })
        .collect();
    let file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        edges: net.edges().to_vec(),
        routes: net.routes().to_vec(),
        states: net.states().to_vec(),
        prior: net.prior().to_vec(),
        demand: net.demand(),
        costs,
        k: scen.num_groups,
        partition: scen.partition.as_ref().map(|x| x.0.clone()),
        atomic: scen.atomic.clone(),
        grid_m: scen.grid_m,
        objective: scen.objective,
    };
    serde_json::to_string_pretty(&file).expect("scenario serializes")
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    scenario_from_json(&read(path)?, path)
}

pub fn save_scenario(scen: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &(scenario_to_json(scen) + "\n"))
}

pub fn rule_to_json(rule: &RecommendationRule) -> String {
    let file = RuleFile {
        grid_m: rule.grid_m,
        k: rule.num_groups,
        states: rule
            .states
            .iter()
            .map(|s| {
                let atoms = s
                    .atoms
                    .iter()
                    .map(|a| AtomFile {
                        profile: a.profile.clone(),
                        weight: format!("{}", a.weight),
                    })
                    .collect();
                (s.state.clone(), atoms)
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("rule serializes")
}

pub fn rule_from_json(text: &str, path: &Path) -> Result<RecommendationRule> {
    let file: RuleFile = serde_json::from_str(text).map_err(|e| parse_err(path, e))?;
    let mut states = Vec::with_capacity(file.states.len());
    for (name, atoms) in file.states {
        let mut out = Vec::with_capacity(atoms.len());
        for (j, a) in atoms.into_iter().enumerate() {
            let weight: f64 = a.weight.trim().parse().map_err(|_| {
                parse_err(path, format!("states.{name}[{j}].weight: `{}` is not a decimal", a.weight))
            })?;
            out.push(RuleAtom {
                profile: a.profile,
                weight,
            });
        }
        states.push(StateRule { state: name, atoms: out });
    }
    Ok(RecommendationRule {
        grid_m: file.grid_m,
        num_groups: file.k,
        states,
    })
}

pub fn save_rule(rule: &RecommendationRule, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &(rule_to_json(rule) + "\n"))
}

pub fn load_rule(path: impl AsRef<Path>) -> Result<RecommendationRule> {
    let path = path.as_ref();
    rule_from_json(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use proptest::prelude::*;

    fn two_state_rule(w: (f64, f64)) -> RecommendationRule {
        let atoms = |a, b| vec![RuleAtom { profile: vec![0], weight: a }, RuleAtom { profile: vec![1], weight: b }];
        RecommendationRule {
            grid_m: 1,
            num_groups: 1,
            states: vec![
                StateRule { state: "s1".into(), atoms: atoms(w.0, w.1) },
                StateRule { state: "s2".into(), atoms: atoms(0.5, 0.5) },
            ],
        }
    }

    #[test]
    fn validate_masses() {
        let sc = corpus::pigou2();
        assert!(validate(&two_state_rule((0.5, 0.5)), &sc).is_valid());
        let r = validate(&two_state_rule((0.5, 0.6)), &sc);
        assert_eq!(r.issues, vec!["state s1: mass 1.1".to_string()]);
        let r = validate(&two_state_rule((-0.5, 1.5)), &sc);
        assert_eq!(r.issues, vec!["state s1, atom 0: negative mass".to_string()]);
        let mut bad = two_state_rule((0.5, 0.5));
        bad.states[0].atoms[0].profile = vec![7];
        assert!(!validate(&bad, &sc).is_valid());
    }

    #[test]
    fn support_queries() {
        let sc = corpus::pigou2().with_partition(PartitionProfile::equal(2)).unwrap();
        // (1,0) to group 1 and (0,1) to group 2 in both states, grid m = 1.
        let r = RecommendationRule::point_masses(&sc, 1, vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(marginal_support(&r, 1).unwrap(), BTreeSet::from([1]));
        assert!(matches!(marginal_support(&r, 2), Err(Error::InvalidGroup { .. })));

        let sc1 = corpus::pigou2();
        let r = RecommendationRule::point_masses(&sc1, 1, vec![vec![0], vec![1]]);
        assert_eq!(marginal_support(&r, 0).unwrap(), BTreeSet::from([0, 1]));

        let grid = crate::policy::enumerate_policy_grid(2, 2).unwrap();
        let uniform = RecommendationRule {
            grid_m: 2,
            num_groups: 1,
            states: ["s1", "s2"]
                .iter()
                .map(|s| StateRule {
                    state: s.to_string(),
                    atoms: (0..grid.len()).map(|g| RuleAtom { profile: vec![g], weight: 1.0 / 3.0 }).collect(),
                })
                .collect(),
        };
        assert_eq!(marginal_support(&uniform, 0).unwrap().len(), grid.len());
    }

    #[test]
    fn scenario_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        for sc in [corpus::pigou2(), corpus::diamond4(), corpus::constant(), corpus::pigou2_atomic(2)] {
            let p = dir.path().join("s.json");
            save_scenario(&sc, &p).unwrap();
            assert_eq!(load_scenario(&p).unwrap(), sc);
        }

        let text = scenario_to_json(&corpus::pigou2());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("prior");
        let err = scenario_from_json(&v.to_string(), Path::new("x.json")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("prior"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["prior"] = serde_json::json!([0.4, 0.7]);
        let err = scenario_from_json(&v.to_string(), Path::new("x.json")).unwrap_err();
        assert!(err.to_string().contains("prior sums to 1.1"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["schema_version"] = serde_json::json!(2);
        assert!(matches!(
            scenario_from_json(&v.to_string(), Path::new("x.json")),
            Err(Error::SchemaVersion { found: 2, .. })
        ));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["partition"] = serde_json::json!([0.5, 0.5]);
        assert!(scenario_from_json(&v.to_string(), Path::new("x.json")).is_err());
    }

    #[test]
    fn rule_bad_weight_is_parse_error() {
        let text = r#"{"grid_m": 1, "K": 1, "states": {"s1": [{"profile": [0], "weight": "abc"}]}}"#;
        let err = rule_from_json(text, Path::new("r.json")).unwrap_err();
        assert!(err.to_string().contains("states.s1[0].weight"), "{err}");
    }

    #[test]
    fn align_reorders_states() {
        let sc = corpus::pigou2();
        let mut r = two_state_rule((0.5, 0.5));
        r.states.reverse();
        assert!(!validate(&r, &sc).is_valid());
        r.align_to(&sc).unwrap();
        assert!(validate(&r, &sc).is_valid());
    }

    proptest! {
        #[test]
        fn rule_roundtrip_is_bit_exact(ws in prop::collection::vec(any::<f64>().prop_filter("finite", |w| w.is_finite()), 1..6)) {
            let rule = RecommendationRule {
                grid_m: 3,
                num_groups: 2,
                states: vec![StateRule {
                    state: "s".into(),
                    atoms: ws.iter().enumerate().map(|(i, &w)| RuleAtom { profile: vec![i % 4, 0], weight: w }).collect(),
                }],
            };
            let back = rule_from_json(&rule_to_json(&rule), Path::new("r")).unwrap();
            for (a, b) in rule.states[0].atoms.iter().zip(&back.states[0].atoms) {
                prop_assert_eq!(a.weight.to_bits(), b.weight.to_bits());
            }
            prop_assert_eq!(back, rule);
        }
    }
}
