//! Bundled scenarios: `pigou2`, `diamond4` and `constant`.

use std::path::Path;

use crate::mechanism::{rule_from_json, scenario_from_json, RecommendationRule, Scenario};
use crate::policy::AtomicPublicness;

pub const PIGOU2_JSON: &str = include_str!("../scenarios/pigou2.json");
pub const DIAMOND4_JSON: &str = include_str!("../scenarios/diamond4.json");
pub const CONSTANT_JSON: &str = include_str!("../scenarios/constant.json");
pub const PIGOU2_FULL_REVELATION_JSON: &str =
    include_str!("../scenarios/pigou2_full_revelation.rule.json");

/// Two parallel single-edge routes; `e1` costs 1, `e2` costs `0.5ℓ` in `s1`
/// and `2ℓ` in `s2`; uniform prior.
pub fn pigou2() -> Scenario {
    scenario_from_json(PIGOU2_JSON, Path::new("pigou2.json")).expect("bundled scenario")
}

/// Four routes over two serial layers of parallel edges. The first layer is
/// `pigou2`; the second mirrors it with the state roles swapped.
pub fn diamond4() -> Scenario {
    scenario_from_json(DIAMOND4_JSON, Path::new("diamond4.json")).expect("bundled scenario")
}

/// Two parallel routes of constant cost 1 in both states.
pub fn constant() -> Scenario {
    scenario_from_json(CONSTANT_JSON, Path::new("constant.json")).expect("bundled scenario")
}

/// `pigou2` played by `n` equal-weight travelers in a single group.
pub fn pigou2_atomic(n: usize) -> Scenario {
    let base = pigou2();
    let atomic = AtomicPublicness::equal_weights(&[n], base.network().demand()).expect("n > 0");
    base.with_atomic(atomic, 1).expect("valid atomic scenario")
}

/// Full revelation on `pigou2` at grid resolution 1: everyone on `e2` in
/// `s1`, everyone on `e1` in `s2`.
pub fn pigou2_full_revelation() -> RecommendationRule {
    rule_from_json(PIGOU2_FULL_REVELATION_JSON, Path::new("full_revelation")).expect("bundled rule")
}

/// Every bundled scenario by name.
pub fn all() -> Vec<(&'static str, Scenario)> {
    vec![("pigou2", pigou2()), ("diamond4", diamond4()), ("constant", constant())]
}

pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "pigou2" => Some(pigou2()),
        "diamond4" => Some(diamond4()),
        "constant" => Some(constant()),
        _ => None,
    }
}
