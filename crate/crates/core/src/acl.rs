//! Intermediates between two policies, the recommendation-switch loss `L`,
//! its accumulation along subdivision paths (ACL), and the two-condition
//! obedience characterization built on it.
//!
//! `L(z, y) = EC(z; z) − EC(z; y)`: the change in expected cost of playing
//! `z` when the recommendation switches from `y` to `z`. ACL is the infimum of
//! `Σ_τ L(P_τ, P_{τ+1})` over paths `z = P_1, ..., P_T = y` on the segment
//! from `z` to `y`. It is computed by a shortest path over a uniform grid of
//! `max_T` points on the segment, keeping only points that are grid policies
//! with positive marginal probability (elsewhere the conditioning event is
//! empty).

use serde::Serialize;

use crate::costs::{ExpectedCostQuery, NonatomicEvaluator};
use crate::error::{Error, Result};
use crate::mechanism::{RecommendationRule, Scenario};
use crate::obedience::verify_ps_bcwe;
use crate::policy::Policy;

pub const DEFAULT_MAX_T: usize = 33;
pub const DEFAULT_TAU: f64 = 1e-5;

/// `z + δ(y − z)`.
pub fn intermediate(z: &[f64], y: &[f64], delta: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::validation(format!("delta {delta} outside [0, 1]")));
    }
    if z.len() != y.len() {
        return Err(Error::Dimension("endpoints have different lengths".into()));
    }
    Ok(Policy(z.iter().zip(y).map(|(a, b)| a + delta * (b - a)).collect()))
}

/// `L(z, y)` for group `k`, with `z`, `y` grid indices.
pub fn loss_l_with(ev: &NonatomicEvaluator<'_>, k: usize, z: usize, y: usize) -> Result<f64> {
    let dev = ev.grid().policy(z);
    let told_z = ev.expected_cost(&ExpectedCostQuery { group: k, recommended: z, deviation: dev })?;
    let told_y = ev.expected_cost(&ExpectedCostQuery { group: k, recommended: y, deviation: dev })?;
    Ok(told_z - told_y)
}

pub fn loss_l(z: usize, y: usize, k: usize, rule: &RecommendationRule, scen: &Scenario) -> Result<f64> {
    loss_l_with(&NonatomicEvaluator::new(scen, rule)?, k, z, y)
}

/// Grid indices of the `max_t` uniformly spaced points from `z` to `y`
/// (`None` where a point is off the grid or has zero marginal mass).
fn path_nodes(ev: &NonatomicEvaluator<'_>, k: usize, z: usize, y: usize, max_t: usize) -> Vec<Option<usize>> {
    let grid = ev.grid();
    let (cz, cy) = (grid.counts(z), grid.counts(y));
    let steps = (max_t - 1) as i64;
    (0..max_t as i64)
        .map(|i| {
            let mut counts = Vec::with_capacity(cz.len());
            for (&a, &b) in cz.iter().zip(cy) {
                let num = a as i64 * steps + i * (b as i64 - a as i64);
                if num % steps != 0 {
                    return None;
                }
                counts.push((num / steps) as u32);
            }
            grid.index_of_counts(&counts).filter(|&g| ev.marginal_mass(k, g) > 0.0)
        })
        .collect()
}

/// ACL from `z` to `y` for group `k` over `max_t` segment points.
pub fn acl_value_with(ev: &NonatomicEvaluator<'_>, k: usize, z: usize, y: usize, max_t: usize) -> Result<f64> {
    if max_t < 2 {
        return Err(Error::validation("max_T must be at least 2"));
    }
    for g in [z, y] {
        if ev.marginal_mass(k, g) <= 0.0 {
            return Err(Error::EmptyConditioning { group: k, policy: g });
        }
    }
    if z == y {
        return Ok(0.0);
    }
    let nodes = path_nodes(ev, k, z, y, max_t);
    let mut dist = vec![f64::INFINITY; max_t];
    dist[0] = 0.0;
    for b in 1..max_t {
        let Some(gb) = nodes[b] else { continue };
        for a in 0..b {
            let Some(ga) = nodes[a] else { continue };
            if dist[a].is_finite() {
                let d = dist[a] + loss_l_with(ev, k, ga, gb)?;
                if d < dist[b] {
                    dist[b] = d;
                }
            }
        }
    }
    Ok(dist[max_t - 1])
}

pub fn acl_value(z: usize, y: usize, k: usize, rule: &RecommendationRule, scen: &Scenario, max_t: usize) -> Result<f64> {
    acl_value_with(&NonatomicEvaluator::new(scen, rule)?, k, z, y, max_t)
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCheck {
    pub group: usize,
    pub z: usize,
    pub y: usize,
    pub acl_zy: f64,
    pub acl_yz: f64,
    /// `EC(y; y) − EC(z; z)`.
    pub cost_difference: f64,
    /// `|ACL(z, y) − (EC(y; y) − EC(z; z))|`.
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Proposition1Report {
    pub max_t: usize,
    pub tau: f64,
    /// `ACL(z, y) + ACL(y, z) ≥ −τ` for every ordered support pair.
    pub condition_i_pass: bool,
    pub condition_i_min: f64,
    pub condition_ii_max_residual: f64,
    pub condition_ii_pass: bool,
    /// Both conditions hold.
    pub pass: bool,
    /// Verdict of the direct obedience check at `1e-7`.
    pub direct_pass: bool,
    pub agrees_with_direct: bool,
    pub pairs: Vec<PairCheck>,
}

impl Proposition1Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Evaluates both conditions over all ordered pairs of distinct support
/// policies per group and compares the verdict with the direct check.
pub fn check_proposition1(rule: &RecommendationRule, scen: &Scenario, max_t: usize, tau: f64) -> Result<Proposition1Report> {
    let ev = NonatomicEvaluator::new(scen, rule)?;
    let mut pairs = Vec::new();
    for k in 0..rule.num_groups {
        let support = ev.support(k);
        for (ia, &z) in support.iter().enumerate() {
            for &y in &support[ia + 1..] {
                let acl_zy = acl_value_with(&ev, k, z, y, max_t)?;
                let acl_yz = acl_value_with(&ev, k, y, z, max_t)?;
                let own = |g: usize| {
                    ev.expected_cost(&ExpectedCostQuery { group: k, recommended: g, deviation: ev.grid().policy(g) })
                };
                let (ec_z, ec_y) = (own(z)?, own(y)?);
                for (a, b, acl_ab, acl_ba, diff) in [(z, y, acl_zy, acl_yz, ec_y - ec_z), (y, z, acl_yz, acl_zy, ec_z - ec_y)] {
                    pairs.push(PairCheck {
                        group: k,
                        z: a,
                        y: b,
                        acl_zy: acl_ab,
                        acl_yz: acl_ba,
                        cost_difference: diff,
                        residual: (acl_ab - diff).abs(),
                    });
                }
            }
        }
    }
    let condition_i_min = pairs.iter().map(|p| p.acl_zy + p.acl_yz).fold(f64::INFINITY, f64::min);
    let condition_ii_max_residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    let condition_i_pass = pairs.iter().all(|p| p.acl_zy + p.acl_yz >= -tau);
    let condition_ii_pass = condition_ii_max_residual <= tau;
    let pass = condition_i_pass && condition_ii_pass;
    let direct_pass = verify_ps_bcwe(rule, scen, crate::DEFAULT_EPS)?.pass;
    Ok(Proposition1Report {
        max_t,
        tau,
        condition_i_pass,
        condition_i_min,
        condition_ii_max_residual,
        condition_ii_pass,
        pass,
        direct_pass,
        agrees_with_direct: pass == direct_pass,
        pairs,
    })
}
