//! Attainable flows for an edge-load target, pair residues, the disparity
//! budget `Γ`, and the bounded-partition-disparity test compared against
//! direct implementability.

use rayon::prelude::*;
use serde::Serialize;

use crate::costs::profile_flow;
use crate::error::{Error, Result};
use crate::lp::{feasible, solve_lp, LpProblem, LpStatus};
use crate::mechanism::{RecommendationRule, Scenario};
use crate::planner::{build_planner_lp, partition_grid, DEFAULT_PROFILE_CAP};
use crate::policy::{enumerate_policy_grid, PartitionProfile};
use crate::util::{checked_pow, tuple_from_index};

/// Band around each expected edge load accepted by [`implements_edge_load`].
pub const LOAD_TOL: f64 = 1e-7;
/// Slack below which a pair violates the disparity bound.
pub const SLACK_TOL: f64 = 1e-9;

fn check_load(load: &[f64], scen: &Scenario) -> Result<()> {
    let e = scen.network().num_edges();
    if load.len() != e {
        return Err(Error::Dimension(format!("edge load has {} entries, network has {e} edges", load.len())));
    }
    if load.iter().any(|l| !l.is_finite()) {
        return Err(Error::validation("edge load has a non-finite entry"));
    }
    Ok(())
}

/// Route flows `g ≥ 0` with `Σ g = total` and edge loads `loads`.
fn flow_block(scen: &Scenario, loads: &[f64], total: f64) -> LpProblem {
    let net = scen.network();
    let mut lp = LpProblem::new(net.num_routes());
    lp.add_eq((0..net.num_routes()).map(|r| (r, 1.0)).collect(), total);
    for (e, &l) in loads.iter().enumerate() {
        lp.add_eq(net.routes_through(e).iter().map(|&r| (r, 1.0)).collect(), l);
    }
    lp
}

/// `AF[ℓ†] = {f ≥ 0 : Σ_r f_r = D, Σ_{r∋e} f_r = ℓ†_e}` as an LP with zero
/// objective.
pub fn attainable_flow_polytope(load: &[f64], scen: &Scenario) -> Result<LpProblem> {
    check_load(load, scen)?;
    Ok(flow_block(scen, load, scen.network().demand()))
}

pub fn is_attainable(load: &[f64], scen: &Scenario) -> Result<bool> {
    Ok(feasible(&attainable_flow_polytope(load, scen)?)?)
}

/// Range of the pair's total flow on each route when the other groups' flows
/// are fixed at `fixed` and the whole profile must lie in `AF[ℓ†]`.
pub fn residue_ranges(load: &[f64], scen: &Scenario, fixed: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_load(load, scen)?;
    let net = scen.network();
    if fixed.len() != net.num_routes() {
        return Err(Error::Dimension("fixed flow has wrong length".into()));
    }
    let mut fixed_loads = vec![0.0; net.num_edges()];
    net.loads_into(fixed, &mut fixed_loads);
    let rest: Vec<f64> = load.iter().zip(&fixed_loads).map(|(l, f)| l - f).collect();
    let total = net.demand() - fixed.iter().sum::<f64>();
    let mut lp = flow_block(scen, &rest, total);
    let mut out = Vec::with_capacity(net.num_routes());
    for r in 0..net.num_routes() {
        let mut ends = [0.0; 2];
        for (i, sign) in [1.0, -1.0].into_iter().enumerate() {
            lp.objective.iter_mut().for_each(|c| *c = 0.0);
            lp.objective[r] = sign;
            let sol = solve_lp(&lp)?;
            match sol.status {
                LpStatus::Optimal => ends[i] = sign * sol.value,
                LpStatus::Infeasible => return Err(Error::NoResidue),
                LpStatus::Unbounded => unreachable!("flows are bounded by the demand"),
            }
        }
        out.push((ends[0], ends[1]));
    }
    Ok(out)
}

/// `(min, max)` of the pair's residual flow on route `r`.
pub fn residue_range(load: &[f64], scen: &Scenario, fixed: &[f64], r: usize) -> Result<(f64, f64)> {
    residue_ranges(load, scen, fixed)?
        .get(r)
        .copied()
        .ok_or(Error::Dimension(format!("route {r} out of range")))
}

/// `Γ(ℓ†, x^{-kj})`: one minus the other groups' share, minus the smallest
/// total normalized residue width over grid completions `(y^m)_{m≠k,j}`.
/// Completions that leave no attainable residue are skipped. Only `x^m` for
/// `m ∉ {k, j}` is read.
pub fn gamma(load: &[f64], scen: &Scenario, x: &[f64], k: usize, j: usize) -> Result<f64> {
    let kk = x.len();
    if k >= kk || j >= kk || k == j {
        return Err(Error::validation(format!("pair ({k}, {j}) is not a pair of distinct groups among {kk}")));
    }
    let net = scen.network();
    let d = net.demand();
    let others: Vec<usize> = (0..kk).filter(|&m| m != k && m != j).collect();
    let share: f64 = others.iter().map(|&m| x[m]).sum();
    let masses: Vec<f64> = others.iter().map(|&m| x[m] * d).collect();
    let grid = enumerate_policy_grid(net.num_routes(), scen.grid_m())?;
    let count = checked_pow(grid.len(), others.len()).unwrap_or(u128::MAX);
    if count > DEFAULT_PROFILE_CAP {
        return Err(Error::CapExceeded {
            what: "residue completions",
            needed: count,
            cap: DEFAULT_PROFILE_CAP,
        });
    }
    let mut best: Option<f64> = None;
    let mut profile = vec![0; others.len()];
    let mut fixed = vec![0.0; net.num_routes()];
    for t in 0..count as usize {
        tuple_from_index(t, grid.len(), others.len(), &mut profile);
        profile_flow(&grid, &profile, &masses, &mut fixed);
        match residue_ranges(load, scen, &fixed) {
            Ok(ranges) => {
                let width: f64 = ranges.iter().map(|(lo, hi)| (hi - lo) / d).sum();
                best = Some(best.map_or(width, |b| b.min(width)));
            }
            Err(Error::NoResidue) => continue,
            Err(e) => return Err(e),
        }
    }
    let min_width = best.ok_or(Error::NoResidue)?;
    Ok((1.0 - share) - min_width)
}

#[derive(Clone, Debug, Serialize)]
pub struct PairSlack {
    pub k: usize,
    pub j: usize,
    pub gamma: f64,
    pub disparity: f64,
    /// `Γ − |x^k − x^j|`.
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BpdReport {
    pub pass: bool,
    pub pairs: Vec<PairSlack>,
}

impl BpdReport {
    pub fn min_slack(&self) -> f64 {
        self.pairs.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Bounded partition disparity: `|x^k − x^j| ≤ Γ(ℓ†, x^{-kj})` for all pairs.
/// With a single group there are no pairs and the test passes.
pub fn check_bpd(x: &PartitionProfile, load: &[f64], scen: &Scenario) -> Result<BpdReport> {
    let mut pairs = Vec::new();
    for k in 0..x.len() {
        for j in k + 1..x.len() {
            let g = gamma(load, scen, x, k, j)?;
            let disparity = (x[k] - x[j]).abs();
            pairs.push(PairSlack {
                k,
                j,
                gamma: g,
                disparity,
                slack: g - disparity,
            });
        }
    }
    Ok(BpdReport {
        pass: pairs.iter().all(|p| p.slack >= -SLACK_TOL),
        pairs,
    })
}

/// `Σ_s p(s) Σ_y σ(y|s) ℓ(y, x)`.
pub fn expected_edge_load(rule: &RecommendationRule, scen: &Scenario) -> Result<Vec<f64>> {
    crate::mechanism::validate(rule, scen).into_result()?;
    let net = scen.network();
    let grid = enumerate_policy_grid(net.num_routes(), rule.grid_m)?;
    let masses = scen.group_masses();
    let mut out = vec![0.0; net.num_edges()];
    let mut flow = vec![0.0; net.num_routes()];
    let mut loads = vec![0.0; net.num_edges()];
    for (s, st) in rule.states.iter().enumerate() {
        for a in &st.atoms {
            profile_flow(&grid, &a.profile, &masses, &mut flow);
            net.loads_into(&flow, &mut loads);
            for (o, l) in out.iter_mut().zip(&loads) {
                *o += net.prior()[s] * a.weight * l;
            }
        }
    }
    Ok(out)
}

/// Whether some obedient grid rule under partition `x` has expected edge
/// loads within `1e-7` of `ℓ†`.
pub fn implements_edge_load(x: &PartitionProfile, load: &[f64], scen: &Scenario) -> Result<bool> {
    check_load(load, scen)?;
    let sc = scen.with_partition(x.clone())?;
    let plp = build_planner_lp(&sc)?;
    let mut lp = plp.problem;
    lp.objective.iter_mut().for_each(|c| *c = 0.0);
    let net = sc.network();
    let masses = sc.group_masses();
    let mut coeffs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.num_edges()];
    let mut flow = vec![0.0; net.num_routes()];
    let mut loads = vec![0.0; net.num_edges()];
    for j in 0..plp.vars.num_vars() {
        let (s, profile) = plp.vars.profile(j);
        profile_flow(&plp.grid, &profile, &masses, &mut flow);
        net.loads_into(&flow, &mut loads);
        for (e, &l) in loads.iter().enumerate() {
            let c = net.prior()[s] * l;
            if c != 0.0 {
                coeffs[e].push((j, c));
            }
        }
    }
    for (e, c) in coeffs.into_iter().enumerate() {
        lp.add_le(c.clone(), load[e] + LOAD_TOL);
        lp.add_ge(c, load[e] - LOAD_TOL);
    }
    Ok(feasible(&lp)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Cell {
    pub x: Vec<f64>,
    pub in_ip: bool,
    pub in_bpd: bool,
    /// Smallest pair slack.
    pub slack: f64,
    /// A neighboring cell (one step moved between two groups) has the
    /// opposite BPD verdict.
    pub boundary: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Report {
    pub load: Vec<f64>,
    pub step: f64,
    pub cells: Vec<Theorem2Cell>,
    /// Indices of cells where the two sets disagree.
    pub mismatches: Vec<usize>,
    pub exact_agreement: bool,
    /// Every mismatch sits next to the BPD boundary.
    pub boundary_only: bool,
}

impl Theorem2Report {
    /// CSV `[x1..xK, in_IP, in_BPD, slack, boundary_flag]`.
    pub fn to_csv(&self) -> String {
        let k = self.cells.first().map_or(0, |c| c.x.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
        header.extend(["in_IP", "in_BPD", "slack", "boundary_flag"].map(String::from));
        w.write_record(&header).expect("in-memory write");
        for c in &self.cells {
            let mut rec: Vec<String> = c.x.iter().map(|v| v.to_string()).collect();
            rec.extend([c.in_ip.to_string(), c.in_bpd.to_string(), c.slack.to_string(), c.boundary.to_string()]);
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Scans the partition grid and compares implementability with the BPD test.
pub fn verify_theorem2(scen: &Scenario, k: usize, load: &[f64], step: f64) -> Result<Theorem2Report> {
    check_load(load, scen)?;
    let cells = partition_grid(k, step)?;
    let verdicts: Vec<(bool, BpdReport)> = cells
        .par_iter()
        .map(|x| Ok((implements_edge_load(x, load, scen)?, check_bpd(x, load, scen)?)))
        .collect::<Result<_>>()?;
    let n_units = (1.0 / step).round() as i64;
    let units = |x: &PartitionProfile| -> Vec<i64> { x.iter().map(|v| (v * n_units as f64).round() as i64).collect() };
    let keyed: std::collections::HashMap<Vec<i64>, bool> =
        cells.iter().zip(&verdicts).map(|(x, (_, b))| (units(x), b.pass)).collect();
    let out: Vec<Theorem2Cell> = cells
        .iter()
        .zip(&verdicts)
        .map(|(x, (ip, bpd))| {
            let u = units(x);
            let boundary = (0..k).any(|a| {
                (0..k).filter(|&b| b != a).any(|b| {
                    let mut v = u.clone();
                    v[a] += 1;
                    v[b] -= 1;
                    keyed.get(&v).is_some_and(|&other| other != bpd.pass)
                })
            });
            Theorem2Cell {
                x: x.0.clone(),
                in_ip: *ip,
                in_bpd: bpd.pass,
                slack: bpd.min_slack(),
                boundary,
            }
        })
        .collect();
    let mismatches: Vec<usize> = out.iter().enumerate().filter(|(_, c)| c.in_ip != c.in_bpd).map(|(i, _)| i).collect();
    Ok(Theorem2Report {
        load: load.to_vec(),
        step,
        exact_agreement: mismatches.is_empty(),
        boundary_only: mismatches.iter().all(|&i| out[i].boundary),
        mismatches,
        cells: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::planner::solve_optimal_mechanism;

    #[test]
    fn pigou_polytope_is_a_point() {
        let sc = corpus::pigou2();
        assert!(is_attainable(&[0.3, 0.7], &sc).unwrap());
        assert!(!is_attainable(&[0.3, 0.6], &sc).unwrap());
        let r = residue_ranges(&[0.3, 0.7], &sc, &[0.0, 0.0]).unwrap();
        for ((lo, hi), want) in r.iter().zip([0.3, 0.7]) {
            assert!((lo - want).abs() < 1e-12 && (hi - want).abs() < 1e-12);
        }
        let x = PartitionProfile(vec![0.5, 0.5]);
        assert!((gamma(&[0.3, 0.7], &sc, &x, 0, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diamond_family() {
        let sc = corpus::diamond4();
        let load = [0.5; 4];
        for r in 0..4 {
            let (lo, hi) = residue_range(&load, &sc, &[0.0; 4], r).unwrap();
            assert!(lo.abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
        }
        let x = PartitionProfile(vec![0.5, 0.5]);
        assert!((gamma(&load, &sc, &x, 0, 1).unwrap() + 1.0).abs() < 1e-12);
        assert!(!check_bpd(&x, &load, &sc).unwrap().pass);
    }

    #[test]
    fn residue_consuming_everything() {
        let sc = corpus::diamond4();
        let load = [0.5; 4];
        let fixed = [0.25, 0.25, 0.25, 0.25];
        // f^-kj = (0.25, 0.25, 0.25, 0.25) has loads (0.5, 0.5, 0.5, 0.5) and uses all demand.
        let r = residue_ranges(&load, &sc, &fixed).unwrap();
        assert!(r.iter().all(|(lo, hi)| lo.abs() < 1e-12 && hi.abs() < 1e-12));
        assert!(matches!(residue_ranges(&load, &sc, &[0.6, 0.0, 0.0, 0.0]), Err(Error::NoResidue)));
    }

    #[test]
    fn gamma_ignores_pair_shares() {
        let sc = corpus::diamond4().with_grid(2).unwrap();
        let load = [0.4, 0.6, 0.55, 0.45];
        let a = gamma(&load, &sc, &[0.2, 0.3, 0.5], 0, 1).unwrap();
        let b = gamma(&load, &sc, &[0.4, 0.1, 0.5], 0, 1).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn gamma_k3_matches_scan() {
        // Brute-force oracle: enumerate the single other group's grid policy.
        let sc = corpus::diamond4().with_grid(5).unwrap();
        let load = [0.5; 4];
        let x = [0.3, 0.3, 0.4];
        let grid = enumerate_policy_grid(4, 5).unwrap();
        let mut best = f64::INFINITY;
        for y in grid.iter() {
            let fixed: Vec<f64> = y.iter().map(|v| v * 0.4).collect();
            if let Ok(r) = residue_ranges(&load, &sc, &fixed) {
                best = best.min(r.iter().map(|(a, b)| b - a).sum());
            }
        }
        let g = gamma(&load, &sc, &x, 0, 1).unwrap();
        assert!((g - (0.6 - best)).abs() < 1e-12);
    }

    #[test]
    fn bpd_simple_cases() {
        let sc = corpus::pigou2();
        let load = [0.2, 0.8];
        assert!(check_bpd(&PartitionProfile(vec![0.9, 0.1]), &load, &sc).unwrap().pass);
        let rep = check_bpd(&PartitionProfile(vec![0.5, 0.5]), &load, &sc).unwrap();
        assert_eq!(rep.pairs.len(), 1);
        assert!(check_bpd(&PartitionProfile(vec![1.0]), &load, &sc).unwrap().pass);
    }

    #[test]
    fn solved_mechanism_load_is_implemented() {
        let sc = corpus::pigou2().with_grid(5).unwrap();
        let m = solve_optimal_mechanism(&sc).unwrap();
        let load = expected_edge_load(&m.rule, &sc).unwrap();
        assert!(implements_edge_load(&sc.partition(), &load, &sc).unwrap());
        // Everyone on e1 can never be obedient here.
        assert!(!implements_edge_load(&sc.partition(), &[1.0, 0.0], &sc).unwrap());
    }
}
