//! Weighted-atomic play of a recommendation rule: sampling realizations, exact
//! obedience gaps, and the convergence study as the number of travelers grows
//! with equal weights `D/n`.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::{validate, RecommendationRule, Scenario};
use crate::obedience::{verify_ps_bce_atomic, verify_ps_bcwe, Witness};
use crate::planner::Deviation;
use crate::policy::{enumerate_policy_grid, AtomicPublicness};

/// One draw of the planner's lottery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Realization {
    pub state: usize,
    pub state_name: String,
    /// Grid index per group.
    pub profile: Vec<usize>,
    /// The recommended policy per group.
    pub policies: Vec<Vec<f64>>,
}

/// Counter-based draws: draw `t` under `seed` reads two 64-bit words from a
/// ChaCha8 stream keyed by `seed`, starting at word `4t`. The first word picks
/// the state by inverse CDF of the prior, the second picks the atom by
/// inverse CDF of that state's weights (both as 53-bit uniforms in `[0, 1)`).
/// Draw `t` is therefore the same no matter which other draws are made.
pub struct Sampler<'a> {
    rule: &'a RecommendationRule,
    scen: &'a Scenario,
    rng: ChaCha8Rng,
    policies: Vec<Vec<f64>>,
}

fn unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn pick(u: f64, weights: impl Iterator<Item = f64>) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
            cum += w;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

impl<'a> Sampler<'a> {
    pub fn new(rule: &'a RecommendationRule, scen: &'a Scenario, seed: u64) -> Result<Self> {
        validate(rule, scen).into_result()?;
        let grid = enumerate_policy_grid(scen.network().num_routes(), rule.grid_m)?;
        Ok(Self {
            rule,
            scen,
            rng: ChaCha8Rng::seed_from_u64(seed),
            policies: grid.iter().map(<[f64]>::to_vec).collect(),
        })
    }

    pub fn draw(&mut self, index: u64) -> Realization {
        self.rng.set_word_pos(u128::from(index) * 4);
        let u_state = unit(self.rng.next_u64());
        let u_atom = unit(self.rng.next_u64());
        let state = pick(u_state, self.scen.network().prior().iter().copied());
        let atoms = self.rule.atoms(state);
        let atom = &atoms[pick(u_atom, atoms.iter().map(|a| a.weight))];
        Realization {
            state,
            state_name: self.scen.network().states()[state].clone(),
            profile: atom.profile.clone(),
            policies: atom.profile.iter().map(|&g| self.policies[g].clone()).collect(),
        }
    }
}

/// Draw number 0 under `seed`.
pub fn sample_realization(rule: &RecommendationRule, scen: &Scenario, seed: u64) -> Result<Realization> {
    Ok(Sampler::new(rule, scen, seed)?.draw(0))
}

/// Draws `0..count` under `seed`.
pub fn sample_realizations(rule: &RecommendationRule, scen: &Scenario, seed: u64, count: u64) -> Result<Vec<Realization>> {
    let mut s = Sampler::new(rule, scen, seed)?;
    Ok((0..count).map(|t| s.draw(t)).collect())
}

/// Largest gain any traveler can get from any grid deviation.
#[derive(Clone, Debug, Serialize)]
pub struct AtomicGap {
    pub max_gap: f64,
    pub witness: Option<Witness>,
}

/// Exact enumeration over support atoms, travelers and grid deviations.
pub fn atomic_obedience_gap(rule: &RecommendationRule, scen: &Scenario) -> Result<AtomicGap> {
    let rep = verify_ps_bce_atomic(rule, scen, 0.0)?;
    Ok(AtomicGap {
        max_gap: rep.max_gain.max(0.0),
        witness: rep.worst,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub max_gap: f64,
    pub witness_traveler: Option<usize>,
    /// `r<index>` for a pure route, `y<grid index>` for a mixed policy.
    pub witness_route: String,
    pub eval_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Least-squares fit of `log gap` on `log n`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl ConvergenceTable {
    /// CSV `[n, max_gap, witness_traveler, witness_route, eval_ms]`; `eval_ms`
    /// is written as 0 unless `timing` is set.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "max_gap", "witness_traveler", "witness_route", "eval_ms"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.max_gap.to_string(),
                r.witness_traveler.map_or(String::new(), |t| t.to_string()),
                r.witness_route.clone(),
                if timing { format!("{:.3}", r.eval_ms) } else { "0".into() },
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Fit over rows with a positive gap; `None` with fewer than two.
    pub fn log_log_fit(&self) -> Option<LogLogFit> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.max_gap > 0.0)
            .map(|r| ((r.n as f64).ln(), r.max_gap.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let slope = sxy / sxx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Some(LogLogFit {
            slope,
            intercept: my - slope * mx,
            r_squared,
        })
    }
}

/// Group sizes `x^k n` when they are all integers.
fn group_sizes(x: &[f64], n: usize) -> Option<Vec<usize>> {
    x.iter()
        .map(|&xk| {
            let v = xk * n as f64;
            let r = v.round();
            ((v - r).abs() <= 1e-9 && r >= 1.0).then_some(r as usize)
        })
        .collect()
}

/// Equal-weight atomic version of a nonatomic scenario with `n` travelers,
/// groups filled contiguously.
pub fn equal_weight_scenario(scen: &Scenario, n: usize) -> Result<Scenario> {
    let x = scen.partition();
    let sizes = group_sizes(&x, n).ok_or_else(|| {
        let max = 2 * n.max(1);
        Error::IncompatibleTravelerCount {
            n,
            max,
            admissible: (1..=max).filter(|&m| group_sizes(&x, m).is_some()).take(20).collect(),
        }
    })?;
    let publicness = AtomicPublicness::equal_weights(&sizes, scen.network().demand())?;
    scen.with_atomic(publicness, scen.num_groups())
}

/// Atomic gap of an obedient nonatomic rule for each `n` in `n_list`.
pub fn convergence_experiment(rule: &RecommendationRule, scen: &Scenario, n_list: &[usize]) -> Result<ConvergenceTable> {
    let base = verify_ps_bcwe(rule, scen, crate::DEFAULT_EPS)?;
    if !base.pass {
        return Err(Error::validation(format!(
            "rule is not obedient in the nonatomic game (max gain {:e})",
            base.max_gain
        )));
    }
    let scenarios: Vec<(usize, Scenario)> = n_list
        .iter()
        .map(|&n| Ok((n, equal_weight_scenario(scen, n)?)))
        .collect::<Result<_>>()?;
    let rows = scenarios
        .par_iter()
        .map(|(n, sc)| {
            let t0 = Instant::now();
            let gap = atomic_obedience_gap(rule, sc)?;
            let witness_route = match gap.witness.as_ref().map(|w| w.deviation) {
                Some(Deviation::Route(r)) => format!("r{r}"),
                Some(Deviation::Grid(g)) => format!("y{g}"),
                None => String::new(),
            };
            Ok(ConvergenceRow {
                n: *n,
                max_gap: gap.max_gap,
                witness_traveler: gap.witness.as_ref().and_then(|w| w.traveler),
                witness_route,
                eval_ms: t0.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::mechanism::{RuleAtom, StateRule};
    use crate::planner::solve_optimal_mechanism;
    use crate::policy::PartitionProfile;

    #[test]
    fn point_mass_always_drawn() {
        let sc = corpus::pigou2();
        let rule = RecommendationRule::point_masses(&sc, 10, vec![vec![3], vec![3]]);
        for r in sample_realizations(&rule, &sc, 7, 50).unwrap() {
            assert_eq!(r.profile, vec![3]);
        }
    }

    #[test]
    fn seeded_draws_are_reproducible_and_counter_based() {
        let sc = corpus::pigou2();
        let rule = RecommendationRule {
            grid_m: 1,
            num_groups: 1,
            states: vec![
                StateRule { state: "s1".into(), atoms: vec![RuleAtom { profile: vec![0], weight: 0.3 }, RuleAtom { profile: vec![1], weight: 0.7 }] },
                StateRule { state: "s2".into(), atoms: vec![RuleAtom { profile: vec![0], weight: 1.0 }] },
            ],
        };
        let a = sample_realizations(&rule, &sc, 42, 100).unwrap();
        let b = sample_realizations(&rule, &sc, 42, 100).unwrap();
        assert_eq!(a, b);
        let mut s = Sampler::new(&rule, &sc, 42).unwrap();
        assert_eq!(s.draw(57), a[57]);
        assert_eq!(s.draw(3), a[3]);
        assert_ne!(sample_realizations(&rule, &sc, 43, 100).unwrap(), a);
    }

    #[test]
    fn frequencies_match_prior_and_weights() {
        let sc = corpus::constant();
        let rule = RecommendationRule {
            grid_m: 1,
            num_groups: 1,
            states: vec![
                StateRule { state: "s1".into(), atoms: vec![RuleAtom { profile: vec![0], weight: 0.25 }, RuleAtom { profile: vec![1], weight: 0.75 }] },
                StateRule { state: "s2".into(), atoms: vec![RuleAtom { profile: vec![1], weight: 1.0 }] },
            ],
        };
        let n = 100_000u64;
        let draws = sample_realizations(&rule, &sc, 1, n).unwrap();
        let s1 = draws.iter().filter(|r| r.state == 0).count() as f64;
        let p = 0.3;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((s1 - n as f64 * p).abs() < 3.0 * sd, "{s1}");
        // Chi-square over the three (state, atom) cells, 2 degrees of freedom.
        let cells = [
            (0, 0, 0.3 * 0.25),
            (0, 1, 0.3 * 0.75),
            (1, 1, 0.7),
        ];
        let chi2: f64 = cells
            .iter()
            .map(|&(s, g, q)| {
                let obs = draws.iter().filter(|r| r.state == s && r.profile[0] == g).count() as f64;
                let exp = q * n as f64;
                (obs - exp).powi(2) / exp
            })
            .sum();
        assert!(chi2 < 13.8, "chi2 {chi2}");
    }

    #[test]
    fn constant_costs_zero_gap() {
        let sc = corpus::constant();
        let m = solve_optimal_mechanism(&sc).unwrap();
        let t = convergence_experiment(&m.rule, &sc, &[2, 4, 8]).unwrap();
        assert!(t.rows.iter().all(|r| r.max_gap == 0.0));
    }

    #[test]
    fn incompatible_n_lists_admissible() {
        let sc = corpus::pigou2().with_partition(PartitionProfile(vec![0.25, 0.75])).unwrap();
        let rule = crate::planner::no_information_rule(&sc.with_grid(10).unwrap()).unwrap();
        match convergence_experiment(&rule, &sc, &[6]) {
            Err(Error::IncompatibleTravelerCount { n: 6, admissible, .. }) => {
                assert_eq!(admissible, vec![4, 8, 12]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pigou_gap_decays() {
        let sc = corpus::pigou2();
        let m = solve_optimal_mechanism(&sc).unwrap();
        let t = convergence_experiment(&m.rule, &sc, &[4, 16, 64]).unwrap();
        let gaps: Vec<f64> = t.rows.iter().map(|r| r.max_gap).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        let csv = t.to_csv(false);
        assert!(csv.starts_with("n,max_gap,witness_traveler,witness_route,eval_ms\n4,"));
    }

    #[test]
    fn single_traveler_single_route_gap_zero() {
        use crate::model::{CostModel, Network};
        let net = Network::new(vec!["e".into()], vec![vec![0]], vec!["s".into()], vec![1.0], 1.0).unwrap();
        let costs = CostModel::new(vec![vec![vec![0.0, 1.0]]], &net).unwrap();
        let sc = Scenario::nonatomic(net, costs, PartitionProfile(vec![1.0]), 1, Default::default()).unwrap();
        let a = equal_weight_scenario(&sc, 1).unwrap();
        let rule = RecommendationRule::point_masses(&a, 1, vec![vec![0]]);
        assert_eq!(atomic_obedience_gap(&rule, &a).unwrap().max_gap, 0.0);
    }
}
