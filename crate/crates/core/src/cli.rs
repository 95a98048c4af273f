//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code: 0 on success, 1 on usage or validation
//! errors, 2 when an analysis fails (infeasible LP, obedience violated,
//! non-boundary mismatch, ...). JSON goes to `out`, diagnostics to `err`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::Error;
use crate::mechanism::{load_rule, load_scenario, save_rule, RecommendationRule, Scenario};
use crate::model::Objective;
use crate::policy::PartitionProfile;
use crate::{acl, atomic, bpd, corpus, obedience, planner};

#[derive(Debug, Parser)]
#[command(name = "pslab", version, about = "Publicness-specific recommendation mechanisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ObjectiveArg {
    TotalCost,
    RouteCostSum,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::TotalCost => Objective::TotalCost,
            ObjectiveArg::RouteCostSum => Objective::RouteCostSum,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the planner LP and write the optimal rule.
    Solve {
        /// Scenario file, or a bundled name (pigou2, diamond4, constant).
        #[arg(long)]
        scenario: String,
        /// Policy grid resolution (overrides the scenario's).
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        grid: Option<u32>,
        /// Partition factors, comma separated (overrides the scenario's).
        #[arg(long, value_delimiter = ',')]
        partition: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the LP in CPLEX LP format.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        #[arg(long, default_value_t = planner::DEFAULT_VAR_CAP)]
        var_cap: u128,
    },
    /// Check obedience of a rule.
    Verify {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        rule: PathBuf,
        #[arg(long, default_value_t = crate::DEFAULT_EPS)]
        eps: f64,
        /// Check the finite-traveler game of the scenario's atomic publicness.
        #[arg(long)]
        atomic: bool,
    },
    /// Solve the planner LP over a grid of partition profiles.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write measured solve times instead of zeros.
        #[arg(long)]
        timing: bool,
    },
    /// Compare implementability with bounded partition disparity.
    Bpd {
        #[arg(long)]
        scenario: String,
        /// Target edge load, comma separated; defaults to the load of the
        /// optimal mechanism at the scenario's partition.
        #[arg(long, value_delimiter = ',')]
        load: Option<Vec<f64>>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accumulated-loss obedience test of a rule.
    Acl {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        rule: PathBuf,
        #[arg(long, default_value_t = acl::DEFAULT_MAX_T)]
        max_t: usize,
        #[arg(long, default_value_t = acl::DEFAULT_TAU)]
        tau: f64,
    },
    /// Atomic obedience gap for growing equal-weight populations.
    Converge {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        rule: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 16, 64, 256])]
        n: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
        /// Number of sampled realizations of the rule to include.
        #[arg(long, default_value_t = 0)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full-information, no-information, optimal and multi-population values.
    Baselines {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        grid: Option<u32>,
    },
}

enum Failure {
    Usage(String),
    Analysis(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible
            | Error::Lp(_)
            | Error::CapExceeded { .. }
            | Error::NoGridWardrop { .. }
            | Error::NoResidue
            | Error::EmptyConditioning { .. } => Failure::Analysis(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(Value, bool), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli.command) {
        Ok((value, ok)) => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&value).expect("json"));
            if ok {
                0
            } else {
                2
            }
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Analysis(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

fn scenario_arg(arg: &str) -> std::result::Result<Scenario, Failure> {
    match corpus::by_name(arg) {
        Some(s) if !Path::new(arg).exists() => Ok(s),
        _ => Ok(load_scenario(arg)?),
    }
}

fn rule_arg(path: &Path) -> std::result::Result<RecommendationRule, Failure> {
    Ok(load_rule(path)?)
}

fn write_file(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn groups(k: u64) -> std::result::Result<usize, Failure> {
    usize::try_from(k).map_err(|_| Failure::Usage(format!("--k {k} is too large")))
}

fn execute(cmd: Command) -> CmdResult {
    match cmd {
        Command::Solve { scenario, grid, partition, objective, out, dump_lp, var_cap } => {
            let mut scen = scenario_arg(&scenario)?;
            if let Some(m) = grid {
                scen = scen.with_grid(m)?;
            }
            if let Some(x) = partition {
                scen = scen.with_partition(PartitionProfile::new(x)?)?;
            }
            if let Some(o) = objective {
                scen = scen.with_objective(o.into());
            }
            let plp = planner::build_planner_lp_with(&scen, &scen.objective(), var_cap)?;
            if let Some(p) = &dump_lp {
                plp.problem
                    .write_lp(p)
                    .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?;
            }
            let mech = planner::solve_optimal_mechanism_with(&scen, &scen.objective(), var_cap)?;
            if let Some(p) = &out {
                save_rule(&mech.rule, p)?;
            }
            let support: usize = mech.rule.states.iter().map(|s| s.atoms.len()).sum();
            Ok((
                json!({
                    "command": "solve",
                    "objective": scen.objective().name(),
                    "grid_m": scen.grid_m(),
                    "partition": scen.partition().0,
                    "value": mech.value,
                    "support_atoms": support,
                    "lp": mech.stats,
                    "rule": out.as_ref().map(|p| p.display().to_string()),
                }),
                true,
            ))
        }
        Command::Verify { scenario, rule, eps, atomic } => {
            let scen = scenario_arg(&scenario)?;
            let rule = rule_arg(&rule)?;
            let rep = if atomic {
                obedience::verify_ps_bce_atomic(&rule, &scen, eps)?
            } else {
                obedience::verify_ps_bcwe(&rule, &scen, eps)?
            };
            let mut v = serde_json::to_value(&rep).expect("json");
            v["command"] = json!("verify");
            v["mode"] = json!(if atomic { "atomic" } else { "nonatomic" });
            Ok((v, rep.pass))
        }
        Command::Sweep { scenario, k, step, out, timing } => {
            let scen = scenario_arg(&scenario)?;
            let table = planner::sweep_partitions(&scen, groups(k)?, step)?;
            if let Some(p) = &out {
                write_file(p, &table.to_csv(timing))?;
            }
            let best = table.argmin.map(|i| &table.rows[i]);
            let counts = |s: &str| table.rows.iter().filter(|r| r.status == s).count();
            Ok((
                json!({
                    "command": "sweep",
                    "k": k,
                    "step": step,
                    "cells": table.rows.len(),
                    "optimal": counts("optimal"),
                    "infeasible": counts("infeasible"),
                    "cap_exceeded": counts("cap_exceeded"),
                    "best_x": best.map(|r| r.x.clone()),
                    "best_value": best.and_then(|r| r.value),
                    "csv": out.as_ref().map(|p| p.display().to_string()),
                }),
                true,
            ))
        }
        Command::Bpd { scenario, load, k, step, out } => {
            let scen = scenario_arg(&scenario)?;
            let load = match load {
                Some(l) => l,
                None => {
                    let mech = planner::solve_optimal_mechanism(&scen)?;
                    bpd::expected_edge_load(&mech.rule, &scen)?
                }
            };
            let rep = bpd::verify_theorem2(&scen, groups(k)?, &load, step)?;
            if let Some(p) = &out {
                write_file(p, &rep.to_csv())?;
            }
            let count = |f: &dyn Fn(&bpd::Theorem2Cell) -> bool| rep.cells.iter().filter(|c| f(c)).count();
            Ok((
                json!({
                    "command": "bpd",
                    "load": rep.load,
                    "step": step,
                    "cells": rep.cells.len(),
                    "in_ip": count(&|c| c.in_ip),
                    "in_bpd": count(&|c| c.in_bpd),
                    "mismatches": rep.mismatches.iter().map(|&i| &rep.cells[i]).collect::<Vec<_>>(),
                    "exact_agreement": rep.exact_agreement,
                    "boundary_only": rep.boundary_only,
                    "csv": out.as_ref().map(|p| p.display().to_string()),
                }),
                rep.boundary_only,
            ))
        }
        Command::Acl { scenario, rule, max_t, tau } => {
            let scen = scenario_arg(&scenario)?;
            let rule = rule_arg(&rule)?;
            let rep = acl::check_proposition1(&rule, &scen, max_t, tau)?;
            let mut v = serde_json::to_value(&rep).expect("json");
            v["command"] = json!("acl");
            Ok((v, rep.pass))
        }
        Command::Converge { scenario, rule, n, out, timing, samples, seed } => {
            let scen = scenario_arg(&scenario)?;
            let rule = rule_arg(&rule)?;
            let table = atomic::convergence_experiment(&rule, &scen, &n)?;
            if let Some(p) = &out {
                write_file(p, &table.to_csv(timing))?;
            }
            let realizations = atomic::sample_realizations(&rule, &scen, seed, samples)?;
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|r| json!({"n": r.n, "max_gap": r.max_gap, "witness_traveler": r.witness_traveler, "witness_route": r.witness_route}))
                .collect();
            Ok((
                json!({
                    "command": "converge",
                    "rows": rows,
                    "log_log_fit": table.log_log_fit(),
                    "seed": seed,
                    "realizations": realizations,
                    "csv": out.as_ref().map(|p| p.display().to_string()),
                }),
                true,
            ))
        }
        Command::Baselines { scenario, grid } => {
            let mut scen = scenario_arg(&scenario)?;
            if let Some(m) = grid {
                scen = scen.with_grid(m)?;
            }
            let mut ok = true;
            let mut entry = |r: crate::error::Result<Value>| match r {
                Ok(v) => v,
                Err(e) => {
                    ok = false;
                    json!({ "error": e.to_string() })
                }
            };
            let full = entry(planner::baseline_full_information(&scen).map(|v| json!(v)));
            let none = entry(planner::baseline_no_information(&scen).map(|b| {
                json!({"value": b.value, "flow": b.flow, "wardrop_gap": b.wardrop_gap})
            }));
            let ps = entry(planner::solve_optimal_mechanism(&scen).map(|m| json!(m.value)));
            let mp = entry(planner::mp_bcwe_value(&scen, planner::MpObedience::RouteWise).map(|v| json!(v)));
            let mp_mixed = entry(planner::mp_bcwe_value(&scen, planner::MpObedience::Mixed).map(|v| json!(v)));
            Ok((
                json!({
                    "command": "baselines",
                    "grid_m": scen.grid_m(),
                    "partition": scen.partition().0,
                    "full_information": full,
                    "no_information": none,
                    "optimal": ps,
                    "mp_bcwe_route_wise": mp,
                    "mp_bcwe_mixed": mp_mixed,
                }),
                ok,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("pslab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn grid_zero_is_a_usage_error() {
        let (code, _, err) = call(&["solve", "--scenario", "pigou2", "--grid", "0"]);
        assert_eq!(code, 1);
        assert!(err.contains("--grid"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("solve"));
    }

    #[test]
    fn missing_file_is_a_validation_error() {
        let (code, _, err) = call(&["solve", "--scenario", "/nonexistent/x.json"]);
        assert_eq!(code, 1);
        assert!(err.contains("nonexistent"));
    }

    #[test]
    fn solve_bundled() {
        let (code, out, _) = call(&["solve", "--scenario", "pigou2", "--grid", "4"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!(v["value"].as_f64().unwrap() > 0.0);
    }
}
