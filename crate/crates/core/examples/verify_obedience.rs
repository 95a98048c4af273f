//! Obedience checks: an optimal rule passes, full revelation does not.

use pslab::corpus;
use pslab::obedience::{verify_complete_info_ce, verify_ps_bcwe};
use pslab::planner::solve_optimal_mechanism;

fn main() -> pslab::error::Result<()> {
    let scen = corpus::pigou2();
    let optimal = solve_optimal_mechanism(&scen)?.rule;
    let reveal = corpus::pigou2_full_revelation();

    let rep = verify_ps_bcwe(&optimal, &scen, pslab::DEFAULT_EPS)?;
    println!("optimal rule: pass={} max_gain={:.3e}", rep.pass, rep.max_gain);

    let rep = verify_ps_bcwe(&reveal, &scen, pslab::DEFAULT_EPS)?;
    println!("full revelation: pass={} max_gain={}", rep.pass, rep.max_gain);
    println!("{}", rep.to_json());

    // The same rule checked state by state with four equal-weight travelers.
    let atomic = corpus::pigou2_atomic(4);
    let rep = verify_complete_info_ce(&reveal, &atomic, pslab::DEFAULT_EPS)?;
    println!("complete information: pass={} max_gain={}", rep.pass, rep.max_gain);
    Ok(())
}
