//! Atomic obedience gap of the nonatomic optimal rule as the number of
//! equal-weight travelers grows, plus a few sampled realizations.

use pslab::atomic::{convergence_experiment, sample_realizations};
use pslab::corpus;
use pslab::planner::solve_optimal_mechanism;

fn main() -> pslab::error::Result<()> {
    let scen = corpus::pigou2();
    let rule = solve_optimal_mechanism(&scen)?.rule;
    let table = convergence_experiment(&rule, &scen, &[4, 16, 64, 256])?;
    print!("{}", table.to_csv(false));
    if let Some(fit) = table.log_log_fit() {
        println!("log-log slope {:.3} (R^2 {:.4})", fit.slope, fit.r_squared);
    }
    for r in sample_realizations(&rule, &scen, 42, 5)? {
        println!("state {} -> policies {:?}", r.state_name, r.policies);
    }
    Ok(())
}
