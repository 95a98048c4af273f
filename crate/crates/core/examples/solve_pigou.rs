//! Solve the planner LP on the two-route Pigou network and print the rule.

use pslab::corpus;
use pslab::mechanism::rule_to_json;
use pslab::planner::solve_optimal_mechanism;

fn main() -> pslab::error::Result<()> {
    let scen = corpus::pigou2();
    let mech = solve_optimal_mechanism(&scen)?;
    println!("J* = {:.6} ({} vars, {} rows, {} pivots)", mech.value, mech.stats.num_vars, mech.stats.num_rows, mech.stats.iterations);
    for (s, state) in mech.rule.states.iter().enumerate() {
        for atom in &state.atoms {
            println!("  state {} ({}): profile {:?} weight {:.4}", s, state.state, atom.profile, atom.weight);
        }
    }
    println!("{}", rule_to_json(&mech.rule));
    Ok(())
}
