//! Accumulated cost loss between support policies and the two-condition
//! test, compared with the direct obedience check.

use pslab::acl::{acl_value, check_proposition1, loss_l, DEFAULT_TAU};
use pslab::corpus;
use pslab::costs::NonatomicEvaluator;
use pslab::planner::solve_optimal_mechanism;

fn main() -> pslab::error::Result<()> {
    let scen = corpus::pigou2().with_grid(4)?;
    let rule = solve_optimal_mechanism(&scen)?.rule;
    let support = NonatomicEvaluator::new(&scen, &rule)?.support(0);
    println!("support {support:?}");
    for &z in &support {
        for &y in &support {
            if z != y {
                let l = loss_l(z, y, 0, &rule, &scen)?;
                let acl: Vec<f64> = [2, 5, 9, 17, 33]
                    .iter()
                    .map(|&t| acl_value(z, y, 0, &rule, &scen, t))
                    .collect::<Result<_, _>>()?;
                println!("L({z},{y}) = {l:.6}  ACL over max_T = {acl:?}");
            }
        }
    }
    let rep = check_proposition1(&rule, &scen, 33, DEFAULT_TAU)?;
    println!(
        "(i) {} min {:.6}; (ii) {} residual {:.6}; direct {}; agree {}",
        rep.condition_i_pass,
        rep.condition_i_min,
        rep.condition_ii_pass,
        rep.condition_ii_max_residual,
        rep.direct_pass,
        rep.agrees_with_direct
    );
    Ok(())
}
