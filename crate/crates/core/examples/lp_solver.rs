//! The simplex solver on its own: a small production problem, its duals, and
//! the CPLEX LP text form.

use pslab::lp::{solve_lp, LpProblem};

fn main() -> Result<(), pslab::lp::LpError> {
    // max 3a + 5b  s.t.  a <= 4, 2b <= 12, 3a + 2b <= 18, a, b >= 0
    let mut p = LpProblem::new(2);
    p.objective = vec![-3.0, -5.0];
    p.add_le(vec![(0, 1.0)], 4.0);
    p.add_le(vec![(1, 2.0)], 12.0);
    p.add_le(vec![(0, 3.0), (1, 2.0)], 18.0);
    let sol = solve_lp(&p)?;
    println!("status {:?} value {} at {:?}", sol.status, -sol.value, sol.primal);
    println!("duals {:?} gap {:.1e} pivots {}", sol.dual, sol.duality_gap, sol.iterations);
    print!("{}", p.to_lp_format());
    Ok(())
}
