//! Full-information and no-information baselines around the optimal value,
//! and the multi-population comparison.

use pslab::corpus;
use pslab::planner::{baseline_full_information, baseline_no_information, mp_bcwe_value, solve_optimal_mechanism, MpObedience};
use pslab::policy::PartitionProfile;

fn main() -> pslab::error::Result<()> {
    for (name, scen) in corpus::all() {
        let scen = scen.with_grid(10)?.with_partition(PartitionProfile::equal(1))?;
        let full = baseline_full_information(&scen)?;
        let opt = solve_optimal_mechanism(&scen)?.value;
        match baseline_no_information(&scen) {
            Ok(none) => println!("{name}: full {full:.6} <= J* {opt:.6} <= none {:.6} (flow {:?})", none.value, none.flow),
            Err(e) => println!("{name}: full {full:.6}, J* {opt:.6}, no-information: {e}"),
        }
    }
    for (name, scen) in [("pigou2", corpus::pigou2()), ("diamond4", corpus::diamond4().with_grid(4)?)] {
        let scen = scen.with_partition(PartitionProfile::equal(2))?;
        let ps = solve_optimal_mechanism(&scen)?.value;
        let mp = mp_bcwe_value(&scen, MpObedience::RouteWise)?;
        println!("{name}, x=(0.5,0.5): PS {ps:.6} <= MP {mp:.6}");
    }
    Ok(())
}
