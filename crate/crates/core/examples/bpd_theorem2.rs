//! Implementable partitions versus bounded partition disparity for the
//! edge load of an optimal two-group mechanism.

use pslab::bpd::{expected_edge_load, gamma, verify_theorem2};
use pslab::corpus;
use pslab::planner::solve_optimal_mechanism;
use pslab::policy::PartitionProfile;

fn main() -> pslab::error::Result<()> {
    for (name, scen) in [("pigou2", corpus::pigou2().with_grid(5)?), ("diamond4", corpus::diamond4())] {
        let scen = scen.with_partition(PartitionProfile::equal(2))?;
        let load = expected_edge_load(&solve_optimal_mechanism(&scen)?.rule, &scen)?;
        let g = gamma(&load, &scen, &[0.5, 0.5], 0, 1)?;
        let rep = verify_theorem2(&scen, 2, &load, 0.05)?;
        let ip = rep.cells.iter().filter(|c| c.in_ip).count();
        let bpd = rep.cells.iter().filter(|c| c.in_bpd).count();
        println!(
            "{name}: load {:?} gamma {:.4} cells {} in IP {} in BPD {} mismatches {} boundary-only {}",
            load,
            g,
            rep.cells.len(),
            ip,
            bpd,
            rep.mismatches.len(),
            rep.boundary_only
        );
    }
    Ok(())
}
