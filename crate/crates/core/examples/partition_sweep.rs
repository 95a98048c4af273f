//! Planner value across two-group partitions of the diamond network.

use pslab::corpus;
use pslab::planner::sweep_partitions;

fn main() -> pslab::error::Result<()> {
    let scen = corpus::diamond4().with_grid(4)?;
    let table = sweep_partitions(&scen, 2, 0.1)?;
    print!("{}", table.to_csv(false));
    if let Some(i) = table.argmin {
        let row = &table.rows[i];
        println!("best x = {:?}, J* = {:?}", row.x, row.value);
    }
    Ok(())
}
