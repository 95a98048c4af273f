//! Round-trip a scenario and a rule through JSON files and validate them.

use pslab::corpus;
use pslab::mechanism::{load_rule, load_scenario, save_rule, save_scenario, validate};
use pslab::policy::PartitionProfile;

fn main() -> pslab::error::Result<()> {
    let dir = std::env::temp_dir().join("pslab_scenario_io");
    std::fs::create_dir_all(&dir).map_err(|source| pslab::error::Error::Io { path: dir.clone(), source })?;
    let scen_path = dir.join("diamond4.json");
    let rule_path = dir.join("reveal.json");

    save_scenario(&corpus::diamond4(), &scen_path)?;
    save_rule(&corpus::pigou2_full_revelation(), &rule_path)?;
    let scen = load_scenario(&scen_path)?;
    println!(
        "{}: {} edges, {} routes, states {:?}, K = {}, m = {}",
        scen_path.display(),
        scen.network().num_edges(),
        scen.network().num_routes(),
        scen.network().states(),
        scen.num_groups(),
        scen.grid_m()
    );

    let rule = load_rule(&rule_path)?;
    println!("rule against pigou2: {:?}", validate(&rule, &corpus::pigou2()));
    // Rules carry no route count, so policy indices are only bounds-checked
    // against the grid. A group-count mismatch is rejected.
    println!("rule against diamond4: {:?}", validate(&rule, &scen));
    let two_groups = scen.with_partition(PartitionProfile::equal(2))?;
    println!("rule against diamond4 with K = 2: {:?}", validate(&rule, &two_groups));
    Ok(())
}
