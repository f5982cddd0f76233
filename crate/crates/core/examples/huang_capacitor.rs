//! At light load a fixed capacitor bank pushes reactive power upstream, which
//! the half-plane constraints of Huang's augmentation forbid. Letting the
//! bank switch restores feasibility.

use distrelax::formulation::{build, solve_default, Configuration, FormulationConfig, Method};
use distrelax::network::{build_scenario, load_feeder, load_profiles, CapacitorMode, ScenarioOptions};
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let feeder = load_feeder(&dir.join("four_bus.feeder")).unwrap();
    let profiles = load_profiles(&dir.join("day24.csv")).unwrap();
    for mode in [CapacitorMode::Fixed, CapacitorMode::Variable] {
        let opts = ScenarioOptions {
            capacitor_mode: mode,
            ..Default::default()
        };
        let statuses: Vec<String> = (0..24)
            .map(|h| {
                let sc = build_scenario(&feeder, &profiles, h, &opts).unwrap();
                let form = build(&feeder, &sc, &FormulationConfig::new(Method::Huang, Configuration::NsC)).unwrap();
                let sol = solve_default(&form).unwrap();
                if sol.status().has_solution() { "o" } else { "x" }.to_string()
            })
            .collect();
        println!("{:<9} {}", format!("{mode:?}"), statuses.join(""));
    }
    println!("o: solved, x: infeasible (hours 0..23)");
}
