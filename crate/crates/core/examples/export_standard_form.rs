//! Writes one hour's Nick relaxation as a standard-form file, reads it back
//! and solves the copy.

use std::collections::BTreeMap;

use distrelax::conic::{io, solve, Block, Settings};
use distrelax::formulation::{build, Configuration, FormulationConfig, Method};
use distrelax::network::{build_scenario, load_feeder, load_profiles, ScenarioOptions};
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let feeder = load_feeder(&dir.join("four_bus.feeder")).unwrap();
    let profiles = load_profiles(&dir.join("day24.csv")).unwrap();
    let sc = build_scenario(&feeder, &profiles, 12, &ScenarioOptions::default()).unwrap();
    let form = build(&feeder, &sc, &FormulationConfig::new(Method::Nick, Configuration::SC)).unwrap();
    let (sf, _) = form.standard_form();

    let file = std::env::temp_dir().join("four_bus_nick_h12.sf");
    io::export_standard_form(&sf, &file).unwrap();
    let copy = io::import_standard_form(&file).unwrap();
    assert_eq!(copy, sf);
    let sol = solve(&copy, &Settings::default()).unwrap();
    println!("{}: {} variables, {} rows", file.display(), copy.num_vars(), copy.num_rows());
    let mut kinds: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for b in &copy.blocks {
        let (name, dim) = match *b {
            Block::Free(d) => ("free", d),
            Block::Nonneg(d) => ("nonnegative", d),
            Block::Soc(d) => ("second-order", d),
            Block::RotatedSoc(d) => ("rotated second-order", d),
        };
        let e = kinds.entry(name).or_default();
        e.0 += 1;
        e.1 += dim;
    }
    for (name, (count, dim)) in kinds {
        println!("  {count:>3} {name} blocks, {dim} variables");
    }
    println!("status {}, objective {:.8}, {} iterations", sol.status, sol.objective, sol.iterations);
}
