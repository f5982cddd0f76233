//! Plain relaxation against the three augmented relaxations over a day on the
//! four-bus feeder: objective, largest cone residual and the gap bound.

use distrelax::exactness::residuals;
use distrelax::formulation::{build, solve_default, Configuration, FormulationConfig, Method};
use distrelax::network::{build_scenario, load_feeder, load_profiles, ScenarioOptions};
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let feeder = load_feeder(&dir.join("four_bus.feeder")).unwrap();
    let profiles = load_profiles(&dir.join("day24.csv")).unwrap();
    let conf = Configuration::NsC;
    println!("configuration {conf}, objective: least active import (p.u.)");
    println!("{:>4} {:>8} {:>22} {:>22} {:>22}", "hour", "ropf", "gan", "huang", "nick");
    for hour in (0..24).step_by(3) {
        let sc = build_scenario(&feeder, &profiles, hour, &ScenarioOptions::default()).unwrap();
        let mut cells = Vec::new();
        let mut base = f64::NAN;
        for m in Method::ALL {
            let form = build(&feeder, &sc, &FormulationConfig::new(m, conf)).unwrap();
            let sol = solve_default(&form).unwrap();
            if !sol.status().has_solution() {
                cells.push(format!("{:>22}", sol.status()));
                continue;
            }
            let worst = residuals(&form, &sol).unwrap().into_iter().fold(0.0, f64::max);
            if m == Method::Ropf {
                base = sol.true_objective;
                cells.push(format!("{:8.4}", sol.true_objective));
            } else {
                cells.push(format!("{:8.4} ρ {:.0e} {:+.0e}", sol.true_objective, worst, sol.true_objective - base));
            }
        }
        println!("{hour:>4} {}", cells.join(" "));
    }
}
