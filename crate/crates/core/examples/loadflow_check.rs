//! Feeds the withdrawals chosen by a relaxation to the load flow and reports
//! the bound violations of the resulting physical operating point.

use distrelax::exactness::residuals;
use distrelax::formulation::{build, solve_default, Configuration, FormulationConfig, Method};
use distrelax::loadflow::{run_loadflow, violations, LoadFlowOptions};
use distrelax::network::{build_scenario, load_feeder, load_profiles, ScenarioOptions};
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let feeder = load_feeder(&dir.join("fifteen_bus.feeder")).unwrap();
    let profiles = load_profiles(&dir.join("day24.csv")).unwrap();
    let opts = LoadFlowOptions {
        shunts: false,
        ..Default::default()
    };
    println!("{:>4} {:>6} {:>10} {:>10} {:>10} {:>7}", "hour", "method", "max ρ", "ΔV", "ΔI", "usable");
    for hour in [6, 12, 18] {
        let sc = build_scenario(&feeder, &profiles, hour, &ScenarioOptions::default()).unwrap();
        for m in [Method::Ropf, Method::Gan, Method::Nick] {
            let form = build(&feeder, &sc, &FormulationConfig::new(m, Configuration::NsC)).unwrap();
            let sol = solve_default(&form).unwrap();
            if !sol.status().has_solution() {
                println!("{hour:>4} {m:>6} {}", sol.status());
                continue;
            }
            let worst = residuals(&form, &sol).unwrap().into_iter().fold(0.0, f64::max);
            let lf = run_loadflow(&feeder, &form.withdrawals(sol.x()), &opts).unwrap();
            let v = violations(&lf, &feeder, true, 1e-2);
            println!("{hour:>4} {m:>6} {worst:10.2e} {:10.2e} {:10.2e} {:>7}", v.voltage, v.current, v.usable);
        }
    }
}
