//! Adding ε Σf to the objective pushes an inexact optimum back onto the
//! exact face at a small cost in the true objective.

use distrelax::exactness::residuals;
use distrelax::formulation::{build, solve_default, Configuration, FormulationConfig, Method};
use distrelax::network::{build_scenario, load_feeder, load_profiles, ScenarioOptions};
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let feeder = load_feeder(&dir.join("four_bus.feeder")).unwrap();
    let profiles = load_profiles(&dir.join("day24.csv")).unwrap();
    let sc = build_scenario(&feeder, &profiles, 12, &ScenarioOptions::default()).unwrap();
    let peak = feeder.peak_load();
    println!("gan ns-c, hour 12, peak load {peak:.3} p.u.");
    println!("{:>8} {:>12} {:>12} {:>14}", "eps", "objective", "max ρ", "cost % peak");
    let mut first = None;
    for eps in [0.0, 1e-4, 1e-3, 1e-2, 1e-1] {
        let cfg = FormulationConfig::new(Method::Gan, Configuration::NsC).with_penalty(eps);
        let form = build(&feeder, &sc, &cfg).unwrap();
        let sol = solve_default(&form).unwrap();
        let worst = residuals(&form, &sol).unwrap().into_iter().fold(0.0, f64::max);
        let base = *first.get_or_insert(sol.true_objective);
        println!(
            "{eps:8.0e} {:12.6} {worst:12.2e} {:14.4}",
            sol.true_objective,
            (sol.true_objective - base) / peak * 100.0
        );
    }
}
