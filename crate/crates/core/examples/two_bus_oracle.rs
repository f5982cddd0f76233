//! One line, one load: the relaxation, the load flow and the closed-form
//! branch-flow solution give the same operating point.

use distrelax::formulation::{build, solve_default, Configuration, FormulationConfig, Method};
use distrelax::loadflow::{run_loadflow, LoadFlowOptions};
use distrelax::network::{load_feeder, Scenario};
use num_complex::Complex64;
use std::path::Path;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/two_bus.feeder");
    let feeder = load_feeder(&path).unwrap();
    let z = feeder.line(1).z;
    let v0 = feeder.v0();
    println!("{:>8} {:>8} {:>12} {:>12} {:>12}", "p", "q", "v1 closed", "v1 relaxed", "v1 sweep");
    for (p, q) in [(0.1, 0.05), (0.5, 0.2), (1.2, 0.6), (-0.4, 0.0)] {
        let s = Complex64::new(p, q);
        // v1² - (v0 - 2 Re(z̄ s)) v1 + |z|²|s|² = 0, upper root
        let c = v0 - 2.0 * (z.conj() * s).re;
        let v1 = 0.5 * (c + (c * c - 4.0 * z.norm_sqr() * s.norm_sqr()).sqrt());

        let sc = Scenario::fixed(&[s]);
        let form = build(&feeder, &sc, &FormulationConfig::new(Method::Ropf, Configuration::NsNc)).unwrap();
        let sol = solve_default(&form).unwrap();
        let lf = run_loadflow(&feeder, &[s], &LoadFlowOptions::default()).unwrap();
        println!("{p:8.3} {q:8.3} {v1:12.8} {:12.8} {:12.8}", form.voltage(sol.x(), 1), lf.v[1]);
    }
}
