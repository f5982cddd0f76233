//! Tracking a reactive import target at noon. Targets outside the reachable
//! range leave the relaxation slack; targets inside it have an inexact
//! optimum with no objective gap.

use distrelax::exactness::GapClass;
use distrelax::formulation::{Configuration, Method};
use distrelax::harness::{run_sweep, ObjectiveSpec, SweepConfig};
use distrelax::network::CapacitorMode;
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for (method, conf) in [(Method::Gan, Configuration::NsNc), (Method::Huang, Configuration::NsC), (Method::Nick, Configuration::SC)] {
        for q_ref in [-1.0, -0.25, 0.0, 0.25, 1.0] {
            let mut c = SweepConfig::new(dir.join("four_bus.feeder"), method, conf);
            c.profiles = Some(dir.join("day24.csv"));
            c.hours = Some((12, 13));
            c.capacitors = CapacitorMode::Variable;
            c.objective = ObjectiveSpec::ReactiveTarget { q_ref };
            let row = &run_sweep(&c).unwrap().rows[0];
            let residual = row.report.as_ref().filter(|r| r.class != GapClass::Infeasible).map(|r| r.max_residual);
            println!(
                "{method:>5} {conf:5} q_ref {q_ref:+5.2}: {:<20} reachable {:<5} residual {}",
                row.class().as_str(),
                row.target_reachable,
                residual.map_or("-".into(), |r| format!("{r:.2e}"))
            );
        }
    }
}
