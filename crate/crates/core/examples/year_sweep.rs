//! A sampled year on the fifteen-bus feeder with synthetic profiles, written
//! as report files.
//!
//!     cargo run --release --example year_sweep -- [output-dir] [hours]

use distrelax::formulation::{Configuration, Method};
use distrelax::harness::{emit_reports, run_sweep, SweepConfig};
use std::path::{Path, PathBuf};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "year-sweep".into()));
    let sample: usize = args.next().map_or(96, |s| s.parse().expect("hour count"));
    let feeder = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fifteen_bus.feeder");
    let mut c = SweepConfig::new(feeder, Method::Gan, Configuration::NsC);
    c.sample = Some(sample);
    c.penalties = vec![0.0, 0.01];
    let summary = run_sweep(&c).unwrap();
    for a in &summary.aggregates {
        println!(
            "eps {:<5} hours {:<4} infeasible {:5.1}%  inexact {:5.1}%  zero-gap {:5.1}%  peak subopt {:.4}%",
            a.penalty, a.hours, a.infeasible_pct, a.inexact_pct, a.zero_gap_pct, a.peak_suboptimality_pct
        );
    }
    for f in emit_reports(&summary, &out).unwrap() {
        println!("wrote {}", f.display());
    }
}
