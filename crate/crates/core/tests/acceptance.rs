//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line (visible with `--nocapture`) before
//! asserting.

mod common;

#[path = "../../conic/tests/common/mod.rs"]
mod planted;

use std::fs;
use std::time::Instant;

use common::{day, feeder, fixture, grid_search, two_bus_closed_form, FIXTURES};
use distrelax::conic::{solve, Settings, Status};
use distrelax::exactness::{residuals, GapClass, Thresholds};
use distrelax::formulation::{build, solve_default, Configuration, FormulationConfig, Method, OpfSolution};
use distrelax::harness::{cli, run_sweep, HourRow, ObjectiveSpec, SweepConfig};
use distrelax::loadflow::{run_loadflow, LoadFlowOptions};
use distrelax::network::{build_scenario, CapacitorMode, Feeder, Scenario, ScenarioOptions};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(n: usize, failures: &[String], detail: String) {
    if failures.is_empty() {
        println!("criterion {n}: PASS {detail}");
    } else {
        println!("criterion {n}: FAIL {detail}");
        for f in failures {
            println!("  {f}");
        }
    }
    assert!(failures.is_empty(), "criterion {n}: {} failures, first: {}", failures.len(), failures[0]);
}

fn scenario(f: &Feeder, hour: usize, mode: CapacitorMode) -> Scenario {
    let opts = ScenarioOptions {
        capacitor_mode: mode,
        ..Default::default()
    };
    build_scenario(f, &day(), hour, &opts).unwrap()
}

fn run(f: &Feeder, sc: &Scenario, cfg: FormulationConfig) -> (distrelax::formulation::Formulation, OpfSolution) {
    let form = build(f, sc, &cfg).unwrap();
    let sol = solve_default(&form).unwrap();
    (form, sol)
}

fn max_residual(form: &distrelax::formulation::Formulation, sol: &OpfSolution) -> f64 {
    residuals(form, sol).unwrap().into_iter().fold(0.0, f64::max)
}

/// Method and configuration pairs a method supports.
fn augmented_pairs() -> Vec<(Method, Configuration)> {
    let mut v = Vec::new();
    for m in [Method::Gan, Method::Huang, Method::Nick] {
        for c in Configuration::ALL {
            if !c.shunts() || m.allows_shunts() {
                v.push((m, c));
            }
        }
    }
    v
}

fn sweep_config(name: &str, method: Method, conf: Configuration) -> SweepConfig {
    let mut c = SweepConfig::new(fixture(name), method, conf);
    c.profiles = Some(fixture("day24.csv"));
    c.workers = Some(4);
    c
}

#[test]
fn criterion_01_two_bus_oracle() {
    let t0 = Instant::now();
    let base = feeder("two_bus.feeder");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for draw in 0..50 {
        let z = Complex64::new(rng.gen_range(0.002..0.08), rng.gen_range(0.002..0.08));
        let s = Complex64::new(rng.gen_range(0.0..0.6), rng.gen_range(-0.2..0.3));
        let f = base
            .map_lines(|_, line| {
                line.z = z;
                line.imax = None;
            })
            .unwrap()
            .map_buses(|_, bus| {
                bus.vmin = 0.5;
                bus.vmax = 1.5;
            })
            .unwrap();
        let (v1, f1, pt) = two_bus_closed_form(f.v0(), z, s);
        let (form, sol) = run(&f, &Scenario::fixed(&[s]), FormulationConfig::new(Method::Ropf, Configuration::NsNc));
        let lf = run_loadflow(&f, &[s], &LoadFlowOptions::default()).unwrap();
        if sol.status() != Status::Optimal || !lf.converged {
            failures.push(format!("draw {draw}: status {} load flow converged {}", sol.status(), lf.converged));
            continue;
        }
        let x = sol.x();
        let relaxed = [form.voltage(x, 1), form.current(x, 1), form.top_flow(x, 1).re];
        let flow = [lf.v[1], lf.f[1], lf.st[1].re];
        for (k, name) in ["v1", "f1", "P1"].iter().enumerate() {
            let exact = [v1, f1, pt][k];
            let err = (relaxed[k] - exact).abs().max((flow[k] - exact).abs());
            worst = worst.max(err);
            if err > 1e-6 {
                failures.push(format!(
                    "draw {draw} {name}: closed form {exact}, relaxation {}, load flow {}",
                    relaxed[k], flow[k]
                ));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs > 5.0 {
        failures.push(format!("runtime {secs:.1} s over 5 s"));
    }
    report(1, &failures, format!("50 draws, worst deviation {worst:.2e}, {secs:.2} s"));
}

#[test]
fn criterion_02_grid_search_global_optimality() {
    let t0 = Instant::now();
    let f = feeder("four_bus.feeder");
    let th = Thresholds::default();
    let mut failures = Vec::new();
    let mut exact_checked = 0;
    let mut worst_match: f64 = 0.0;
    for conf in [Configuration::NsNc, Configuration::NsC] {
        for hour in [3, 8, 12, 18] {
            let sc = scenario(&f, hour, CapacitorMode::Fixed);
            let (form, sol) = run(&f, &sc, FormulationConfig::new(Method::Ropf, conf));
            let grid = grid_search(&f, &sc, conf.current_bounds(), false, 1e-3);
            let Some(grid) = grid else {
                if sol.status().has_solution() {
                    // an empty grid says nothing about the relaxation
                    println!("  {conf} hour {hour}: no feasible grid point");
                }
                continue;
            };
            if !sol.status().has_solution() {
                failures.push(format!("{conf} hour {hour}: grid feasible but relaxation {}", sol.status()));
                continue;
            }
            let lower = sol.true_objective;
            if lower > grid.import + 1e-6 {
                failures.push(format!("{conf} hour {hour}: relaxation {lower} above grid optimum {}", grid.import));
            }
            let exact = max_residual(&form, &sol) < th.exact;
            if exact {
                exact_checked += 1;
                let d = grid.import - lower;
                worst_match = worst_match.max(d);
                if d > 2e-3 {
                    failures.push(format!("{conf} hour {hour}: exact relaxation {lower} vs grid {}", grid.import));
                }
            }
            println!(
                "  {conf} hour {hour:2}: relaxation {lower:.6} grid {:.6} ({} points) exact {exact}",
                grid.import, grid.evaluated
            );
        }
    }
    if exact_checked == 0 {
        failures.push("no exact hour was compared".into());
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs > 300.0 {
        failures.push(format!("runtime {secs:.0} s over 5 min"));
    }
    report(
        2,
        &failures,
        format!("{exact_checked} exact hours, worst grid excess {worst_match:.2e}, {secs:.1} s"),
    );
}

#[test]
fn criterion_03_relaxation_orders_below_augmentations() {
    let mut failures = Vec::new();
    let mut compared = 0;
    for name in FIXTURES {
        let f = feeder(name);
        let found: Vec<(Vec<String>, usize)> = (0..24)
            .into_par_iter()
            .map(|hour| {
                let sc = scenario(&f, hour, CapacitorMode::Fixed);
                let mut fail = Vec::new();
                let mut n = 0;
                for conf in Configuration::ALL {
                    let (_, r) = run(&f, &sc, FormulationConfig::new(Method::Ropf, conf));
                    for (m, c) in augmented_pairs().into_iter().filter(|p| p.1 == conf) {
                        let (_, a) = run(&f, &sc, FormulationConfig::new(m, c));
                        if a.status() == Status::NumericalLimit || r.status() == Status::NumericalLimit {
                            fail.push(format!("{name} hour {hour} {m} {c}: solver stopped ({}, {})", r.status(), a.status()));
                            continue;
                        }
                        if !a.status().has_solution() {
                            continue;
                        }
                        if !r.status().has_solution() {
                            fail.push(format!("{name} hour {hour} {c}: relaxation {} but {m} solved", r.status()));
                            continue;
                        }
                        n += 1;
                        if r.true_objective > a.true_objective + 1e-6 {
                            fail.push(format!(
                                "{name} hour {hour} {m} {c}: relaxation {} above {}",
                                r.true_objective, a.true_objective
                            ));
                        }
                    }
                }
                (fail, n)
            })
            .collect();
        for (fail, n) in found {
            failures.extend(fail);
            compared += n;
        }
    }
    report(3, &failures, format!("{compared} augmented optima compared"));
}

#[test]
fn criterion_04_gan_equals_nick_without_shunts_and_bounds() {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for name in FIXTURES {
        let f = feeder(name);
        let uniform = (1..=f.n()).all(|l| f.bus(l).vmax == f.bus(1).vmax);
        assert!(uniform, "{name}: fixture upper voltage bounds are not uniform");
        let diffs: Vec<Result<f64, String>> = (0..24)
            .into_par_iter()
            .map(|hour| {
                let sc = scenario(&f, hour, CapacitorMode::Fixed);
                let (_, g) = run(&f, &sc, FormulationConfig::new(Method::Gan, Configuration::NsNc));
                let (_, n) = run(&f, &sc, FormulationConfig::new(Method::Nick, Configuration::NsNc));
                if g.status().has_solution() != n.status().has_solution() {
                    return Err(format!("{name} hour {hour}: gan {} nick {}", g.status(), n.status()));
                }
                if !g.status().has_solution() {
                    return Ok(0.0);
                }
                let d = (g.true_objective - n.true_objective).abs();
                if d > 1e-6 {
                    Err(format!("{name} hour {hour}: gan {} nick {}", g.true_objective, n.true_objective))
                } else {
                    Ok(d)
                }
            })
            .collect();
        for d in diffs {
            match d {
                Ok(d) => worst = worst.max(d),
                Err(e) => failures.push(e),
            }
        }
    }
    report(4, &failures, format!("72 hours, worst difference {worst:.2e}"));
}

#[test]
fn criterion_05_huang_capacitor_infeasibility() {
    let f = feeder("four_bus.feeder");
    let mut failures = Vec::new();
    let mut checked = Vec::new();
    // night hours with the lightest load, and the same hour with load nearly gone
    for (hour, load_scale) in [(4, 1.0), (4, 0.05), (3, 1.0)] {
        for (mode, want_feasible) in [(CapacitorMode::Fixed, false), (CapacitorMode::Variable, true)] {
            let opts = ScenarioOptions {
                capacitor_mode: mode,
                load_scale,
                pv_scale: 1.0,
            };
            let sc = build_scenario(&f, &day(), hour, &opts).unwrap();
            let (_, sol) = run(&f, &sc, FormulationConfig::new(Method::Huang, Configuration::NsC));
            let ok = if want_feasible {
                sol.status().has_solution()
            } else {
                sol.status() == Status::Infeasible
            };
            checked.push(format!("h{hour}x{load_scale} {mode:?}={}", sol.status()));
            if !ok {
                failures.push(format!("hour {hour} load x{load_scale} {mode:?}: {}", sol.status()));
            }
        }
    }
    report(5, &failures, checked.join(" "));
}

/// Rows of the configured method at hour 12 with variable capacitors.
fn target_rows(method: Method, conf: Configuration, q_ref: f64, penalties: &[f64]) -> Vec<HourRow> {
    let mut c = sweep_config("four_bus.feeder", method, conf);
    c.hours = Some((12, 13));
    c.capacitors = CapacitorMode::Variable;
    c.objective = ObjectiveSpec::ReactiveTarget { q_ref };
    c.penalties = penalties.to_vec();
    run_sweep(&c).unwrap().rows
}

const TRICHOTOMY: [(Method, Configuration); 3] = [
    (Method::Gan, Configuration::NsNc),
    (Method::Huang, Configuration::NsC),
    (Method::Nick, Configuration::SC),
];

#[test]
fn criterion_06_reactive_target_trichotomy() {
    let mut failures = Vec::new();
    let mut seen = Vec::new();
    for (m, c) in TRICHOTOMY {
        for (q_ref, label) in [(-1.0, "below"), (0.0, "inside"), (1.0, "above")] {
            let row = &target_rows(m, c, q_ref, &[0.0])[0];
            let class = row.class();
            let ok = match label {
                "below" => class == GapClass::Exact,
                "inside" => class == GapClass::InexactZeroGap,
                _ => class.is_inexact(),
            };
            seen.push(format!("{m}/{c} {label}={}", class.as_str()));
            if !ok {
                failures.push(format!("{m} {c} q_ref {q_ref} ({label}): {}", class.as_str()));
            }
        }
    }
    report(6, &failures, seen.join(" "));
}

#[test]
fn criterion_07_penalty_recovers_exactness() {
    let f = feeder("four_bus.feeder");
    let peak = f.peak_load();
    let mut cases: Vec<(String, Vec<HourRow>)> = Vec::new();
    for (m, c) in TRICHOTOMY {
        let rows = target_rows(m, c, 0.0, &[0.0, 0.01]);
        cases.push((format!("{m} {c} q_ref 0"), rows));
    }
    let mut gan = sweep_config("four_bus.feeder", Method::Gan, Configuration::NsC);
    gan.hours = Some((12, 13));
    gan.penalties = vec![0.0, 0.01];
    cases.push(("gan ns-c min-import".into(), run_sweep(&gan).unwrap().rows));

    let mut failures = Vec::new();
    let mut seen = Vec::new();
    for (name, rows) in &cases {
        let (Some(r0), Some(r1)) = (rows[0].report.as_ref(), rows[1].report.as_ref()) else {
            failures.push(format!("{name}: missing report"));
            continue;
        };
        if r0.class != GapClass::InexactZeroGap {
            failures.push(format!("{name}: unpenalized class {} is not the zero-gap case", r0.class.as_str()));
        }
        let degradation = (r1.objective - r0.objective) / peak * 100.0;
        seen.push(format!(
            "{name}: residual {:.1e} -> {:.1e}, degradation {degradation:.3}%",
            r0.max_residual, r1.max_residual
        ));
        if !(r1.max_residual < 1e-2) {
            failures.push(format!("{name}: residual {} at penalty 0.01", r1.max_residual));
        }
        if !(degradation < 1.0) {
            failures.push(format!("{name}: degradation {degradation}% of peak load"));
        }
        if r1.max_residual > r0.max_residual {
            failures.push(format!("{name}: residual grew {} -> {}", r0.max_residual, r1.max_residual));
        }
    }
    report(7, &failures, seen.join("; "));
}

#[test]
fn criterion_08_exact_hours_have_usable_load_flows() {
    let mut failures = Vec::new();
    let mut exact_hours = 0;
    for name in FIXTURES {
        for (m, c) in augmented_pairs() {
            let mut cfg = sweep_config(name, m, c);
            cfg.penalties = vec![0.0, 0.01];
            let summary = run_sweep(&cfg).unwrap();
            for row in &summary.rows {
                let Some(r) = &row.report else { continue };
                if !r.exact {
                    continue;
                }
                exact_hours += 1;
                let v = r.voltage_violation.unwrap_or(f64::INFINITY);
                let i = r.current_violation.unwrap_or(f64::INFINITY);
                if row.loadflow_converged != Some(true) || !(v < 1e-2) || !(i < 1e-2) {
                    failures.push(format!(
                        "{name} {m} {c} hour {} penalty {}: residual {:.2e} but voltage {v:.2e} current {i:.2e} converged {:?}",
                        row.hour, row.penalty, r.max_residual, row.loadflow_converged
                    ));
                }
            }
        }
    }
    report(8, &failures, format!("{exact_hours} exact rows checked"));
}

#[test]
fn criterion_09_solver_certification() {
    let t0 = Instant::now();
    let settings = Settings::default();
    let mut failures = Vec::new();
    let shapes: [(usize, usize, &[usize], &[usize]); 5] = [
        (0, 6, &[], &[]),
        (2, 8, &[], &[]),
        (3, 6, &[3, 4], &[3, 2]),
        (1, 0, &[5], &[4]),
        (4, 10, &[3, 3, 6], &[3]),
    ];
    let mut optimal = 0;
    let mut certified = 0;
    for k in 0..200u64 {
        let (free, nonneg, socs, rsocs) = shapes[k as usize % shapes.len()];
        let (mut sf, opt) = planted::planted(1000 + k, free, nonneg, socs, rsocs);
        let infeasible = k % 4 == 3;
        if infeasible {
            // contradicting copy of the first equality
            let row = sf.a[0].clone();
            let rhs = sf.b[0] + 1.0;
            sf.a.push(row.iter().map(|&(j, v)| (j, -v)).collect());
            sf.b.push(-rhs);
        }
        let sol = solve(&sf, &settings).unwrap();
        if sol.status == Status::Optimal {
            optimal += 1;
            if sol.relative_gap > 1e-8 || sol.primal_residual > 1e-8 {
                failures.push(format!(
                    "instance {k}: optimal with gap {:e} residual {:e}",
                    sol.relative_gap, sol.primal_residual
                ));
            }
        }
        if infeasible {
            if sol.status != Status::Infeasible {
                failures.push(format!("instance {k}: infeasible construction reported {}", sol.status));
                continue;
            }
            let aty = sf.at_times(&sol.y);
            let res = aty.iter().zip(&sol.z).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            let by: f64 = sf.b.iter().zip(&sol.y).map(|(a, b)| a * b).sum();
            let cone = planted::dual_cone_violation(&sf, &sol.z);
            if (by - 1.0).abs() > 1e-9 || res > 1e-6 || cone > 1e-6 {
                failures.push(format!("instance {k}: certificate b'y {by}, A'y + z {res:e}, cone {cone:e}"));
            } else {
                certified += 1;
            }
        } else if sol.status != Status::Optimal {
            failures.push(format!("instance {k}: planted optimum reported {}", sol.status));
        } else if (sol.objective - opt).abs() > 1e-6 * (1.0 + opt.abs()) {
            failures.push(format!("instance {k}: objective {} vs planted {opt}", sol.objective));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs > 60.0 {
        failures.push(format!("runtime {secs:.1} s over 1 min"));
    }
    report(
        9,
        &failures,
        format!("{optimal} optimal, {certified} certified infeasible, {secs:.2} s"),
    );
}

#[test]
fn criterion_10_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        "feeder = {:?}\nprofiles = {:?}\nconfiguration = \"ns-c\"\nmethod = \"gan\"\npenalties = [0.0, 0.01]\n",
        fixture("four_bus.feeder"),
        fixture("day24.csv")
    );
    let config = dir.path().join("sweep.toml");
    fs::write(&config, toml).unwrap();
    let mut outputs = Vec::new();
    for (run, workers) in [(0, "1"), (1, "4"), (2, "4")] {
        let out = dir.path().join(format!("run{run}"));
        let args = ["distrelax", "sweep", config.to_str().unwrap(), "--output", out.to_str().unwrap(), "--workers", workers];
        let code = cli::run(args, &mut Vec::new(), &mut Vec::new());
        assert_eq!(code, cli::EXIT_OK);
        outputs.push(out);
    }
    let mut failures = Vec::new();
    let files = ["hours.csv", "aggregate.csv", "scatter_voltage.csv", "scatter_current.csv"];
    for file in files {
        let first = fs::read(outputs[0].join(file)).unwrap();
        for other in &outputs[1..] {
            if fs::read(other.join(file)).unwrap() != first {
                failures.push(format!("{file} differs in {}", other.display()));
            }
        }
    }
    report(10, &failures, format!("3 runs x {} files", files.len()));
}
