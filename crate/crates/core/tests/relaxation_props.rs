//! Invariants of the relaxations on random small trees.

use std::collections::BTreeMap;

use distrelax::conic::Status;
use distrelax::exactness::residuals;
use distrelax::formulation::{build, solve_default, Configuration, FormulationConfig, Method, OpfSolution};
use distrelax::network::{Bus, Feeder, FeederData, Line, PvPlan, Region, Scenario};
use num_complex::Complex64;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    ups: Vec<usize>,
    z: Vec<Complex64>,
    b: Vec<f64>,
    imax: Vec<f64>,
    regions: Vec<Region>,
}

fn feeder(c: &Case) -> Feeder {
    let n = c.ups.len();
    Feeder::new(FeederData {
        name: "random".into(),
        base_power: 1.0,
        base_voltages: BTreeMap::from([("mv".to_string(), 4.16)]),
        root_name: "root".into(),
        root_zone: "mv".into(),
        v0: 1.0,
        buses: (1..=n)
            .map(|l| Bus {
                name: format!("b{l}"),
                zone: "mv".into(),
                vmin: 0.9025,
                vmax: 1.1025,
                load: c.regions[l - 1].load,
                load_multiplier: 1.0,
                profile: "load".into(),
            })
            .collect(),
        lines: (0..n)
            .map(|i| Line {
                up: c.ups[i],
                z: c.z[i],
                b: c.b[i],
                imax: Some(c.imax[i]),
                smax: None,
                zone: "mv".into(),
            })
            .collect(),
        capacitors: vec![],
        pv: PvPlan::default(),
    })
    .unwrap()
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..=5)
        .prop_flat_map(|n| {
            (
                (0..n).map(|i| 0..=i).collect::<Vec<_>>(),
                prop::collection::vec((0.005..0.04f64, 0.005..0.04f64), n),
                prop::collection::vec(0.0..0.005f64, n),
                prop::collection::vec(0.05..0.5f64, n),
                prop::collection::vec((0.0..0.15f64, 0.0..0.06f64, 0.0..0.4f64, prop::bool::ANY), n),
            )
        })
        .prop_map(|(ups, z, b, imax, loads)| Case {
            ups,
            z: z.into_iter().map(|(r, x)| Complex64::new(r, x)).collect(),
            b,
            imax,
            regions: loads
                .into_iter()
                .map(|(p, q, pv, has)| Region {
                    load: Complex64::new(p, q),
                    pv_avail: if has { pv } else { 0.0 },
                    pv_nameplate: if has { 1.1 * pv } else { 0.0 },
                    cap_q: 0.0,
                    cap_variable: false,
                })
                .collect(),
        })
}

fn solve(f: &Feeder, sc: &Scenario, cfg: FormulationConfig) -> (distrelax::formulation::Formulation, OpfSolution) {
    let form = build(f, sc, &cfg).unwrap();
    let sol = solve_default(&form).unwrap();
    (form, sol)
}

fn scenario(c: &Case) -> Scenario {
    Scenario {
        hour: 0,
        regions: c.regions.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn plain_relaxation_bounds_every_augmentation(c in case()) {
        let f = feeder(&c);
        let sc = scenario(&c);
        for conf in Configuration::ALL {
            let (_, r) = solve(&f, &sc, FormulationConfig::new(Method::Ropf, conf));
            prop_assume!(r.status().has_solution());
            for m in [Method::Gan, Method::Huang, Method::Nick] {
                if conf.shunts() && !m.allows_shunts() {
                    continue;
                }
                let (_, a) = solve(&f, &sc, FormulationConfig::new(m, conf));
                prop_assert!(a.status() != Status::NumericalLimit, "{m} {conf}");
                if a.status().has_solution() {
                    prop_assert!(r.objective() <= a.objective() + 1e-6, "{m} {conf}: {} > {}", r.objective(), a.objective());
                }
            }
        }
    }

    #[test]
    fn gan_and_nick_agree_without_shunts_and_bounds(c in case()) {
        let f = feeder(&c);
        let sc = scenario(&c);
        let (_, g) = solve(&f, &sc, FormulationConfig::new(Method::Gan, Configuration::NsNc));
        let (_, n) = solve(&f, &sc, FormulationConfig::new(Method::Nick, Configuration::NsNc));
        prop_assert_eq!(g.status(), n.status());
        if g.status().has_solution() {
            prop_assert!((g.objective() - n.objective()).abs() < 1e-6);
        }
    }

    #[test]
    fn penalty_trades_objective_for_tightness(c in case()) {
        let f = feeder(&c);
        let sc = scenario(&c);
        let base = FormulationConfig::new(Method::Ropf, Configuration::NsC);
        let (form0, s0) = solve(&f, &sc, base.clone());
        prop_assume!(s0.status().has_solution());
        let fsum0: f64 = (1..=f.n()).map(|l| form0.current(s0.x(), l)).sum();
        let mut prev = s0.true_objective;
        for eps in [0.005, 0.01, 0.02] {
            let (_, s) = solve(&f, &sc, base.clone().with_penalty(eps));
            prop_assert!(s.status().has_solution(), "{:?}", s.status());
            prop_assert!(s.true_objective >= prev - 1e-7);
            prop_assert!(s.true_objective - s0.true_objective <= eps * fsum0 + 1e-7);
            prev = s.true_objective;
        }
    }

    #[test]
    fn relaxed_residuals_are_nonnegative(c in case()) {
        let f = feeder(&c);
        let sc = scenario(&c);
        for m in Method::ALL {
            let conf = if m.allows_shunts() { Configuration::SC } else { Configuration::NsC };
            let (form, s) = solve(&f, &sc, FormulationConfig::new(m, conf));
            if s.status().has_solution() {
                prop_assert!(residuals(&form, &s).unwrap().iter().all(|&r| r > -1e-7));
            }
        }
    }
}
