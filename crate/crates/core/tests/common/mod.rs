//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use distrelax::loadflow::{run_loadflow, LoadFlowOptions};
use distrelax::network::{load_feeder, load_profiles, Feeder, ProfileSet, Region, Scenario};
use num_complex::Complex64;
use rayon::prelude::*;

pub const FIXTURES: [&str; 3] = ["two_bus.feeder", "four_bus.feeder", "fifteen_bus.feeder"];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn feeder(name: &str) -> Feeder {
    load_feeder(&fixture(name)).unwrap()
}

pub fn day() -> ProfileSet {
    load_profiles(&fixture("day24.csv")).unwrap()
}

/// Closed-form operating point of one line feeding withdrawal `s` from a root
/// at squared voltage `v0`, without shunts: returns `(v1, f1, P^t_1)`.
///
/// Eliminating `S^t = s + z f` and `f = |s|²/v1` from the voltage drop gives
/// `v1² - (v0 - 2 Re(z̄ s)) v1 + |z|²|s|² = 0`; the high-voltage root is the
/// physical one.
pub fn two_bus_closed_form(v0: f64, z: Complex64, s: Complex64) -> (f64, f64, f64) {
    let c = v0 - 2.0 * (z.conj() * s).re;
    let disc = c * c - 4.0 * z.norm_sqr() * s.norm_sqr();
    assert!(disc >= 0.0, "no load-flow solution");
    let v1 = 0.5 * (c + disc.sqrt());
    let f1 = s.norm_sqr() / v1;
    (v1, f1, s.re + z.re * f1)
}

/// Admissible withdrawals of a region on a grid of spacing `step`.
pub fn region_grid(r: &Region, step: f64) -> Vec<Complex64> {
    if let Some(p) = r.point() {
        return vec![p];
    }
    let lo = r.min_withdrawal();
    let hi = r.max_withdrawal();
    let count = |a: f64, b: f64| ((b - a) / step + 1e-9).floor() as usize + 1;
    let mut pts = Vec::new();
    for i in 0..count(lo.re, hi.re) {
        for j in 0..count(lo.im, hi.im) {
            let s = Complex64::new(lo.re + i as f64 * step, lo.im + j as f64 * step);
            if r.contains(s, 1e-12) {
                pts.push(s);
            }
        }
    }
    pts
}

#[derive(Debug, Clone)]
pub struct GridOptimum {
    pub import: f64,
    pub withdrawals: Vec<Complex64>,
    pub evaluated: usize,
}

/// Least active import over every grid combination of withdrawals whose load
/// flow converges within the voltage bounds and, if asked, the current bounds
/// at both line ends. `None` when no grid point is feasible.
pub fn grid_search(feeder: &Feeder, scenario: &Scenario, current_bounds: bool, shunts: bool, step: f64) -> Option<GridOptimum> {
    let grids: Vec<Vec<Complex64>> = scenario.regions.iter().map(|r| region_grid(r, step)).collect();
    let total: usize = grids.iter().map(Vec::len).product();
    let opts = LoadFlowOptions {
        tol: 1e-10,
        max_iter: 200,
        shunts,
    };
    let (best, evaluated) = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let s: Vec<Complex64> = grids
                .iter()
                .map(|g| {
                    let p = g[k % g.len()];
                    k /= g.len();
                    p
                })
                .collect();
            let lf = run_loadflow(feeder, &s, &opts).unwrap();
            if !lf.converged {
                return (None, 1);
            }
            for l in 1..=feeder.n() {
                let bus = feeder.bus(l);
                if lf.v[l] < bus.vmin - 1e-12 || lf.v[l] > bus.vmax + 1e-12 {
                    return (None, 1);
                }
                if let (true, Some(imax)) = (current_bounds, feeder.line(l).imax) {
                    let k = feeder.up(l);
                    if lf.st[l].norm_sqr() > imax * lf.v[k] + 1e-12 || lf.sb[l].norm_sqr() > imax * lf.v[l] + 1e-12 {
                        return (None, 1);
                    }
                }
            }
            (Some((lf.import(feeder).re, s)), 1)
        })
        .reduce(
            || (None, 0),
            |a: (Option<(f64, Vec<Complex64>)>, usize), b| {
                let best = match (a.0, b.0) {
                    (Some(x), Some(y)) => Some(if y.0 < x.0 { y } else { x }),
                    (x, y) => x.or(y),
                };
                (best, a.1 + b.1)
            },
        );
    best.map(|(import, withdrawals)| GridOptimum {
        import,
        withdrawals,
        evaluated,
    })
}
