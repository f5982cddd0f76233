//! Load flow against a dense Newton solve of the full branch-flow equations.

use std::collections::BTreeMap;

use distrelax::loadflow::{run_loadflow, LoadFlowOptions};
use distrelax::network::{Bus, Feeder, FeederData, Line, PvPlan};
use num_complex::Complex64;
use proptest::prelude::*;

fn feeder(ups: &[usize], z: &[Complex64], b: &[f64]) -> Feeder {
    let n = ups.len();
    Feeder::new(FeederData {
        name: "oracle".into(),
        base_power: 1.0,
        base_voltages: BTreeMap::from([("mv".to_string(), 4.16)]),
        root_name: "root".into(),
        root_zone: "mv".into(),
        v0: 1.0,
        buses: (1..=n)
            .map(|l| Bus {
                name: format!("b{l}"),
                zone: "mv".into(),
                vmin: 0.81,
                vmax: 1.21,
                load: Complex64::new(0.0, 0.0),
                load_multiplier: 1.0,
                profile: "load".into(),
            })
            .collect(),
        lines: (0..n)
            .map(|i| Line {
                up: ups[i],
                z: z[i],
                b: b[i],
                imax: None,
                smax: None,
                zone: "mv".into(),
            })
            .collect(),
        capacitors: vec![],
        pv: PvPlan::default(),
    })
    .unwrap()
}

/// Unknowns per line: v, f, P^t, Q^t, P^b, Q^b.
fn residual(ups: &[usize], z: &[Complex64], b: &[f64], s: &[Complex64], u: &[f64]) -> Vec<f64> {
    let n = ups.len();
    let v = |k: usize| if k == 0 { 1.0 } else { u[6 * (k - 1)] };
    let mut r = Vec::with_capacity(6 * n);
    for l in 1..=n {
        let o = 6 * (l - 1);
        let (vl, f, pt, qt, pb, qb) = (u[o], u[o + 1], u[o + 2], u[o + 3], u[o + 4], u[o + 5]);
        let k = ups[l - 1];
        let (zr, zx, bl) = (z[l - 1].re, z[l - 1].im, b[l - 1]);
        let mut ps = s[l - 1].re;
        let mut qs = s[l - 1].im;
        for c in 1..=n {
            if ups[c - 1] == l {
                ps += u[6 * (c - 1) + 2];
                qs += u[6 * (c - 1) + 3];
            }
        }
        r.push(pb - ps);
        r.push(qb - qs);
        r.push(pt - (pb + zr * f));
        r.push(qt - (qb + zx * f - (v(k) + vl) * bl));
        let qw = qt + v(k) * bl;
        r.push(vl - (v(k) - 2.0 * (zr * pt + zx * qw) + (zr * zr + zx * zx) * f));
        r.push(v(k) * f - (pt * pt + qw * qw));
    }
    r
}

fn gauss(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        rhs.swap(c, p);
        for i in c + 1..n {
            let m = a[i][c] / a[c][c];
            for j in c..n {
                a[i][j] -= m * a[c][j];
            }
            rhs[i] -= m * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / a[i][i];
    }
    x
}

fn newton(ups: &[usize], z: &[Complex64], b: &[f64], s: &[Complex64]) -> Option<Vec<f64>> {
    let n = 6 * ups.len();
    let mut u = vec![0.0; n];
    for l in 0..ups.len() {
        u[6 * l] = 1.0;
    }
    for _ in 0..50 {
        let r = residual(ups, z, b, s, &u);
        if r.iter().all(|v| v.abs() < 1e-14) {
            return Some(u);
        }
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let h = 1e-7 * (1.0 + u[j].abs());
            let mut up = u.clone();
            up[j] += h;
            let mut dn = u.clone();
            dn[j] -= h;
            let (rp, rd) = (residual(ups, z, b, s, &up), residual(ups, z, b, s, &dn));
            for i in 0..n {
                jac[i][j] = (rp[i] - rd[i]) / (2.0 * h);
            }
        }
        let d = gauss(jac, r.iter().map(|v| -v).collect());
        for (ui, di) in u.iter_mut().zip(&d) {
            *ui += di;
        }
    }
    let r = residual(ups, z, b, s, &u);
    r.iter().all(|v| v.abs() < 1e-12).then_some(u)
}

fn case() -> impl Strategy<Value = (Vec<usize>, Vec<Complex64>, Vec<f64>, Vec<Complex64>)> {
    prop_oneof![Just(vec![0]), Just(vec![0, 1]), Just(vec![0, 0]), Just(vec![0, 1, 2]), Just(vec![0, 1, 1])]
        .prop_flat_map(|ups| {
            let n = ups.len();
            (
                Just(ups),
                prop::collection::vec((0.005..0.05f64, 0.005..0.05f64).prop_map(|(r, x)| Complex64::new(r, x)), n),
                prop::collection::vec(0.0..0.01f64, n),
                prop::collection::vec((-0.3..0.3f64, -0.2..0.2f64).prop_map(|(p, q)| Complex64::new(p, q)), n),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweep_matches_newton((ups, z, b, s) in case()) {
        let f = feeder(&ups, &z, &b);
        let lf = run_loadflow(&f, &s, &LoadFlowOptions::default()).unwrap();
        prop_assert!(lf.converged);
        let u = newton(&ups, &z, &b, &s).expect("newton converges on light loading");
        for l in 1..=ups.len() {
            let o = 6 * (l - 1);
            prop_assert!((lf.v[l] - u[o]).abs() < 1e-8);
            prop_assert!((lf.f[l] - u[o + 1]).abs() < 1e-8);
            prop_assert!((lf.st[l] - Complex64::new(u[o + 2], u[o + 3])).norm() < 1e-8);
            prop_assert!((lf.sb[l] - Complex64::new(u[o + 4], u[o + 5])).norm() < 1e-8);
        }
        prop_assert!(lf.max_residual < 1e-8);
    }

    #[test]
    fn active_balance_closes_with_losses((ups, z, b, s) in case()) {
        let f = feeder(&ups, &z, &b);
        let lf = run_loadflow(&f, &s, &LoadFlowOptions::default()).unwrap();
        let losses: f64 = (1..=ups.len()).map(|l| z[l - 1].re * lf.f[l]).sum();
        let withdrawn: f64 = s.iter().map(|s| s.re).sum();
        prop_assert!((lf.import(&f).re - withdrawn - losses).abs() < 1e-9);
    }
}

#[test]
fn non_convergence_is_reported_not_fatal() {
    let f = feeder(&[0, 1], &[Complex64::new(0.02, 0.04); 2], &[0.0; 2]);
    let opts = LoadFlowOptions {
        max_iter: 2,
        ..LoadFlowOptions::default()
    };
    let lf = run_loadflow(&f, &[Complex64::new(0.3, 0.1); 2], &opts).unwrap();
    assert!(!lf.converged && !lf.collapsed);
    assert_eq!(lf.iterations, 2);
}
