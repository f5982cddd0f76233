//! Backward/forward sweep load flow on the branch-flow equations.
//!
//! For fixed withdrawals the sweep solves flow balance at both line ends, the
//! voltage drop and the current definition as equalities. The series current
//! is evaluated at the downstream end, `f = |S^b - j v_l b|² / v_l`, which at a
//! fixed point equals `|S^t + j v_up b|² / v_up`.

use num_complex::Complex64;
use thiserror::Error;

use crate::network::Feeder;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Model line shunts (otherwise `b = 0`).
    pub shunts: bool,
}

impl Default for LoadFlowOptions {
    fn default() -> Self {
        LoadFlowOptions {
            tol: 1e-8,
            max_iter: 100,
            shunts: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LoadFlowError {
    #[error("{found} setpoints for {expected} buses")]
    SetpointCount { expected: usize, found: usize },
    #[error("non-finite setpoint at bus {0}")]
    NonFinite(usize),
}

/// Operating point. Bus quantities are indexed `0..=n` (entry 0 is the root);
/// line quantities are indexed by the line's bus, entry 0 unused.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadFlowResult {
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    pub st: Vec<Complex64>,
    pub sb: Vec<Complex64>,
    pub converged: bool,
    /// A voltage became nonpositive during the sweep.
    pub collapsed: bool,
    pub iterations: usize,
    /// Largest residual over the four equation families.
    pub max_residual: f64,
}

impl LoadFlowResult {
    pub fn import(&self, feeder: &Feeder) -> Complex64 {
        feeder.root_lines().iter().map(|&l| self.st[l]).sum()
    }
}

pub fn run_loadflow(
    feeder: &Feeder,
    setpoints: &[Complex64],
    options: &LoadFlowOptions,
) -> Result<LoadFlowResult, LoadFlowError> {
    let n = feeder.n();
    if setpoints.len() != n {
        return Err(LoadFlowError::SetpointCount {
            expected: n,
            found: setpoints.len(),
        });
    }
    if let Some(i) = setpoints.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
        return Err(LoadFlowError::NonFinite(i + 1));
    }
    run_from(feeder, setpoints, options, vec![feeder.v0(); n + 1])
}

/// Sweep started from the given voltages instead of a flat profile.
pub fn run_loadflow_from(
    feeder: &Feeder,
    setpoints: &[Complex64],
    options: &LoadFlowOptions,
    v_start: &[f64],
) -> Result<LoadFlowResult, LoadFlowError> {
    let n = feeder.n();
    if setpoints.len() != n {
        return Err(LoadFlowError::SetpointCount {
            expected: n,
            found: setpoints.len(),
        });
    }
    let mut v = v_start.to_vec();
    v.resize(n + 1, feeder.v0());
    v[0] = feeder.v0();
    run_from(feeder, setpoints, options, v)
}

fn run_from(feeder: &Feeder, s: &[Complex64], opts: &LoadFlowOptions, mut v: Vec<f64>) -> Result<LoadFlowResult, LoadFlowError> {
    let n = feeder.n();
    let b = |l: usize| if opts.shunts { feeder.line(l).b } else { 0.0 };
    let mut f = vec![0.0; n + 1];
    let mut st = vec![Complex64::new(0.0, 0.0); n + 1];
    let mut sb = vec![Complex64::new(0.0, 0.0); n + 1];
    let mut converged = false;
    let mut collapsed = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for &l in feeder.order().iter().rev() {
            let mut acc = s[l - 1];
            for &c in feeder.children(l) {
                acc += st[c];
            }
            sb[l] = acc;
            let bl = b(l);
            let series = acc - Complex64::new(0.0, v[l] * bl);
            let fl = series.norm_sqr() / v[l];
            delta = delta.max((fl - f[l]).abs());
            f[l] = fl;
            let k = feeder.up(l);
            st[l] = acc + feeder.line(l).z * fl - Complex64::new(0.0, (v[k] + v[l]) * bl);
        }
        for &l in feeder.order() {
            let k = feeder.up(l);
            let z = feeder.line(l).z;
            let w = st[l] + Complex64::new(0.0, v[k] * b(l));
            let vl = v[k] - 2.0 * (z.conj() * w).re + z.norm_sqr() * f[l];
            delta = delta.max((vl - v[l]).abs());
            v[l] = vl;
            if vl <= 0.0 {
                collapsed = true;
            }
        }
        if collapsed || !delta.is_finite() {
            break;
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let mut result = LoadFlowResult {
        v,
        f,
        st,
        sb,
        converged: converged && !collapsed,
        collapsed,
        iterations,
        max_residual: 0.0,
    };
    result.max_residual = equation_residual(feeder, s, &result, opts.shunts);
    Ok(result)
}

/// Largest residual of the flow balances, voltage drop and current definition
/// (the last one multiplied through by `v_up`).
pub fn equation_residual(feeder: &Feeder, s: &[Complex64], r: &LoadFlowResult, shunts: bool) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 1..=feeder.n() {
        let k = feeder.up(l);
        let line = feeder.line(l);
        let b = if shunts { line.b } else { 0.0 };
        let mut bus = s[l - 1];
        for &c in feeder.children(l) {
            bus += r.st[c];
        }
        worst = worst.max((r.sb[l] - bus).norm());
        let top = r.sb[l] + line.z * r.f[l] - Complex64::new(0.0, (r.v[k] + r.v[l]) * b);
        worst = worst.max((r.st[l] - top).norm());
        let w = r.st[l] + Complex64::new(0.0, r.v[k] * b);
        let drop = r.v[k] - 2.0 * (line.z.conj() * w).re + line.z.norm_sqr() * r.f[l];
        worst = worst.max((r.v[l] - drop).abs());
        worst = worst.max((r.v[k] * r.f[l] - w.norm_sqr()).abs());
    }
    if worst.is_finite() {
        worst
    } else {
        f64::INFINITY
    }
}

/// Bound violations in nominal (square-rooted) units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationReport {
    pub voltage: f64,
    pub current: f64,
    pub worst_bus: Option<usize>,
    pub worst_line: Option<usize>,
    /// Load flow converged and both violations are below the threshold.
    pub usable: bool,
}

/// Voltage violation `max(0, √v - √v^max)` and current violation
/// `max(0, √i - √I^max)` where `i` is the larger of the two bounded current
/// proxies `|S^b|²/v_l` and `|S^t|²/v_up` (both equal `f` without shunts).
pub fn violations(result: &LoadFlowResult, feeder: &Feeder, current_bounds: bool, threshold: f64) -> ViolationReport {
    let mut rep = ViolationReport {
        voltage: 0.0,
        current: 0.0,
        worst_bus: None,
        worst_line: None,
        usable: false,
    };
    for l in 1..=feeder.n() {
        let over = result.v[l].max(0.0).sqrt() - feeder.bus(l).vmax.sqrt();
        if over > rep.voltage {
            rep.voltage = over;
            rep.worst_bus = Some(l);
        }
        if !current_bounds {
            continue;
        }
        if let Some(imax) = feeder.line(l).imax {
            let k = feeder.up(l);
            let i_b = result.sb[l].norm_sqr() / result.v[l];
            let i_t = result.st[l].norm_sqr() / result.v[k];
            let over = i_b.max(i_t).max(0.0).sqrt() - imax.sqrt();
            if over > rep.current {
                rep.current = over;
                rep.worst_line = Some(l);
            }
        }
    }
    rep.usable = result.converged && rep.voltage < threshold && rep.current < threshold;
    rep
}
