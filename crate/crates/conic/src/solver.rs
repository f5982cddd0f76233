//! Primal-dual interior-point method on the homogeneous self-dual embedding.
//!
//! The standard form `min c'x s.t. Ax = b, x in K` is first rewritten in the
//! inequality form
//!
//! ```text
//! min c'x  s.t.  A x = b,  h - G x = s,  s in K
//! ```
//!
//! where `x` collects the free variables only. A cone variable that appears in
//! exactly one equality row (and nowhere else) is absorbed as a row of `G`;
//! any other cone variable is kept as a free copy tied to its cone slot by an
//! identity row of `G`. Rotated cones are mapped to standard second-order
//! cones by the orthogonal map `(u, v, w) -> ((u+v)/sqrt2, (u-v)/sqrt2, w)`.
//!
//! Each Newton system is reduced to the dense quasi-definite matrix
//! `[G'W^-2 G + dI, A'; A, -dI]`, factored with LDL' and polished with
//! iterative refinement against the unregularized system.

use thiserror::Error;

use crate::cones::{self, ConeBlock, ConeType, Scaling};
use crate::linalg::{Dense, Ldl};
use crate::standard::{dot, Block, SparseRows, StandardForm};

const STATIC_REG: f64 = 1e-9;
const DYNAMIC_REG: f64 = 1e-13;
const STEP_FRACTION: f64 = 0.99;
const REFINE_STEPS: usize = 6;
/// A stalled run whose best iterate is within this factor of every tolerance
/// is reported [`Status::NearOptimal`]. Degenerate optimal faces make the last
/// digits unreachable in double precision.
const REDUCED_ACCURACY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    /// Stalled within `REDUCED_ACCURACY` times every tolerance.
    NearOptimal,
    /// `y`, `z` hold a Farkas certificate: `A'y + z = 0`, `z in K*`, `b'y = 1`.
    Infeasible,
    /// `x` holds an improving ray: `Ax = 0`, `x in K`, `c'x = -1`.
    Unbounded,
    NumericalLimit,
}

impl Status {
    /// Optimal, possibly at reduced accuracy.
    pub fn has_solution(&self) -> bool {
        matches!(self, Status::Optimal | Status::NearOptimal)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::NearOptimal => "near-optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalLimit => "numerical-limit",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Primal-dual pair for a [`StandardForm`].
///
/// On `Optimal`, `x` is primal feasible, `z = c - A'y` lies in the dual cone
/// (zero on free blocks) and the residual fields are measured in the standard
/// form with infinity norms relative to `1 + ||b||` and `1 + ||c||`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
}

pub fn solve(sf: &StandardForm, settings: &Settings) -> Result<ConicSolution, SolveError> {
    sf.check().map_err(SolveError::InvalidProblem)?;
    if !(settings.feas_tol > 0.0 && settings.gap_tol > 0.0) {
        return Err(SolveError::InvalidSettings("tolerances must be positive".into()));
    }
    let split = Split::new(sf);
    let pre = Presolved::new(&split.prob, settings.feas_tol);
    let raw = match &pre.outcome {
        PresolveOutcome::Infeasible { multipliers } => {
            // the conflicting rows plus compensating singleton multipliers
            // form the certificate
            let r = IpmResult {
                status: Status::Infeasible,
                x: vec![0.0; pre.prob.n],
                y: vec![0.0; pre.prob.a.len()],
                z: vec![0.0; pre.prob.m()],
                s: vec![0.0; pre.prob.m()],
                tau: 1.0,
                iterations: 0,
            };
            pre.restore(&split.prob, r, multipliers)
        }
        PresolveOutcome::Reduced => {
            let r = ipm(&pre.prob, settings);
            pre.restore(&split.prob, r, &[])
        }
    };
    let mut sol = split.restore(sf, raw);
    if matches!(sol.status, Status::Optimal | Status::NumericalLimit) {
        let within = |k: f64| {
            sol.primal_residual <= k * settings.feas_tol
                && sol.dual_residual <= k * settings.feas_tol
                && sol.relative_gap <= k * settings.gap_tol
        };
        sol.status = if within(1.0) {
            Status::Optimal
        } else if within(REDUCED_ACCURACY) && sol.iterations > 0 {
            Status::NearOptimal
        } else {
            Status::NumericalLimit
        };
    }
    Ok(sol)
}

/// Inequality-form problem over free variables.
#[derive(Debug, Clone)]
struct Problem {
    n: usize,
    c: Vec<f64>,
    a: SparseRows,
    b: Vec<f64>,
    g: SparseRows,
    h: Vec<f64>,
    cones: Vec<ConeBlock>,
}

impl Problem {
    fn m(&self) -> usize {
        self.h.len()
    }
}

fn mat_vec(rows: &SparseRows, x: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
        .collect()
}

fn mat_t_vec(rows: &SparseRows, y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (r, yi) in rows.iter().zip(y) {
        if *yi != 0.0 {
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
    }
    out
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// How a standard-form cone variable is represented internally.
#[derive(Debug, Clone, Copy)]
enum ConeVar {
    /// Defined by standard row `row` with coefficient `coef`.
    Absorbed { row: usize, coef: f64 },
    /// Kept as internal free variable `var`.
    Lifted { var: usize },
}

struct Split {
    prob: Problem,
    /// internal free variable for each standard variable that has one
    free_of: Vec<Option<usize>>,
    /// per standard cone variable, in cone-slot order
    cone_vars: Vec<(usize, ConeVar)>,
    /// internal equality row for each standard row not absorbed
    eq_of: Vec<Option<usize>>,
    /// (start slot, dim) of each rotated block
    rotated: Vec<(usize, usize)>,
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn rotate_pair(v: &mut [f64], start: usize) {
    let (a, b) = (v[start], v[start + 1]);
    v[start] = (a + b) * INV_SQRT2;
    v[start + 1] = (a - b) * INV_SQRT2;
}

impl Split {
    fn new(sf: &StandardForm) -> Self {
        let nv = sf.num_vars();
        let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for (i, row) in sf.a.iter().enumerate() {
            for &(j, v) in row {
                if v != 0.0 {
                    col_rows[j].push((i, v));
                }
            }
        }
        let mut is_cone = vec![false; nv];
        for (blk, r) in sf.block_ranges() {
            if !matches!(blk, Block::Free(_)) {
                r.for_each(|j| is_cone[j] = true);
            }
        }
        let cone_count_in_row: Vec<usize> = sf
            .a
            .iter()
            .map(|row| row.iter().filter(|&&(j, v)| v != 0.0 && is_cone[j]).count())
            .collect();

        let mut free_of = vec![None; nv];
        let mut n = 0;
        let mut cone_vars = Vec::new();
        let mut absorbed_row = vec![false; sf.num_rows()];
        for j in 0..nv {
            if !is_cone[j] {
                free_of[j] = Some(n);
                n += 1;
                continue;
            }
            let cv = match col_rows[j].as_slice() {
                &[(row, coef)] if sf.c[j] == 0.0 && cone_count_in_row[row] == 1 => {
                    absorbed_row[row] = true;
                    ConeVar::Absorbed { row, coef }
                }
                _ => {
                    free_of[j] = Some(n);
                    n += 1;
                    ConeVar::Lifted { var: n - 1 }
                }
            };
            cone_vars.push((j, cv));
        }

        let mut c = vec![0.0; n];
        for j in 0..nv {
            if let Some(k) = free_of[j] {
                c[k] = sf.c[j];
            }
        }
        let mut eq_of = vec![None; sf.num_rows()];
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, row) in sf.a.iter().enumerate() {
            if absorbed_row[i] {
                continue;
            }
            eq_of[i] = Some(a.len());
            a.push(
                row.iter()
                    .filter(|t| t.1 != 0.0)
                    .map(|&(j, v)| (free_of[j].expect("non-absorbed row holds only free columns"), v))
                    .collect(),
            );
            b.push(sf.b[i]);
        }

        let mut g: SparseRows = Vec::with_capacity(cone_vars.len());
        let mut h = Vec::with_capacity(cone_vars.len());
        for &(j, cv) in &cone_vars {
            match cv {
                ConeVar::Absorbed { row, coef } => {
                    // coef s_j + a'x = b  ->  s_j = b/coef - (a/coef)'x
                    g.push(
                        sf.a[row]
                            .iter()
                            .filter(|t| t.0 != j && t.1 != 0.0)
                            .map(|&(k, v)| (free_of[k].unwrap(), v / coef))
                            .collect(),
                    );
                    h.push(sf.b[row] / coef);
                }
                ConeVar::Lifted { var } => {
                    g.push(vec![(var, -1.0)]);
                    h.push(0.0);
                }
            }
        }

        let mut cones_out = Vec::new();
        let mut rotated = Vec::new();
        let mut slot = 0;
        for (blk, _) in sf.block_ranges() {
            match blk {
                Block::Free(_) => {}
                Block::Nonneg(d) => {
                    cones_out.push(ConeBlock {
                        kind: ConeType::Nonneg,
                        start: slot,
                        dim: d,
                    });
                    slot += d;
                }
                Block::Soc(d) => {
                    cones_out.push(ConeBlock {
                        kind: if d == 1 { ConeType::Nonneg } else { ConeType::Soc },
                        start: slot,
                        dim: d,
                    });
                    slot += d;
                }
                Block::RotatedSoc(d) => {
                    // rotate the first two rows of the block
                    let (r0, r1) = (g[slot].clone(), g[slot + 1].clone());
                    g[slot] = combine(&r0, &r1, INV_SQRT2, INV_SQRT2);
                    g[slot + 1] = combine(&r0, &r1, INV_SQRT2, -INV_SQRT2);
                    rotate_pair(&mut h, slot);
                    rotated.push((slot, d));
                    cones_out.push(ConeBlock {
                        kind: ConeType::Soc,
                        start: slot,
                        dim: d,
                    });
                    slot += d;
                }
            }
        }
        Split {
            prob: Problem {
                n,
                c,
                a,
                b,
                g,
                h,
                cones: cones_out,
            },
            free_of,
            cone_vars,
            eq_of,
            rotated,
        }
    }

    fn restore(&self, sf: &StandardForm, r: IpmResult) -> ConicSolution {
        let nv = sf.num_vars();
        let mut s = r.s.clone();
        let mut z = r.z.clone();
        for &(start, _) in &self.rotated {
            rotate_pair(&mut s, start);
            rotate_pair(&mut z, start);
        }
        let mut x = vec![0.0; nv];
        for j in 0..nv {
            if let Some(k) = self.free_of[j] {
                x[j] = r.x[k];
            }
        }
        let mut z_std = vec![0.0; nv];
        let mut y_std = vec![0.0; sf.num_rows()];
        for (i, e) in self.eq_of.iter().enumerate() {
            if let Some(k) = e {
                y_std[i] = -r.y[*k];
            }
        }
        for (slot, &(j, cv)) in self.cone_vars.iter().enumerate() {
            z_std[j] = z[slot];
            match cv {
                ConeVar::Absorbed { row, coef } => {
                    x[j] = s[slot];
                    y_std[row] = -z[slot] / coef;
                }
                ConeVar::Lifted { .. } => {}
            }
        }

        let (x, y_std, z_std) = match r.status {
            Status::Optimal | Status::NearOptimal | Status::NumericalLimit => {
                let t = r.tau;
                (
                    x.iter().map(|v| v / t).collect::<Vec<_>>(),
                    y_std.iter().map(|v| v / t).collect::<Vec<_>>(),
                    z_std.iter().map(|v| v / t).collect::<Vec<_>>(),
                )
            }
            Status::Infeasible => {
                let by = dot(&sf.b, &y_std);
                let scale = if by != 0.0 { 1.0 / by } else { 1.0 };
                (
                    vec![0.0; nv],
                    y_std.iter().map(|v| v * scale).collect(),
                    z_std.iter().map(|v| v * scale).collect(),
                )
            }
            Status::Unbounded => {
                let cx = dot(&sf.c, &x);
                let scale = if cx != 0.0 { -1.0 / cx } else { 1.0 };
                (x.iter().map(|v| v * scale).collect(), vec![0.0; sf.num_rows()], vec![0.0; nv])
            }
        };

        let b_norm = 1.0 + inf_norm(&sf.b);
        let c_norm = 1.0 + inf_norm(&sf.c);
        let aty = sf.at_times(&y_std);
        let dual_res: Vec<f64> = (0..nv).map(|j| sf.c[j] - aty[j] - z_std[j]).collect();
        let objective = sf.objective(&x);
        let dual_objective = dot(&sf.b, &y_std) + sf.objective_offset;
        ConicSolution {
            status: r.status,
            primal_residual: sf.equality_residual(&x) / b_norm,
            dual_residual: inf_norm(&dual_res) / c_norm,
            relative_gap: (objective - dual_objective).abs() / (1.0 + objective.abs()),
            objective,
            dual_objective,
            x,
            y: y_std,
            z: z_std,
            iterations: r.iterations,
        }
    }
}

fn combine(r0: &[(usize, f64)], r1: &[(usize, f64)], a: f64, b: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = r0.iter().map(|&(j, v)| (j, a * v)).collect();
    out.extend(r1.iter().map(|&(j, v)| (j, b * v)));
    out.sort_by_key(|t| t.0);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
    for (j, v) in out {
        match merged.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => merged.push((j, v)),
        }
    }
    merged.retain(|t| t.1 != 0.0);
    merged
}

enum PresolveOutcome {
    Reduced,
    /// multipliers on original rows proving `0 = nonzero`
    Infeasible { multipliers: Vec<(usize, f64)> },
}

#[derive(Debug, Clone, Copy)]
enum RowFate {
    Active(usize),
    /// fixes `var`; order of fixing
    Singleton { var: usize, coef: f64, order: usize },
    Redundant,
}

/// Removes zero and duplicate equality rows and fixes variables pinned by
/// singleton rows.
struct Presolved {
    prob: Problem,
    outcome: PresolveOutcome,
    fixed: Vec<Option<f64>>,
    /// reduced index of each non-fixed variable
    var_map: Vec<Option<usize>>,
    fate: Vec<RowFate>,
}

impl Presolved {
    fn new(p: &Problem, tol: f64) -> Self {
        let mut fixed: Vec<Option<f64>> = vec![None; p.n];
        let mut fate: Vec<Option<RowFate>> = vec![None; p.a.len()];
        let mut order = 0;
        let mut outcome = PresolveOutcome::Reduced;
        'outer: loop {
            let mut changed = false;
            for (i, row) in p.a.iter().enumerate() {
                if fate[i].is_some() {
                    continue;
                }
                let mut rhs = p.b[i];
                let mut live = Vec::new();
                for &(j, v) in row {
                    match fixed[j] {
                        Some(val) => rhs -= v * val,
                        None => live.push((j, v)),
                    }
                }
                match live.as_slice() {
                    [] => {
                        if rhs.abs() <= tol * (1.0 + p.b[i].abs()) {
                            fate[i] = Some(RowFate::Redundant);
                        } else {
                            outcome = PresolveOutcome::Infeasible {
                                multipliers: vec![(i, 1.0 / rhs)],
                            };
                            fate[i] = Some(RowFate::Redundant);
                            break 'outer;
                        }
                    }
                    &[(j, v)] => {
                        fixed[j] = Some(rhs / v);
                        fate[i] = Some(RowFate::Singleton {
                            var: j,
                            coef: v,
                            order,
                        });
                        order += 1;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }

        // rows parallel to an earlier row are redundant or contradictory
        let mut seen: std::collections::HashMap<Vec<(usize, u64)>, (usize, f64, f64)> =
            std::collections::HashMap::new();
        if matches!(outcome, PresolveOutcome::Reduced) {
            for (i, row) in p.a.iter().enumerate() {
                if fate[i].is_some() {
                    continue;
                }
                let mut live: Vec<(usize, f64)> =
                    row.iter().filter(|t| fixed[t.0].is_none()).copied().collect();
                live.sort_by_key(|t| t.0);
                let lead = live[0].1;
                let key: Vec<(usize, u64)> = live.iter().map(|&(j, v)| (j, (v / lead).to_bits())).collect();
                let rhs: f64 = p.b[i]
                    - row
                        .iter()
                        .filter_map(|&(j, v)| fixed[j].map(|x| v * x))
                        .sum::<f64>();
                match seen.get(&key) {
                    Some(&(k, k_lead, k_rhs)) => {
                        // row i = ratio * row k
                        let ratio = lead / k_lead;
                        let excess = rhs - ratio * k_rhs;
                        if excess.abs() <= tol * (1.0 + rhs.abs()) {
                            fate[i] = Some(RowFate::Redundant);
                        } else {
                            fate[i] = Some(RowFate::Redundant);
                            outcome = PresolveOutcome::Infeasible {
                                multipliers: vec![(i, 1.0 / excess), (k, -ratio / excess)],
                            };
                            break;
                        }
                    }
                    None => {
                        seen.insert(key, (i, lead, rhs));
                    }
                }
            }
        }

        // variables with no remaining coupling and zero cost are fixed at zero
        let mut used = vec![false; p.n];
        for (i, row) in p.a.iter().enumerate() {
            if fate[i].is_none() {
                row.iter().for_each(|t| used[t.0] = true);
            }
        }
        for row in &p.g {
            row.iter().for_each(|t| used[t.0] = true);
        }
        for j in 0..p.n {
            if fixed[j].is_none() && !used[j] && p.c[j] == 0.0 {
                fixed[j] = Some(0.0);
            }
        }

        let mut var_map = vec![None; p.n];
        let mut n = 0;
        for j in 0..p.n {
            if fixed[j].is_none() {
                var_map[j] = Some(n);
                n += 1;
            }
        }
        let c: Vec<f64> = (0..p.n).filter(|&j| fixed[j].is_none()).map(|j| p.c[j]).collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut fate_out = Vec::with_capacity(p.a.len());
        for (i, row) in p.a.iter().enumerate() {
            match fate[i] {
                Some(f) => fate_out.push(f),
                None => {
                    let mut rhs = p.b[i];
                    let mut r = Vec::new();
                    for &(j, v) in row {
                        match fixed[j] {
                            Some(x) => rhs -= v * x,
                            None => r.push((var_map[j].unwrap(), v)),
                        }
                    }
                    fate_out.push(RowFate::Active(a.len()));
                    a.push(r);
                    b.push(rhs);
                }
            }
        }
        let mut g = Vec::with_capacity(p.g.len());
        let mut h = Vec::with_capacity(p.h.len());
        for (row, &hi) in p.g.iter().zip(&p.h) {
            let mut rhs = hi;
            let mut r = Vec::new();
            for &(j, v) in row {
                match fixed[j] {
                    Some(x) => rhs -= v * x,
                    None => r.push((var_map[j].unwrap(), v)),
                }
            }
            g.push(r);
            h.push(rhs);
        }
        Presolved {
            prob: Problem {
                n,
                c,
                a,
                b,
                g,
                h,
                cones: p.cones.clone(),
            },
            outcome,
            fixed,
            var_map,
            fate: fate_out,
        }
    }

    fn restore(&self, p: &Problem, r: IpmResult, conflict: &[(usize, f64)]) -> IpmResult {
        let scale = match r.status {
            Status::Optimal | Status::NumericalLimit => r.tau,
            // rays and certificates are homogeneous
            _ => 0.0,
        };
        let mut x = vec![0.0; p.n];
        for j in 0..p.n {
            x[j] = match (self.fixed[j], self.var_map[j]) {
                (Some(v), _) => v * scale,
                (None, Some(k)) => r.x[k],
                _ => unreachable!(),
            };
        }
        let mut y = vec![0.0; p.a.len()];
        for (i, f) in self.fate.iter().enumerate() {
            if let RowFate::Active(k) = f {
                y[i] = r.y[*k];
            }
        }
        for &(row, v) in conflict {
            y[row] = v;
        }
        // singleton duals from the stationarity of their column, latest first
        let mut singles: Vec<(usize, usize, usize, f64)> = self
            .fate
            .iter()
            .enumerate()
            .filter_map(|(i, f)| match *f {
                RowFate::Singleton { var, coef, order } => Some((order, i, var, coef)),
                _ => None,
            })
            .collect();
        singles.sort_by(|a, b| b.0.cmp(&a.0));
        if !singles.is_empty() {
            let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.n];
            for (i, row) in p.a.iter().enumerate() {
                for &(j, v) in row {
                    col_rows[j].push((i, v));
                }
            }
            let gtz = mat_t_vec(&p.g, &r.z, p.n);
            let c_scale = if matches!(r.status, Status::Optimal | Status::NumericalLimit) {
                r.tau
            } else {
                0.0
            };
            for (_, i, var, coef) in singles {
                let others: f64 = col_rows[var]
                    .iter()
                    .filter(|t| t.0 != i)
                    .map(|&(k, v)| v * y[k])
                    .sum();
                y[i] = -(c_scale * p.c[var] + others + gtz[var]) / coef;
            }
        }
        IpmResult {
            x,
            y,
            ..r
        }
    }
}

#[derive(Debug, Clone)]
struct IpmResult {
    status: Status,
    /// homogeneous iterates; divide by `tau` for Optimal
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    iterations: usize,
}

/// Newton system for one scaling, solved through the normal equations.
///
/// With `H = G'W^-2 G`, the reduced system `[H A'; A 0]` is rewritten as
/// `[H + A'A, A'; A, 0]`, whose leading block is positive definite whenever
/// `[A; G]` has full column rank. That block is factored once, then the Schur
/// complement `A (H + A'A)^-1 A'` is formed and factored.
struct Kkt<'a> {
    p: &'a Problem,
    w: &'a Scaling,
    k_factor: Ldl,
    /// columns `(H + A'A)^-1 a_i`, one per equality row
    k_inv_at: Vec<Vec<f64>>,
    s_factor: Ldl,
}

impl<'a> Kkt<'a> {
    fn new(p: &'a Problem, w: &'a Scaling) -> Option<Self> {
        let n = p.n;
        let mut h = Dense::zeros(n);
        for (k, cone) in p.cones.iter().enumerate() {
            match cone.kind {
                ConeType::Nonneg => {
                    for i in cone.range() {
                        let row = &p.g[i];
                        let unit = w.apply_inv_block(k, &one_hot(cone.dim, i - cone.start));
                        let wi = unit[i - cone.start];
                        let f = wi * wi;
                        for &(a, va) in row {
                            for &(b, vb) in row {
                                h.add(a, b, f * va * vb);
                            }
                        }
                    }
                }
                ConeType::Soc => {
                    let mut cols: Vec<usize> = cone
                        .range()
                        .flat_map(|i| p.g[i].iter().map(|t| t.0))
                        .collect();
                    cols.sort_unstable();
                    cols.dedup();
                    let d = cone.dim;
                    // scaled columns W^{-1} G_B[:, col]
                    let mut scaled: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
                    for &col in &cols {
                        let mut v = vec![0.0; d];
                        for (r, i) in cone.range().enumerate() {
                            for t in p.g[i].iter().filter(|t| t.0 == col) {
                                v[r] += t.1;
                            }
                        }
                        scaled.push(w.apply_inv_block(k, &v));
                    }
                    for (ia, &a) in cols.iter().enumerate() {
                        for (ib, &b) in cols.iter().enumerate() {
                            h.add(a, b, cones::dot(&scaled[ia], &scaled[ib]));
                        }
                    }
                }
            }
        }
        for row in &p.a {
            for &(a, va) in row {
                for &(b, vb) in row {
                    h.add(a, b, va * vb);
                }
            }
        }
        let k_factor = Ldl::factor(&h, n, DYNAMIC_REG)?;
        let np = p.a.len();
        let k_inv_at: Vec<Vec<f64>> = p
            .a
            .iter()
            .map(|row| {
                let mut col = vec![0.0; n];
                for &(j, v) in row {
                    col[j] += v;
                }
                k_factor.solve(&col)
            })
            .collect();
        let mut schur = Dense::zeros(np);
        let mut diag_max: f64 = 0.0;
        for (i, row) in p.a.iter().enumerate() {
            for k in 0..np {
                let v: f64 = row.iter().map(|&(j, a)| a * k_inv_at[k][j]).sum();
                schur.add(i, k, v);
            }
            diag_max = diag_max.max(schur.at(i, i).abs());
        }
        for i in 0..np {
            schur.add(i, i, STATIC_REG * (1.0 + diag_max) * 1e-3);
        }
        let s_factor = Ldl::factor(&schur, np, DYNAMIC_REG * (1.0 + diag_max))?;
        Some(Self {
            p,
            w,
            k_factor,
            k_inv_at,
            s_factor,
        })
    }

    /// Solves `[0 A' G'; A 0 0; G 0 -W'W] (dx, dy, dz) = (r1, r2, r3)`,
    /// refining against the full system.
    fn solve(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let cones = &p.cones;
        let (mut dx, mut dy, mut dz) = self.solve_reduced(r1, r2, r3);
        let scale = 1.0 + inf_norm(r1).max(inf_norm(r2)).max(inf_norm(r3));
        let residual = |dx: &[f64], dy: &[f64], dz: &[f64]| {
            let aty = mat_t_vec(&p.a, dy, p.n);
            let gtz = mat_t_vec(&p.g, dz, p.n);
            let e1: Vec<f64> = (0..p.n).map(|j| r1[j] - aty[j] - gtz[j]).collect();
            let ax = mat_vec(&p.a, dx);
            let e2: Vec<f64> = (0..r2.len()).map(|i| r2[i] - ax[i]).collect();
            let gx = mat_vec(&p.g, dx);
            let w2z = self.w.apply(cones, &self.w.apply(cones, dz));
            let e3: Vec<f64> = (0..r3.len()).map(|i| r3[i] - gx[i] + w2z[i]).collect();
            let err = inf_norm(&e1).max(inf_norm(&e2)).max(inf_norm(&e3));
            (e1, e2, e3, err)
        };
        let (mut e1, mut e2, mut e3, mut err) = residual(&dx, &dy, &dz);
        for _ in 0..REFINE_STEPS {
            if !(err > 1e-15 * scale) {
                break;
            }
            let (cx, cy, cz) = self.solve_reduced(&e1, &e2, &e3);
            let nx: Vec<f64> = dx.iter().zip(&cx).map(|(a, b)| a + b).collect();
            let ny: Vec<f64> = dy.iter().zip(&cy).map(|(a, b)| a + b).collect();
            let nz: Vec<f64> = dz.iter().zip(&cz).map(|(a, b)| a + b).collect();
            let next = residual(&nx, &ny, &nz);
            // refinement only helps while the residual shrinks
            if !(next.3 < err) {
                break;
            }
            (dx, dy, dz) = (nx, ny, nz);
            (e1, e2, e3, err) = next;
        }
        (dx, dy, dz)
    }

    fn solve_reduced(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let cones = &p.cones;
        let n = p.n;
        let w2r3 = self.w.apply_inv(cones, &self.w.apply_inv(cones, r3));
        let gt = mat_t_vec(&p.g, &w2r3, n);
        let atr2 = mat_t_vec(&p.a, r2, n);
        let rhs: Vec<f64> = (0..n).map(|j| r1[j] + gt[j] + atr2[j]).collect();
        let t = self.k_factor.solve(&rhs);
        let at_t = mat_vec(&p.a, &t);
        let sr: Vec<f64> = at_t.iter().zip(r2).map(|(a, b)| a - b).collect();
        let dy = self.s_factor.solve(&sr);
        let mut dx = t;
        for (col, yi) in self.k_inv_at.iter().zip(&dy) {
            if *yi != 0.0 {
                dx.iter_mut().zip(col).for_each(|(x, c)| *x -= c * yi);
            }
        }
        let gdx = mat_vec(&p.g, &dx);
        let diff: Vec<f64> = gdx.iter().zip(r3).map(|(a, b)| a - b).collect();
        let dz = self.w.apply_inv(cones, &self.w.apply_inv(cones, &diff));
        (dx, dy, dz)
    }
}

fn one_hot(d: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[k] = 1.0;
    v
}

fn ipm(p: &Problem, st: &Settings) -> IpmResult {
    let r = ipm_run(p, st);
    if r.status != Status::NumericalLimit || p.m() == 0 {
        return r;
    }
    match phase_one_certificate(p, st) {
        Some((y, z)) => IpmResult {
            status: Status::Infeasible,
            x: vec![0.0; p.n],
            y,
            z,
            s: vec![0.0; p.m()],
            tau: 1.0,
            iterations: r.iterations,
        },
        None => r,
    }
}

/// Solves `min t s.t. Ax = b, h - Gx + t e in K`, which is strictly feasible.
/// A positive optimum `t*` makes its dual `(y, z)` a Farkas certificate of the
/// original problem with `b'y + h'z = -t*`. Homogeneous iterates of strongly
/// infeasible problems can lose accuracy as `tau` vanishes; this bounded
/// problem does not.
fn phase_one_certificate(p: &Problem, st: &Settings) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = p.n;
    let e = cones::identity(&p.cones, p.m());
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let g = p
        .g
        .iter()
        .zip(&e)
        .map(|(row, &ei)| {
            let mut row = row.clone();
            if ei != 0.0 {
                row.push((n, -ei));
            }
            row
        })
        .collect();
    let aux = Problem {
        n: n + 1,
        c,
        a: p.a.clone(),
        b: p.b.clone(),
        g,
        h: p.h.clone(),
        cones: p.cones.clone(),
    };
    // the certificate is checked below, so the run only needs a good iterate
    let tight = Settings {
        feas_tol: 1e-2 * st.feas_tol,
        gap_tol: 1e-2 * st.gap_tol,
        verbose: false,
        ..*st
    };
    let r = ipm_run(&aux, &tight);
    let (y, z) = match r.status {
        Status::Optimal | Status::NumericalLimit if r.tau > 0.0 => (r.y, r.z),
        Status::Infeasible => return Some((r.y, r.z)),
        _ => return None,
    };
    let t = -(dot(&p.b, &y) + dot(&p.h, &z)) / r.tau;
    let aty = mat_t_vec(&p.a, &y, n);
    let gtz = mat_t_vec(&p.g, &z, n);
    let res = aty.iter().zip(&gtz).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max) / r.tau;
    if st.verbose {
        eprintln!("phase one: t {t:e}, certificate residual {res:e}");
    }
    (t > 0.0 && res <= REDUCED_ACCURACY * st.feas_tol * t).then_some((y, z))
}

fn ipm_run(p: &Problem, st: &Settings) -> IpmResult {
    let n = p.n;
    let m = p.m();
    let np = p.a.len();
    let cones = &p.cones;
    let deg = cones::degree(cones) as f64;
    let e = cones::identity(cones, m);

    let fail = |iterations| IpmResult {
        status: Status::NumericalLimit,
        x: vec![0.0; n],
        y: vec![0.0; np],
        z: vec![0.0; m],
        s: vec![0.0; m],
        tau: 1.0,
        iterations,
    };

    // starting point from two least-squares problems with W = I
    let w0 = Scaling::identity(cones, m);
    let Some(k0) = Kkt::new(p, &w0) else {
        return fail(0);
    };
    let (mut x, _, zp) = k0.solve(&vec![0.0; n], &p.b, &p.h);
    let mut s: Vec<f64> = zp.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = p.c.iter().map(|v| -v).collect();
    let (_, mut y, mut z) = k0.solve(&neg_c, &vec![0.0; np], &vec![0.0; m]);
    let shift_s = cones::interior_shift(cones, &s);
    if m > 0 && shift_s >= -1e-8 * (1.0 + inf_norm(&s)) {
        s.iter_mut().zip(&e).for_each(|(v, ei)| *v += (1.0 + shift_s) * ei);
    }
    let shift_z = cones::interior_shift(cones, &z);
    if m > 0 && shift_z >= -1e-8 * (1.0 + inf_norm(&z)) {
        z.iter_mut().zip(&e).for_each(|(v, ei)| *v += (1.0 + shift_z) * ei);
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let b_norm = 1.0 + inf_norm(&p.b);
    let h_norm = 1.0 + inf_norm(&p.h);
    let c_norm = 1.0 + inf_norm(&p.c);
    let mut stalls = 0;
    // least-bad iterate, returned when the method gives up
    let mut best: Option<(f64, IpmResult)> = None;
    let limit = |best: Option<(f64, IpmResult)>, iter: usize| match best {
        Some((_, r)) => IpmResult {
            iterations: iter,
            ..r
        },
        None => fail(iter),
    };

    for iter in 0..=st.max_iter {
        let aty = mat_t_vec(&p.a, &y, n);
        let gtz = mat_t_vec(&p.g, &z, n);
        let rx: Vec<f64> = (0..n).map(|j| aty[j] + gtz[j] + p.c[j] * tau).collect();
        let ax = mat_vec(&p.a, &x);
        let ry: Vec<f64> = (0..np).map(|i| ax[i] - p.b[i] * tau).collect();
        let gx = mat_vec(&p.g, &x);
        let rz: Vec<f64> = (0..m).map(|i| s[i] + gx[i] - p.h[i] * tau).collect();
        let cx = dot(&p.c, &x);
        let by = dot(&p.b, &y);
        let hz = dot(&p.h, &z);
        let rt = kappa + cx + by + hz;
        let sz = dot(&s, &z);

        let pcost = cx / tau;
        let dcost = -(by + hz) / tau;
        let pres = (inf_norm(&ry) / b_norm).max(inf_norm(&rz) / h_norm) / tau;
        let dres = inf_norm(&rx) / c_norm / tau;
        let gap = (pcost - dcost).abs().max(sz / (tau * tau)) / (1.0 + pcost.abs());
        if st.verbose {
            eprintln!(
                "{iter:3} pcost {pcost:+.8e} dcost {dcost:+.8e} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} tau {tau:.2e} kappa {kappa:.2e}"
            );
        }
        if cfg!(debug_assertions) && pres <= st.feas_tol && dres <= st.feas_tol {
            // residuals perturb weak duality by at most their pairing with the iterates
            let l1 = |v: &[f64]| v.iter().map(|t| t.abs()).sum::<f64>();
            let slack = st.gap_tol * (1.0 + pcost.abs())
                + (dres * c_norm * l1(&x) + pres * (b_norm * l1(&y) + h_norm * l1(&z))) / tau;
            assert!(pcost >= dcost - slack, "weak duality violated at a feasible iterate: {pcost} < {dcost}");
        }
        let score = pres.max(dres).max(gap);
        if score.is_finite() && best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((
                score,
                IpmResult {
                    status: Status::NumericalLimit,
                    x: x.clone(),
                    y: y.clone(),
                    z: z.clone(),
                    s: s.clone(),
                    tau,
                    iterations: iter,
                },
            ));
        }
        if pres <= st.feas_tol && dres <= st.feas_tol && gap <= st.gap_tol {
            return IpmResult {
                status: Status::Optimal,
                x,
                y,
                z,
                s,
                tau,
                iterations: iter,
            };
        }
        if by + hz < 0.0 {
            let scale = -(by + hz);
            let res = aty.iter().zip(&gtz).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max) / scale;
            if res <= st.feas_tol {
                return IpmResult {
                    status: Status::Infeasible,
                    x,
                    y,
                    z,
                    s,
                    tau,
                    iterations: iter,
                };
            }
        }
        if cx < 0.0 {
            let scale = -cx;
            let r1 = inf_norm(&ax) / scale;
            let r2 = gx.iter().zip(&s).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max) / scale;
            if r1.max(r2) <= st.feas_tol {
                return IpmResult {
                    status: Status::Unbounded,
                    x,
                    y,
                    z,
                    s,
                    tau,
                    iterations: iter,
                };
            }
        }
        if iter == st.max_iter {
            break;
        }

        let Some(w) = Scaling::compute(cones, &s, &z) else {
            if st.verbose {
                eprintln!("iterate left the cone interior");
            }
            return limit(best, iter);
        };
        let Some(kkt) = Kkt::new(p, &w) else {
            if st.verbose {
                eprintln!("KKT factorization failed");
            }
            return limit(best, iter);
        };
        let lambda = &w.lambda;
        let (x1, y1, z1) = kkt.solve(&neg_c, &p.b, &p.h);
        let denom = dot(&p.c, &x1) + dot(&p.b, &y1) + dot(&p.h, &z1) - kappa / tau;

        let direction = |eta: f64, ds_target: &[f64], dk_target: f64| {
            let l_div = cones::jordan_divide(cones, lambda, ds_target);
            let w_ldiv = w.apply(cones, &l_div);
            let r1: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let r2: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
            let r3: Vec<f64> = (0..m).map(|i| -eta * rz[i] + w_ldiv[i]).collect();
            let (x2, y2, z2) = kkt.solve(&r1, &r2, &r3);
            let dtau = (-eta * rt + dk_target / tau - dot(&p.c, &x2) - dot(&p.b, &y2) - dot(&p.h, &z2))
                / denom;
            let dx: Vec<f64> = (0..n).map(|j| x2[j] + dtau * x1[j]).collect();
            let dy: Vec<f64> = (0..np).map(|i| y2[i] + dtau * y1[i]).collect();
            let dz: Vec<f64> = (0..m).map(|i| z2[i] + dtau * z1[i]).collect();
            let wdz = w.apply(cones, &dz);
            let tmp: Vec<f64> = (0..m).map(|i| l_div[i] + wdz[i]).collect();
            let ds: Vec<f64> = w.apply(cones, &tmp).iter().map(|v| -v).collect();
            let dkappa = -(dk_target + kappa * dtau) / tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };
        let step_len = |ds: &[f64], dz: &[f64], dtau: f64, dkappa: f64| {
            let ds_s = w.apply_inv(cones, ds);
            let dz_s = w.apply(cones, dz);
            let mut a = cones::max_step(cones, lambda, &ds_s).min(cones::max_step(cones, lambda, &dz_s));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            (a, ds_s, dz_s)
        };

        let mu = (sz + tau * kappa) / (deg + 1.0);
        // affine scaling direction
        let ll = cones::jordan_product(cones, lambda, lambda);
        let (_, _, dz_a, ds_a, dtau_a, dkappa_a) = direction(1.0, &ll, tau * kappa);
        let (alpha_a, ds_as, dz_as) = step_len(&ds_a, &dz_a, dtau_a, dkappa_a);
        let alpha_a = alpha_a.min(1.0);
        let sigma = (1.0 - alpha_a).powi(3).clamp(0.0, 1.0);

        // combined direction with second-order correction
        let corr = cones::jordan_product(cones, &ds_as, &dz_as);
        let ds_target: Vec<f64> = (0..m).map(|i| ll[i] + corr[i] - sigma * mu * e[i]).collect();
        let dk_target = tau * kappa + dkappa_a * dtau_a - sigma * mu;
        let (dx, dy, dz, ds, dtau, dkappa) = direction(1.0 - sigma, &ds_target, dk_target);
        let (alpha_max, _, _) = step_len(&ds, &dz, dtau, dkappa);
        let alpha = (STEP_FRACTION * alpha_max).min(1.0);
        if !alpha.is_finite() || alpha < 1e-10 {
            stalls += 1;
            if stalls >= 3 || !alpha.is_finite() {
                if st.verbose {
                    eprintln!("step length stalled at {alpha:e}");
                }
                return limit(best, iter);
            }
        } else {
            stalls = 0;
        }
        x.iter_mut().zip(&dx).for_each(|(v, d)| *v += alpha * d);
        y.iter_mut().zip(&dy).for_each(|(v, d)| *v += alpha * d);
        z.iter_mut().zip(&dz).for_each(|(v, d)| *v += alpha * d);
        s.iter_mut().zip(&ds).for_each(|(v, d)| *v += alpha * d);
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !(tau > 0.0 && kappa > 0.0) {
            if st.verbose {
                eprintln!("embedding scalars lost positivity {alpha:e} {dtau:e} {dkappa:e} {denom:e}");
            }
            return limit(best, iter);
        }
    }
    limit(best, st.max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConicProgram, LinExpr};
    use crate::standard::to_standard_form;

    fn solve_model(p: &ConicProgram<()>) -> crate::standard::ModelSolution {
        let (sf, map) = to_standard_form(p);
        let sol = solve(&sf, &Settings::default()).unwrap();
        map.recover(p, &sol)
    }

    #[test]
    fn one_dimensional_lp() {
        // min x s.t. x >= 3
        let mut p: ConicProgram<()> = ConicProgram::new();
        let x = p.add_var("x");
        p.objective = LinExpr::var(x);
        let row = p.add_ge(LinExpr::var(x).with_constant(-3.0), ());
        let sol = solve_model(&p);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-7);
        assert!((sol.row_duals[row.0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn soc_projection() {
        // min t s.t. t >= ||(3, 4)||
        let mut p: ConicProgram<()> = ConicProgram::new();
        let t = p.add_var("t");
        p.objective = LinExpr::var(t);
        p.add_soc(vec![LinExpr::var(t), LinExpr::constant(3.0), LinExpr::constant(4.0)], ());
        let sol = solve_model(&p);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 5.0).abs() < 1e-7);
    }

    #[test]
    fn rotated_cone_optimum() {
        // min u s.t. 2 u * 2 >= 3^2  ->  u = 9/4
        let mut p: ConicProgram<()> = ConicProgram::new();
        let u = p.add_var("u");
        p.objective = LinExpr::var(u);
        p.add_rotated_soc(LinExpr::var(u), LinExpr::constant(2.0), vec![LinExpr::constant(3.0)], ());
        let sol = solve_model(&p);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 2.25).abs() < 1e-7);
    }

    #[test]
    fn detects_infeasible_lp() {
        let mut p: ConicProgram<()> = ConicProgram::new();
        let x = p.add_var("x");
        let y = p.add_var("y");
        p.objective = LinExpr::var(x);
        p.add_ge(LinExpr::var(x).with_term(y, 1.0).with_constant(-2.0), ());
        p.add_le(LinExpr::var(x).with_term(y, 1.0).with_constant(-1.0), ());
        let (sf, _) = to_standard_form(&p);
        let sol = solve(&sf, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
    }

    #[test]
    fn detects_unbounded_lp() {
        let mut p: ConicProgram<()> = ConicProgram::new();
        let x = p.add_var("x");
        p.objective = LinExpr::var(x);
        p.add_le(LinExpr::var(x).with_constant(-1.0), ());
        let (sf, _) = to_standard_form(&p);
        let sol = solve(&sf, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::Unbounded);
    }

    #[test]
    fn fixed_variables_keep_duals() {
        // min x + 2y s.t. x = 1, x + y >= 3  ->  y = 2, dual(x = 1) = 1 - 2
        let mut p: ConicProgram<()> = ConicProgram::new();
        let x = p.add_var("x");
        let y = p.add_var("y");
        p.objective = LinExpr::var(x).with_term(y, 2.0);
        let fix = p.add_eq(LinExpr::var(x).with_constant(-1.0), ());
        let cover = p.add_ge(LinExpr::var(x).with_term(y, 1.0).with_constant(-3.0), ());
        let sol = solve_model(&p);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[1] - 2.0).abs() < 1e-7);
        assert!((sol.row_duals[cover.0] - 2.0).abs() < 1e-6);
        // raising the constant of x - 1 = 0 lowers x, saving 1 but costing 2 in y
        assert!((sol.row_duals[fix.0] - 1.0).abs() < 1e-6, "{}", sol.row_duals[fix.0]);
    }
}
