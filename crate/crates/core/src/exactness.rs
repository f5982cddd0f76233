//! Exactness auditing of a relaxation solve.
//!
//! The residual of line `l` is `ρ_l = v_up f_l - |S^t_l + j v_up b_l|²`; a
//! solve is exact when every residual is below the threshold. Inexact solves
//! are split by relaxation gap. The reported gap bound is
//! `OF*(augmented relaxation) - OF*(plain relaxation)`; a zero gap is only
//! declared when, in addition, an exact point attaining the optimum has been
//! exhibited (see [`crate::formulation::Formulation::lexicographic_probe`]).

use std::fmt;

use distrelax_conic::Status;
use thiserror::Error;

use crate::formulation::{Family, Formulation, OpfSolution};
use crate::loadflow::ViolationReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Largest cone residual of an exact solve, p.u.
    pub exact: f64,
    /// Largest bound violation of a usable load flow, p.u.
    pub usable: f64,
    /// Objective difference treated as zero.
    pub gap_eps: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            exact: 1e-2,
            usable: 1e-2,
            gap_eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GapClass {
    Exact,
    InexactZeroGap,
    InexactPositiveGap,
    Infeasible,
    /// The solver stopped without a certificate.
    SolverFailure,
}

impl GapClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            GapClass::Exact => "exact",
            GapClass::InexactZeroGap => "inexact-zero-gap",
            GapClass::InexactPositiveGap => "inexact-positive-gap",
            GapClass::Infeasible => "infeasible",
            GapClass::SolverFailure => "solver-failure",
        }
    }

    pub fn is_inexact(&self) -> bool {
        matches!(self, GapClass::InexactZeroGap | GapClass::InexactPositiveGap)
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, GapClass::Exact | GapClass::InexactZeroGap | GapClass::InexactPositiveGap)
    }
}

impl fmt::Display for GapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExactnessError {
    #[error("solution status is {0}, residuals need an optimal solve")]
    NotOptimal(Status),
    #[error("inexact solve needs the plain relaxation optimum or an optimal-face probe to classify its gap")]
    MissingGapEvidence,
}

/// Per-line residuals, entry `l - 1` for line `l`.
pub fn residuals(form: &Formulation, sol: &OpfSolution) -> Result<Vec<f64>, ExactnessError> {
    if !sol.status().has_solution() {
        return Err(ExactnessError::NotOptimal(sol.status()));
    }
    Ok(residuals_at(form, sol.x()))
}

/// Residuals of an arbitrary point.
pub fn residuals_at(form: &Formulation, x: &[f64]) -> Vec<f64> {
    let feeder = form.feeder();
    (1..=feeder.n())
        .map(|l| {
            let k = feeder.up(l);
            let vk = form.voltage(x, k);
            let st = form.top_flow(x, l);
            let w = num_complex::Complex64::new(st.re, st.im + vk * form.b(l));
            vk * form.current(x, l) - w.norm_sqr()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualDiagnostics {
    /// Largest dual of an upper voltage bound (including lossless voltages),
    /// equal to `-∂OF/∂v^max`.
    pub max_voltage_dual: f64,
    /// Largest sensitivity `-∂OF/∂I^max_l` over lines (both line ends and,
    /// for Nick, all candidate cones share one bound).
    pub max_current_dual: f64,
}

/// Duals below this are reported as zero: the interior-point duals of inactive
/// bounds shrink with the barrier parameter but never reach it exactly.
pub const DUAL_ZERO: f64 = 1e-6;

pub fn dual_diagnostics(form: &Formulation, sol: &OpfSolution) -> DualDiagnostics {
    let mut d = DualDiagnostics::default();
    if !sol.status().has_solution() {
        return d;
    }
    for fam in [Family::VoltageMax, Family::LosslessVoltageMax] {
        for (i, _) in form.rows_of(fam) {
            d.max_voltage_dual = d.max_voltage_dual.max(sol.model.row_duals[i]);
        }
    }
    // cone 2 (I v / 2) * 1 >= |S|²: the bound enters through the first entry
    // only, so each cone contributes its first dual entry times v / 2; a
    // line's sensitivity sums all cones sharing its bound
    let x = sol.x();
    let mut per_line = vec![0.0; form.feeder().n() + 1];
    for fam in [
        Family::CurrentBusEnd,
        Family::CurrentTop,
        Family::UpperBoundBusEnd,
        Family::UpperBoundTop,
    ] {
        for (i, t) in form.cones_of(fam) {
            let l = t.element;
            let imax = form.feeder().line(l).imax.unwrap_or(1.0);
            let u = form.program.cones[i].exprs[0].eval(x);
            per_line[l] += sol.model.cone_duals[i][0] * u / imax;
        }
    }
    d.max_current_dual = per_line.into_iter().fold(0.0, f64::max);
    for v in [&mut d.max_voltage_dual, &mut d.max_current_dual] {
        if *v < DUAL_ZERO {
            *v = 0.0;
        }
    }
    d
}

/// Everything known about one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactnessReport {
    pub status: Status,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub exact: bool,
    /// Load-flow usability of the solve's withdrawals, when checked.
    pub usable: Option<bool>,
    pub voltage_violation: Option<f64>,
    pub current_violation: Option<f64>,
    pub class: GapClass,
    /// `OF*(this solve) - OF*(plain relaxation)` on the unpenalized objective.
    pub gap_bound: Option<f64>,
    /// Objective without penalty.
    pub objective: f64,
    pub penalized_objective: f64,
    pub penalty: f64,
    pub duals: DualDiagnostics,
    /// Lines whose current-bound candidates went negative.
    pub negative_candidates: Vec<usize>,
}

/// Evidence for the gap of an inexact solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GapEvidence {
    /// Optimum of the plain relaxation for the same hour and objective.
    pub ropf_value: Option<f64>,
    /// Whether the optimal-face probe found an exact point.
    pub probe_exact: Option<bool>,
}

pub fn classify(
    form: &Formulation,
    sol: &OpfSolution,
    loadflow: Option<&ViolationReport>,
    evidence: &GapEvidence,
    thresholds: &Thresholds,
) -> Result<ExactnessReport, ExactnessError> {
    let mut rep = ExactnessReport {
        status: sol.status(),
        residuals: Vec::new(),
        max_residual: f64::NAN,
        exact: false,
        usable: loadflow.map(|r| r.usable),
        voltage_violation: loadflow.map(|r| r.voltage),
        current_violation: loadflow.map(|r| r.current),
        class: GapClass::SolverFailure,
        gap_bound: None,
        objective: f64::NAN,
        penalized_objective: f64::NAN,
        penalty: form.config.penalty,
        duals: DualDiagnostics::default(),
        negative_candidates: Vec::new(),
    };
    match sol.status() {
        Status::Optimal | Status::NearOptimal => {}
        Status::Infeasible => {
            rep.class = GapClass::Infeasible;
            return Ok(rep);
        }
        _ => return Ok(rep),
    }
    rep.residuals = residuals(form, sol)?;
    rep.max_residual = rep.residuals.iter().cloned().fold(0.0, f64::max);
    rep.exact = rep.max_residual < thresholds.exact;
    rep.objective = sol.true_objective;
    rep.penalized_objective = sol.objective();
    rep.gap_bound = evidence.ropf_value.map(|r| sol.true_objective - r);
    rep.duals = dual_diagnostics(form, sol);
    rep.negative_candidates = form.negative_candidates(sol.x());
    rep.class = if rep.exact {
        GapClass::Exact
    } else {
        if evidence.ropf_value.is_none() && evidence.probe_exact.is_none() {
            return Err(ExactnessError::MissingGapEvidence);
        }
        let bound_zero = rep.gap_bound.map_or(true, |g| g < thresholds.gap_eps);
        let probe_ok = evidence.probe_exact.unwrap_or(true);
        if bound_zero && probe_ok {
            GapClass::InexactZeroGap
        } else {
            GapClass::InexactPositiveGap
        }
    };
    Ok(rep)
}
