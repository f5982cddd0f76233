//! Hourly sweeps over a profile, aggregate statistics and report files.
//!
//! Every hour is an independent unit of work: build the scenario, solve the
//! plain relaxation as the reference lower bound, then solve the configured
//! augmented relaxation once per penalty, run a load flow on its withdrawals
//! and classify it. Hours run on a bounded worker pool and are merged back
//! in hour order, so outputs do not depend on scheduling.

pub mod cli;
mod config;
mod report;

use distrelax_conic::{SolveError, Status};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::exactness::{classify, ExactnessReport, GapClass, GapEvidence};
use crate::formulation::{build, Configuration, FormulationConfig, FormulationError, Method, Objective, OpfSolution};
use crate::loadflow::{run_loadflow, violations, LoadFlowOptions};
use crate::network::{
    build_scenario, load_feeder, load_profiles, CapacitorMode, Feeder, NetworkError, ProfileSet, Scenario,
    ScenarioOptions,
};

pub use config::{ObjectiveSpec, SolverSpec, SweepConfig, WORKERS_ENV};
pub use report::{emit_reports, AGGREGATE_HEADER, HOUR_HEADER, REPORT_SCHEMA, SCATTER_HEADER};

#[derive(Debug, Error)]
pub enum SweepError {
    /// Inconsistent request: bad combination of options or unknown names.
    #[error("{0}")]
    Usage(String),
    /// Input files missing or malformed.
    #[error(transparent)]
    Data(#[from] NetworkError),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("writing {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<FormulationError> for SweepError {
    fn from(e: FormulationError) -> Self {
        SweepError::Usage(e.to_string())
    }
}

/// Result of one (hour, penalty) solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HourRow {
    pub hour: usize,
    pub penalty: f64,
    /// Optimum of the plain relaxation (same objective, no penalty).
    pub ropf_objective: Option<f64>,
    /// Whether an exact point reaches the reactive target; always true for
    /// other objectives.
    pub target_reachable: bool,
    pub report: Option<ExactnessReport>,
    pub loadflow_converged: Option<bool>,
    pub iterations: usize,
    /// Set when the hour could not be evaluated.
    pub error: Option<String>,
}

impl HourRow {
    pub fn class(&self) -> GapClass {
        self.report.as_ref().map_or(GapClass::SolverFailure, |r| r.class)
    }

    /// `(OF*(augmented) - OF*(plain)) / peak load * 100`.
    pub fn suboptimality_pct(&self, peak_load: f64) -> Option<f64> {
        let r = self.report.as_ref()?;
        let g = r.gap_bound?;
        if r.class.is_feasible() {
            Some(g / peak_load * 100.0)
        } else {
            None
        }
    }
}

/// Aggregates for one penalty value. Every percentage states its denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub penalty: f64,
    pub hours: usize,
    pub solver_failures: usize,
    /// Infeasible hours over hours with a definite status.
    pub infeasible_pct: f64,
    /// Inexact hours over feasible hours.
    pub inexact_pct: f64,
    /// Inexact hours over feasible hours whose target is reachable.
    pub inexact_reachable_pct: f64,
    /// Zero-gap hours among inexact hours.
    pub zero_gap_pct: f64,
    /// Hours whose load flow is not usable, over feasible hours.
    pub unusable_pct: f64,
    /// Peak and mean suboptimality bound over feasible hours, % of peak load.
    pub peak_suboptimality_pct: f64,
    pub mean_suboptimality_pct: f64,
    /// Largest cone residual over feasible hours.
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub config: SweepConfig,
    pub feeder_name: String,
    pub peak_load: f64,
    /// Rows ordered by hour, then by penalty in configuration order.
    pub rows: Vec<HourRow>,
    pub aggregates: Vec<Aggregate>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Aggregates computed from rows alone.
pub fn aggregate(rows: &[HourRow], penalties: &[f64], peak_load: f64) -> Vec<Aggregate> {
    penalties
        .iter()
        .map(|&eps| {
            let sel: Vec<&HourRow> = rows.iter().filter(|r| r.penalty == eps).collect();
            let failures = sel.iter().filter(|r| r.class() == GapClass::SolverFailure).count();
            let definite = sel.len() - failures;
            let infeasible = sel.iter().filter(|r| r.class() == GapClass::Infeasible).count();
            let feasible: Vec<&&HourRow> = sel.iter().filter(|r| r.class().is_feasible()).collect();
            let inexact = feasible.iter().filter(|r| r.class().is_inexact()).count();
            let reachable = feasible.iter().filter(|r| r.target_reachable).count();
            let inexact_reachable = feasible
                .iter()
                .filter(|r| r.target_reachable && r.class().is_inexact())
                .count();
            let zero_gap = feasible.iter().filter(|r| r.class() == GapClass::InexactZeroGap).count();
            let unusable = feasible
                .iter()
                .filter(|r| r.report.as_ref().and_then(|x| x.usable) != Some(true))
                .count();
            let subopt: Vec<f64> = feasible.iter().filter_map(|r| r.suboptimality_pct(peak_load)).collect();
            let peak = subopt.iter().cloned().fold(0.0, f64::max);
            let mean = if subopt.is_empty() {
                0.0
            } else {
                subopt.iter().sum::<f64>() / subopt.len() as f64
            };
            let max_residual = feasible
                .iter()
                .filter_map(|r| r.report.as_ref().map(|x| x.max_residual))
                .fold(0.0, f64::max);
            Aggregate {
                penalty: eps,
                hours: sel.len(),
                solver_failures: failures,
                infeasible_pct: pct(infeasible, definite),
                inexact_pct: pct(inexact, feasible.len()),
                inexact_reachable_pct: pct(inexact_reachable, reachable),
                zero_gap_pct: pct(zero_gap, inexact),
                unusable_pct: pct(unusable, feasible.len()),
                peak_suboptimality_pct: peak,
                mean_suboptimality_pct: mean,
                max_residual,
            }
        })
        .collect()
}

/// Inputs shared read-only by all workers.
pub struct SweepInputs {
    pub feeder: Feeder,
    pub profiles: ProfileSet,
}

impl SweepInputs {
    pub fn load(config: &SweepConfig) -> Result<SweepInputs, SweepError> {
        let feeder = load_feeder(&config.feeder)?;
        let profiles = match &config.profiles {
            Some(p) => load_profiles(p)?,
            None => ProfileSet::synthetic(config.synthetic_hours, config.seed),
        };
        Ok(SweepInputs { feeder, profiles })
    }
}

/// The formulation settings of the configured method (or the plain
/// relaxation when `method` is overridden) for one penalty.
pub fn formulation_config(config: &SweepConfig, method: Method, penalty: f64) -> FormulationConfig {
    let mut fc = FormulationConfig::new(method, config.configuration).with_penalty(penalty);
    match config.objective {
        ObjectiveSpec::MinImport => {}
        ObjectiveSpec::ReactiveTarget { q_ref } => fc = fc.with_objective(Objective::ReactiveTarget(q_ref)),
        ObjectiveSpec::FixedReactive { q } => fc = fc.with_fixed_reactive_import(q),
    }
    fc
}

/// Hours to evaluate: the configured range, optionally subsampled.
pub fn selected_hours(config: &SweepConfig, available: usize) -> Result<Vec<usize>, SweepError> {
    let (start, end) = config.hours.unwrap_or((0, available));
    if start >= end || end > available {
        return Err(SweepError::Usage(format!(
            "hours {start}..{end} outside the profile range 0..{available}"
        )));
    }
    let mut hours: Vec<usize> = (start..end).collect();
    if let Some(k) = config.sample {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        hours.shuffle(&mut rng);
        hours.truncate(k);
        hours.sort_unstable();
    }
    Ok(hours)
}

fn scenario_options(config: &SweepConfig) -> ScenarioOptions {
    ScenarioOptions {
        capacitor_mode: config.capacitors,
        load_scale: config.load_scale,
        pv_scale: config.pv_scale,
    }
}

fn solved_optimal(sol: &Result<OpfSolution, SolveError>) -> Option<&OpfSolution> {
    match sol {
        Ok(s) if s.status().has_solution() => Some(s),
        _ => None,
    }
}

/// Whether an exact point of `form` attains `bound` on the true objective.
fn probe_exact(
    form: &crate::formulation::Formulation,
    bound: f64,
    config: &SweepConfig,
) -> Option<bool> {
    let probe = form.lexicographic_probe(bound);
    let sol = probe.solve(&config.solver.settings()).ok()?;
    if !sol.status().has_solution() {
        return None;
    }
    let worst = crate::exactness::residuals_at(&probe, sol.x())
        .into_iter()
        .fold(0.0, f64::max);
    Some(worst < config.thresholds.exact)
}

fn failed_rows(hour: usize, config: &SweepConfig, message: String) -> Vec<HourRow> {
    config
        .penalties
        .iter()
        .map(|&eps| HourRow {
            hour,
            penalty: eps,
            ropf_objective: None,
            target_reachable: false,
            report: None,
            loadflow_converged: None,
            iterations: 0,
            error: Some(message.clone()),
        })
        .collect()
}

/// Evaluates one hour for every configured penalty.
pub fn evaluate_hour(inputs: &SweepInputs, config: &SweepConfig, hour: usize) -> Vec<HourRow> {
    let scenario = match build_scenario(&inputs.feeder, &inputs.profiles, hour, &scenario_options(config)) {
        Ok(s) => s,
        Err(e) => return failed_rows(hour, config, format!("hour {hour}: {e}")),
    };
    evaluate_scenario(&inputs.feeder, &scenario, config)
}

/// Evaluates one prepared scenario for every configured penalty.
pub fn evaluate_scenario(feeder: &Feeder, scenario: &Scenario, config: &SweepConfig) -> Vec<HourRow> {
    let hour = scenario.hour;
    let settings = config.solver.settings();
    let th = &config.thresholds;

    let reference = match build(feeder, scenario, &formulation_config(config, Method::Ropf, 0.0)) {
        Ok(f) => f,
        Err(e) => return failed_rows(hour, config, format!("hour {hour}: {e}")),
    };
    let ref_sol = reference.solve(&settings);
    let ropf_objective = solved_optimal(&ref_sol).map(|s| s.true_objective);
    let target_reachable = match config.objective {
        ObjectiveSpec::ReactiveTarget { .. } => {
            ropf_objective.is_some() && probe_exact(&reference, th.gap_eps, config) == Some(true)
        }
        _ => true,
    };

    let lf_opts = LoadFlowOptions {
        shunts: config.configuration.shunts(),
        ..LoadFlowOptions::default()
    };
    let mut rows = Vec::with_capacity(config.penalties.len());
    for &eps in &config.penalties {
        let mut row = HourRow {
            hour,
            penalty: eps,
            ropf_objective,
            target_reachable,
            report: None,
            loadflow_converged: None,
            iterations: 0,
            error: None,
        };
        let form = match build(feeder, scenario, &formulation_config(config, config.method, eps)) {
            Ok(f) => f,
            Err(e) => {
                row.error = Some(format!("hour {hour}: {e}"));
                rows.push(row);
                continue;
            }
        };
        let sol = match form.solve(&settings) {
            Ok(s) => s,
            Err(e) => {
                row.error = Some(format!("hour {hour}: {e}"));
                rows.push(row);
                continue;
            }
        };
        row.iterations = sol.model.iterations;
        let mut lf_report = None;
        let mut evidence = GapEvidence {
            ropf_value: ropf_objective,
            probe_exact: None,
        };
        if sol.status().has_solution() {
            match run_loadflow(feeder, &form.withdrawals(sol.x()), &lf_opts) {
                Ok(lf) => {
                    row.loadflow_converged = Some(lf.converged);
                    lf_report = Some(violations(&lf, feeder, config.configuration.current_bounds(), th.usable));
                }
                Err(e) => row.error = Some(format!("hour {hour}: load flow: {e}")),
            }
            let worst = crate::exactness::residuals_at(&form, sol.x())
                .into_iter()
                .fold(0.0, f64::max);
            let bound_zero = ropf_objective.map_or(true, |r| sol.true_objective - r < th.gap_eps);
            if worst >= th.exact && bound_zero {
                evidence.probe_exact = probe_exact(&form, sol.true_objective + th.gap_eps, config);
                if evidence.probe_exact.is_none() && ropf_objective.is_none() {
                    // no evidence either way: the gap cannot be classified
                    evidence.probe_exact = Some(false);
                }
            }
        } else if sol.status() == Status::NumericalLimit {
            row.error = Some(format!("hour {hour}: solver stopped at its numerical limit"));
        }
        match classify(&form, &sol, lf_report.as_ref(), &evidence, th) {
            Ok(rep) => row.report = Some(rep),
            Err(e) => row.error = Some(format!("hour {hour}: {e}")),
        }
        rows.push(row);
    }
    rows
}

/// Runs the configured sweep. Per-hour failures are recorded in their rows.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepSummary, SweepError> {
    config.check()?;
    let inputs = SweepInputs::load(config)?;
    run_sweep_with(config, &inputs)
}

/// [`run_sweep`] on already loaded inputs.
pub fn run_sweep_with(config: &SweepConfig, inputs: &SweepInputs) -> Result<SweepSummary, SweepError> {
    config.check()?;
    let hours = selected_hours(config, inputs.profiles.hours())?;
    // fail early on profile keys the feeder needs
    build_scenario(&inputs.feeder, &inputs.profiles, hours[0], &scenario_options(config))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.effective_workers())
        .build()
        .map_err(|e| SweepError::Usage(format!("worker pool: {e}")))?;
    let per_hour: Vec<Vec<HourRow>> =
        pool.install(|| hours.par_iter().map(|&h| evaluate_hour(inputs, config, h)).collect());
    let rows: Vec<HourRow> = per_hour.into_iter().flatten().collect();
    let peak_load = inputs.feeder.peak_load();
    Ok(SweepSummary {
        aggregates: aggregate(&rows, &config.penalties, peak_load),
        config: config.clone(),
        feeder_name: inputs.feeder.name().to_string(),
        peak_load,
        rows,
    })
}

pub fn parse_method(s: &str) -> Result<Method, SweepError> {
    Method::parse(s).ok_or_else(|| SweepError::Usage(format!("unknown method {s:?} (expected ropf, gan, huang or nick)")))
}

pub fn parse_configuration(s: &str) -> Result<Configuration, SweepError> {
    Configuration::parse(s)
        .ok_or_else(|| SweepError::Usage(format!("unknown configuration {s:?} (expected ns-nc, ns-c or s-c)")))
}

pub fn parse_capacitors(s: &str) -> Result<CapacitorMode, SweepError> {
    match s.to_ascii_lowercase().as_str() {
        "fixed" => Ok(CapacitorMode::Fixed),
        "variable" => Ok(CapacitorMode::Variable),
        _ => Err(SweepError::Usage(format!("unknown capacitor mode {s:?} (expected fixed or variable)"))),
    }
}
