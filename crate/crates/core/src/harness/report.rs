//! Report files of a sweep.
//!
//! | file                  | one row per                 |
//! |-----------------------|-----------------------------|
//! | `hours.csv`           | (hour, penalty)             |
//! | `aggregate.csv`       | penalty                     |
//! | `scatter_voltage.csv` | feasible (hour, penalty)    |
//! | `scatter_current.csv` | feasible (hour, penalty)    |
//!
//! The first column of every file is the schema version. Missing values are
//! empty fields. Floats are written in shortest round-trip form, so a report
//! parsed back reproduces the in-memory values bit for bit.
//!
//! `hours.csv` columns: `status` is the solver status, `class` the gap class
//! (`exact`, `inexact-zero-gap`, `inexact-positive-gap`, `infeasible`,
//! `solver-failure`); `gap_bound` is the augmented optimum minus the plain
//! relaxation optimum on the unpenalized objective, an upper bound on the true
//! gap; `suboptimality_pct` is that bound in % of feeder peak load; dual
//! columns are the largest voltage and current bound sensitivities.

use std::fs;
use std::path::{Path, PathBuf};

use super::{HourRow, SweepError, SweepSummary};

pub const REPORT_SCHEMA: u32 = 1;

pub const HOUR_HEADER: [&str; 22] = [
    "schema",
    "hour",
    "penalty",
    "status",
    "class",
    "max_residual",
    "exact",
    "usable",
    "voltage_violation",
    "current_violation",
    "loadflow_converged",
    "objective",
    "penalized_objective",
    "ropf_objective",
    "gap_bound",
    "suboptimality_pct",
    "target_reachable",
    "max_voltage_dual",
    "max_current_dual",
    "negative_candidates",
    "iterations",
    "error",
];

pub const AGGREGATE_HEADER: [&str; 18] = [
    "schema",
    "feeder",
    "method",
    "configuration",
    "objective",
    "capacitors",
    "penalty",
    "hours",
    "solver_failures",
    "infeasible_pct",
    "inexact_pct",
    "inexact_reachable_pct",
    "zero_gap_pct",
    "unusable_pct",
    "peak_suboptimality_pct",
    "mean_suboptimality_pct",
    "max_residual",
    "peak_load",
];

pub const SCATTER_HEADER: [&str; 5] = ["schema", "hour", "penalty", "max_residual", "max_dual"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn hour_record(row: &HourRow, peak_load: f64) -> Vec<String> {
    let rep = row.report.as_ref();
    let feasible = rep.is_some_and(|r| r.class.is_feasible());
    let when = |f: &dyn Fn(&crate::exactness::ExactnessReport) -> String| {
        rep.filter(|_| feasible).map_or_else(String::new, f)
    };
    vec![
        REPORT_SCHEMA.to_string(),
        row.hour.to_string(),
        row.penalty.to_string(),
        rep.map_or("none", |r| r.status.as_str()).to_string(),
        row.class().as_str().to_string(),
        when(&|r| r.max_residual.to_string()),
        when(&|r| r.exact.to_string()),
        rep.and_then(|r| r.usable).map_or_else(String::new, |u| u.to_string()),
        opt(rep.and_then(|r| r.voltage_violation)),
        opt(rep.and_then(|r| r.current_violation)),
        opt(row.loadflow_converged),
        when(&|r| r.objective.to_string()),
        when(&|r| r.penalized_objective.to_string()),
        opt(row.ropf_objective),
        when(&|r| opt(r.gap_bound)),
        opt(row.suboptimality_pct(peak_load)),
        row.target_reachable.to_string(),
        when(&|r| r.duals.max_voltage_dual.to_string()),
        when(&|r| r.duals.max_current_dual.to_string()),
        when(&|r| {
            r.negative_candidates
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        }),
        row.iterations.to_string(),
        opt(row.error.as_deref()),
    ]
}

fn write_csv(path: &Path, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<(), SweepError> {
    let io_err = |e: std::io::Error| SweepError::Output {
        path: path.display().to_string(),
        source: e,
    };
    let csv_err = |e: csv::Error| io_err(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes the four report files into `dir` (created if missing) and returns
/// their paths.
pub fn emit_reports(summary: &SweepSummary, dir: &Path) -> Result<Vec<PathBuf>, SweepError> {
    fs::create_dir_all(dir).map_err(|e| SweepError::Output {
        path: dir.display().to_string(),
        source: e,
    })?;
    let peak = summary.peak_load;
    let hours = dir.join("hours.csv");
    write_csv(&hours, &HOUR_HEADER, summary.rows.iter().map(|r| hour_record(r, peak)))?;

    let cfg = &summary.config;
    let aggregate = dir.join("aggregate.csv");
    write_csv(
        &aggregate,
        &AGGREGATE_HEADER,
        summary.aggregates.iter().map(|a| {
            vec![
                REPORT_SCHEMA.to_string(),
                summary.feeder_name.clone(),
                cfg.method.to_string(),
                cfg.configuration.to_string(),
                cfg.objective.label(),
                format!("{:?}", cfg.capacitors).to_lowercase(),
                a.penalty.to_string(),
                a.hours.to_string(),
                a.solver_failures.to_string(),
                a.infeasible_pct.to_string(),
                a.inexact_pct.to_string(),
                a.inexact_reachable_pct.to_string(),
                a.zero_gap_pct.to_string(),
                a.unusable_pct.to_string(),
                a.peak_suboptimality_pct.to_string(),
                a.mean_suboptimality_pct.to_string(),
                a.max_residual.to_string(),
                peak.to_string(),
            ]
        }),
    )?;

    let feasible = || {
        summary
            .rows
            .iter()
            .filter_map(|r| r.report.as_ref().filter(|x| x.class.is_feasible()).map(|x| (r, x)))
    };
    let scatter = |name: &str, pick: fn(&crate::exactness::DualDiagnostics) -> f64| -> Result<PathBuf, SweepError> {
        let path = dir.join(name);
        write_csv(
            &path,
            &SCATTER_HEADER,
            feasible().map(|(r, x)| {
                vec![
                    REPORT_SCHEMA.to_string(),
                    r.hour.to_string(),
                    r.penalty.to_string(),
                    x.max_residual.to_string(),
                    pick(&x.duals).to_string(),
                ]
            }),
        )?;
        Ok(path)
    };
    let sv = scatter("scatter_voltage.csv", |d| d.max_voltage_dual)?;
    let sc = scatter("scatter_current.csv", |d| d.max_current_dual)?;
    Ok(vec![hours, aggregate, sv, sc])
}
