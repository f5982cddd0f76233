//! Sweep configuration and its TOML file form.
//!
//! ```toml
//! feeder = "four_bus.feeder"      # relative to this file
//! profiles = "day24.csv"          # omit for synthetic profiles
//! hours = [0, 24]                 # half-open range, default: all
//! sample = 8                      # evaluate a seeded random subset
//! configuration = "ns-c"          # ns-nc | ns-c | s-c
//! method = "gan"                  # ropf | gan | huang | nick
//! capacitors = "fixed"            # fixed | variable
//! penalties = [0.0, 0.01]
//! output = "out"
//! workers = 4                     # overridden by DISTRELAX_WORKERS
//! seed = 1
//!
//! [objective]
//! kind = "reactive-target"        # min-import | reactive-target | fixed-reactive
//! q_ref = 0.0
//!
//! [thresholds]
//! exact = 1e-2
//! usable = 1e-2
//! gap_eps = 1e-6
//!
//! [solver]
//! feas_tol = 1e-8
//! gap_tol = 1e-8
//! max_iter = 200
//! ```

use std::path::{Path, PathBuf};

use distrelax_conic::Settings;
use serde::Deserialize;

use super::{parse_capacitors, parse_configuration, parse_method, SweepError};
use crate::exactness::Thresholds;
use crate::formulation::{Configuration, Method};
use crate::network::CapacitorMode;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "DISTRELAX_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    MinImport,
    ReactiveTarget { q_ref: f64 },
    /// Minimum active import with the reactive import fixed to `q`.
    FixedReactive { q: f64 },
}

impl ObjectiveSpec {
    pub fn label(&self) -> String {
        match self {
            ObjectiveSpec::MinImport => "min-import".into(),
            ObjectiveSpec::ReactiveTarget { q_ref } => format!("reactive-target:{q_ref}"),
            ObjectiveSpec::FixedReactive { q } => format!("fixed-reactive:{q}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = Settings::default();
        SolverSpec {
            feas_tol: s.feas_tol,
            gap_tol: s.gap_tol,
            max_iter: s.max_iter,
        }
    }
}

impl SolverSpec {
    pub fn settings(&self) -> Settings {
        Settings {
            feas_tol: self.feas_tol,
            gap_tol: self.gap_tol,
            max_iter: self.max_iter,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub feeder: PathBuf,
    /// `None` selects synthetic profiles of `synthetic_hours` hours.
    pub profiles: Option<PathBuf>,
    pub synthetic_hours: usize,
    /// Half-open hour range; `None` covers the whole profile.
    pub hours: Option<(usize, usize)>,
    /// Evaluate only this many hours, drawn with `seed`.
    pub sample: Option<usize>,
    pub configuration: Configuration,
    pub method: Method,
    pub capacitors: CapacitorMode,
    pub objective: ObjectiveSpec,
    pub penalties: Vec<f64>,
    pub thresholds: Thresholds,
    pub solver: SolverSpec,
    pub output: PathBuf,
    pub workers: Option<usize>,
    pub seed: u64,
    pub load_scale: f64,
    pub pv_scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    feeder: PathBuf,
    profiles: Option<PathBuf>,
    synthetic_hours: Option<usize>,
    hours: Option<(usize, usize)>,
    sample: Option<usize>,
    configuration: String,
    method: String,
    capacitors: Option<String>,
    objective: Option<ObjectiveSpec>,
    penalties: Option<Vec<f64>>,
    thresholds: Option<ThresholdsFile>,
    solver: Option<SolverSpec>,
    output: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
    load_scale: Option<f64>,
    pv_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ThresholdsFile {
    exact: f64,
    usable: f64,
    gap_eps: f64,
}

impl Default for ThresholdsFile {
    fn default() -> Self {
        let t = Thresholds::default();
        ThresholdsFile {
            exact: t.exact,
            usable: t.usable,
            gap_eps: t.gap_eps,
        }
    }
}

impl SweepConfig {
    pub fn new(feeder: impl Into<PathBuf>, method: Method, configuration: Configuration) -> SweepConfig {
        SweepConfig {
            feeder: feeder.into(),
            profiles: None,
            synthetic_hours: 8760,
            hours: None,
            sample: None,
            configuration,
            method,
            capacitors: CapacitorMode::Fixed,
            objective: ObjectiveSpec::MinImport,
            penalties: vec![0.0],
            thresholds: Thresholds::default(),
            solver: SolverSpec::default(),
            output: PathBuf::from("sweep-out"),
            workers: None,
            seed: 1,
            load_scale: 1.0,
            pv_scale: 1.0,
        }
    }

    /// Parses a configuration file; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<SweepConfig, SweepError> {
        let origin = base.display().to_string();
        let file: SweepFile = toml::from_str(text).map_err(|e| SweepError::Config {
            path: origin.clone(),
            message: e.to_string(),
        })?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let mut cfg = SweepConfig::new(
            resolve(file.feeder),
            parse_method(&file.method)?,
            parse_configuration(&file.configuration)?,
        );
        cfg.profiles = file.profiles.map(resolve);
        if let Some(h) = file.synthetic_hours {
            cfg.synthetic_hours = h;
        }
        cfg.hours = file.hours;
        cfg.sample = file.sample;
        if let Some(c) = file.capacitors {
            cfg.capacitors = parse_capacitors(&c)?;
        }
        if let Some(o) = file.objective {
            cfg.objective = o;
        }
        if let Some(p) = file.penalties {
            cfg.penalties = p;
        }
        if let Some(t) = file.thresholds {
            cfg.thresholds = Thresholds {
                exact: t.exact,
                usable: t.usable,
                gap_eps: t.gap_eps,
            };
        }
        if let Some(s) = file.solver {
            cfg.solver = s;
        }
        if let Some(o) = file.output {
            cfg.output = resolve(o);
        }
        cfg.workers = file.workers;
        if let Some(s) = file.seed {
            cfg.seed = s;
        }
        if let Some(s) = file.load_scale {
            cfg.load_scale = s;
        }
        if let Some(s) = file.pv_scale {
            cfg.pv_scale = s;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SweepConfig, SweepError> {
        let text = std::fs::read_to_string(path).map_err(|e| SweepError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        SweepConfig::from_toml(&text, base).map_err(|e| match e {
            SweepError::Config { message, .. } => SweepError::Config {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Rejects combinations the methods do not support.
    pub fn check(&self) -> Result<(), SweepError> {
        if self.configuration.shunts() && !self.method.allows_shunts() {
            return Err(SweepError::Usage(format!(
                "method {} does not model line shunts; configuration {} is unsupported",
                self.method, self.configuration
            )));
        }
        if self.penalties.is_empty() {
            return Err(SweepError::Usage("penalties: at least one value required".into()));
        }
        if let Some(p) = self.penalties.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(SweepError::Usage(format!("penalties: {p} is not a nonnegative number")));
        }
        let t = &self.thresholds;
        for (name, v) in [("exact", t.exact), ("usable", t.usable), ("gap_eps", t.gap_eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SweepError::Usage(format!("thresholds.{name}: {v} must be positive")));
            }
        }
        for (name, v) in [("load_scale", self.load_scale), ("pv_scale", self.pv_scale)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SweepError::Usage(format!("{name}: {v} must be nonnegative")));
            }
        }
        if self.workers == Some(0) {
            return Err(SweepError::Usage("workers: must be at least 1".into()));
        }
        if self.sample == Some(0) {
            return Err(SweepError::Usage("sample: must be at least 1".into()));
        }
        if !(self.solver.feas_tol > 0.0 && self.solver.gap_tol > 0.0) {
            return Err(SweepError::Usage("solver: tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Worker count after the environment override.
    pub fn effective_workers(&self) -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "feeder = \"f.feeder\"\nconfiguration = \"ns-c\"\nmethod = \"gan\"\n";

    #[test]
    fn defaults_and_relative_paths() {
        let c = SweepConfig::from_toml(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(c.feeder, PathBuf::from("/data/f.feeder"));
        assert_eq!(c.penalties, vec![0.0]);
        assert_eq!(c.objective, ObjectiveSpec::MinImport);
        assert_eq!(c.thresholds, Thresholds::default());
        assert_eq!(c.capacitors, CapacitorMode::Fixed);
    }

    #[test]
    fn objective_table() {
        let text = format!("{MINIMAL}[objective]\nkind = \"reactive-target\"\nq_ref = -0.5\n");
        let c = SweepConfig::from_toml(&text, Path::new(".")).unwrap();
        assert_eq!(c.objective, ObjectiveSpec::ReactiveTarget { q_ref: -0.5 });
    }

    #[test]
    fn shunts_need_a_shunt_aware_method() {
        let text = MINIMAL.replace("ns-c", "s-c");
        assert!(matches!(SweepConfig::from_toml(&text, Path::new(".")), Err(SweepError::Usage(_))));
        let text = text.replace("gan", "nick");
        assert!(SweepConfig::from_toml(&text, Path::new(".")).is_ok());
    }

    #[test]
    fn unknown_field_is_named() {
        let text = format!("{MINIMAL}penalty = [0.1]\n");
        let err = SweepConfig::from_toml(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("penalty"), "{err}");
    }

    #[test]
    fn negative_penalty_rejected() {
        let text = format!("{MINIMAL}penalties = [0.0, -0.01]\n");
        assert!(matches!(SweepConfig::from_toml(&text, Path::new(".")), Err(SweepError::Usage(_))));
    }
}
