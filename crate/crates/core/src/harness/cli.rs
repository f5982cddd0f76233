//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Deserialize;

use super::{
    emit_reports, evaluate_scenario, formulation_config, parse_capacitors, parse_configuration, parse_method,
    run_sweep, HourRow, ObjectiveSpec, SweepConfig, SweepError, SweepInputs,
};
use crate::exactness::GapClass;
use crate::formulation::build;
use crate::loadflow::{run_loadflow, violations, LoadFlowOptions};
use crate::network::{build_scenario, load_feeder, pv_capacities, Feeder, NetworkError, ScenarioOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "distrelax", version, about = "Conic relaxations of optimal power flow on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one hour with one method and print its exactness report.
    Solve(ProblemArgs),
    /// Run a sweep described by a TOML configuration file.
    Sweep {
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Load flow at given withdrawals (CSV `bus,p_pu,q_pu`); prints bound violations.
    Loadflow {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        setpoints: PathBuf,
        /// Ignore line shunts.
        #[arg(long)]
        no_shunts: bool,
        /// Check current bounds too.
        #[arg(long)]
        current_bounds: bool,
        #[arg(long, default_value_t = 1e-2)]
        threshold: f64,
    },
    /// Write the conic standard form of one hour's program.
    Export {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a feeder file (and optionally a profile file) and print a summary.
    Validate {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long)]
    feeder: PathBuf,
    /// Profile CSV; synthetic profiles when omitted.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    hour: usize,
    #[arg(long, default_value = "ropf")]
    method: String,
    /// ns-nc, ns-c or s-c.
    #[arg(long = "config", default_value = "ns-nc")]
    configuration: String,
    /// min-import, reactive-target or fixed-reactive.
    #[arg(long, default_value = "min-import")]
    objective: String,
    /// Reactive target or fixed reactive import, p.u.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    q: f64,
    /// Current penalty weight.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value = "fixed")]
    capacitors: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum CliError {
    Usage(String),
    Data(String),
    Solver(String),
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Usage(m) => CliError::Usage(m),
            SweepError::Data(e) => CliError::Data(e.to_string()),
            e @ SweepError::Config { .. } => CliError::Data(e.to_string()),
            e @ SweepError::Output { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl ProblemArgs {
    fn objective(&self) -> Result<ObjectiveSpec, CliError> {
        match self.objective.as_str() {
            "min-import" => Ok(ObjectiveSpec::MinImport),
            "reactive-target" => Ok(ObjectiveSpec::ReactiveTarget { q_ref: self.q }),
            "fixed-reactive" => Ok(ObjectiveSpec::FixedReactive { q: self.q }),
            o => Err(CliError::Usage(format!(
                "--objective: unknown objective {o:?} (expected min-import, reactive-target or fixed-reactive)"
            ))),
        }
    }

    fn sweep_config(&self) -> Result<SweepConfig, CliError> {
        let mut c = SweepConfig::new(
            &self.feeder,
            parse_method(&self.method)?,
            parse_configuration(&self.configuration)?,
        );
        c.profiles = self.profiles.clone();
        c.objective = self.objective()?;
        c.penalties = vec![self.eps];
        c.capacitors = parse_capacitors(&self.capacitors)?;
        c.seed = self.seed;
        c.hours = Some((self.hour, self.hour + 1));
        c.check()?;
        Ok(c)
    }
}

/// Runs the CLI on `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(p) => solve(&p, out),
        Command::Sweep { config, output, workers } => sweep(&config, output, workers, out),
        Command::Loadflow {
            feeder,
            setpoints,
            no_shunts,
            current_bounds,
            threshold,
        } => loadflow(&feeder, &setpoints, !no_shunts, current_bounds, threshold, out),
        Command::Export { problem, out: path } => export(&problem, &path, out),
        Command::Validate { feeder, profiles } => validate(&feeder, profiles.as_deref(), out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "usage error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Data(m)) => {
            let _ = writeln!(err, "data error: {m}");
            EXIT_DATA
        }
        Err(CliError::Solver(m)) => {
            let _ = writeln!(err, "solver failure: {m}");
            EXIT_SOLVER
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6e}"))
}

fn print_row(row: &HourRow, peak_load: f64, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "hour                {}", row.hour)?;
    writeln!(out, "penalty             {}", row.penalty)?;
    writeln!(out, "class               {}", row.class())?;
    writeln!(out, "ropf objective      {}", fmt_opt(row.ropf_objective))?;
    if let Some(r) = &row.report {
        writeln!(out, "status              {}", r.status)?;
        if r.class.is_feasible() {
            writeln!(out, "objective           {:.6e}", r.objective)?;
            writeln!(out, "penalized objective {:.6e}", r.penalized_objective)?;
            writeln!(out, "gap bound           {}", fmt_opt(r.gap_bound))?;
            writeln!(out, "suboptimality %peak {}", fmt_opt(row.suboptimality_pct(peak_load)))?;
            writeln!(out, "max residual        {:.6e}", r.max_residual)?;
            writeln!(out, "exact               {}", r.exact)?;
            writeln!(out, "usable              {}", r.usable.map_or("-".into(), |u| u.to_string()))?;
            writeln!(out, "voltage violation   {}", fmt_opt(r.voltage_violation))?;
            writeln!(out, "current violation   {}", fmt_opt(r.current_violation))?;
            writeln!(out, "max voltage dual    {:.6e}", r.duals.max_voltage_dual)?;
            writeln!(out, "max current dual    {:.6e}", r.duals.max_current_dual)?;
            for (l, res) in r.residuals.iter().enumerate() {
                writeln!(out, "residual line {:<5} {:.6e}", l + 1, res)?;
            }
        }
    }
    if let Some(e) = &row.error {
        writeln!(out, "error               {e}")?;
    }
    Ok(())
}

fn solve(p: &ProblemArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = p.sweep_config()?;
    let inputs = SweepInputs::load(&config)?;
    let scenario = build_scenario(&inputs.feeder, &inputs.profiles, p.hour, &scenario_options(&config))?;
    let rows = evaluate_scenario(&inputs.feeder, &scenario, &config);
    let row = &rows[0];
    print_row(row, inputs.feeder.peak_load(), out).map_err(|e| CliError::Data(e.to_string()))?;
    if row.class() == GapClass::SolverFailure {
        return Err(CliError::Solver(
            row.error.clone().unwrap_or_else(|| format!("hour {}: no optimal solution", p.hour)),
        ));
    }
    Ok(())
}

fn scenario_options(c: &SweepConfig) -> ScenarioOptions {
    ScenarioOptions {
        capacitor_mode: c.capacitors,
        load_scale: c.load_scale,
        pv_scale: c.pv_scale,
    }
}

fn sweep(path: &Path, output: Option<PathBuf>, workers: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = SweepConfig::load(path)?;
    if let Some(o) = output {
        config.output = o;
    }
    if workers.is_some() {
        config.workers = workers;
        config.check()?;
    }
    let summary = run_sweep(&config)?;
    let files = emit_reports(&summary, &config.output)?;
    let w = |e: std::io::Error| CliError::Data(e.to_string());
    for a in &summary.aggregates {
        writeln!(
            out,
            "penalty {}: {} hours, {:.1}% infeasible, {:.1}% inexact, {:.1}% inexact (reachable), peak suboptimality {:.3}%, failures {}",
            a.penalty,
            a.hours,
            a.infeasible_pct,
            a.inexact_pct,
            a.inexact_reachable_pct,
            a.peak_suboptimality_pct,
            a.solver_failures
        )
        .map_err(w)?;
    }
    for f in files {
        writeln!(out, "wrote {}", f.display()).map_err(w)?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Setpoint {
    bus: String,
    p_pu: f64,
    q_pu: f64,
}

/// Reads withdrawals by bus name; every non-root bus must appear once.
pub fn read_setpoints(feeder: &Feeder, path: &Path) -> Result<Vec<Complex64>, NetworkError> {
    let file = std::fs::File::open(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut seen: BTreeMap<usize, Complex64> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<Setpoint>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| NetworkError::Parse {
            line,
            message: e.to_string(),
        })?;
        let k = feeder
            .bus_index(&rec.bus)
            .filter(|&k| k > 0)
            .ok_or_else(|| NetworkError::Parse {
                line,
                message: format!("field bus: unknown bus {:?}", rec.bus),
            })?;
        if seen.insert(k, Complex64::new(rec.p_pu, rec.q_pu)).is_some() {
            return Err(NetworkError::Parse {
                line,
                message: format!("bus {:?} listed twice", rec.bus),
            });
        }
    }
    (1..=feeder.n())
        .map(|k| {
            seen.get(&k)
                .copied()
                .ok_or_else(|| NetworkError::Invalid(format!("no setpoint for bus {}", feeder.bus_name(k))))
        })
        .collect()
}

fn loadflow(
    feeder: &Path,
    setpoints: &Path,
    shunts: bool,
    current_bounds: bool,
    threshold: f64,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let feeder = load_feeder(feeder)?;
    let s = read_setpoints(&feeder, setpoints)?;
    let opts = LoadFlowOptions {
        shunts,
        ..LoadFlowOptions::default()
    };
    let lf = run_loadflow(&feeder, &s, &opts).map_err(|e| CliError::Data(e.to_string()))?;
    let rep = violations(&lf, &feeder, current_bounds, threshold);
    let w = |e: std::io::Error| CliError::Data(e.to_string());
    writeln!(out, "converged           {}", lf.converged).map_err(w)?;
    writeln!(out, "iterations          {}", lf.iterations).map_err(w)?;
    writeln!(out, "equation residual   {:.3e}", lf.max_residual).map_err(w)?;
    let imp = lf.import(&feeder);
    writeln!(out, "import              {:.6} {:+.6}j", imp.re, imp.im).map_err(w)?;
    writeln!(out, "voltage violation   {:.6e}", rep.voltage).map_err(w)?;
    writeln!(out, "current violation   {:.6e}", rep.current).map_err(w)?;
    writeln!(out, "usable              {}", rep.usable).map_err(w)?;
    for k in 1..=feeder.n() {
        writeln!(out, "bus {:<12} |V| {:.6}", feeder.bus_name(k), lf.v[k].max(0.0).sqrt()).map_err(w)?;
    }
    if !lf.converged {
        return Err(CliError::Solver(if lf.collapsed {
            "load flow collapsed (nonpositive voltage)".into()
        } else {
            format!("load flow did not converge in {} iterations", lf.iterations)
        }));
    }
    Ok(())
}

fn export(p: &ProblemArgs, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let config = p.sweep_config()?;
    let inputs = SweepInputs::load(&config)?;
    let scenario = build_scenario(&inputs.feeder, &inputs.profiles, p.hour, &scenario_options(&config))?;
    let form = build(&inputs.feeder, &scenario, &formulation_config(&config, config.method, p.eps))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (sf, _) = form.standard_form();
    distrelax_conic::io::export_standard_form(&sf, path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writeln!(
        out,
        "wrote {} ({} variables, {} equality rows, {} cone blocks)",
        path.display(),
        sf.num_vars(),
        sf.num_rows(),
        sf.blocks.len()
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

fn validate(feeder: &Path, profiles: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let f = load_feeder(feeder)?;
    let w = |e: std::io::Error| CliError::Data(e.to_string());
    let pv: f64 = pv_capacities(&f).iter().sum();
    writeln!(out, "feeder              {}", f.name()).map_err(w)?;
    writeln!(out, "buses               {} plus root", f.n()).map_err(w)?;
    writeln!(out, "peak load           {:.6} p.u.", f.peak_load()).map_err(w)?;
    writeln!(out, "pv capacity         {:.6} p.u.", pv).map_err(w)?;
    writeln!(out, "capacitors          {}", f.capacitors().len()).map_err(w)?;
    writeln!(
        out,
        "shunts              {}",
        (1..=f.n()).filter(|&l| f.line(l).b != 0.0).count()
    )
    .map_err(w)?;
    writeln!(
        out,
        "current bounds      {}",
        (1..=f.n()).filter(|&l| f.line(l).imax.is_some()).count()
    )
    .map_err(w)?;
    if let Some(p) = profiles {
        let prof = crate::network::load_profiles(p)?;
        for h in 0..prof.hours() {
            build_scenario(&f, &prof, h, &ScenarioOptions::default())?;
        }
        writeln!(out, "profile hours       {}", prof.hours()).map_err(w)?;
    }
    Ok(())
}
