//! Branch-flow optimal power flow as conic programs.
//!
//! Every program shares the base model (flow balance at both line ends,
//! voltage drop, bounds, withdrawal regions). The relaxation replaces the
//! current definition `f = |S^t + j v_up b|² / v_up` by the rotated cone
//! `v_up f >= |S^t + j v_up b|²`; the equality itself is never a constraint
//! and survives only as the residual computed by [`crate::exactness`].
//!
//! Augmentations add auxiliary systems:
//!
//! * lossless bus-end flows `Ŝ^b` and voltages `v̄` with `v̄ <= v^max` (Gan),
//! * the same plus `Re(z_m^* Ŝ^b_l) >= 0` for every `m` downstream of `l` (Huang),
//! * shunt-aware lossless flows `Ŝ^t`, an upper lossy system `S̄^t`, `f̄`, and
//!   max-form cones expanded into one cone per candidate pair (Nick).

use std::fmt;

use distrelax_conic::{
    solve, to_standard_form, ConicProgram, IndexMap, LinExpr, ModelSolution, Settings, SolveError,
    StandardForm, Status,
};
use num_complex::Complex64;
use thiserror::Error;

use crate::network::{downstream_sets, Feeder, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ropf,
    Gan,
    Huang,
    Nick,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ropf, Method::Gan, Method::Huang, Method::Nick];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ropf => "ropf",
            Method::Gan => "gan",
            Method::Huang => "huang",
            Method::Nick => "nick",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }

    pub fn allows_shunts(&self) -> bool {
        matches!(self, Method::Ropf | Method::Nick)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Simulation configuration: which line features are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Configuration {
    /// No shunts, no current bounds.
    NsNc,
    /// No shunts, current bounds.
    NsC,
    /// Shunts and current bounds.
    SC,
}

impl Configuration {
    pub const ALL: [Configuration; 3] = [Configuration::NsNc, Configuration::NsC, Configuration::SC];

    pub fn as_str(&self) -> &'static str {
        match self {
            Configuration::NsNc => "ns-nc",
            Configuration::NsC => "ns-c",
            Configuration::SC => "s-c",
        }
    }

    pub fn parse(s: &str) -> Option<Configuration> {
        Configuration::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }

    pub fn shunts(&self) -> bool {
        matches!(self, Configuration::SC)
    }

    pub fn current_bounds(&self) -> bool {
        !matches!(self, Configuration::NsNc)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Minimize active power import plus linear withdrawal costs.
    MinActiveImport,
    /// Minimize `(Q_import - q_ref)²`.
    ReactiveTarget(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormulationConfig {
    pub method: Method,
    pub shunts: bool,
    pub current_bounds: bool,
    pub apparent_bounds: bool,
    pub objective: Objective,
    /// Fixes the reactive import to a value.
    pub fixed_reactive_import: Option<f64>,
    /// Weight of `Σ f_l` added to the objective.
    pub penalty: f64,
    /// Linear withdrawal costs `(bus, cost on p, cost on q)`.
    pub bus_costs: Vec<(usize, f64, f64)>,
    /// Linear costs on active and reactive import, on top of the objective.
    pub import_costs: (f64, f64),
    /// Bound the top-of-line Nick current candidates by `v_up I^max` instead
    /// of `v_l I^max`.
    pub nick_top_bound_upstream: bool,
}

impl FormulationConfig {
    pub fn new(method: Method, configuration: Configuration) -> Self {
        FormulationConfig {
            method,
            shunts: configuration.shunts(),
            current_bounds: configuration.current_bounds(),
            apparent_bounds: false,
            objective: Objective::MinActiveImport,
            fixed_reactive_import: None,
            penalty: 0.0,
            bus_costs: Vec::new(),
            import_costs: (0.0, 0.0),
            nick_top_bound_upstream: false,
        }
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_fixed_reactive_import(mut self, q: f64) -> Self {
        self.fixed_reactive_import = Some(q);
        self
    }

    pub fn check(&self) -> Result<(), FormulationError> {
        if self.shunts && !self.method.allows_shunts() {
            return Err(FormulationError::ShuntsUnsupported(self.method));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(FormulationError::NegativePenalty(self.penalty));
        }
        if matches!(self.objective, Objective::ReactiveTarget(_)) && self.fixed_reactive_import.is_some() {
            return Err(FormulationError::ContradictoryObjective);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FormulationError {
    #[error("method {0} does not model line shunts")]
    ShuntsUnsupported(Method),
    #[error("penalty weight must be nonnegative, got {0}")]
    NegativePenalty(f64),
    #[error("a reactive import target cannot be combined with a fixed reactive import")]
    ContradictoryObjective,
    #[error("scenario has {found} regions, feeder has {expected} buses")]
    ScenarioMismatch { expected: usize, found: usize },
    #[error("augmentation needs {0}")]
    MissingPrerequisite(&'static str),
}

/// Constraint family of a row or cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    BusFlow,
    TopFlow,
    VoltageDrop,
    VoltageMin,
    VoltageMax,
    CurrentBusEnd,
    CurrentTop,
    ApparentBusEnd,
    ApparentTop,
    Withdrawal,
    RelaxedCurrent,
    LosslessBusFlow,
    LosslessVoltage,
    LosslessVoltageMax,
    ReverseFlow,
    LosslessTopFlow,
    UpperTopFlow,
    UpperCurrentBusEnd,
    UpperCurrentTop,
    EndpointFlow,
    UpperBoundBusEnd,
    UpperBoundTop,
    Bracket,
    ImportFix,
    TargetEpigraph,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::BusFlow => "bus-flow",
            Family::TopFlow => "top-flow",
            Family::VoltageDrop => "voltage-drop",
            Family::VoltageMin => "voltage-min",
            Family::VoltageMax => "voltage-max",
            Family::CurrentBusEnd => "current-bus-end",
            Family::CurrentTop => "current-top",
            Family::ApparentBusEnd => "apparent-bus-end",
            Family::ApparentTop => "apparent-top",
            Family::Withdrawal => "withdrawal",
            Family::RelaxedCurrent => "relaxed-current",
            Family::LosslessBusFlow => "lossless-bus-flow",
            Family::LosslessVoltage => "lossless-voltage",
            Family::LosslessVoltageMax => "lossless-voltage-max",
            Family::ReverseFlow => "reverse-flow",
            Family::LosslessTopFlow => "lossless-top-flow",
            Family::UpperTopFlow => "upper-top-flow",
            Family::UpperCurrentBusEnd => "upper-current-bus-end",
            Family::UpperCurrentTop => "upper-current-top",
            Family::EndpointFlow => "endpoint-flow",
            Family::UpperBoundBusEnd => "upper-bound-bus-end",
            Family::UpperBoundTop => "upper-bound-top",
            Family::Bracket => "bracket",
            Family::ImportFix => "import-fix",
            Family::TargetEpigraph => "target-epigraph",
        }
    }
}

/// Family plus the bus or line the constraint belongs to (0 for global rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    pub family: Family,
    pub element: usize,
}

fn tag(family: Family, element: usize) -> Tag {
    Tag { family, element }
}

/// Variable indices of a complex quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub p: usize,
    pub q: usize,
}

impl Pair {
    pub fn value(&self, x: &[f64]) -> Complex64 {
        Complex64::new(x[self.p], x[self.q])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LosslessVars {
    pub vbar: Vec<usize>,
    pub sb_hat: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NickVars {
    pub vbar: Vec<usize>,
    pub st_hat: Vec<Pair>,
    pub sb_hat: Vec<Pair>,
    pub st_bar: Vec<Pair>,
    pub sb_bar: Vec<Pair>,
    pub fbar: Vec<usize>,
}

/// Per-element variables; entry `l - 1` belongs to bus or line `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableIndex {
    pub v: Vec<usize>,
    pub f: Vec<usize>,
    pub st: Vec<Pair>,
    pub sb: Vec<Pair>,
    pub s: Vec<Pair>,
    pub pv_p: Vec<Option<usize>>,
    pub pv_q: Vec<Option<usize>>,
    pub cap: Vec<Option<usize>>,
    pub gan: Option<LosslessVars>,
    pub nick: Option<NickVars>,
    pub target: Option<usize>,
}

/// A built program together with its variable index.
#[derive(Debug, Clone)]
pub struct Formulation {
    pub program: ConicProgram<Tag>,
    pub index: VariableIndex,
    pub config: FormulationConfig,
    /// Objective without the current penalty.
    pub true_objective: LinExpr,
    feeder: Feeder,
    scenario: Scenario,
}

/// Solution of a formulation in model terms.
#[derive(Debug, Clone)]
pub struct OpfSolution {
    pub model: ModelSolution,
    /// Objective without the current penalty.
    pub true_objective: f64,
}

impl OpfSolution {
    pub fn status(&self) -> Status {
        self.model.status
    }

    pub fn x(&self) -> &[f64] {
        &self.model.x
    }

    pub fn objective(&self) -> f64 {
        self.model.objective
    }
}

fn line_b(feeder: &Feeder, config: &FormulationConfig, l: usize) -> f64 {
    if config.shunts {
        feeder.line(l).b
    } else {
        0.0
    }
}

impl Formulation {
    pub fn feeder(&self) -> &Feeder {
        &self.feeder
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Shunt susceptance as modelled (zero with shunts off).
    pub fn b(&self, l: usize) -> f64 {
        line_b(&self.feeder, &self.config, l)
    }

    /// Expression of the squared voltage at bus `k` (constant at the root).
    pub fn v_expr(&self, k: usize) -> LinExpr {
        if k == 0 {
            LinExpr::constant(self.feeder.v0())
        } else {
            LinExpr::var(self.index.v[k - 1])
        }
    }

    pub fn voltage(&self, x: &[f64], k: usize) -> f64 {
        if k == 0 {
            self.feeder.v0()
        } else {
            x[self.index.v[k - 1]]
        }
    }

    pub fn current(&self, x: &[f64], l: usize) -> f64 {
        x[self.index.f[l - 1]]
    }

    pub fn top_flow(&self, x: &[f64], l: usize) -> Complex64 {
        self.index.st[l - 1].value(x)
    }

    pub fn bus_flow(&self, x: &[f64], l: usize) -> Complex64 {
        self.index.sb[l - 1].value(x)
    }

    pub fn withdrawal(&self, x: &[f64], l: usize) -> Complex64 {
        self.index.s[l - 1].value(x)
    }

    pub fn withdrawals(&self, x: &[f64]) -> Vec<Complex64> {
        (1..=self.feeder.n()).map(|l| self.withdrawal(x, l)).collect()
    }

    pub fn import_expr(&self) -> (LinExpr, LinExpr) {
        let mut p = LinExpr::zero();
        let mut q = LinExpr::zero();
        for &l in self.feeder.root_lines() {
            p.add_term(self.index.st[l - 1].p, 1.0);
            q.add_term(self.index.st[l - 1].q, 1.0);
        }
        (p, q)
    }

    pub fn import(&self, x: &[f64]) -> Complex64 {
        let (p, q) = self.import_expr();
        Complex64::new(p.eval(x), q.eval(x))
    }

    pub fn standard_form(&self) -> (StandardForm, IndexMap) {
        to_standard_form(&self.program)
    }

    pub fn solve(&self, settings: &Settings) -> Result<OpfSolution, SolveError> {
        let (sf, map) = self.standard_form();
        let sol = solve(&sf, settings)?;
        let model = map.recover(&self.program, &sol);
        let true_objective = self.true_objective.eval(&model.x);
        Ok(OpfSolution { model, true_objective })
    }

    /// Rows or cones of one family, with their positions.
    pub fn rows_of(&self, family: Family) -> impl Iterator<Item = (usize, &Tag)> {
        self.program
            .rows
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.tag.family == family)
            .map(|(i, r)| (i, &r.tag))
    }

    pub fn cones_of(&self, family: Family) -> impl Iterator<Item = (usize, &Tag)> {
        self.program
            .cones
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.tag.family == family)
            .map(|(i, c)| (i, &c.tag))
    }

    /// Lines whose Nick current-bound candidates include a negative value at `x`.
    pub fn negative_candidates(&self, x: &[f64]) -> Vec<usize> {
        let Some(nick) = &self.index.nick else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for l in 1..=self.feeder.n() {
            if !(self.config.current_bounds && self.feeder.line(l).imax.is_some()) {
                continue;
            }
            let i = l - 1;
            let vals = [nick.sb_hat[i], nick.sb_bar[i], nick.st_hat[i], nick.st_bar[i]];
            if vals.iter().any(|p| x[p.p] < 0.0 || x[p.q] < 0.0) {
                out.push(l);
            }
        }
        out
    }

    /// Same feasible set with objective `Σ f` and the extra row
    /// `true objective <= bound`: searches the optimal face for a point that
    /// makes every relaxed cone tight.
    pub fn lexicographic_probe(&self, bound: f64) -> Formulation {
        let mut probe = self.clone();
        let mut row = self.true_objective.clone();
        row.constant -= bound;
        probe.program.add_le(row, tag(Family::TargetEpigraph, 0));
        let mut obj = LinExpr::zero();
        for &fi in &self.index.f {
            obj.add_term(fi, 1.0);
        }
        probe.program.objective = obj;
        probe.config.penalty = 0.0;
        probe
    }
}

/// Builds the complete program for `config.method`.
pub fn build(feeder: &Feeder, scenario: &Scenario, config: &FormulationConfig) -> Result<Formulation, FormulationError> {
    let mut form = build_base_constraints(feeder, scenario, config)?;
    add_socp_relaxation(&mut form);
    match config.method {
        Method::Ropf => {}
        Method::Gan => add_gan_augmentation(&mut form)?,
        Method::Huang => {
            add_gan_augmentation(&mut form)?;
            add_huang_augmentation(&mut form)?;
        }
        Method::Nick => add_nick_augmentation(&mut form)?,
    }
    set_objective(&mut form)?;
    add_current_penalty(&mut form, config.penalty)?;
    Ok(form)
}

/// Flow balance, voltage drop, bounds and withdrawal regions.
pub fn build_base_constraints(
    feeder: &Feeder,
    scenario: &Scenario,
    config: &FormulationConfig,
) -> Result<Formulation, FormulationError> {
    config.check()?;
    let n = feeder.n();
    if scenario.regions.len() != n {
        return Err(FormulationError::ScenarioMismatch {
            expected: n,
            found: scenario.regions.len(),
        });
    }
    let mut prog: ConicProgram<Tag> = ConicProgram::new();
    let pair = |prog: &mut ConicProgram<Tag>, name: &str, l: usize| Pair {
        p: prog.add_var(format!("P{name}_{l}")),
        q: prog.add_var(format!("Q{name}_{l}")),
    };
    let mut idx = VariableIndex {
        v: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        st: Vec::with_capacity(n),
        sb: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        pv_p: vec![None; n],
        pv_q: vec![None; n],
        cap: vec![None; n],
        gan: None,
        nick: None,
        target: None,
    };
    for l in 1..=n {
        idx.v.push(prog.add_var(format!("v_{l}")));
        idx.f.push(prog.add_var(format!("f_{l}")));
        let st = pair(&mut prog, "t", l);
        idx.st.push(st);
        let sb = pair(&mut prog, "b", l);
        idx.sb.push(sb);
        let s = pair(&mut prog, "s", l);
        idx.s.push(s);
    }
    let v_expr = |k: usize| {
        if k == 0 {
            LinExpr::constant(feeder.v0())
        } else {
            LinExpr::var(idx.v[k - 1])
        }
    };

    for l in 1..=n {
        let i = l - 1;
        let line = feeder.line(l);
        let k = line.up;
        let (r, x) = (line.z.re, line.z.im);
        let b = line_b(feeder, config, l);
        let (st, sb, s) = (idx.st[i], idx.sb[i], idx.s[i]);

        // S^b = s + Σ_children S^t
        let mut pb = LinExpr::var(sb.p).with_term(s.p, -1.0);
        let mut qb = LinExpr::var(sb.q).with_term(s.q, -1.0);
        for &c in feeder.children(l) {
            pb.add_term(idx.st[c - 1].p, -1.0);
            qb.add_term(idx.st[c - 1].q, -1.0);
        }
        prog.add_eq(pb, tag(Family::BusFlow, l));
        prog.add_eq(qb, tag(Family::BusFlow, l));

        // S^t = S^b + z f - j (v_up + v_l) b
        prog.add_eq(
            LinExpr::var(st.p).with_term(sb.p, -1.0).with_term(idx.f[i], -r),
            tag(Family::TopFlow, l),
        );
        let mut qt = LinExpr::var(st.q).with_term(sb.q, -1.0).with_term(idx.f[i], -x);
        if b != 0.0 {
            qt.add_expr(&v_expr(k), b);
            qt.add_term(idx.v[i], b);
        }
        prog.add_eq(qt, tag(Family::TopFlow, l));

        // v_l = v_up - 2 (r P^t + x (Q^t + v_up b)) + |z|² f
        let mut drop = LinExpr::var(idx.v[i]);
        drop.add_expr(&v_expr(k), -(1.0 - 2.0 * x * b));
        drop.add_term(st.p, 2.0 * r);
        drop.add_term(st.q, 2.0 * x);
        drop.add_term(idx.f[i], -line.z.norm_sqr());
        prog.add_eq(drop, tag(Family::VoltageDrop, l));

        let bus = feeder.bus(l);
        prog.add_ge(LinExpr::var(idx.v[i]).with_constant(-bus.vmin), tag(Family::VoltageMin, l));
        prog.add_le(LinExpr::var(idx.v[i]).with_constant(-bus.vmax), tag(Family::VoltageMax, l));

        if config.current_bounds {
            if let Some(imax) = line.imax {
                prog.add_rotated_soc(
                    LinExpr::var(idx.v[i]).scaled(0.5 * imax),
                    LinExpr::constant(1.0),
                    vec![LinExpr::var(sb.p), LinExpr::var(sb.q)],
                    tag(Family::CurrentBusEnd, l),
                );
                prog.add_rotated_soc(
                    v_expr(k).scaled(0.5 * imax),
                    LinExpr::constant(1.0),
                    vec![LinExpr::var(st.p), LinExpr::var(st.q)],
                    tag(Family::CurrentTop, l),
                );
            }
        }
        if config.apparent_bounds {
            if let Some(smax) = line.smax {
                prog.add_soc(
                    vec![LinExpr::constant(smax), LinExpr::var(sb.p), LinExpr::var(sb.q)],
                    tag(Family::ApparentBusEnd, l),
                );
                prog.add_soc(
                    vec![LinExpr::constant(smax), LinExpr::var(st.p), LinExpr::var(st.q)],
                    tag(Family::ApparentTop, l),
                );
            }
        }

        // withdrawal region
        let reg = scenario.region(l);
        let w = tag(Family::Withdrawal, l);
        match reg.point() {
            Some(s0) => {
                prog.add_eq(LinExpr::var(s.p).with_constant(-s0.re), w);
                prog.add_eq(LinExpr::var(s.q).with_constant(-s0.im), w);
            }
            None => {
                // p = load_p - pv_p ; q = load_q - pv_q - cap
                let mut pe = LinExpr::var(s.p).with_constant(-reg.load.re);
                let mut qe = LinExpr::var(s.q).with_constant(-reg.load.im + reg.fixed_cap());
                if reg.has_pv() {
                    let pp = prog.add_var(format!("ppv_{l}"));
                    let pq = prog.add_var(format!("qpv_{l}"));
                    idx.pv_p[i] = Some(pp);
                    idx.pv_q[i] = Some(pq);
                    pe.add_term(pp, 1.0);
                    qe.add_term(pq, 1.0);
                    prog.add_ge(LinExpr::var(pp), w);
                    prog.add_le(LinExpr::var(pp).with_constant(-reg.pv_avail), w);
                    prog.add_soc(
                        vec![LinExpr::constant(reg.pv_nameplate), LinExpr::var(pp), LinExpr::var(pq)],
                        w,
                    );
                }
                if reg.cap_variable && reg.cap_q > 0.0 {
                    let c = prog.add_var(format!("qcap_{l}"));
                    idx.cap[i] = Some(c);
                    qe.add_term(c, 1.0);
                    prog.add_ge(LinExpr::var(c), w);
                    prog.add_le(LinExpr::var(c).with_constant(-reg.cap_q), w);
                }
                prog.add_eq(pe, w);
                prog.add_eq(qe, w);
            }
        }
    }

    Ok(Formulation {
        program: prog,
        index: idx,
        config: config.clone(),
        true_objective: LinExpr::zero(),
        feeder: feeder.clone(),
        scenario: scenario.clone(),
    })
}

/// `v_up f >= P^t² + (Q^t + v_up b)²` for every line.
pub fn add_socp_relaxation(form: &mut Formulation) {
    for l in 1..=form.feeder.n() {
        let i = l - 1;
        let k = form.feeder.up(l);
        let b = form.b(l);
        let vk = form.v_expr(k);
        let st = form.index.st[i];
        let mut q = LinExpr::var(st.q);
        if b != 0.0 {
            q.add_expr(&vk, b);
        }
        form.program.add_rotated_soc(
            vk.scaled(0.5),
            LinExpr::var(form.index.f[i]),
            vec![LinExpr::var(st.p), q],
            tag(Family::RelaxedCurrent, l),
        );
    }
}

/// Lossless bus-end flows, lossless voltages and their upper bound.
pub fn add_gan_augmentation(form: &mut Formulation) -> Result<(), FormulationError> {
    if form.config.shunts {
        return Err(FormulationError::ShuntsUnsupported(Method::Gan));
    }
    let n = form.feeder.n();
    let prog = &mut form.program;
    let mut vars = LosslessVars {
        vbar: Vec::with_capacity(n),
        sb_hat: Vec::with_capacity(n),
    };
    for l in 1..=n {
        vars.vbar.push(prog.add_var(format!("vbar_{l}")));
        vars.sb_hat.push(Pair {
            p: prog.add_var(format!("Pbhat_{l}")),
            q: prog.add_var(format!("Qbhat_{l}")),
        });
    }
    let feeder = &form.feeder;
    let vbar = |k: usize| {
        if k == 0 {
            LinExpr::constant(feeder.v0())
        } else {
            LinExpr::var(vars.vbar[k - 1])
        }
    };
    for l in 1..=n {
        let i = l - 1;
        let s = form.index.s[i];
        let h = vars.sb_hat[i];
        let mut pe = LinExpr::var(h.p).with_term(s.p, -1.0);
        let mut qe = LinExpr::var(h.q).with_term(s.q, -1.0);
        for &c in feeder.children(l) {
            pe.add_term(vars.sb_hat[c - 1].p, -1.0);
            qe.add_term(vars.sb_hat[c - 1].q, -1.0);
        }
        prog.add_eq(pe, tag(Family::LosslessBusFlow, l));
        prog.add_eq(qe, tag(Family::LosslessBusFlow, l));

        let z = feeder.line(l).z;
        let mut drop = vbar(l);
        drop.add_expr(&vbar(feeder.up(l)), -1.0);
        drop.add_term(h.p, 2.0 * z.re);
        drop.add_term(h.q, 2.0 * z.im);
        prog.add_eq(drop, tag(Family::LosslessVoltage, l));
        prog.add_le(
            vbar(l).with_constant(-feeder.bus(l).vmax),
            tag(Family::LosslessVoltageMax, l),
        );
    }
    form.index.gan = Some(vars);
    Ok(())
}

/// `r_m P̂^b_l + x_m Q̂^b_l >= 0` for every line `l` and every `m` downstream of `l`.
pub fn add_huang_augmentation(form: &mut Formulation) -> Result<(), FormulationError> {
    if form.config.shunts {
        return Err(FormulationError::ShuntsUnsupported(Method::Huang));
    }
    let gan = form
        .index
        .gan
        .as_ref()
        .ok_or(FormulationError::MissingPrerequisite("the lossless bus-end flows"))?;
    let down = downstream_sets(&form.feeder);
    for l in 1..=form.feeder.n() {
        let h = gan.sb_hat[l - 1];
        for &m in &down[l] {
            let z = form.feeder.line(m).z;
            form.program.add_ge(
                LinExpr::from_terms(&[(h.p, z.re), (h.q, z.im)], 0.0),
                tag(Family::ReverseFlow, l),
            );
        }
    }
    Ok(())
}

/// Bracketing bounds for the upper lossy flows: ten times the sum over the
/// feeder of the largest-magnitude admissible withdrawal, plus shunt charging
/// on the reactive side. Deliberately slack so they never cut the feasible set.
pub fn bracket_bounds(feeder: &Feeder, scenario: &Scenario, shunts: bool) -> (f64, f64) {
    let mut p = 0.0;
    let mut q = 0.0;
    for l in 1..=feeder.n() {
        let r = scenario.region(l);
        let (lo, hi) = (r.min_withdrawal(), r.max_withdrawal());
        p += lo.re.abs().max(hi.re.abs());
        q += lo.im.abs().max(hi.im.abs());
        if shunts {
            q += 2.0 * feeder.bus(l).vmax.max(feeder.v0()) * feeder.line(l).b;
        }
    }
    (10.0 * p.max(0.1), 10.0 * q.max(0.1))
}

/// Shunt-aware lossless system, upper lossy system and the max-form cones.
pub fn add_nick_augmentation(form: &mut Formulation) -> Result<(), FormulationError> {
    let n = form.feeder.n();
    let prog = &mut form.program;
    let pair = |prog: &mut ConicProgram<Tag>, name: &str, l: usize| Pair {
        p: prog.add_var(format!("P{name}_{l}")),
        q: prog.add_var(format!("Q{name}_{l}")),
    };
    let mut nv = NickVars {
        vbar: Vec::with_capacity(n),
        st_hat: Vec::with_capacity(n),
        sb_hat: Vec::with_capacity(n),
        st_bar: Vec::with_capacity(n),
        sb_bar: Vec::with_capacity(n),
        fbar: Vec::with_capacity(n),
    };
    for l in 1..=n {
        nv.vbar.push(prog.add_var(format!("vbar_{l}")));
        nv.st_hat.push(pair(prog, "that", l));
        nv.sb_hat.push(pair(prog, "bhat", l));
        nv.st_bar.push(pair(prog, "tbar", l));
        nv.sb_bar.push(pair(prog, "bbar", l));
        nv.fbar.push(prog.add_var(format!("fbar_{l}")));
    }
    let feeder = &form.feeder;
    let idx = &form.index;
    let config = &form.config;
    let vbar = |k: usize| {
        if k == 0 {
            LinExpr::constant(feeder.v0())
        } else {
            LinExpr::var(nv.vbar[k - 1])
        }
    };
    let v = |k: usize| {
        if k == 0 {
            LinExpr::constant(feeder.v0())
        } else {
            LinExpr::var(idx.v[k - 1])
        }
    };
    let (pmax, qmax) = bracket_bounds(feeder, &form.scenario, config.shunts);

    for l in 1..=n {
        let i = l - 1;
        let k = feeder.up(l);
        let line = feeder.line(l);
        let (r, x) = (line.z.re, line.z.im);
        let b = line_b(feeder, config, l);
        let s = idx.s[i];
        let (th, bh, tb, bb) = (nv.st_hat[i], nv.sb_hat[i], nv.st_bar[i], nv.sb_bar[i]);

        // Ŝ^t = s + Σ Ŝ^t_children - j (v̄_up + v̄_l) b
        let mut pe = LinExpr::var(th.p).with_term(s.p, -1.0);
        let mut qe = LinExpr::var(th.q).with_term(s.q, -1.0);
        // S̄^t = s + Σ S̄^t_children + z f̄
        let mut pu = LinExpr::var(tb.p).with_term(s.p, -1.0).with_term(nv.fbar[i], -r);
        let mut qu = LinExpr::var(tb.q).with_term(s.q, -1.0).with_term(nv.fbar[i], -x);
        // Ŝ^b = s + Σ Ŝ^t_children ; S̄^b = s + Σ S̄^t_children
        let mut pbh = LinExpr::var(bh.p).with_term(s.p, -1.0);
        let mut qbh = LinExpr::var(bh.q).with_term(s.q, -1.0);
        let mut pbb = LinExpr::var(bb.p).with_term(s.p, -1.0);
        let mut qbb = LinExpr::var(bb.q).with_term(s.q, -1.0);
        for &c in feeder.children(l) {
            let (ch, cb) = (nv.st_hat[c - 1], nv.st_bar[c - 1]);
            pe.add_term(ch.p, -1.0);
            qe.add_term(ch.q, -1.0);
            pu.add_term(cb.p, -1.0);
            qu.add_term(cb.q, -1.0);
            pbh.add_term(ch.p, -1.0);
            qbh.add_term(ch.q, -1.0);
            pbb.add_term(cb.p, -1.0);
            qbb.add_term(cb.q, -1.0);
        }
        if b != 0.0 {
            qe.add_expr(&vbar(k), b);
            qe.add_expr(&vbar(l), b);
        }
        prog.add_eq(pe, tag(Family::LosslessTopFlow, l));
        prog.add_eq(qe, tag(Family::LosslessTopFlow, l));
        prog.add_eq(pu, tag(Family::UpperTopFlow, l));
        prog.add_eq(qu, tag(Family::UpperTopFlow, l));
        prog.add_eq(pbh, tag(Family::EndpointFlow, l));
        prog.add_eq(qbh, tag(Family::EndpointFlow, l));
        prog.add_eq(pbb, tag(Family::EndpointFlow, l));
        prog.add_eq(qbb, tag(Family::EndpointFlow, l));

        // v̄_l = v̄_up - 2 (r P̂^t + x (Q̂^t + v̄_up b))
        let mut drop = vbar(l);
        drop.add_expr(&vbar(k), -(1.0 - 2.0 * x * b));
        drop.add_term(th.p, 2.0 * r);
        drop.add_term(th.q, 2.0 * x);
        prog.add_eq(drop, tag(Family::LosslessVoltage, l));

        // f̄ v_l >= max{P̂^b², P̄^b²} + max{(Q̂^b - v̄_l b)², (Q̄^b - v_l b)²}
        let q_hat_b = LinExpr::var(bh.q).add_expr(&vbar(l), -b).clone();
        let q_bar_b = LinExpr::var(bb.q).add_expr(&v(l), -b).clone();
        for pc in [bh.p, bb.p] {
            for qc in [&q_hat_b, &q_bar_b] {
                prog.add_rotated_soc(
                    v(l).scaled(0.5),
                    LinExpr::var(nv.fbar[i]),
                    vec![LinExpr::var(pc), qc.compact()],
                    tag(Family::UpperCurrentBusEnd, l),
                );
            }
        }
        // f̄ v_up >= max{P̂^t², P̄^t²} + max{(Q̂^t - v̄_up b)², (Q̄^t - v_up b)²}
        let q_hat_t = LinExpr::var(th.q).add_expr(&vbar(k), -b).clone();
        let q_bar_t = LinExpr::var(tb.q).add_expr(&v(k), -b).clone();
        for pc in [th.p, tb.p] {
            for qc in [&q_hat_t, &q_bar_t] {
                prog.add_rotated_soc(
                    v(k).scaled(0.5),
                    LinExpr::var(nv.fbar[i]),
                    vec![LinExpr::var(pc), qc.compact()],
                    tag(Family::UpperCurrentTop, l),
                );
            }
        }

        prog.add_le(vbar(l).with_constant(-feeder.bus(l).vmax), tag(Family::LosslessVoltageMax, l));

        if config.current_bounds {
            if let Some(imax) = line.imax {
                let top_v = if config.nick_top_bound_upstream { v(k) } else { v(l) };
                for (family, cands, vb) in [
                    (Family::UpperBoundBusEnd, [bh, bb], v(l)),
                    (Family::UpperBoundTop, [th, tb], top_v),
                ] {
                    for pc in cands.map(|c| c.p) {
                        for qc in cands.map(|c| c.q) {
                            prog.add_rotated_soc(
                                vb.scaled(0.5 * imax),
                                LinExpr::constant(1.0),
                                vec![LinExpr::var(pc), LinExpr::var(qc)],
                                tag(family, l),
                            );
                        }
                    }
                }
            }
        }

        let st = idx.st[i];
        prog.add_le(LinExpr::var(st.p).with_term(tb.p, -1.0), tag(Family::Bracket, l));
        prog.add_le(LinExpr::var(tb.p).with_constant(-pmax), tag(Family::Bracket, l));
        prog.add_le(LinExpr::var(st.q).with_term(tb.q, -1.0), tag(Family::Bracket, l));
        prog.add_le(LinExpr::var(tb.q).with_constant(-qmax), tag(Family::Bracket, l));
    }
    form.index.nick = Some(nv);
    Ok(())
}

/// Installs the configured objective (without penalty).
pub fn set_objective(form: &mut Formulation) -> Result<(), FormulationError> {
    form.config.check()?;
    let (p_imp, q_imp) = form.import_expr();
    let mut obj = match form.config.objective {
        Objective::MinActiveImport => p_imp.clone(),
        Objective::ReactiveTarget(q_ref) => {
            let t = form.program.add_var("target");
            form.index.target = Some(t);
            form.program.add_rotated_soc(
                LinExpr::var(t).scaled(0.5),
                LinExpr::constant(1.0),
                vec![q_imp.clone().with_constant(-q_ref)],
                tag(Family::TargetEpigraph, 0),
            );
            LinExpr::var(t)
        }
    };
    if let Some(q) = form.config.fixed_reactive_import {
        form.program.add_eq(q_imp.clone().with_constant(-q), tag(Family::ImportFix, 0));
    }
    let (cp, cq) = form.config.import_costs;
    obj.add_expr(&p_imp, cp);
    obj.add_expr(&q_imp, cq);
    for &(l, cp, cq) in &form.config.bus_costs {
        let s = form.index.s[l - 1];
        obj.add_term(s.p, cp);
        obj.add_term(s.q, cq);
    }
    let obj = obj.compact();
    form.true_objective = obj.clone();
    form.program.objective = obj;
    Ok(())
}

/// Adds `ε Σ f_l` to the objective (the upper currents `f̄` are not penalized).
pub fn add_current_penalty(form: &mut Formulation, eps: f64) -> Result<(), FormulationError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(FormulationError::NegativePenalty(eps));
    }
    form.config.penalty = eps;
    if eps == 0.0 {
        return Ok(());
    }
    let mut obj = form.true_objective.clone();
    for &fi in &form.index.f {
        obj.add_term(fi, eps);
    }
    form.program.objective = obj.compact();
    Ok(())
}

/// Solves with default tolerances.
pub fn solve_default(form: &Formulation) -> Result<OpfSolution, SolveError> {
    form.solve(&Settings::default())
}
