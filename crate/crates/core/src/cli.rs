// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Scenario files, task dispatch and report emission.
//!
//! A scenario is one JSON document (see `docs/scenario.schema.json`).
//! Matrices are row-major nested arrays. Every report carries a
//! `resolved_scenario` that [`load_scenario`] accepts in place of a scenario
//! and that reproduces the run exactly.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::observability::{
    self, compose_obs, delta_obs_constant, finite_obs_constant, hypothesis_verdict,
    interpolation_estimate, rank_condition, ObservabilityError, ObservabilityReport,
    SamplingOptions,
};
use crate::schedule::{pick_schedule_detailed, ImpulseSchedule};
use crate::spectral::{
    Controller, CoupledSystem, Interval, ModalState, SpectralDomain, SpectralError,
};
use crate::synthesis::{
    self, gramian_delta, Certificate, ControlSequence, PgOptions, SteeringResult, SynthesisError,
};
use crate::witness::{self, WitnessError};

pub const DEFAULT_K_MAX: usize = 64;
pub const DEFAULT_ELL_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Check,
    Observability,
    SynthesizeGcac,
    SynthesizeNull,
    SynthesizeLocal,
    Witness,
    Simulate,
}

impl Task {
    pub fn label(self) -> &'static str {
        match self {
            Task::Check => "check",
            Task::Observability => "observability",
            Task::SynthesizeGcac => "synthesize-gcac",
            Task::SynthesizeNull => "synthesize-null",
            Task::SynthesizeLocal => "synthesize-local",
            Task::Witness => "witness",
            Task::Simulate => "simulate",
        }
    }

    fn sampled(self) -> bool {
        matches!(self, Task::Observability | Task::Witness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    pub system: SystemSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// Domain length `L`; defaults to `π`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    pub modes: usize,
    pub p: Vec<Vec<f64>>,
    pub controllers: Vec<ControllerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    /// `(a, b) ⊆ (0, L)`; the whole domain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
}

/// `"auto"` or explicit base times `t_1 < … < t_ħ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Keyword(String),
    Times(Vec<f64>),
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// Gaussian coefficients rescaled to `norm`; needs a seed.
    Random { norm: f64 },
    /// `g·e_index` with a 1-based mode index.
    Mode { index: usize, g: Vec<f64> },
    /// Full `n × N` coefficient array, row-major.
    Coefficients { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// Horizon for observability constants and plain simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Horizons probed by the witness task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
    /// Witness initial state scale as a multiple of the threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Number of period blocks to compose `D` over.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compose_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<InitialState>,
    /// Impulses for `simulate`, each `m × N` row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Vec<Vec<f64>>>>,
}

/// File names, resolved against the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("task {0} draws samples and needs a seed")]
    MissingSeed(&'static str),
    #[error("no task given on the command line or in the scenario")]
    MissingTask,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0}")]
    Inapplicable(String),
    #[error("synthesis failed: {0}")]
    Failure(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io-error",
            CliError::Parse { .. } => "parse-error",
            CliError::Dimension(_) => "dimension-mismatch",
            CliError::Invariant(_) => "invariant-violation",
            CliError::MissingSeed(_) => "missing-seed",
            CliError::MissingTask => "missing-task",
            CliError::Precondition(_) => "precondition",
            CliError::Inapplicable(_) => "inapplicable",
            CliError::Failure(_) => "synthesis-failure",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failure(_) => 2,
            _ => 1,
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Dimension(s) => CliError::Dimension(s),
            SpectralError::Linalg(l) => CliError::Numerical(l.to_string()),
            other => CliError::Invariant(other.to_string()),
        }
    }
}

impl From<ObservabilityError> for CliError {
    fn from(e: ObservabilityError) -> Self {
        match e {
            ObservabilityError::RankFailure { .. } => CliError::Precondition(e.to_string()),
            ObservabilityError::Spectral(s) => s.into(),
            ObservabilityError::ControllerCount { .. } => CliError::Dimension(e.to_string()),
            ObservabilityError::BadArgument(_) | ObservabilityError::BadTimes => {
                CliError::Invariant(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::HorizonExhausted { .. } | SynthesisError::RankFailure(_) => {
                CliError::Failure(e.to_string())
            }
            SynthesisError::Precondition(s) => CliError::Precondition(s),
            SynthesisError::BadArgument(s) => CliError::Invariant(s),
            SynthesisError::Observability(o) => o.into(),
            SynthesisError::Spectral(s) => s.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<WitnessError> for CliError {
    fn from(e: WitnessError) -> Self {
        match e {
            WitnessError::Inapplicable { .. } => CliError::Inapplicable(e.to_string()),
            WitnessError::BadArgument(s) => CliError::Invariant(s),
            WitnessError::Synthesis(s) => s.into(),
            WitnessError::Observability(o) => o.into(),
            WitnessError::Spectral(s) => s.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

/// Command-line values that take precedence over the scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub modes: Option<usize>,
    pub k_max: Option<usize>,
}

/// Parses a scenario, or the `resolved_scenario` of a report.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let parse_err = |e: serde_json::Error| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(text).map_err(parse_err)?;
    let scenario = match value.get("resolved_scenario") {
        Some(inner) => Scenario::deserialize(inner).map_err(|e| CliError::Parse {
            line: 0,
            column: 0,
            message: format!("resolved_scenario: {e}"),
        })?,
        None => serde_json::from_str(text).map_err(parse_err)?,
    };
    validate(&scenario)?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix, CliError> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || width == 0 {
        return Err(CliError::Dimension(format!("{what} is empty")));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(CliError::Dimension(format!(
                "{what} row {} has {} entries, expected {width}",
                i + 1,
                r.len()
            )));
        }
    }
    linalg::matrix_from_rows(rows).map_err(|e| CliError::Dimension(format!("{what}: {e}")))
}

fn positive(v: Option<f64>, what: &str) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Invariant(format!(
            "{what} must be positive and finite, got {x}"
        ))),
        _ => Ok(()),
    }
}

/// A validated scenario turned into library objects.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub system: CoupledSystem,
    pub schedule: ImpulseSchedule,
    /// `(q, d)` from the schedule picker, for `"auto"` schedules.
    pub auto: Option<(usize, f64)>,
}

/// Builds the system and schedule, checking every invariant up front.
pub fn validate(s: &Scenario) -> Result<Prepared, CliError> {
    let sys = &s.system;
    let length = sys.length.unwrap_or(PI);
    if !(length > 0.0 && length.is_finite()) {
        return Err(CliError::Invariant(format!(
            "system.length must be positive, got {length}"
        )));
    }
    if sys.modes == 0 {
        return Err(CliError::Invariant(
            "system.modes must be at least 1".into(),
        ));
    }
    let p = matrix(&sys.p, "system.p")?;
    if p.nrows() != p.ncols() {
        return Err(CliError::Dimension(format!(
            "system.p is {}x{}, expected square",
            p.nrows(),
            p.ncols()
        )));
    }
    let n = p.nrows();
    if sys.controllers.is_empty() {
        return Err(CliError::Dimension(
            "system.controllers is empty; one Q matrix per impulse slot is required".into(),
        ));
    }
    let domain = SpectralDomain::new(length, sys.modes)?;
    let mut controllers = Vec::with_capacity(sys.controllers.len());
    let mut m = None;
    for (idx, c) in sys.controllers.iter().enumerate() {
        let what = format!("system.controllers[{idx}].q");
        let rows =
            c.q.as_ref()
                .ok_or_else(|| CliError::Dimension(format!("{what} is missing")))?;
        let q = matrix(rows, &what)?;
        if q.nrows() != n {
            return Err(CliError::Dimension(format!(
                "{what} has {} rows, expected n = {n}",
                q.nrows()
            )));
        }
        if *m.get_or_insert(q.ncols()) != q.ncols() {
            return Err(CliError::Dimension(format!(
                "{what} has {} columns, other controllers have m = {}",
                q.ncols(),
                m.unwrap_or(0)
            )));
        }
        let support = match c.support {
            None => Interval::full(&domain),
            Some([a, b]) => {
                if !(0.0 <= a && a < b && b <= length) {
                    return Err(CliError::Invariant(format!(
                        "system.controllers[{idx}].support ({a}, {b}) must satisfy 0 <= a < b <= {length}"
                    )));
                }
                Interval::new(a, b)
            }
        };
        controllers.push(Controller { q, support });
    }
    let system = CoupledSystem::new(p, controllers, domain)?;

    let (schedule, auto) = match &s.schedule {
        ScheduleSpec::Keyword(k) if k == "auto" => {
            let choice = pick_schedule_detailed(system.p(), &system.q_matrices())
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            (choice.schedule, Some((choice.q, choice.d)))
        }
        ScheduleSpec::Keyword(k) => {
            return Err(CliError::Invariant(format!(
                "schedule must be \"auto\" or a list of times, got {k:?}"
            )))
        }
        ScheduleSpec::Times(t) => (
            ImpulseSchedule::new(t.clone())
                .map_err(|e| CliError::Invariant(format!("schedule: {e}")))?,
            None,
        ),
    };
    if schedule.hbar() != system.hbar() {
        return Err(CliError::Dimension(format!(
            "schedule has {} base times but there are {} controllers",
            schedule.hbar(),
            system.hbar()
        )));
    }

    let par = &s.parameters;
    positive(par.eps, "parameters.eps")?;
    positive(par.epsilon0, "parameters.epsilon0")?;
    positive(par.delta, "parameters.delta")?;
    positive(par.ell_factor, "parameters.ell_factor")?;
    for (v, what) in [
        (par.k_max, "parameters.k_max"),
        (par.k, "parameters.k"),
        (par.grad_iters, "parameters.grad_iters"),
        (par.sample_modes, "parameters.sample_modes"),
        (par.compose_k, "parameters.compose_k"),
    ] {
        if v == Some(0) {
            return Err(CliError::Invariant(format!("{what} must be at least 1")));
        }
    }
    if par
        .horizons
        .as_ref()
        .is_some_and(|h| h.is_empty() || h.contains(&0))
    {
        return Err(CliError::Invariant(
            "parameters.horizons must be non-empty and positive".into(),
        ));
    }
    if par.samples.is_some_and(|v| v < 100) {
        return Err(CliError::Invariant(
            "parameters.samples must be at least 100".into(),
        ));
    }
    if let Some(x0) = &par.x0 {
        check_initial_state(x0, n, sys.modes)?;
        if matches!(x0, InitialState::Random { .. }) && par.seed.is_none() {
            return Err(CliError::MissingSeed("random initial state"));
        }
    }
    if let Some(task) = s.task {
        if task.sampled() && par.seed.is_none() {
            return Err(CliError::MissingSeed(task.label()));
        }
    }
    if let Some(us) = &par.controls {
        let m = system.m();
        for (j, u) in us.iter().enumerate() {
            let u = matrix(u, &format!("parameters.controls[{j}]"))?;
            if u.nrows() != m || u.ncols() != sys.modes {
                return Err(CliError::Dimension(format!(
                    "parameters.controls[{j}] is {}x{}, expected {m}x{}",
                    u.nrows(),
                    u.ncols(),
                    sys.modes
                )));
            }
        }
    }
    Ok(Prepared {
        system,
        schedule,
        auto,
    })
}

fn check_initial_state(x0: &InitialState, n: usize, modes: usize) -> Result<(), CliError> {
    match x0 {
        InitialState::Random { norm } => {
            if !(*norm >= 0.0 && norm.is_finite()) {
                return Err(CliError::Invariant(format!(
                    "parameters.x0.norm must be non-negative, got {norm}"
                )));
            }
        }
        InitialState::Mode { index, g } => {
            if *index == 0 || *index > modes {
                return Err(CliError::Invariant(format!(
                    "parameters.x0.index {index} outside 1..={modes}"
                )));
            }
            if g.len() != n {
                return Err(CliError::Dimension(format!(
                    "parameters.x0.g has {} entries, expected n = {n}",
                    g.len()
                )));
            }
        }
        InitialState::Coefficients { rows } => {
            let c = matrix(rows, "parameters.x0.rows")?;
            if c.nrows() != n || c.ncols() != modes {
                return Err(CliError::Dimension(format!(
                    "parameters.x0.rows is {}x{}, expected {n}x{modes}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
    }
    Ok(())
}

/// Builds `x0`. Random states draw from their own stream of the seed.
pub fn initial_state(
    x0: &InitialState,
    n: usize,
    modes: usize,
    seed: Option<u64>,
) -> Result<ModalState, CliError> {
    check_initial_state(x0, n, modes)?;
    Ok(match x0 {
        InitialState::Random { norm } => {
            let seed = seed.ok_or(CliError::MissingSeed("random initial state"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            ModalState::random(n, modes, *norm, &mut rng)
        }
        InitialState::Mode { index, g } => ModalState::single_mode(n, modes, *index, g),
        InitialState::Coefficients { rows } => ModalState::new(matrix(rows, "parameters.x0.rows")?),
    })
}

/// Scenario with command-line values applied and everything resolved that
/// a rerun needs: task, schedule times, truncation, seed, horizon cap.
pub fn resolve(
    scenario: &Scenario,
    overrides: &Overrides,
) -> Result<(Scenario, Prepared), CliError> {
    let mut s = scenario.clone();
    if let Some(t) = overrides.task {
        s.task = Some(t);
    }
    if s.task.is_none() {
        return Err(CliError::MissingTask);
    }
    if let Some(seed) = overrides.seed {
        s.parameters.seed = Some(seed);
    }
    if let Some(modes) = overrides.modes {
        s.system.modes = modes;
    }
    if let Some(k) = overrides.k_max {
        s.parameters.k_max = Some(k);
    }
    s.parameters.k_max.get_or_insert(DEFAULT_K_MAX);
    s.system.length.get_or_insert(PI);
    let prepared = validate(&s)?;
    s.schedule = ScheduleSpec::Times(prepared.schedule.base_times().to_vec());
    Ok((s, prepared))
}

/// Result of one scenario run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: Value,
    /// Trajectory CSV, when the task produces one.
    pub trajectory: Option<String>,
    pub output: Option<OutputSpec>,
    pub name: Option<String>,
}

struct TaskOutput {
    result: Value,
    constants: Vec<Value>,
    trajectory: Option<String>,
    exit_code: i32,
}

fn constant(name: &str, r: &ObservabilityReport) -> Value {
    json!({
        "name": name,
        "value": finite_or_null(r.constant),
        "method": r.method.label(),
        "k": r.k,
        "theta": r.theta,
        "delta": r.delta,
        "samples": r.samples,
    })
}

fn named(name: &str, value: f64, method: &str) -> Value {
    json!({ "name": name, "value": finite_or_null(value), "method": method })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// `j, t_j, ‖g_1‖, …, ‖g_N‖, ‖x‖, ‖u_j‖` for `j = 0..k`.
pub fn trajectory_csv(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    controls: &ControlSequence,
    k: usize,
) -> Result<String, CliError> {
    let states = synthesis::trajectory(system, sched, x0, controls, k)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["j".to_string(), "t_j".to_string()];
    header.extend((1..=system.modes()).map(|i| format!("mode_{i}")));
    header.extend(["x_norm".to_string(), "u_norm".to_string()]);
    let csv_err = |e: csv::Error| CliError::Numerical(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (j, x) in states.iter().enumerate() {
        let u = if j == 0 {
            0.0
        } else {
            controls.get(j).map_or(0.0, |u| u.norm())
        };
        let mut rec = vec![j.to_string(), sched.time_at(j).to_string()];
        rec.extend(x.mode_norms().iter().map(f64::to_string));
        rec.push(x.l2_norm().to_string());
        rec.push(u.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Numerical(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Numerical(e.to_string()))
}

fn steering_json(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    r: &SteeringResult,
) -> Result<Value, CliError> {
    let check = synthesis::simulate(system, sched, x0, &r.controls, r.horizon_k)?.l2_norm();
    Ok(json!({
        "horizon_k": r.horizon_k,
        "t_k": sched.time_at(r.horizon_k),
        "initial_norm": x0.l2_norm(),
        "residual": r.residual,
        "resimulated_residual": check,
        "certificate": r.certificate.label(),
        "max_control_norm": r.controls.max_norm(),
        "control_l2_norm": r.controls.l2_norm(),
        "within_budget": r.controls.within_budget(),
        "l2_bound": r.l2_bound,
        "phases": r.phases.as_ref().map(|p| json!({
            "m_const": p.m_const,
            "c_const": finite_or_null(p.c_const),
            "eps": p.eps,
            "k_star": p.k_star,
            "gcac_horizon": p.gcac_horizon,
            "null_start": p.null_start,
        })),
        "solver": r.solver.as_ref().map(|s| json!({
            "iterations_per_horizon": s.iterations_per_horizon,
            "lipschitz": s.lipschitz,
            "step": s.step,
            "history": s.history.iter().map(|(k, v)| json!({"k": k, "residual": v})).collect::<Vec<_>>(),
        })),
    }))
}

fn require_x0(s: &Scenario, system: &CoupledSystem) -> Result<ModalState, CliError> {
    let x0 = s
        .parameters
        .x0
        .as_ref()
        .ok_or_else(|| CliError::Invariant("parameters.x0 is required for this task".into()))?;
    initial_state(x0, system.n(), system.modes(), s.parameters.seed)
}

fn require_eps(s: &Scenario) -> Result<f64, CliError> {
    s.parameters
        .eps
        .ok_or_else(|| CliError::Invariant("parameters.eps is required for this task".into()))
}

fn sampling(s: &Scenario, seed: u64) -> SamplingOptions {
    let mut o = SamplingOptions::new(seed);
    if let Some(v) = s.parameters.samples {
        o.samples = v;
    }
    if let Some(v) = s.parameters.sample_modes {
        o.modes = v;
    }
    o
}

fn dispatch(s: &Scenario, prep: &Prepared) -> Result<TaskOutput, CliError> {
    let (system, sched) = (&prep.system, &prep.schedule);
    let par = &s.parameters;
    let k_max = par.k_max.unwrap_or(DEFAULT_K_MAX);
    let task = s.task.ok_or(CliError::MissingTask)?;
    let mut constants = Vec::new();
    let mut trajectory = None;
    let mut exit_code = 0;
    let result = match task {
        Task::Check => {
            let v = hypothesis_verdict(system, sched, k_max)?;
            json!({
                "rank_ok": v.rank_ok,
                "k_star": v.k_star,
                "kalman_ok": v.kalman_ok,
                "spectral": v.spectral.label(),
                "dissipative": v.dissipative,
                "omega_full": v.omega_full,
                "max_real_part": v.max_real_part,
                "sym_max_eig": v.sym_max_eig,
                "lambda1": v.lambda1,
                "k_max": k_max,
            })
        }
        Task::Observability => {
            let seed = par.seed.ok_or(MissingSeedFor(task))?;
            let qs = system.q_matrices();
            let rank = rank_condition(system.p(), &qs, sched, k_max)?;
            let k = par.k.or(rank.k_star).unwrap_or(k_max);
            let c = finite_obs_constant(system.p(), &qs, &sched.times(k))?;
            constants.push(constant("C(k)", &c));
            let opts = sampling(s, seed);
            let interp = match interpolation_estimate(system, sched, k, opts) {
                Ok(r) => {
                    constants.push(constant("interpolation C", &r));
                    json!({ "constant": finite_or_null(r.constant), "theta": r.theta })
                }
                Err(e @ ObservabilityError::RankFailure { .. }) => {
                    json!({ "skipped": e.to_string() })
                }
                Err(e) => return Err(e.into()),
            };
            let delta = par.delta.unwrap_or(0.1);
            let d = delta_obs_constant(system, sched, k, delta, opts)?;
            constants.push(constant("D(k,delta)", &d));
            let composed = match par.compose_k {
                None => Value::Null,
                Some(ck) => {
                    if !k.is_multiple_of(sched.hbar()) {
                        return Err(CliError::Invariant(format!(
                            "composition needs k = {k} to be a multiple of the {} controllers",
                            sched.hbar()
                        )));
                    }
                    let (dk, dd) =
                        compose_obs(d.constant, delta, k / sched.hbar(), ck, system, sched)?;
                    let composed = ObservabilityReport {
                        k: k * ck,
                        constant: dd,
                        theta: None,
                        delta: Some(dk),
                        method: observability::Method::Composed,
                        samples: None,
                    };
                    constants.push(constant("D composed", &composed));
                    json!({ "blocks": ck, "delta": dk, "constant": finite_or_null(dd) })
                }
            };
            json!({
                "k": k,
                "rank_ok": rank.holds,
                "k_star": rank.k_star,
                "c_k": finite_or_null(c.constant),
                "interpolation": interp,
                "delta": delta,
                "d_k_delta": finite_or_null(d.constant),
                "composed": composed,
            })
        }
        Task::SynthesizeGcac => {
            let x0 = require_x0(s, system)?;
            let eps = require_eps(s)?;
            let r = synthesis::gcac_synthesize(system, sched, &x0, eps, k_max)?;
            if let Some(ks) = rank_condition(system.p(), &system.q_matrices(), sched, k_max)?.k_star
            {
                let ball = gramian_delta(system, sched, ks)?;
                constants.push(named(
                    "gramian delta",
                    ball.delta,
                    observability::Method::ExactGramian.label(),
                ));
            }
            trajectory = Some(trajectory_csv(
                system,
                sched,
                &x0,
                &r.controls,
                r.horizon_k,
            )?);
            let mut v = steering_json(system, sched, &x0, &r)?;
            v["eps"] = json!(eps);
            v
        }
        Task::SynthesizeNull => {
            let x0 = require_x0(s, system)?;
            let r = synthesis::constrained_null_synthesize(system, sched, &x0, k_max)?;
            if let Some(p) = &r.phases {
                constants.push(named(
                    "C(k*)",
                    p.c_const,
                    observability::Method::ExactGramian.label(),
                ));
                constants.push(named("M", p.m_const, "semigroup-norm"));
            }
            trajectory = Some(trajectory_csv(
                system,
                sched,
                &x0,
                &r.controls,
                r.horizon_k,
            )?);
            steering_json(system, sched, &x0, &r)?
        }
        Task::SynthesizeLocal => {
            let x0 = require_x0(s, system)?;
            let eps = require_eps(s)?;
            let mut opts = PgOptions::default();
            if let Some(it) = par.grad_iters {
                opts.iterations = it;
            }
            let r = synthesis::local_gcac_synthesize(system, sched, &x0, eps, k_max, opts)?;
            if r.certificate == Certificate::FailedHorizonExhausted {
                exit_code = 2;
            }
            trajectory = Some(trajectory_csv(
                system,
                sched,
                &x0,
                &r.controls,
                r.horizon_k,
            )?);
            let mut v = steering_json(system, sched, &x0, &r)?;
            v["eps"] = json!(eps);
            v
        }
        Task::Witness => {
            let seed = par.seed.ok_or(MissingSeedFor(task))?;
            let eps0 = par.epsilon0.unwrap_or(1.0);
            let cert = witness::negative_bound(system, sched, eps0)?;
            let ell = par.ell_factor.unwrap_or(DEFAULT_ELL_FACTOR) * cert.threshold_ell;
            let x0 = match &par.x0 {
                Some(x) => initial_state(x, system.n(), system.modes(), par.seed)?,
                None => cert.initial_state(ell, system.modes()),
            };
            let horizons = par.horizons.clone().unwrap_or_else(|| vec![k_max]);
            let iters = par.grad_iters.unwrap_or(PgOptions::default().iterations);
            let mut gaps = Vec::new();
            let mut last = None;
            for &k in &horizons {
                let g = witness::reachability_gap(system, sched, &x0, k, iters, seed)?;
                gaps.push(json!({
                    "k": k,
                    "lower_bound": g.lower_bound,
                    "achieved": g.achieved,
                    "exceeds_epsilon0": g.lower_bound > eps0,
                }));
                last = Some((k, g.controls));
            }
            if let Some((k, u)) = last {
                trajectory = Some(trajectory_csv(system, sched, &x0, &u, k)?);
            }
            constants.push(named("threshold ell", cert.threshold_ell, "closed-form"));
            json!({
                "rho": { "re": cert.rho.re, "im": cert.rho.im },
                "case": cert.case.label(),
                "eta_hat": cert.eta_hat.iter().collect::<Vec<_>>(),
                "threshold_ell": cert.threshold_ell,
                "epsilon0": eps0,
                "ell": ell,
                "initial_norm": x0.l2_norm(),
                "gaps": gaps,
            })
        }
        Task::Simulate => {
            let x0 = require_x0(s, system)?;
            let us = match &par.controls {
                None => ControlSequence::empty(),
                Some(us) => ControlSequence::new(
                    us.iter()
                        .enumerate()
                        .map(|(j, u)| matrix(u, &format!("parameters.controls[{j}]")))
                        .collect::<Result<_, _>>()?,
                ),
            };
            let k = par.k.unwrap_or(us.len().max(1));
            let xk = synthesis::simulate(system, sched, &x0, &us, k)?;
            trajectory = Some(trajectory_csv(system, sched, &x0, &us, k)?);
            json!({
                "k": k,
                "t_k": sched.time_at(k),
                "initial_norm": x0.l2_norm(),
                "final_norm": xk.l2_norm(),
                "max_control_norm": us.max_norm(),
            })
        }
    };
    Ok(TaskOutput {
        result,
        constants,
        trajectory,
        exit_code,
    })
}

struct MissingSeedFor(Task);

impl From<MissingSeedFor> for CliError {
    fn from(m: MissingSeedFor) -> Self {
        CliError::MissingSeed(m.0.label())
    }
}

fn error_json(e: &CliError) -> Value {
    let mut v = json!({ "code": e.code(), "message": e.to_string() });
    if let CliError::Parse { line, column, .. } = e {
        v["line"] = json!(line);
        v["column"] = json!(column);
    }
    v
}

fn base_report(task: Option<Task>, exit_code: i32) -> Value {
    json!({
        "tool": "impulse-gcac",
        "version": env!("CARGO_PKG_VERSION"),
        "task": task.map(Task::label),
        "status": match exit_code { 0 => "ok", 2 => "failed", _ => "error" },
        "exit_code": exit_code,
    })
}

fn failed(task: Option<Task>, e: CliError, name: Option<String>) -> RunOutcome {
    let mut report = base_report(task, e.exit_code());
    report["error"] = error_json(&e);
    RunOutcome {
        exit_code: e.exit_code(),
        report,
        trajectory: None,
        output: None,
        name,
    }
}

/// Runs one scenario. Errors become reports with a machine-readable code.
pub fn run(scenario: &Scenario, overrides: &Overrides) -> RunOutcome {
    let task = overrides.task.or(scenario.task);
    let (resolved, prep) = match resolve(scenario, overrides) {
        Ok(v) => v,
        Err(e) => return failed(task, e, scenario.name.clone()),
    };
    let outcome = dispatch(&resolved, &prep);
    let (exit_code, result, constants, trajectory, error) = match outcome {
        Ok(o) => (
            o.exit_code,
            o.result,
            o.constants,
            o.trajectory,
            Value::Null,
        ),
        Err(e) => (e.exit_code(), Value::Null, Vec::new(), None, error_json(&e)),
    };
    let mut report = base_report(resolved.task, exit_code);
    report["seed"] = json!(resolved.parameters.seed);
    report["truncation"] = json!(prep.system.modes());
    report["schedule"] = json!({
        "source": if prep.auto.is_some() { "auto" } else { "explicit" },
        "base_times": prep.schedule.base_times(),
        "period": prep.schedule.period(),
        "hbar": prep.schedule.hbar(),
        "krylov_q": prep.auto.map(|a| a.0),
        "d_minus_p": prep.auto.map(|a| finite_or_null(a.1)),
    });
    report["constants"] = Value::Array(constants);
    report["result"] = result;
    report["error"] = error;
    report["resolved_scenario"] = serde_json::to_value(&resolved).unwrap_or(Value::Null);
    RunOutcome {
        exit_code,
        report,
        trajectory,
        output: resolved.output.clone(),
        name: resolved.name.clone(),
    }
}

pub fn run_path(path: &Path, overrides: &Overrides) -> RunOutcome {
    match load_unvalidated(path) {
        Ok(s) => {
            let mut out = run(&s, overrides);
            out.name.get_or_insert_with(|| stem(path));
            out
        }
        Err(e) => failed(overrides.task, e, Some(stem(path))),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

/// Parses without validating, so overrides can still fix the truncation.
fn load_unvalidated(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let parse_err = |e: serde_json::Error| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(&text).map_err(parse_err)?;
    match value.get("resolved_scenario") {
        Some(inner) => Scenario::deserialize(inner).map_err(|e| CliError::Parse {
            line: 0,
            column: 0,
            message: format!("resolved_scenario: {e}"),
        }),
        None => serde_json::from_str(&text).map_err(parse_err),
    }
}

/// Runs scenarios on separate threads; results keep the input order.
pub fn run_batch(paths: &[PathBuf], overrides: &Overrides) -> Vec<RunOutcome> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| scope.spawn(move || run_path(p, overrides)))
            .collect();
        handles
            .into_iter()
            .zip(paths)
            .map(|(h, p)| {
                h.join().unwrap_or_else(|_| {
                    failed(
                        overrides.task,
                        CliError::Numerical("worker panicked".into()),
                        Some(stem(p)),
                    )
                })
            })
            .collect()
    })
}

/// Writes the report and trajectory into `dir`; returns the written paths.
pub fn write_outcome(outcome: &RunOutcome, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let names = outcome.output.clone().unwrap_or(OutputSpec {
        report: None,
        trajectory: None,
    });
    let report = dir.join(names.report.as_deref().unwrap_or("report.json"));
    let mut text = serde_json::to_string_pretty(&outcome.report).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(&report, text)?;
    let mut written = vec![report];
    if let Some(csv) = &outcome.trajectory {
        let path = dir.join(names.trajectory.as_deref().unwrap_or("trajectory.csv"));
        fs::write(&path, csv)?;
        written.push(path);
    }
    Ok(written)
}

/// One line per run for the terminal.
pub fn summary(outcome: &RunOutcome) -> String {
    let r = &outcome.report;
    let mut line = format!(
        "{} [{}] {}",
        outcome.name.as_deref().unwrap_or("scenario"),
        r["task"].as_str().unwrap_or("?"),
        r["status"].as_str().unwrap_or("?"),
    );
    if let Some(e) = r.get("error").filter(|e| !e.is_null()) {
        let _ = write!(
            line,
            ": {} ({})",
            e["message"].as_str().unwrap_or(""),
            e["code"].as_str().unwrap_or("")
        );
    } else if let Some(res) = r["result"].get("residual") {
        let _ = write!(line, ": residual {res}");
    }
    line
}
