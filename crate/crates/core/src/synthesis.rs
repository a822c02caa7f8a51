// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Simulation and control synthesis for the impulse-controlled system.
//!
//! `x(t_j)` always denotes the state right after the jump at `t_j`.

use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector, DEFAULT_RANK_TOL};
use crate::observability::{
    self, finite_obs_constant, rank_condition, semigroup_norm, spectral_verdict,
    ObservabilityError, SpectralVerdict, SPECTRAL_TOL,
};
use crate::schedule::{ImpulseSchedule, ScheduleError};
use crate::spectral::{apply_semigroup, CoupledSystem, ModalState, Propagator, SpectralError};

/// Default bound on every `‖u_j‖`.
pub const DEFAULT_BUDGET: f64 = 1.0;

/// Hard cap on the number of impulses scanned by [`decay_horizon`].
pub const DECAY_STEP_CAP: usize = 1_000_000;

/// Slack allowed when comparing a control norm against the budget.
const BUDGET_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("rank condition fails for every horizon up to {0}")]
    RankFailure(usize),
    #[error("horizon exhausted at k_max = {k_max}; best {measure} = {best}")]
    HorizonExhausted {
        k_max: usize,
        measure: &'static str,
        best: f64,
    },
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Observability(#[from] ObservabilityError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, SynthesisError>;

/// Impulses `u_1, …, u_k`, each an `m × N` coefficient array.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    pub impulses: Vec<Matrix>,
    pub budget: f64,
}

impl ControlSequence {
    pub fn new(impulses: Vec<Matrix>) -> Self {
        Self {
            impulses,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn zeros(k: usize, m: usize, modes: usize) -> Self {
        Self::new(vec![Matrix::zeros(m, modes); k])
    }

    pub fn len(&self) -> usize {
        self.impulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impulses.is_empty()
    }

    /// `u_j` for `j ≥ 1`, `None` past the end.
    pub fn get(&self, j: usize) -> Option<&Matrix> {
        self.impulses.get(j.checked_sub(1)?)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.impulses.iter().map(|u| u.norm()).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.norms().into_iter().fold(0.0, f64::max)
    }

    /// `‖u‖_{l²}`.
    pub fn l2_norm(&self) -> f64 {
        self.impulses
            .iter()
            .map(|u| u.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn within_budget(&self) -> bool {
        self.max_norm() <= self.budget * (1.0 + BUDGET_SLACK)
    }

    /// Zero-padded (or truncated) copy of length `k`.
    pub fn resized(&self, k: usize, m: usize, modes: usize) -> Self {
        let mut impulses = self.impulses.clone();
        impulses.resize(k, Matrix::zeros(m, modes));
        Self {
            impulses,
            budget: self.budget,
        }
    }

    pub fn extend(&mut self, other: ControlSequence) {
        self.impulses.extend(other.impulses);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    Exact,
    EpsilonBall,
    FailedHorizonExhausted,
}

impl Certificate {
    pub fn label(self) -> &'static str {
        match self {
            Certificate::Exact => "exact",
            Certificate::EpsilonBall => "epsilon-ball",
            Certificate::FailedHorizonExhausted => "failed-horizon-exhausted",
        }
    }
}

/// Phase data of a constrained null-controllability run.
#[derive(Debug, Clone, PartialEq)]
pub struct NullPhases {
    /// `M = max(Σ_{0≤k<ħ} ‖e^{A(t_ħ − t_k)}‖, 1)`.
    pub m_const: f64,
    /// `C(k*)`.
    pub c_const: f64,
    /// `ε = (M √C)⁻¹`.
    pub eps: f64,
    pub k_star: usize,
    /// Horizon reached by the approximate phase; `None` when skipped.
    pub gcac_horizon: Option<usize>,
    /// Impulse index after which the exact phase starts.
    pub null_start: usize,
}

/// Projected-gradient settings and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverStats {
    pub iterations_per_horizon: usize,
    pub lipschitz: f64,
    pub step: f64,
    /// `(k, residual)` after each horizon.
    pub history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringResult {
    pub controls: ControlSequence,
    pub horizon_k: usize,
    pub final_state: ModalState,
    pub residual: f64,
    pub certificate: Certificate,
    /// `√C(k*)·‖x0‖` for exact null steering.
    pub l2_bound: Option<f64>,
    pub phases: Option<NullPhases>,
    pub solver: Option<SolverStats>,
}

impl SteeringResult {
    fn verified(
        system: &CoupledSystem,
        sched: &ImpulseSchedule,
        x0: &ModalState,
        controls: ControlSequence,
        k: usize,
        certificate: Certificate,
    ) -> Result<Self> {
        let final_state = simulate(system, sched, x0, &controls, k)?;
        Ok(Self {
            residual: final_state.l2_norm(),
            controls,
            horizon_k: k,
            final_state,
            certificate,
            l2_bound: None,
            phases: None,
            solver: None,
        })
    }
}

/// Cached inter-impulse propagators of one schedule.
struct Stepper<'a> {
    system: &'a CoupledSystem,
    sched: &'a ImpulseSchedule,
    forward: Vec<Propagator>,
    adjoint: Vec<Propagator>,
}

impl<'a> Stepper<'a> {
    fn new(
        system: &'a CoupledSystem,
        sched: &'a ImpulseSchedule,
        with_adjoint: bool,
    ) -> Result<Self> {
        if sched.hbar() != system.hbar() {
            return Err(SynthesisError::BadArgument(format!(
                "schedule has {} slots but the system has {} controllers",
                sched.hbar(),
                system.hbar()
            )));
        }
        let gaps: Vec<f64> = (1..=sched.hbar())
            .map(|r| sched.time_at(r) - sched.time_at(r - 1))
            .collect();
        let forward = gaps
            .iter()
            .map(|&g| Propagator::new(system, g))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let adjoint = if with_adjoint {
            gaps.iter()
                .map(|&g| Propagator::adjoint(system, g))
                .collect::<std::result::Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            system,
            sched,
            forward,
            adjoint,
        })
    }

    /// `x(t_{j-1}) ↦ x(t_j)`.
    fn step(&self, x: &ModalState, j: usize, u: Option<&Matrix>) -> Result<ModalState> {
        let nu = self.sched.nu_unchecked(j);
        let moved = self.forward[nu - 1].apply(x);
        Ok(match u {
            Some(u) => ModalState::new(moved.coeffs() + self.system.inject(nu, u)?),
            None => moved,
        })
    }

    fn run(&self, x0: &ModalState, controls: &[Matrix], k: usize) -> Result<ModalState> {
        let mut x = x0.clone();
        for j in 1..=k {
            x = self.step(&x, j, controls.get(j - 1))?;
        }
        Ok(x)
    }

    /// `(B*_{ν(j)} e^{A*(t_k − t_j)} y)_{j=1..k}`.
    fn pullback(&self, y: &ModalState, k: usize) -> Result<Vec<Matrix>> {
        let mut grads = vec![Matrix::zeros(0, 0); k];
        let mut p = y.clone();
        for j in (1..=k).rev() {
            let nu = self.sched.nu_unchecked(j);
            grads[j - 1] = self.system.inject_adjoint(nu, p.coeffs())?;
            p = self.adjoint[nu - 1].apply(&p);
        }
        Ok(grads)
    }
}

fn check_state(system: &CoupledSystem, x: &ModalState) -> Result<()> {
    if x.n() != system.n() || x.modes() != system.modes() {
        return Err(SpectralError::Dimension(format!(
            "state is {}x{}, system expects {}x{}",
            x.n(),
            x.modes(),
            system.n(),
            system.modes()
        ))
        .into());
    }
    if x.coeffs().iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite.into());
    }
    Ok(())
}

/// `x(t_k)` from `x0` under `controls` (missing impulses are zero).
pub fn simulate(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    controls: &ControlSequence,
    k: usize,
) -> Result<ModalState> {
    check_state(system, x0)?;
    Stepper::new(system, sched, false)?.run(x0, &controls.impulses, k)
}

/// `x(t_0), x(t_1), …, x(t_k)`.
pub fn trajectory(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    controls: &ControlSequence,
    k: usize,
) -> Result<Vec<ModalState>> {
    check_state(system, x0)?;
    let stepper = Stepper::new(system, sched, false)?;
    let mut out = Vec::with_capacity(k + 1);
    out.push(x0.clone());
    for j in 1..=k {
        let next = stepper.step(&out[j - 1], j, controls.get(j))?;
        out.push(next);
    }
    Ok(out)
}

/// State at an arbitrary time `t ≥ 0`, counting impulses with `t_j ≤ t`.
pub fn state_at(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    controls: &ControlSequence,
    t: f64,
) -> Result<ModalState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SpectralError::BadTime(t).into());
    }
    let mut j = 0;
    while sched.time_at(j + 1) <= t {
        j += 1;
    }
    let x = simulate(system, sched, x0, controls, j)?;
    Ok(apply_semigroup(system, &x, t - sched.time_at(j))?)
}

/// `x = v·e₁ + remainder` with `v = g₁`.
pub fn project_h1(state: &ModalState) -> (Vector, ModalState) {
    let v = state.coeffs().column(0).into_owned();
    let mut rest = state.coeffs().clone();
    rest.column_mut(0).fill(0.0);
    (v, ModalState::new(rest))
}

/// One-block steering ball of the first mode.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianBall {
    /// `M = Σ_j e^{(λ₁I−P)t_j} Q_{ν(j)} Q_{ν(j)}ᵀ e^{(λ₁I−Pᵀ)t_j}`.
    pub m: Matrix,
    /// `δ = (‖S‖₂ ‖M⁻¹‖₂)⁻¹` with `S` the block stack.
    pub delta: f64,
    blocks: Vec<Matrix>,
    m_inv: Matrix,
}

impl GramianBall {
    /// `ζ_j = Q_{ν(j)}ᵀ e^{(λ₁I−Pᵀ)t_j} M⁻¹ η`.
    pub fn controls(&self, eta: &Vector) -> Vec<Vector> {
        let w = &self.m_inv * eta;
        self.blocks.iter().map(|b| b.transpose() * &w).collect()
    }

    /// `Σ_j e^{(λ₁I−P)t_j} Q_{ν(j)} ζ_j`.
    pub fn reach(&self, zeta: &[Vector]) -> Vector {
        self.blocks
            .iter()
            .zip(zeta)
            .fold(Vector::zeros(self.m.nrows()), |acc, (b, z)| acc + b * z)
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }
}

fn shifted(system: &CoupledSystem, sign: f64) -> Matrix {
    let n = system.n();
    (Matrix::identity(n, n) * system.lambda1() - system.p()) * sign
}

fn mode1_blocks(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    from: usize,
    to: usize,
) -> Result<Vec<Matrix>> {
    let a = shifted(system, 1.0);
    (from..=to)
        .map(|j| {
            let e = linalg::mat_exp(&a, sched.time_at(j))?;
            Ok(e * &system.controllers()[sched.nu_unchecked(j) - 1].q)
        })
        .collect()
}

pub fn gramian_delta(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    k_star: usize,
) -> Result<GramianBall> {
    if k_star == 0 {
        return Err(SynthesisError::BadArgument(
            "k_star must be at least 1".into(),
        ));
    }
    let blocks = mode1_blocks(system, sched, 1, k_star)?;
    let n = system.n();
    let s = linalg::hstack(n, &blocks)?;
    if linalg::column_normalized_rank(&s, DEFAULT_RANK_TOL)? < n {
        return Err(SynthesisError::RankFailure(k_star));
    }
    let m = &s * s.transpose();
    let m_inv = m
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::RankFailure(k_star))?;
    let delta = 1.0 / (linalg::spectral_norm(&s) * linalg::spectral_norm(&m_inv));
    Ok(GramianBall {
        m,
        delta,
        blocks,
        m_inv,
    })
}

fn require_full_support(system: &CoupledSystem) -> Result<()> {
    if !system.omega_full() {
        return Err(SynthesisError::Precondition(
            "every control support must be the whole interval".into(),
        ));
    }
    Ok(())
}

fn require_spectral(system: &CoupledSystem) -> Result<()> {
    let max_re = linalg::spectrum(system.p())?.max_real_part;
    if spectral_verdict(max_re, system.lambda1()) == SpectralVerdict::Violated {
        return Err(SynthesisError::Precondition(format!(
            "max Re σ(P) = {max_re} exceeds λ₁ = {}",
            system.lambda1()
        )));
    }
    Ok(())
}

fn require_rank(system: &CoupledSystem, sched: &ImpulseSchedule, k_max: usize) -> Result<usize> {
    if k_max == 0 {
        return Err(SynthesisError::BadArgument(
            "k_max must be at least 1".into(),
        ));
    }
    rank_condition(system.p(), &system.q_matrices(), sched, k_max)?
        .k_star
        .ok_or(SynthesisError::RankFailure(k_max))
}

fn mode1_controls(system: &CoupledSystem, xi: &[Vector]) -> ControlSequence {
    ControlSequence::new(
        xi.iter()
            .map(|x| {
                let mut u = system.zero_control();
                u.set_column(0, x);
                u
            })
            .collect(),
    )
}

/// Min-norm solution of `v + Σ_{j≤k} e^{(λ₁I−P)t_j} Q_{ν(j)} ξ_j = 0`.
fn min_norm_mode1(blocks: &[Matrix], v: &Vector, m: usize) -> Option<(Vec<Vector>, f64)> {
    let a = linalg::hstack(v.len(), blocks).ok()?;
    let x = linalg::min_norm_solve(&a, &(-v), true, 1e-10).ok()?;
    let xi: Vec<Vector> = (0..blocks.len())
        .map(|j| x.rows(j * m, m).into_owned())
        .collect();
    let sup = xi.iter().map(|x| x.norm()).fold(0.0, f64::max);
    Some((xi, sup))
}

/// Steers `v·e₁` to (numerically) zero with `‖ξ_j‖ ≤ 1`.
pub fn steer_first_mode(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    v_target: &Vector,
    k_max: usize,
) -> Result<SteeringResult> {
    require_full_support(system)?;
    require_spectral(system)?;
    if v_target.len() != system.n() {
        return Err(SynthesisError::BadArgument(format!(
            "target has length {}, expected {}",
            v_target.len(),
            system.n()
        )));
    }
    let x0 = ModalState::new({
        let mut c = system.zero_state().into_coeffs();
        c.set_column(0, v_target);
        c
    });
    if v_target.norm() == 0.0 {
        return SteeringResult::verified(
            system,
            sched,
            &x0,
            ControlSequence::empty(),
            0,
            Certificate::Exact,
        );
    }
    let k_star = require_rank(system, sched, k_max)?;
    let m = system.m();
    let limit = DEFAULT_BUDGET * (1.0 + BUDGET_SLACK);
    let mut blocks: Vec<Matrix> = Vec::new();
    let mut best_sup = f64::INFINITY;
    let mut feasible = |k: usize, blocks: &mut Vec<Matrix>| -> Result<Option<Vec<Vector>>> {
        if blocks.len() < k {
            let more = mode1_blocks(system, sched, blocks.len() + 1, k)?;
            blocks.extend(more);
        }
        Ok(match min_norm_mode1(&blocks[..k], v_target, m) {
            Some((xi, sup)) => {
                best_sup = best_sup.min(sup);
                (sup <= limit).then_some(xi)
            }
            None => None,
        })
    };

    let mut lo = k_star - 1;
    let mut k = k_star;
    let mut found = None;
    loop {
        if let Some(xi) = feasible(k, &mut blocks)? {
            found = Some((k, xi));
            break;
        }
        if k >= k_max {
            break;
        }
        lo = k;
        k = (2 * k).min(k_max);
    }
    let accepted = match found {
        Some((mut hi, mut xi)) => {
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                match feasible(mid, &mut blocks)? {
                    Some(x) => {
                        hi = mid;
                        xi = x;
                    }
                    None => lo = mid,
                }
            }
            Some((hi, xi))
        }
        None => chunked_mode1(system, sched, v_target, k_star, k_max)?,
    };
    let Some((k, xi)) = accepted else {
        return Err(SynthesisError::HorizonExhausted {
            k_max,
            measure: "sup-norm",
            best: best_sup,
        });
    };
    let mut res = SteeringResult::verified(
        system,
        sched,
        &x0,
        mode1_controls(system, &xi),
        k,
        Certificate::Exact,
    )?;
    let h1 = res.final_state.coeffs().column(0).norm();
    if h1 > 1e-9 * v_target.norm() || !res.controls.within_budget() {
        return Err(SynthesisError::HorizonExhausted {
            k_max,
            measure: "first-mode residual",
            best: h1,
        });
    }
    res.certificate = Certificate::Exact;
    Ok(res)
}

/// Greedy use of the one-block ball on consecutive period-aligned blocks.
fn chunked_mode1(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    v: &Vector,
    k_star: usize,
    k_max: usize,
) -> Result<Option<(usize, Vec<Vector>)>> {
    let h = sched.hbar();
    let block = k_star.div_ceil(h) * h;
    let ball = gramian_delta(system, sched, block)?;
    let radius = ball.delta * (1.0 - 1e-12);
    let tau = sched.time_at(block);
    let up = shifted(system, 1.0);
    let mut r = -v;
    let mut xi = Vec::new();
    for b in 0.. {
        if (b + 1) * block > k_max {
            return Ok(None);
        }
        let bt = b as f64 * tau;
        let w = linalg::mat_exp(&-&up, bt)? * &r;
        let wn = w.norm();
        let eta = if wn <= radius {
            w.clone()
        } else {
            &w * (radius / wn)
        };
        xi.extend(ball.controls(&eta));
        r -= linalg::mat_exp(&up, bt)? * &eta;
        if wn <= radius {
            return Ok(Some(((b + 1) * block, xi)));
        }
    }
    unreachable!()
}

/// Smallest `k` with `‖e^{At_k} r‖ ≤ eps`.
pub fn decay_horizon(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    remainder: &ModalState,
    eps: f64,
) -> Result<usize> {
    check_state(system, remainder)?;
    if !(eps > 0.0) {
        return Err(SynthesisError::BadArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if remainder.coeffs().column(0).norm() != 0.0 {
        return Err(SynthesisError::Precondition(
            "remainder has a first-mode component".into(),
        ));
    }
    for k in 0..=DECAY_STEP_CAP {
        if apply_semigroup(system, remainder, sched.time_at(k))?.l2_norm() <= eps {
            return Ok(k);
        }
    }
    Err(SynthesisError::HorizonExhausted {
        k_max: DECAY_STEP_CAP,
        measure: "free residual",
        best: apply_semigroup(system, remainder, sched.time_at(DECAY_STEP_CAP))?.l2_norm(),
    })
}

/// `sup_t e^{-(λ₁+λ₂)t/2} ‖e^{Pt}‖` on `[0, 20]`, so that
/// `‖e^{At}g‖ ≤ C e^{-(λ₂−λ₁)t/2} ‖g‖` for `g ⊥ H₁`.
pub fn decay_constant(system: &CoupledSystem) -> Result<f64> {
    let n = system.n();
    let mid = (system.lambda1() + system.lambda2()) / 2.0;
    let a = system.p() - Matrix::identity(n, n) * mid;
    let f = |t: f64| -> Result<f64> { Ok(linalg::spectral_norm(&linalg::mat_exp(&a, t)?)) };
    let h = 0.01;
    let mut best = (0.0, f(0.0)?);
    for i in 1..=2000 {
        let t = i as f64 * h;
        let v = f(t)?;
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - h).max(0.0), best.0 + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        let (fc, fd) = (f(c)?, f(d)?);
        best.1 = best.1.max(fc).max(fd);
        if fc > fd {
            hi = d;
        } else {
            lo = c;
        }
    }
    Ok(best.1)
}

/// Full-support constrained approximate null control into `B_eps(0)`.
pub fn gcac_synthesize(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    eps: f64,
    k_max: usize,
) -> Result<SteeringResult> {
    check_state(system, x0)?;
    if !(eps > 0.0) {
        return Err(SynthesisError::BadArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    require_full_support(system)?;
    require_spectral(system)?;
    if x0.l2_norm() == 0.0 {
        return SteeringResult::verified(
            system,
            sched,
            x0,
            ControlSequence::empty(),
            0,
            Certificate::EpsilonBall,
        );
    }
    require_rank(system, sched, k_max)?;
    let (v, rest) = project_h1(x0);
    let (k0, mut controls) = if v.norm() == 0.0 {
        (0, ControlSequence::empty())
    } else {
        let s = steer_first_mode(system, sched, &v, k_max)?;
        (s.horizon_k, s.controls)
    };
    let mut k = k0.max(decay_horizon(system, sched, &rest, 0.99 * eps)?);
    if k > k_max {
        return Err(SynthesisError::HorizonExhausted {
            k_max,
            measure: "required horizon",
            best: k as f64,
        });
    }
    let stepper = Stepper::new(system, sched, false)?;
    let mut x = stepper.run(x0, &controls.impulses, k)?;
    while x.l2_norm() > eps && k < k_max {
        k += 1;
        x = stepper.step(&x, k, controls.get(k))?;
    }
    if x.l2_norm() > eps {
        return Err(SynthesisError::HorizonExhausted {
            k_max,
            measure: "residual",
            best: x.l2_norm(),
        });
    }
    controls = controls.resized(k, system.m(), system.modes());
    SteeringResult::verified(system, sched, x0, controls, k, Certificate::EpsilonBall)
}

/// Projected-gradient settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgOptions {
    pub iterations: usize,
    pub budget: f64,
    pub power_iterations: usize,
    /// Stop once the residual drops to this value.
    pub target: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            budget: DEFAULT_BUDGET,
            power_iterations: 50,
            target: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgOutcome {
    pub controls: ControlSequence,
    pub residual: f64,
    pub lipschitz: f64,
    pub iterations: usize,
}

fn project(u: &mut [Matrix], budget: f64) {
    for uj in u.iter_mut() {
        let n = uj.norm();
        if n > budget {
            *uj *= budget / n;
        }
    }
}

fn axpy(a: &[Matrix], s: f64, b: &[Matrix]) -> Vec<Matrix> {
    a.iter().zip(b).map(|(x, y)| x + y * s).collect()
}

fn inner(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Minimizes `‖x(t_k)‖` over `‖u_j‖ ≤ budget` by accelerated projected gradient.
///
/// Momentum is reset whenever the residual increases, and the best iterate
/// seen (including the starting point) is returned.
pub fn minimize_residual(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    k: usize,
    warm: Option<&ControlSequence>,
    opts: PgOptions,
) -> Result<PgOutcome> {
    check_state(system, x0)?;
    let (m, modes) = (system.m(), system.modes());
    let stepper = Stepper::new(system, sched, true)?;
    let zero = system.zero_state();
    let residual = |u: &[Matrix]| -> Result<(ModalState, f64)> {
        let x = stepper.run(x0, u, k)?;
        let r = x.l2_norm();
        Ok((x, r))
    };

    let mut v: Vec<Matrix> = (0..k)
        .map(|j| Matrix::from_element(m, modes, 1.0 + 0.1 * j as f64))
        .collect();
    let mut lipschitz = 0.0;
    for _ in 0..opts.power_iterations {
        let nv = inner(&v, &v).sqrt();
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = stepper.pullback(&stepper.run(&zero, &v, k)?, k)?;
        lipschitz = inner(&w, &w).sqrt();
        v = w;
    }
    let step = if lipschitz > 0.0 {
        1.0 / lipschitz
    } else {
        1.0
    };

    let mut u = warm
        .map(|w| w.resized(k, m, modes).impulses)
        .unwrap_or_else(|| vec![Matrix::zeros(m, modes); k]);
    project(&mut u, opts.budget);
    let (_, r0) = residual(&u)?;
    let mut best = (r0, u.clone());
    let mut y = u.clone();
    let mut t = 1.0_f64;
    let mut prev = r0;
    let mut iterations = 0;
    for _ in 0..opts.iterations {
        if best.0 <= opts.target || k == 0 {
            break;
        }
        iterations += 1;
        let (xy, _) = residual(&y)?;
        let g = stepper.pullback(&xy, k)?;
        let mut next = axpy(&y, -step, &g);
        project(&mut next, opts.budget);
        let (_, r) = residual(&next)?;
        if r < best.0 {
            best = (r, next.clone());
        }
        if r > prev {
            t = 1.0;
            y = next.clone();
        } else {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let diff = axpy(&next, -1.0, &u);
            y = axpy(&next, (t - 1.0) / t_next, &diff);
            t = t_next;
        }
        u = next;
        prev = r;
    }
    let mut controls = ControlSequence::new(best.1);
    controls.budget = opts.budget;
    Ok(PgOutcome {
        controls,
        residual: best.0,
        lipschitz,
        iterations,
    })
}

/// Constrained steering into `B_eps(0)` with possibly local supports.
pub fn local_gcac_synthesize(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    eps: f64,
    k_max: usize,
    opts: PgOptions,
) -> Result<SteeringResult> {
    check_state(system, x0)?;
    if !(eps > 0.0) {
        return Err(SynthesisError::BadArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if x0.l2_norm() == 0.0 {
        return SteeringResult::verified(
            system,
            sched,
            x0,
            ControlSequence::empty(),
            0,
            Certificate::EpsilonBall,
        );
    }
    let sym = linalg::symmetric_part_max_eig(system.p())?;
    let lambda1 = system.lambda1();
    if sym > lambda1 + SPECTRAL_TOL * lambda1.max(1.0) {
        return Err(SynthesisError::Precondition(format!(
            "λ_max(sym P) = {sym} exceeds λ₁ = {lambda1}"
        )));
    }
    require_rank(system, sched, k_max)?;
    let opts = PgOptions {
        target: eps,
        ..opts
    };
    let mut k = (2 * sched.hbar()).min(k_max);
    let mut warm: Option<ControlSequence> = None;
    let mut history = Vec::new();
    loop {
        let out = minimize_residual(system, sched, x0, k, warm.as_ref(), opts)?;
        history.push((k, out.residual));
        let lipschitz = out.lipschitz;
        let done = out.residual <= eps;
        if done || k >= k_max {
            let cert = if done {
                Certificate::EpsilonBall
            } else {
                Certificate::FailedHorizonExhausted
            };
            let mut res = SteeringResult::verified(system, sched, x0, out.controls, k, cert)?;
            if res.residual > eps {
                res.certificate = Certificate::FailedHorizonExhausted;
            }
            res.solver = Some(SolverStats {
                iterations_per_horizon: opts.iterations,
                lipschitz,
                step: if lipschitz > 0.0 {
                    1.0 / lipschitz
                } else {
                    1.0
                },
                history,
            });
            return Ok(res);
        }
        warm = Some(out.controls);
        k = (2 * k).min(k_max);
    }
}

/// Exact null control at horizon `k*`, mode by mode with minimum l² norm.
pub fn null_steer(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    k_star: usize,
) -> Result<SteeringResult> {
    check_state(system, x0)?;
    require_full_support(system)?;
    if k_star == 0 {
        return Err(SynthesisError::BadArgument(
            "k_star must be at least 1".into(),
        ));
    }
    let qs = system.q_matrices();
    let stack = observability::control_stack(system.p(), &qs, sched, k_star)?;
    let n = system.n();
    if linalg::column_normalized_rank(&stack, DEFAULT_RANK_TOL)? < n {
        return Err(SynthesisError::RankFailure(k_star));
    }
    let times = sched.times(k_star);
    let c_obs = finite_obs_constant(
        system.p(),
        &(1..=k_star)
            .map(|j| qs[sched.nu_unchecked(j) - 1].clone())
            .collect::<Vec<_>>(),
        &times,
    )?
    .constant;
    let x_norm = x0.l2_norm();
    let m = system.m();
    let mut controls = ControlSequence::zeros(k_star, m, system.modes());
    if x_norm > 0.0 {
        let tk = sched.time_at(k_star);
        let ident = Matrix::identity(n, n);
        for (i, lambda) in system.domain().eigenvalues().into_iter().enumerate() {
            let g = x0.coeffs().column(i).into_owned();
            if g.norm() == 0.0 {
                continue;
            }
            let a = system.p() - &ident * lambda;
            let blocks =
                (1..=k_star)
                    .map(|j| {
                        Ok(linalg::mat_exp(&a, tk - sched.time_at(j))?
                            * &qs[sched.nu_unchecked(j) - 1])
                    })
                    .collect::<Result<Vec<_>>>()?;
            let mat = linalg::hstack(n, &blocks)?;
            let b = -(linalg::mat_exp(&a, tk)? * g);
            let bn = b.norm();
            if bn == 0.0 {
                continue;
            }
            let tol = (1e-10_f64).max(1e-13 * x_norm / bn);
            let xi = linalg::min_norm_solve(&mat, &b, true, tol)?;
            for j in 0..k_star {
                controls.impulses[j].set_column(i, &xi.rows(j * m, m));
            }
        }
    }
    let mut res =
        SteeringResult::verified(system, sched, x0, controls, k_star, Certificate::Exact)?;
    res.l2_bound = Some(c_obs.sqrt() * x_norm);
    Ok(res)
}

/// Exact constrained null control: approximate phase into `B_ε(0)`, then an
/// exact phase started on a period boundary.
pub fn constrained_null_synthesize(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    k_max: usize,
) -> Result<SteeringResult> {
    check_state(system, x0)?;
    require_full_support(system)?;
    require_spectral(system)?;
    let k_star = require_rank(system, sched, k_max)?;
    let h = sched.hbar();
    let period = sched.period();
    let mut m_sum = 0.0;
    for k in 0..h {
        m_sum += semigroup_norm(system, period - sched.time_at(k))?;
    }
    let m_const = m_sum.max(1.0);
    let qs = system.q_matrices();
    let c_const = finite_obs_constant(
        system.p(),
        &(1..=k_star)
            .map(|j| qs[sched.nu_unchecked(j) - 1].clone())
            .collect::<Vec<_>>(),
        &sched.times(k_star),
    )?
    .constant;
    let eps = 1.0 / (m_const * c_const.sqrt());
    let mut phases = NullPhases {
        m_const,
        c_const,
        eps,
        k_star,
        gcac_horizon: None,
        null_start: 0,
    };
    if x0.l2_norm() == 0.0 {
        let mut res = SteeringResult::verified(
            system,
            sched,
            x0,
            ControlSequence::empty(),
            0,
            Certificate::Exact,
        )?;
        res.phases = Some(phases);
        return Ok(res);
    }

    let (mut controls, start_state) = if x0.l2_norm() <= eps {
        (ControlSequence::empty(), x0.clone())
    } else {
        let approx = gcac_synthesize(system, sched, x0, eps, k_max)?;
        let k_hat = approx.horizon_k;
        let start = (k_hat / h + 1) * h;
        phases.gcac_horizon = Some(k_hat);
        phases.null_start = start;
        let padded = approx.controls.resized(start, system.m(), system.modes());
        let state = simulate(system, sched, x0, &padded, start)?;
        (padded, state)
    };
    let exact = null_steer(system, sched, &start_state, k_star)?;
    let total = phases.null_start + k_star;
    if total > k_max {
        return Err(SynthesisError::HorizonExhausted {
            k_max,
            measure: "required horizon",
            best: total as f64,
        });
    }
    controls.extend(exact.controls);
    let mut res = SteeringResult::verified(system, sched, x0, controls, total, Certificate::Exact)?;
    if !res.controls.within_budget() {
        return Err(SynthesisError::HorizonExhausted {
            k_max,
            measure: "sup-norm",
            best: res.controls.max_norm(),
        });
    }
    res.l2_bound = exact.l2_bound;
    res.phases = Some(phases);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Controller, Interval, SpectralDomain};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn system(
        p: Matrix,
        qs: Vec<Matrix>,
        support: Option<(f64, f64)>,
        modes: usize,
    ) -> CoupledSystem {
        let d = SpectralDomain::unit(modes).unwrap();
        let support = support.map_or(Interval::full(&d), |(a, b)| Interval::new(a, b));
        CoupledSystem::new(
            p,
            qs.into_iter().map(|q| Controller { q, support }).collect(),
            d,
        )
        .unwrap()
    }

    fn unit_sched() -> ImpulseSchedule {
        ImpulseSchedule::new(vec![1.0]).unwrap()
    }

    fn identity_system(modes: usize) -> CoupledSystem {
        system(
            Matrix::identity(2, 2),
            vec![Matrix::identity(2, 2)],
            None,
            modes,
        )
    }

    #[test]
    fn simulate_examples() {
        let s = system(
            Matrix::from_row_slice(2, 2, &[0.3, -0.4, 0.9, 0.0]),
            vec![Matrix::identity(2, 2)],
            Some((0.2, 2.0)),
            6,
        );
        let sched = ImpulseSchedule::new(vec![0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = ModalState::random(2, 6, 1.0, &mut rng);
        let y0 = ModalState::random(2, 6, 1.0, &mut rng);
        let free = simulate(&s, &sched, &x0, &ControlSequence::empty(), 4).unwrap();
        let direct = apply_semigroup(&s, &x0, 2.0).unwrap();
        assert!((free.coeffs() - direct.coeffs()).amax() < 1e-12);

        let u = ControlSequence::new(
            (0..4)
                .map(|_| ModalState::random(2, 6, 0.7, &mut rng).into_coeffs())
                .collect(),
        );
        let lhs = simulate(&s, &sched, &(&x0 + &y0), &u, 4).unwrap();
        let rhs = &simulate(&s, &sched, &x0, &u, 4).unwrap()
            + &simulate(&s, &sched, &y0, &ControlSequence::empty(), 4).unwrap();
        assert!((lhs.coeffs() - rhs.coeffs()).amax() < 1e-12);

        let traj = trajectory(&s, &sched, &x0, &u, 4).unwrap();
        assert_eq!(traj.len(), 5);
        assert_eq!(traj[4], simulate(&s, &sched, &x0, &u, 4).unwrap());
    }

    #[test]
    fn project_h1_examples() {
        let x = ModalState::single_mode(2, 4, 1, &[1.0, 2.0]);
        let (v, r) = project_h1(&x);
        assert_eq!(v.as_slice(), &[1.0, 2.0]);
        assert_eq!(r.l2_norm(), 0.0);
        let x = ModalState::single_mode(2, 4, 2, &[1.0, 2.0]);
        let (v, r) = project_h1(&x);
        assert_eq!(v.norm(), 0.0);
        assert_eq!(r, x);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = ModalState::random(2, 4, 3.0, &mut rng);
        let (v, r) = project_h1(&x);
        let back = &ModalState::single_mode(2, 4, 1, v.as_slice()) + &r;
        assert_eq!(back, x);
    }

    #[test]
    fn gramian_delta_examples() {
        let s = identity_system(4);
        let b = gramian_delta(&s, &unit_sched(), 1).unwrap();
        assert!((&b.m - Matrix::identity(2, 2)).amax() < 1e-14);
        assert!((b.delta - 1.0).abs() < 1e-14);
        let b = gramian_delta(&s, &unit_sched(), 2).unwrap();
        assert!((&b.m - Matrix::identity(2, 2) * 2.0).amax() < 1e-14);
        assert!((b.delta - 2f64.sqrt()).abs() < 1e-14);
        let c = system(
            Matrix::identity(2, 2),
            vec![Matrix::from_column_slice(2, 1, &[0.0, 1.0])],
            Some((0.0, PI / 2.0)),
            4,
        );
        assert_eq!(
            gramian_delta(&c, &unit_sched(), 3),
            Err(SynthesisError::RankFailure(3))
        );
    }

    #[test]
    fn gramian_ball_reconstructs_target() {
        let s = system(
            Matrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 0.2]),
            vec![Matrix::from_column_slice(2, 1, &[1.0, 0.0])],
            None,
            4,
        );
        let sched = ImpulseSchedule::new(vec![0.4]).unwrap();
        let b = gramian_delta(&s, &sched, 3).unwrap();
        let eta = Vector::from_vec(vec![0.6, -0.8]) * b.delta;
        let z = b.controls(&eta);
        assert!(z.iter().all(|z| z.norm() <= 1.0 + 1e-12));
        assert!((b.reach(&z) - eta).norm() < 1e-10);
    }

    #[test]
    fn steer_examples() {
        let s = identity_system(4);
        let r = steer_first_mode(&s, &unit_sched(), &Vector::zeros(2), 50).unwrap();
        assert_eq!((r.horizon_k, r.controls.len()), (0, 0));

        let v = Vector::from_vec(vec![6.0, 8.0]);
        let r = steer_first_mode(&s, &unit_sched(), &v, 64).unwrap();
        assert_eq!(r.horizon_k, 10);
        assert!(r.controls.within_budget());
        assert!(r.final_state.l2_norm() <= 1e-9 * 10.0);

        let r = steer_first_mode(&s, &unit_sched(), &v, 5);
        assert!(matches!(r, Err(SynthesisError::HorizonExhausted { .. })));
    }

    #[test]
    fn chunking_fallback_reaches_target() {
        let s = identity_system(3);
        let v = Vector::from_vec(vec![3.0, -1.5]);
        let (k, xi) = chunked_mode1(&s, &unit_sched(), &v, 1, 40)
            .unwrap()
            .unwrap();
        assert_eq!(k, 4);
        assert!(xi.iter().all(|x| x.norm() <= 1.0 + 1e-12));
        let sum = xi.iter().fold(Vector::zeros(2), |a, x| a + x);
        assert!((sum + v).norm() < 1e-12);
    }

    #[test]
    fn decay_examples() {
        let s = system(Matrix::zeros(2, 2), vec![Matrix::identity(2, 2)], None, 4);
        assert_eq!(
            decay_horizon(&s, &unit_sched(), &s.zero_state(), 0.1).unwrap(),
            0
        );
        let r = ModalState::single_mode(2, 4, 2, &[1.0, 0.0]);
        assert_eq!(
            decay_horizon(&s, &unit_sched(), &r, (-8.0f64).exp()).unwrap(),
            2
        );
        let s = identity_system(4);
        let r = ModalState::single_mode(2, 4, 3, &[1.0, 1.0]);
        assert!(decay_horizon(&s, &unit_sched(), &r, 1e-6).unwrap() > 0);
        let bad = ModalState::single_mode(2, 4, 1, &[1.0, 1.0]);
        assert!(decay_horizon(&s, &unit_sched(), &bad, 1e-6).is_err());
    }

    #[test]
    fn decay_constant_bounds_remainders() {
        let s = system(
            Matrix::from_row_slice(2, 2, &[0.5, 4.0, 0.0, 0.2]),
            vec![Matrix::identity(2, 2)],
            None,
            6,
        );
        let c = decay_constant(&s).unwrap();
        let gap = s.lambda2() - s.lambda1();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let (_, r) = project_h1(&ModalState::random(2, 6, 1.0, &mut rng));
            for i in 0..400 {
                let t = 0.003 + i as f64 * 0.05;
                let lhs = apply_semigroup(&s, &r, t).unwrap().l2_norm();
                assert!(lhs <= c * (-gap * t / 2.0).exp() * r.l2_norm() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn gcac_examples() {
        let s = identity_system(8);
        let r = gcac_synthesize(&s, &unit_sched(), &s.zero_state(), 0.1, 10).unwrap();
        assert_eq!(r.horizon_k, 0);

        let x0 = ModalState::single_mode(2, 8, 3, &[1.0, 0.0]);
        let r = gcac_synthesize(&s, &unit_sched(), &x0, 1e-3, 50).unwrap();
        assert_eq!(r.controls.max_norm(), 0.0);
        let (_, rest) = project_h1(&x0);
        assert_eq!(
            r.horizon_k,
            decay_horizon(&s, &unit_sched(), &rest, 0.99e-3).unwrap()
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = ModalState::random(2, 8, 10.0, &mut rng);
        let r = gcac_synthesize(&s, &unit_sched(), &x0, 1e-2, 200).unwrap();
        assert!(r.residual <= 1e-2 && r.controls.within_budget());
        let again = simulate(&s, &unit_sched(), &x0, &r.controls, r.horizon_k).unwrap();
        assert!((again.l2_norm() - r.residual).abs() <= 1e-10);
    }

    #[test]
    fn gcac_rejects_local_support_and_unstable_p() {
        let s = system(
            Matrix::zeros(2, 2),
            vec![Matrix::identity(2, 2)],
            Some((0.0, 1.0)),
            4,
        );
        let x0 = ModalState::single_mode(2, 4, 1, &[1.0, 0.0]);
        assert!(matches!(
            gcac_synthesize(&s, &unit_sched(), &x0, 0.1, 10),
            Err(SynthesisError::Precondition(_))
        ));
        let s = system(
            Matrix::identity(2, 2) * 3.0,
            vec![Matrix::identity(2, 2)],
            None,
            4,
        );
        assert!(matches!(
            gcac_synthesize(&s, &unit_sched(), &x0, 0.1, 10),
            Err(SynthesisError::Precondition(_))
        ));
    }

    #[test]
    fn pg_gradient_matches_finite_differences() {
        let s = system(
            Matrix::from_row_slice(2, 2, &[0.2, 0.5, -0.5, 0.0]),
            vec![
                Matrix::identity(2, 2),
                Matrix::from_column_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]),
            ],
            Some((0.5, 2.5)),
            4,
        );
        let sched = ImpulseSchedule::new(vec![0.3, 0.7]).unwrap();
        let stepper = Stepper::new(&s, &sched, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x0 = ModalState::random(2, 4, 1.0, &mut rng);
        let u: Vec<Matrix> = (0..3)
            .map(|_| ModalState::random(2, 4, 0.5, &mut rng).into_coeffs())
            .collect();
        let f = |u: &[Matrix]| 0.5 * stepper.run(&x0, u, 3).unwrap().l2_norm().powi(2);
        let g = stepper
            .pullback(&stepper.run(&x0, &u, 3).unwrap(), 3)
            .unwrap();
        let h = 1e-6;
        for j in 0..3 {
            for idx in [0usize, 3, 7] {
                let mut up = u.clone();
                up[j][idx] += h;
                let mut dn = u.clone();
                dn[j][idx] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                assert!(
                    (fd - g[j][idx]).abs() < 1e-7,
                    "j={j} idx={idx}: {fd} vs {}",
                    g[j][idx]
                );
            }
        }
    }

    #[test]
    fn local_examples() {
        let s = system(
            Matrix::zeros(2, 2),
            vec![Matrix::identity(2, 2)],
            Some((0.0, PI / 2.0)),
            16,
        );
        let sched = unit_sched();
        let r = local_gcac_synthesize(&s, &sched, &s.zero_state(), 0.1, 64, PgOptions::default())
            .unwrap();
        assert_eq!(r.horizon_k, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x0 = ModalState::random(2, 16, 1.0, &mut rng);
        let r = local_gcac_synthesize(&s, &sched, &x0, 0.1, 256, PgOptions::default()).unwrap();
        assert_eq!(r.certificate, Certificate::EpsilonBall);
        assert!(r.residual <= 0.1 && r.controls.within_budget());
    }

    #[test]
    fn local_reports_honest_failure() {
        // the first component is invisible to the control
        let s = system(
            Matrix::identity(2, 2),
            vec![Matrix::from_column_slice(2, 2, &[0.0, 1.0, 0.0, 1.0])],
            Some((0.0, PI / 2.0)),
            8,
        );
        let x0 = ModalState::single_mode(2, 8, 1, &[1.0, 0.0]);
        assert!(matches!(
            local_gcac_synthesize(&s, &unit_sched(), &x0, 0.1, 16, PgOptions::default()),
            Err(SynthesisError::RankFailure(16))
        ));
    }

    #[test]
    fn null_steer_examples() {
        let s = system(Matrix::zeros(2, 2), vec![Matrix::identity(2, 2)], None, 4);
        let sched = ImpulseSchedule::new(vec![0.5]).unwrap();
        let r = null_steer(&s, &sched, &s.zero_state(), 1).unwrap();
        assert_eq!(r.controls.max_norm(), 0.0);
        let x0 = ModalState::single_mode(2, 4, 1, &[2.0, -1.0]);
        let r = null_steer(&s, &sched, &x0, 1).unwrap();
        let u = &r.controls.impulses[0];
        let f = (-0.5f64).exp();
        assert!((u[(0, 0)] + 2.0 * f).abs() < 1e-14 && (u[(1, 0)] - f).abs() < 1e-14);
        assert!(r.residual < 1e-14);
        assert!(r.controls.l2_norm() <= r.l2_bound.unwrap() * (1.0 + 1e-12));

        let c = system(
            Matrix::identity(2, 2),
            vec![Matrix::from_column_slice(2, 1, &[0.0, 1.0])],
            None,
            4,
        );
        assert_eq!(
            null_steer(&c, &unit_sched(), &x0, 3),
            Err(SynthesisError::RankFailure(3))
        );
    }

    #[test]
    fn null_steer_respects_l2_bound() {
        let s = system(
            Matrix::from_row_slice(2, 2, &[0.3, 1.0, -0.6, -0.2]),
            vec![Matrix::from_column_slice(2, 1, &[1.0, 0.5])],
            None,
            6,
        );
        let sched = ImpulseSchedule::new(vec![0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let x0 = ModalState::random(2, 6, 2.0, &mut rng);
            let r = null_steer(&s, &sched, &x0, 4).unwrap();
            assert!(r.residual <= 1e-10 * 2.0, "{}", r.residual);
            assert!(r.controls.l2_norm() <= r.l2_bound.unwrap() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn constrained_null_examples() {
        let s = identity_system(8);
        let r = constrained_null_synthesize(&s, &unit_sched(), &s.zero_state(), 50).unwrap();
        assert_eq!(r.controls.len(), 0);

        let x0 = ModalState::single_mode(2, 8, 2, &[0.1, 0.0]);
        let r = constrained_null_synthesize(&s, &unit_sched(), &x0, 50).unwrap();
        let p = r.phases.clone().unwrap();
        assert!(x0.l2_norm() <= p.eps);
        assert_eq!((p.gcac_horizon, p.null_start), (None, 0));
        assert!(r.residual <= 1e-8 * x0.l2_norm());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = ModalState::random(2, 8, 5.0, &mut rng);
        let r = constrained_null_synthesize(&s, &unit_sched(), &x0, 200).unwrap();
        let p = r.phases.clone().unwrap();
        assert!(p.gcac_horizon.is_some());
        assert_eq!(p.null_start % unit_sched().hbar(), 0);
        assert!(r.residual <= 1e-8 * 5.0);
        assert!(r.controls.within_budget());
    }

    #[test]
    fn state_at_matches_simulate_on_impulses() {
        let s = identity_system(4);
        let sched = ImpulseSchedule::new(vec![0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x0 = ModalState::random(2, 4, 1.0, &mut rng);
        let u = ControlSequence::new(
            (0..5)
                .map(|_| ModalState::random(2, 4, 0.5, &mut rng).into_coeffs())
                .collect(),
        );
        let a = state_at(&s, &sched, &x0, &u, sched.time_at(3)).unwrap();
        let b = simulate(&s, &sched, &x0, &u, 3).unwrap();
        assert!((a.coeffs() - b.coeffs()).amax() < 1e-14);
        let mid = state_at(&s, &sched, &x0, &u, 1.2).unwrap();
        let x2 = simulate(&s, &sched, &x0, &u, 2).unwrap();
        let c = apply_semigroup(&s, &x2, 0.2).unwrap();
        assert!((mid.coeffs() - c.coeffs()).amax() < 1e-14);
    }
}
