// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Rank conditions, observability constants and hypothesis checks.
//!
//! Adjoint quantities are evaluated on flattened modal coefficients: an
//! `n × N` array `Z` is read column-major into a vector of length `nN`, so
//! `e^{A*s}` becomes `diag(e^{-λ_i s}) ⊗ e^{Pᵀ s}` and the observation
//! `χ_ω Qᵀ` becomes `G^{1/2} ⊗ Qᵀ` with `G` the overlap matrix of `ω`.
//! Euclidean norms of those images are the exact continuum norms of the
//! truncated functions.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector, DEFAULT_RANK_TOL};
use crate::schedule::{ImpulseSchedule, ScheduleError};
use crate::spectral::{CoupledSystem, SpectralError};

/// Relative tolerance for comparing `max Re σ(P)` and `λ_max(sym P)` to `λ₁`.
pub const SPECTRAL_TOL: f64 = 1e-9;

/// Largest interpolation constant accepted by the θ fit.
const INTERP_C_CAP: f64 = 1e12;

/// Gap between the largest tried θ and 1.
pub const THETA_FIT_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("expected {expected} injection matrices, got {got}")]
    ControllerCount { expected: usize, got: usize },
    #[error("observation times must be positive and strictly increasing")]
    BadTimes,
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("at least 100 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("rank condition fails at k = {k}; unobserved direction {witness:?}")]
    RankFailure { k: usize, witness: Vec<f64> },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, ObservabilityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ExactGramian,
    SampledFit,
    Composed,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::ExactGramian => "exact-gramian",
            Method::SampledFit => "sampled-fit",
            Method::Composed => "composed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityReport {
    pub k: usize,
    /// `C(k)`, `D(k, δ)` or the interpolation constant; `+∞` when singular.
    pub constant: f64,
    /// Only set by the interpolation fit.
    pub theta: Option<f64>,
    pub delta: Option<f64>,
    pub method: Method,
    /// Number of states behind a sampled fit.
    pub samples: Option<usize>,
}

/// Outcome of the rank scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankCondition {
    pub holds: bool,
    /// Smallest horizon with full row rank.
    pub k_star: Option<usize>,
}

fn check_controllers(qs: &[Matrix], sched: &ImpulseSchedule) -> Result<()> {
    if qs.len() != sched.hbar() {
        return Err(ObservabilityError::ControllerCount {
            expected: sched.hbar(),
            got: qs.len(),
        });
    }
    Ok(())
}

/// `(e^{-P t_1} Q_{ν(1)}, …, e^{-P t_k} Q_{ν(k)})`.
pub fn control_stack(
    p: &Matrix,
    qs: &[Matrix],
    sched: &ImpulseSchedule,
    k: usize,
) -> Result<Matrix> {
    check_controllers(qs, sched)?;
    let blocks = (1..=k)
        .map(|j| Ok(linalg::mat_exp(&-p, sched.time_at(j))? * &qs[sched.nu_unchecked(j) - 1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(linalg::hstack(p.nrows(), &blocks)?)
}

/// Smallest `k* ≤ k_max` at which the control stack has full row rank.
pub fn rank_condition(
    p: &Matrix,
    qs: &[Matrix],
    sched: &ImpulseSchedule,
    k_max: usize,
) -> Result<RankCondition> {
    check_controllers(qs, sched)?;
    if k_max == 0 {
        return Err(ObservabilityError::BadArgument(
            "k_max must be at least 1".into(),
        ));
    }
    let n = p.nrows();
    let mut blocks = Vec::new();
    for j in 1..=k_max {
        let e = linalg::mat_exp(&-p, sched.time_at(j))?;
        blocks.push(e * &qs[sched.nu_unchecked(j) - 1]);
        let s = linalg::hstack(n, &blocks)?;
        if linalg::column_normalized_rank(&s, DEFAULT_RANK_TOL)? == n {
            return Ok(RankCondition {
                holds: true,
                k_star: Some(j),
            });
        }
    }
    Ok(RankCondition {
        holds: false,
        k_star: None,
    })
}

/// Rank of `(Q_1, …, Q_ħ, PQ_1, …, P^{n-1}Q_ħ)` equals `n`.
pub fn kalman_rank(p: &Matrix, qs: &[Matrix]) -> Result<bool> {
    linalg::ensure_square(p)?;
    let n = p.nrows();
    let mut blocks = Vec::new();
    for q in qs {
        let mut b = q.clone();
        for _ in 0..n {
            let next = p * &b;
            blocks.push(b);
            b = next;
        }
    }
    let k = linalg::hstack(n, &blocks)?;
    Ok(linalg::column_normalized_rank(&k, DEFAULT_RANK_TOL)? == n)
}

/// `W = Σ_j e^{-Pτ_j} Q̃_j Q̃_jᵀ e^{-Pᵀτ_j}`, cycling through `qs`.
pub fn gramian(p: &Matrix, qs: &[Matrix], taus: &[f64]) -> Result<Matrix> {
    let s = time_stack(p, qs, taus)?;
    Ok(&s * s.transpose())
}

fn time_stack(p: &Matrix, qs: &[Matrix], taus: &[f64]) -> Result<Matrix> {
    if qs.is_empty() {
        return Err(ObservabilityError::ControllerCount {
            expected: 1,
            got: 0,
        });
    }
    let mut prev = 0.0;
    for &t in taus {
        if !(t.is_finite() && t > prev) {
            return Err(ObservabilityError::BadTimes);
        }
        prev = t;
    }
    let blocks = taus
        .iter()
        .enumerate()
        .map(|(j, &t)| Ok(linalg::mat_exp(&-p, t)? * &qs[j % qs.len()]))
        .collect::<Result<Vec<_>>>()?;
    Ok(linalg::hstack(p.nrows(), &blocks)?)
}

/// Optimal `C(k)` in `‖v‖² ≤ C(k) Σ_j ‖Q̃_jᵀ e^{-Pᵀτ_j} v‖²`, i.e. `1/λ_min(W)`.
pub fn finite_obs_constant(p: &Matrix, qs: &[Matrix], taus: &[f64]) -> Result<ObservabilityReport> {
    let s = time_stack(p, qs, taus)?;
    let n = p.nrows();
    let constant = if taus.is_empty() || linalg::column_normalized_rank(&s, DEFAULT_RANK_TOL)? < n {
        f64::INFINITY
    } else {
        let sv = s.clone().svd(false, false).singular_values;
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        1.0 / (smin * smin)
    };
    Ok(ObservabilityReport {
        k: taus.len(),
        constant,
        theta: None,
        delta: None,
        method: Method::ExactGramian,
        samples: None,
    })
}

/// `‖e^{At}‖ = e^{-λ₁t} ‖e^{Pt}‖₂`; equals `‖e^{A*t}‖`.
pub fn semigroup_norm(system: &CoupledSystem, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SpectralError::BadTime(t).into());
    }
    let n = system.n();
    let shifted = system.p() - Matrix::identity(n, n) * system.lambda1();
    Ok(linalg::spectral_norm(&linalg::mat_exp(&shifted, t)?))
}

/// `max_{0≤t≤T} ‖e^{At}‖`, from a uniform grid refined by golden-section search.
pub fn semigroup_norm_sup(system: &CoupledSystem, horizon: f64) -> Result<f64> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SpectralError::BadTime(horizon).into());
    }
    const GRID: usize = 2000;
    let f = |t: f64| semigroup_norm(system, t);
    let h = horizon / GRID as f64;
    let mut best = (0.0, f(0.0)?);
    for i in 1..=GRID {
        let t = i as f64 * h;
        let v = f(t)?;
        if v > best.1 {
            best = (t, v);
        }
    }
    if h == 0.0 {
        return Ok(best.1);
    }
    let (mut a, mut b) = ((best.0 - h).max(0.0), (best.0 + h).min(horizon));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        let (fc, fd) = (f(c)?, f(d)?);
        best.1 = best.1.max(fc).max(fd);
        if fc > fd {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best.1)
}

/// Prop-2.6 style composition: `(δ_k, D(kγħ, δ_k))` from a report on `[0, t_{γħ}]`.
pub fn compose_obs(
    d_op: f64,
    delta: f64,
    gamma: usize,
    k: usize,
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
) -> Result<(f64, f64)> {
    if gamma == 0 || k == 0 {
        return Err(ObservabilityError::BadArgument(
            "gamma and k must be positive".into(),
        ));
    }
    if !(delta > 0.0 && d_op >= 0.0) {
        return Err(ObservabilityError::BadArgument(format!(
            "need delta > 0 and D >= 0, got {delta} and {d_op}"
        )));
    }
    let block = gamma * sched.hbar();
    let (mut sum, mut inv_sum) = (0.0, 0.0);
    for i in 0..k {
        let norm = semigroup_norm(system, sched.time_at(i * block))?;
        sum += norm;
        inv_sum += 1.0 / norm;
    }
    Ok((delta * sum / inv_sum, d_op / inv_sum))
}

/// Matrix form of the adjoint observation maps at a fixed horizon.
#[derive(Debug, Clone)]
pub struct ObservationMaps {
    n: usize,
    modes: usize,
    /// `e^{A* t_end}`.
    pub final_map: Matrix,
    /// `χ_{ω_{ν(j)}} Q_{ν(j)}ᵀ e^{A*(t_end - t_j)}` for `j = 1..k`.
    pub obs: Vec<Matrix>,
}

fn sqrt_psd(g: &Matrix) -> Matrix {
    let eig = g.clone().symmetric_eigen();
    let d = Matrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn adjoint_semigroup_matrix(system: &CoupledSystem, pt: &Matrix, s: f64) -> Result<Matrix> {
    let d = Matrix::from_diagonal(&Vector::from_iterator(
        system.modes(),
        system.domain().eigenvalues().iter().map(|l| (-l * s).exp()),
    ));
    Ok(d.kronecker(&linalg::mat_exp(pt, s)?))
}

impl ObservationMaps {
    /// Observations at impulses `1..=k`, final time `t_end ≥ t_k`.
    pub fn new(
        system: &CoupledSystem,
        sched: &ImpulseSchedule,
        k: usize,
        t_end: f64,
    ) -> Result<Self> {
        if sched.hbar() != system.hbar() {
            return Err(ObservabilityError::ControllerCount {
                expected: sched.hbar(),
                got: system.hbar(),
            });
        }
        if !(t_end >= sched.time_at(k)) {
            return Err(ObservabilityError::BadArgument(format!(
                "final time {t_end} precedes t_{k}"
            )));
        }
        let pt = system.p().transpose();
        let weights = (1..=system.hbar())
            .map(|c| {
                let qt = system.controllers()[c - 1].q.transpose();
                Ok(match system.overlap(c)? {
                    Some(g) => sqrt_psd(g).kronecker(&qt),
                    None => Matrix::identity(system.modes(), system.modes()).kronecker(&qt),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let obs = (1..=k)
            .map(|j| {
                let s = t_end - sched.time_at(j);
                Ok(&weights[sched.nu_unchecked(j) - 1] * adjoint_semigroup_matrix(system, &pt, s)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n: system.n(),
            modes: system.modes(),
            final_map: adjoint_semigroup_matrix(system, &pt, t_end)?,
            obs,
        })
    }

    pub fn dim(&self) -> usize {
        self.n * self.modes
    }

    pub fn lhs(&self, z: &Vector) -> f64 {
        (&self.final_map * z).norm()
    }

    pub fn obs_terms(&self, z: &Vector) -> Vec<f64> {
        self.obs.iter().map(|o| (o * z).norm()).collect()
    }

    pub fn obs_sum(&self, z: &Vector) -> f64 {
        self.obs.iter().map(|o| (o * z).norm()).sum()
    }

    /// Stacked observation operator.
    pub fn stacked(&self) -> Matrix {
        let rows: usize = self.obs.iter().map(|o| o.nrows()).sum();
        let mut s = Matrix::zeros(rows, self.dim());
        let mut r = 0;
        for o in &self.obs {
            s.rows_mut(r, o.nrows()).copy_from(o);
            r += o.nrows();
        }
        s
    }
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Sampling controls for the fitted constants. The seed is required.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    pub seed: u64,
    /// Truncation used for the fit (capped by the system's own).
    pub modes: usize,
    pub samples: usize,
    /// Gradient steps per refined start.
    pub refine_iters: usize,
    /// Number of best samples refined.
    pub refine_starts: usize,
}

impl SamplingOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            modes: 4,
            samples: 10_000,
            refine_iters: 200,
            refine_starts: 8,
        }
    }
}

/// Fixed sample set for `D(k, δ)`. Every evaluated state stays in the set,
/// so the constant is non-increasing in `δ` on any one sampler.
#[derive(Debug, Clone)]
pub struct DeltaObsSampler {
    maps: ObservationMaps,
    /// `(z, ‖e^{A*t_k} z‖, Σ_j obs_j(z))` with `‖z‖ = 1`.
    points: Vec<(Vector, f64, f64)>,
    /// `sup ‖e^{A*t_k} z‖` over unit `z` with zero observations.
    null_lhs: f64,
    opts: SamplingOptions,
}

impl DeltaObsSampler {
    pub fn new(
        system: &CoupledSystem,
        sched: &ImpulseSchedule,
        k: usize,
        opts: SamplingOptions,
    ) -> Result<Self> {
        if k == 0 {
            return Err(ObservabilityError::BadArgument(
                "k must be at least 1".into(),
            ));
        }
        let trunc = system.with_modes(opts.modes.min(system.modes()).max(1))?;
        let maps = ObservationMaps::new(&trunc, sched, k, sched.time_at(k))?;
        let null_lhs = null_space_lhs(&maps);
        let dim = maps.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut s = Self {
            maps,
            points: Vec::with_capacity(opts.samples + dim),
            null_lhs,
            opts,
        };
        for i in 0..dim {
            let mut e = Vector::zeros(dim);
            e[i] = 1.0;
            s.push(e);
        }
        for _ in 0..opts.samples {
            let z = random_unit(dim, &mut rng);
            s.push(z);
        }
        Ok(s)
    }

    fn push(&mut self, z: Vector) {
        let lhs = self.maps.lhs(&z);
        let obs = self.maps.obs_sum(&z);
        self.points.push((z, lhs, obs));
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn ratio(lhs: f64, obs: f64, delta: f64) -> f64 {
        let excess = lhs - delta;
        if excess <= 0.0 {
            0.0
        } else if obs <= 0.0 {
            f64::INFINITY
        } else {
            excess / obs
        }
    }

    /// `max (‖e^{A*t_k}z‖ − δ)₊ / Σ_j obs_j(z)` over the current set.
    pub fn constant(&self, delta: f64) -> f64 {
        if self.null_lhs > delta * (1.0 + 1e-12) {
            return f64::INFINITY;
        }
        self.points
            .iter()
            .map(|(_, l, o)| Self::ratio(*l, *o, delta))
            .fold(0.0, f64::max)
    }

    /// Gradient ascent on the ratio from the best current samples.
    pub fn refine(&mut self, delta: f64) {
        if self.null_lhs > delta * (1.0 + 1e-12) {
            return;
        }
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        let score = |i: &usize| {
            let (_, l, o) = &self.points[*i];
            Self::ratio(*l, *o, delta)
        };
        order.sort_by(|a, b| score(b).total_cmp(&score(a)));
        let starts: Vec<Vector> = order
            .iter()
            .take(self.opts.refine_starts)
            .filter(|i| score(i) > 0.0)
            .map(|&i| self.points[i].0.clone())
            .collect();
        for z0 in starts {
            let mut z = z0;
            let mut val = self.eval(&z, delta);
            let mut step = 0.1;
            for _ in 0..self.opts.refine_iters {
                let Some(g) = self.ratio_gradient(&z, delta) else {
                    break;
                };
                let g = &g - &z * z.dot(&g);
                if g.norm() < 1e-15 {
                    break;
                }
                let cand = &z + g * step;
                let cand = &cand / cand.norm();
                let cv = self.eval(&cand, delta);
                if cv > val {
                    z = cand;
                    val = cv;
                    self.push(z.clone());
                    step *= 1.5;
                } else {
                    step *= 0.5;
                    if step < 1e-14 {
                        break;
                    }
                }
            }
        }
    }

    fn eval(&self, z: &Vector, delta: f64) -> f64 {
        Self::ratio(self.maps.lhs(z), self.maps.obs_sum(z), delta)
    }

    fn ratio_gradient(&self, z: &Vector, delta: f64) -> Option<Vector> {
        let fz = &self.maps.final_map * z;
        let a = fz.norm();
        if a <= delta || a == 0.0 {
            return None;
        }
        let grad_a = self.maps.final_map.transpose() * fz / a;
        let mut b = 0.0;
        let mut grad_b = Vector::zeros(z.len());
        for o in &self.maps.obs {
            let oz = o * z;
            let nz = oz.norm();
            if nz > 0.0 {
                b += nz;
                grad_b += o.transpose() * oz / nz;
            }
        }
        if b == 0.0 {
            return None;
        }
        Some((grad_a * b - grad_b * (a - delta)) / (b * b))
    }

    pub fn report(&self, delta: f64, k: usize) -> ObservabilityReport {
        ObservabilityReport {
            k,
            constant: self.constant(delta),
            theta: None,
            delta: Some(delta),
            method: Method::SampledFit,
            samples: Some(self.points.len()),
        }
    }
}

/// `sup ‖F z‖` over unit `z` in the numerical null space of the observations.
fn null_space_lhs(maps: &ObservationMaps) -> f64 {
    let s = maps.stacked();
    let dim = maps.dim();
    let gram = s.transpose() * &s;
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cut = top * DEFAULT_RANK_TOL * DEFAULT_RANK_TOL;
    let null: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] <= cut).collect();
    if null.is_empty() {
        return 0.0;
    }
    let mut basis = Matrix::zeros(dim, null.len());
    for (c, &i) in null.iter().enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    linalg::spectral_norm(&(&maps.final_map * basis))
}

/// Sampled `D(k, δ)` on a low-mode truncation, refined at `δ`.
pub fn delta_obs_constant(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    k: usize,
    delta: f64,
    opts: SamplingOptions,
) -> Result<ObservabilityReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ObservabilityError::BadArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let mut sampler = DeltaObsSampler::new(system, sched, k, opts)?;
    sampler.refine(delta);
    Ok(sampler.report(delta, k))
}

/// Unit vector `v` with `Q_{ν(j)}ᵀ e^{Pᵀ(t_{k+1} − t_j)} v` smallest over `j ≤ k`.
pub fn unobserved_direction(
    p: &Matrix,
    qs: &[Matrix],
    sched: &ImpulseSchedule,
    k: usize,
) -> Result<Vector> {
    check_controllers(qs, sched)?;
    let t_end = sched.time_at(k + 1);
    let blocks = (1..=k)
        .map(|j| Ok(linalg::mat_exp(p, t_end - sched.time_at(j))? * &qs[sched.nu_unchecked(j) - 1]))
        .collect::<Result<Vec<_>>>()?;
    let s = linalg::hstack(p.nrows(), &blocks)?;
    let eig = (&s * s.transpose()).symmetric_eigen();
    let imin = eig.eigenvalues.imin();
    let mut v = eig.eigenvectors.column(imin).into_owned();
    let lead = v.iamax();
    if v[lead] < 0.0 {
        v = -v;
    }
    Ok(v)
}

/// Sampled fit of `C(k)` and `θ` in the interpolation inequality at `t_{k+1}`.
pub fn interpolation_estimate(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    k: usize,
    opts: SamplingOptions,
) -> Result<ObservabilityReport> {
    if opts.samples < 100 {
        return Err(ObservabilityError::TooFewSamples(opts.samples));
    }
    if k == 0 {
        return Err(ObservabilityError::BadArgument(
            "k must be at least 1".into(),
        ));
    }
    let qs = system.q_matrices();
    let s = control_stack(system.p(), &qs, sched, k)?;
    if linalg::column_normalized_rank(&s, DEFAULT_RANK_TOL)? < system.n() {
        let v = unobserved_direction(system.p(), &qs, sched, k)?;
        return Err(ObservabilityError::RankFailure {
            k,
            witness: v.iter().copied().collect(),
        });
    }
    let trunc = system.with_modes(opts.modes.min(system.modes()).max(1))?;
    let maps = ObservationMaps::new(&trunc, sched, k, sched.time_at(k + 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pts: Vec<(f64, f64)> = (0..opts.samples)
        .map(|_| {
            let z = random_unit(maps.dim(), &mut rng);
            (maps.lhs(&z), maps.obs_sum(&z))
        })
        .collect();
    let fit = |theta: f64| {
        pts.iter()
            .map(|&(l, o)| {
                if l == 0.0 {
                    0.0
                } else if o == 0.0 {
                    f64::INFINITY
                } else {
                    l / o.powf(theta)
                }
            })
            .fold(0.0, f64::max)
    };
    const STEPS: usize = 200;
    let top = 1.0 - THETA_FIT_MARGIN;
    let mut chosen = (top / STEPS as f64, fit(top / STEPS as f64));
    for i in (1..=STEPS).rev() {
        let theta = top * i as f64 / STEPS as f64;
        let c = fit(theta);
        if c.is_finite() && c <= INTERP_C_CAP {
            chosen = (theta, c);
            break;
        }
    }
    Ok(ObservabilityReport {
        k,
        constant: chosen.1,
        theta: Some(chosen.0),
        delta: None,
        method: Method::SampledFit,
        samples: Some(opts.samples),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralVerdict {
    Strict,
    Boundary,
    Violated,
}

impl SpectralVerdict {
    pub fn label(self) -> &'static str {
        match self {
            SpectralVerdict::Strict => "strict",
            SpectralVerdict::Boundary => "boundary",
            SpectralVerdict::Violated => "violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisVerdict {
    pub rank_ok: bool,
    pub k_star: Option<usize>,
    pub kalman_ok: bool,
    pub spectral: SpectralVerdict,
    pub dissipative: bool,
    pub omega_full: bool,
    pub max_real_part: f64,
    pub sym_max_eig: f64,
    pub lambda1: f64,
}

/// Compares `max Re σ(P)` with `λ₁`.
pub fn spectral_verdict(max_real_part: f64, lambda1: f64) -> SpectralVerdict {
    let tol = SPECTRAL_TOL * lambda1.max(1.0);
    if (max_real_part - lambda1).abs() <= tol {
        SpectralVerdict::Boundary
    } else if max_real_part < lambda1 {
        SpectralVerdict::Strict
    } else {
        SpectralVerdict::Violated
    }
}

pub fn hypothesis_verdict(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    k_max: usize,
) -> Result<HypothesisVerdict> {
    let qs = system.q_matrices();
    let rank = rank_condition(system.p(), &qs, sched, k_max)?;
    let kalman_ok = kalman_rank(system.p(), &qs)?;
    let lambda1 = system.lambda1();
    let max_real_part = linalg::spectrum(system.p())?.max_real_part;
    let sym_max_eig = linalg::symmetric_part_max_eig(system.p())?;
    Ok(HypothesisVerdict {
        rank_ok: rank.holds,
        k_star: rank.k_star,
        kalman_ok,
        spectral: spectral_verdict(max_real_part, lambda1),
        dissipative: sym_max_eig <= lambda1 + SPECTRAL_TOL * lambda1.max(1.0),
        omega_full: system.omega_full(),
        max_real_part,
        sym_max_eig,
        lambda1,
    })
}
