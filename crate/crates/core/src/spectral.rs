// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Spectral model of the coupled heat equation `x' = Δx + Px` on `(0, L)`
//! with homogeneous Dirichlet conditions.
//!
//! States are stored in the sine eigenbasis `e_i(x) = √(2/L)·sin(iπx/L)`,
//! `λ_i = (iπ/L)²`, truncated to the first `N` modes. A state is an `n × N`
//! array whose column `i` holds the coefficient vector of mode `i + 1`.
//! The semigroup acts mode by mode and is exact on the truncation; an impulse
//! with local support `χ_ω Q u` is projected onto the retained modes, which
//! drops the part of `χ_ω` living above mode `N`. The squared L² norm of
//! that dropped tail decays like `O(1/N)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};

/// Tolerance (relative to `L`) for treating an interval endpoint as the boundary.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("domain length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("truncation order must be at least 1")]
    NoModes,
    #[error("mode index {index} out of range 1..={modes}")]
    ModeOutOfRange { index: usize, modes: usize },
    #[error("invalid support interval ({a}, {b}) for domain (0, {length})")]
    BadInterval { a: f64, b: f64, length: f64 },
    #[error("control supports have empty intersection")]
    EmptyIntersection,
    #[error("system needs at least one controller")]
    NoControllers,
    #[error("injection matrix Q_{0} is zero")]
    ZeroInjection(usize),
    #[error("controller index {index} out of range 1..={hbar}")]
    ControllerOutOfRange { index: usize, hbar: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("time must be non-negative and finite, got {0}")]
    BadTime(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The interval `(0, L)` with its Dirichlet eigenbasis truncated to `N` modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDomain {
    length: f64,
    modes: usize,
}

impl SpectralDomain {
    pub fn new(length: f64, modes: usize) -> Result<Self, SpectralError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(SpectralError::BadLength(length));
        }
        if modes == 0 {
            return Err(SpectralError::NoModes);
        }
        Ok(Self { length, modes })
    }

    /// `(0, π)` so that `λ_i = i²`.
    pub fn unit(modes: usize) -> Result<Self, SpectralError> {
        Self::new(PI, modes)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn with_modes(&self, modes: usize) -> Result<Self, SpectralError> {
        Self::new(self.length, modes)
    }

    /// `λ_i = (iπ/L)²` for a 1-based mode index (no range check).
    pub fn eigenvalue(&self, i: usize) -> f64 {
        let w = i as f64 * PI / self.length;
        w * w
    }

    /// `(λ_i, √(2/L))` for `1 ≤ i ≤ N`.
    pub fn eigen_data(&self, i: usize) -> Result<(f64, f64), SpectralError> {
        if i == 0 || i > self.modes {
            return Err(SpectralError::ModeOutOfRange {
                index: i,
                modes: self.modes,
            });
        }
        Ok((self.eigenvalue(i), (2.0 / self.length).sqrt()))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.modes).map(|i| self.eigenvalue(i)).collect()
    }

    /// Gram matrix `G[i][j] = ∫_a^b e_i e_j dx` of the retained modes.
    pub fn overlap_matrix(&self, a: f64, b: f64) -> Result<Matrix, SpectralError> {
        let l = self.length;
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= l) {
            return Err(SpectralError::BadInterval { a, b, length: l });
        }
        let n = self.modes;
        let w = PI / l;
        let diag = |i: usize, x: f64| {
            let k = 2.0 * i as f64 * w;
            (x - (k * x).sin() / k) / l
        };
        let off = |i: usize, j: usize, x: f64| {
            let d = (i as f64 - j as f64) * w;
            let s = (i + j) as f64 * w;
            ((d * x).sin() / d - (s * x).sin() / s) / l
        };
        let mut g = Matrix::zeros(n, n);
        for i in 1..=n {
            g[(i - 1, i - 1)] = diag(i, b) - diag(i, a);
            for j in (i + 1)..=n {
                let v = off(i, j, b) - off(i, j, a);
                g[(i - 1, j - 1)] = v;
                g[(j - 1, i - 1)] = v;
            }
        }
        Ok(g)
    }
}

/// Open control support `(a, b) ⊆ (0, L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn full(domain: &SpectralDomain) -> Self {
        Self::new(0.0, domain.length())
    }

    pub fn is_full(&self, domain: &SpectralDomain) -> bool {
        let tol = BOUNDARY_TOL * domain.length();
        self.a.abs() <= tol && (self.b - domain.length()).abs() <= tol
    }
}

/// One controller `B_k = χ_{ω_k} Q_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub q: Matrix,
    pub support: Interval,
}

/// `x' = Δ_n x + P x` with `ħ` impulse controllers, truncated to `N` modes.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    p: Matrix,
    controllers: Vec<Controller>,
    domain: SpectralDomain,
    /// Overlap matrix per controller; `None` for full support (exact identity).
    overlaps: Vec<Option<Matrix>>,
}

impl CoupledSystem {
    pub fn new(
        p: Matrix,
        controllers: Vec<Controller>,
        domain: SpectralDomain,
    ) -> Result<Self, SpectralError> {
        linalg::ensure_square(&p)?;
        linalg::ensure_finite(&p)?;
        let n = p.nrows();
        if n == 0 {
            return Err(SpectralError::Dimension("P must be at least 1x1".into()));
        }
        let first = controllers.first().ok_or(SpectralError::NoControllers)?;
        let m = first.q.ncols();
        let mut overlaps = Vec::with_capacity(controllers.len());
        let (mut lo, mut hi) = (0.0_f64, domain.length());
        for (idx, c) in controllers.iter().enumerate() {
            let k = idx + 1;
            if c.q.nrows() != n || c.q.ncols() != m || m == 0 {
                return Err(SpectralError::Dimension(format!(
                    "Q_{k} is {}x{}, expected {n}x{m}",
                    c.q.nrows(),
                    c.q.ncols()
                )));
            }
            linalg::ensure_finite(&c.q)?;
            if c.q.iter().all(|&v| v == 0.0) {
                return Err(SpectralError::ZeroInjection(k));
            }
            let g = domain.overlap_matrix(c.support.a, c.support.b)?;
            overlaps.push(if c.support.is_full(&domain) {
                None
            } else {
                Some(g)
            });
            lo = lo.max(c.support.a);
            hi = hi.min(c.support.b);
        }
        if lo >= hi {
            return Err(SpectralError::EmptyIntersection);
        }
        Ok(Self {
            p,
            controllers,
            domain,
            overlaps,
        })
    }

    /// Same system with a different truncation order.
    pub fn with_modes(&self, modes: usize) -> Result<Self, SpectralError> {
        Self::new(
            self.p.clone(),
            self.controllers.clone(),
            self.domain.with_modes(modes)?,
        )
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn controllers(&self) -> &[Controller] {
        &self.controllers
    }

    pub fn domain(&self) -> &SpectralDomain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn m(&self) -> usize {
        self.controllers[0].q.ncols()
    }

    pub fn hbar(&self) -> usize {
        self.controllers.len()
    }

    pub fn modes(&self) -> usize {
        self.domain.modes()
    }

    pub fn lambda1(&self) -> f64 {
        self.domain.eigenvalue(1)
    }

    pub fn lambda2(&self) -> f64 {
        self.domain.eigenvalue(2)
    }

    pub fn q_matrices(&self) -> Vec<Matrix> {
        self.controllers.iter().map(|c| c.q.clone()).collect()
    }

    /// True when `ω = ∩ω_k` is the whole interval.
    pub fn omega_full(&self) -> bool {
        self.overlaps.iter().all(Option::is_none)
    }

    fn controller(&self, k: usize) -> Result<(&Controller, Option<&Matrix>), SpectralError> {
        if k == 0 || k > self.hbar() {
            return Err(SpectralError::ControllerOutOfRange {
                index: k,
                hbar: self.hbar(),
            });
        }
        Ok((&self.controllers[k - 1], self.overlaps[k - 1].as_ref()))
    }

    /// Overlap matrix of `ω_k`, `None` when the support is the whole interval.
    pub fn overlap(&self, k: usize) -> Result<Option<&Matrix>, SpectralError> {
        Ok(self.controller(k)?.1)
    }

    /// Modal image `B_k u` of an `m × N` control array.
    pub fn inject(&self, k: usize, u: &Matrix) -> Result<Matrix, SpectralError> {
        let (c, g) = self.controller(k)?;
        self.check_shape(u, self.m(), "control")?;
        let qu = &c.q * u;
        Ok(match g {
            Some(g) => qu * g,
            None => qu,
        })
    }

    /// Adjoint of [`Self::inject`] in the modal inner product: `Q_kᵀ y G_k`.
    pub fn inject_adjoint(&self, k: usize, y: &Matrix) -> Result<Matrix, SpectralError> {
        let (c, g) = self.controller(k)?;
        self.check_shape(y, self.n(), "state")?;
        let qy = c.q.transpose() * y;
        Ok(match g {
            Some(g) => qy * g,
            None => qy,
        })
    }

    /// `‖χ_{ω_k} Q_kᵀ z‖` in `L²(Ω)^m`, evaluated exactly for a truncated `z`.
    pub fn observation_norm(&self, k: usize, z: &ModalState) -> Result<f64, SpectralError> {
        let (c, g) = self.controller(k)?;
        self.check_shape(&z.coeffs, self.n(), "state")?;
        let h = c.q.transpose() * &z.coeffs;
        let sq = match g {
            Some(g) => (&h * g).component_mul(&h).sum(),
            None => h.norm_squared(),
        };
        Ok(sq.max(0.0).sqrt())
    }

    fn check_shape(&self, a: &Matrix, rows: usize, what: &str) -> Result<(), SpectralError> {
        if a.nrows() != rows || a.ncols() != self.modes() {
            return Err(SpectralError::Dimension(format!(
                "{what} array is {}x{}, expected {rows}x{}",
                a.nrows(),
                a.ncols(),
                self.modes()
            )));
        }
        Ok(())
    }

    pub fn zero_state(&self) -> ModalState {
        ModalState::zeros(self.n(), self.modes())
    }

    pub fn zero_control(&self) -> Matrix {
        Matrix::zeros(self.m(), self.modes())
    }
}

/// Truncated state `x = Σ_i g_i e_i`, stored as an `n × N` coefficient array.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    coeffs: Matrix,
}

impl ModalState {
    pub fn new(coeffs: Matrix) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize, modes: usize) -> Self {
        Self::new(Matrix::zeros(n, modes))
    }

    /// State with a single nonzero mode (1-based index).
    pub fn single_mode(n: usize, modes: usize, i: usize, g: &[f64]) -> Self {
        assert!(i >= 1 && i <= modes && g.len() == n);
        let mut s = Self::zeros(n, modes);
        for (r, &v) in g.iter().enumerate() {
            s.coeffs[(r, i - 1)] = v;
        }
        s
    }

    /// Gaussian coefficients, rescaled to the requested norm.
    pub fn random<R: Rng + ?Sized>(n: usize, modes: usize, norm: f64, rng: &mut R) -> Self {
        let mut c = Matrix::from_fn(n, modes, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cn = c.norm();
        if cn > 0.0 {
            c *= norm / cn;
        }
        Self::new(c)
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Matrix {
        self.coeffs
    }

    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn modes(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Coefficient vector `g_i` of mode `i` (1-based).
    pub fn mode(&self, i: usize) -> Vec<f64> {
        self.coeffs.column(i - 1).iter().copied().collect()
    }

    /// Per-mode coefficient norms `‖g_i‖`.
    pub fn mode_norms(&self) -> Vec<f64> {
        self.coeffs.column_iter().map(|c| c.norm()).collect()
    }

    /// `‖x‖_{L²(Ω)^n}` by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn dot(&self, other: &ModalState) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }
}

impl Add<&ModalState> for &ModalState {
    type Output = ModalState;
    fn add(self, rhs: &ModalState) -> ModalState {
        ModalState::new(&self.coeffs + &rhs.coeffs)
    }
}

impl Sub<&ModalState> for &ModalState {
    type Output = ModalState;
    fn sub(self, rhs: &ModalState) -> ModalState {
        ModalState::new(&self.coeffs - &rhs.coeffs)
    }
}

impl Mul<f64> for &ModalState {
    type Output = ModalState;
    fn mul(self, rhs: f64) -> ModalState {
        ModalState::new(&self.coeffs * rhs)
    }
}

pub fn l2_norm(state: &ModalState) -> f64 {
    state.l2_norm()
}

/// Cached `e^{(Δ + P)t}` (or its adjoint) for a fixed step `t`.
#[derive(Debug, Clone)]
pub struct Propagator {
    exp_p: Matrix,
    decay: Vec<f64>,
}

impl Propagator {
    pub fn new(system: &CoupledSystem, t: f64) -> Result<Self, SpectralError> {
        Self::build(system, system.p(), t)
    }

    /// Propagator of the adjoint generator `Δ + Pᵀ`.
    pub fn adjoint(system: &CoupledSystem, t: f64) -> Result<Self, SpectralError> {
        Self::build(system, &system.p().transpose(), t)
    }

    fn build(system: &CoupledSystem, p: &Matrix, t: f64) -> Result<Self, SpectralError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(SpectralError::BadTime(t));
        }
        let exp_p = linalg::mat_exp(p, t)?;
        let decay = system
            .domain()
            .eigenvalues()
            .iter()
            .map(|l| (-l * t).exp())
            .collect();
        Ok(Self { exp_p, decay })
    }

    pub fn apply(&self, state: &ModalState) -> ModalState {
        let mut out = &self.exp_p * &state.coeffs;
        for (i, mut col) in out.column_iter_mut().enumerate() {
            col *= self.decay[i];
        }
        ModalState::new(out)
    }
}

/// `e^{At} x`: column `i` becomes `e^{-λ_i t} e^{Pt} g_i`.
pub fn apply_semigroup(
    system: &CoupledSystem,
    state: &ModalState,
    t: f64,
) -> Result<ModalState, SpectralError> {
    check_state(system, state)?;
    if t == 0.0 {
        return Ok(state.clone());
    }
    Ok(Propagator::new(system, t)?.apply(state))
}

/// `e^{A*t} z` with `A* = Δ + Pᵀ`.
pub fn apply_adjoint_semigroup(
    system: &CoupledSystem,
    state: &ModalState,
    t: f64,
) -> Result<ModalState, SpectralError> {
    check_state(system, state)?;
    if t == 0.0 {
        return Ok(state.clone());
    }
    Ok(Propagator::adjoint(system, t)?.apply(state))
}

/// Jump `x ↦ x + χ_{ω_k} Q_k u` for controller `k` (1-based).
pub fn apply_impulse(
    system: &CoupledSystem,
    state: &ModalState,
    k: usize,
    u: &Matrix,
) -> Result<ModalState, SpectralError> {
    check_state(system, state)?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite.into());
    }
    let inj = system.inject(k, u)?;
    Ok(ModalState::new(&state.coeffs + inj))
}

fn check_state(system: &CoupledSystem, state: &ModalState) -> Result<(), SpectralError> {
    if state.n() != system.n() || state.modes() != system.modes() {
        return Err(SpectralError::Dimension(format!(
            "state is {}x{}, system expects {}x{}",
            state.n(),
            state.modes(),
            system.n(),
            system.modes()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn full_system(p: Matrix, q: Matrix, modes: usize) -> CoupledSystem {
        let d = SpectralDomain::unit(modes).unwrap();
        CoupledSystem::new(
            p,
            vec![Controller {
                q,
                support: Interval::full(&d),
            }],
            d,
        )
        .unwrap()
    }

    fn appendix_c(modes: usize, support: Interval) -> CoupledSystem {
        let d = SpectralDomain::unit(modes).unwrap();
        CoupledSystem::new(
            Matrix::identity(2, 2),
            vec![Controller {
                q: Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
                support,
            }],
            d,
        )
        .unwrap()
    }

    #[test]
    fn eigen_data_examples() {
        let d = SpectralDomain::unit(4).unwrap();
        assert_eq!(d.eigen_data(1).unwrap().0, 1.0);
        assert_eq!(d.eigen_data(2).unwrap().0, 4.0);
        let (_, c) = d.eigen_data(3).unwrap();
        assert!((c - (2.0 / PI).sqrt()).abs() < 1e-15);
        let d2 = SpectralDomain::new(2.0 * PI, 4).unwrap();
        assert_eq!(d2.eigen_data(1).unwrap().0, 0.25);
        assert!(d.eigen_data(0).is_err());
        assert!(d.eigen_data(5).is_err());
        let ev = d.eigenvalues();
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn overlap_examples() {
        let d = SpectralDomain::unit(6).unwrap();
        let full = d.overlap_matrix(0.0, PI).unwrap();
        assert!((full - Matrix::identity(6, 6)).amax() < 1e-12);
        let half = d.overlap_matrix(0.0, PI / 2.0).unwrap();
        assert!((half[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((half[(0, 1)] - 4.0 / (3.0 * PI)).abs() < 1e-14);
        assert_eq!(half[(0, 1)], half[(1, 0)]);
        assert!(d.overlap_matrix(1.0, 1.0).is_err());
        assert!(d.overlap_matrix(-0.1, 1.0).is_err());
        assert!(d.overlap_matrix(0.0, 4.0).is_err());
    }

    #[test]
    fn overlap_matches_quadrature() {
        // composite Simpson on the product of eigenfunctions
        let d = SpectralDomain::new(2.0, 5).unwrap();
        let (a, b) = (0.3, 1.45);
        let g = d.overlap_matrix(a, b).unwrap();
        let e = |i: usize, x: f64| (2.0f64 / 2.0).sqrt() * (i as f64 * PI * x / 2.0).sin();
        let steps = 2000;
        let h = (b - a) / steps as f64;
        for i in 1..=5 {
            for j in 1..=5 {
                let mut s = 0.0;
                for k in 0..=steps {
                    let x = a + k as f64 * h;
                    let w = if k == 0 || k == steps {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    s += w * e(i, x) * e(j, x);
                }
                s *= h / 3.0;
                assert!((s - g[(i - 1, j - 1)]).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn overlap_is_a_contraction() {
        let d = SpectralDomain::unit(12).unwrap();
        let g = d.overlap_matrix(0.4, 2.1).unwrap();
        assert!((&g - g.transpose()).amax() == 0.0);
        let (lo, hi) = linalg::symmetric_extreme_eigs(&g);
        assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12);
    }

    #[test]
    fn system_validation() {
        let d = SpectralDomain::unit(4).unwrap();
        let q = Matrix::identity(2, 2);
        let ctl = |a: f64, b: f64| Controller {
            q: q.clone(),
            support: Interval::new(a, b),
        };
        assert!(matches!(
            CoupledSystem::new(Matrix::zeros(2, 2), vec![ctl(0.0, 1.0), ctl(1.5, 2.0)], d),
            Err(SpectralError::EmptyIntersection)
        ));
        assert!(matches!(
            CoupledSystem::new(
                Matrix::zeros(2, 2),
                vec![Controller {
                    q: Matrix::zeros(2, 1),
                    support: Interval::full(&d)
                }],
                d
            ),
            Err(SpectralError::ZeroInjection(1))
        ));
        assert!(matches!(
            CoupledSystem::new(Matrix::zeros(2, 2), vec![], d),
            Err(SpectralError::NoControllers)
        ));
        assert!(matches!(
            CoupledSystem::new(
                Matrix::zeros(2, 2),
                vec![Controller {
                    q: Matrix::identity(3, 3),
                    support: Interval::full(&d)
                }],
                d
            ),
            Err(SpectralError::Dimension(_))
        ));
        let ok =
            CoupledSystem::new(Matrix::zeros(2, 2), vec![ctl(0.0, 2.0), ctl(1.0, PI)], d).unwrap();
        assert!(!ok.omega_full());
        assert_eq!(ok.hbar(), 2);
    }

    #[test]
    fn semigroup_examples() {
        let sys = full_system(Matrix::zeros(2, 2), Matrix::identity(2, 2), 4);
        let x = ModalState::single_mode(2, 4, 2, &[1.0, 0.0]);
        assert_eq!(apply_semigroup(&sys, &x, 0.0).unwrap(), x);
        let y = apply_semigroup(&sys, &x, 1.0).unwrap();
        assert!((y.mode(2)[0] - (-4.0f64).exp()).abs() < 1e-15);
        assert_eq!(y.mode(2)[1], 0.0);
        assert!(apply_semigroup(&sys, &x, -1.0).is_err());

        let sys = full_system(Matrix::identity(2, 2), Matrix::identity(2, 2), 4);
        let x = ModalState::single_mode(2, 4, 1, &[0.7, -0.2]);
        for t in [0.5, 3.0, 10.0] {
            let y = apply_semigroup(&sys, &x, t).unwrap();
            assert!((y.mode(1)[0] - 0.7).abs() < 1e-13);
            assert!((y.mode(1)[1] + 0.2).abs() < 1e-13);
        }
    }

    #[test]
    fn semigroup_law() {
        let p = Matrix::from_row_slice(2, 2, &[0.3, -1.0, 0.8, 0.1]);
        let sys = full_system(p, Matrix::identity(2, 2), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = ModalState::random(2, 6, 1.0, &mut rng);
            let s = rng.random_range(0.0..2.0);
            let t = rng.random_range(0.0..2.0);
            let direct = apply_semigroup(&sys, &x, s + t).unwrap();
            let split = apply_semigroup(&sys, &apply_semigroup(&sys, &x, s).unwrap(), t).unwrap();
            assert!((direct.coeffs() - split.coeffs()).amax() < 1e-10);
        }
    }

    #[test]
    fn impulse_examples() {
        let sys = full_system(Matrix::zeros(2, 2), Matrix::identity(2, 2), 4);
        let x = ModalState::single_mode(2, 4, 3, &[1.0, 2.0]);
        let same = apply_impulse(&sys, &x, 1, &sys.zero_control()).unwrap();
        assert_eq!(same, x);
        let mut u = sys.zero_control();
        u[(1, 0)] = 1.0;
        let y = apply_impulse(&sys, &x, 1, &u).unwrap();
        assert_eq!(y.mode(1), vec![0.0, 1.0]);
        assert_eq!(y.mode(3), vec![1.0, 2.0]);
        assert!(apply_impulse(&sys, &x, 2, &u).is_err());
    }

    #[test]
    fn full_support_impulse_is_exact_addition() {
        let q = Matrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.0, 1.0]);
        let d = SpectralDomain::unit(5).unwrap();
        let sys = CoupledSystem::new(
            Matrix::zeros(3, 3),
            vec![Controller {
                q: q.clone(),
                support: Interval::full(&d),
            }],
            d,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ModalState::random(3, 5, 2.0, &mut rng);
        let u = Matrix::from_fn(2, 5, |i, j| (i as f64 + 1.0) * (j as f64 - 2.0));
        let y = apply_impulse(&sys, &x, 1, &u).unwrap();
        assert_eq!(y.coeffs(), &(x.coeffs() + &q * &u));
    }

    #[test]
    fn appendix_c_first_component_is_invariant() {
        let eps = 0.25;
        for support in [Interval::new(0.0, PI), Interval::new(0.0, PI / 2.0)] {
            let sys = appendix_c(8, support);
            let mut x = ModalState::single_mode(2, 8, 1, &[2.0 * eps, 0.0]);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..10 {
                let u = Matrix::from_fn(1, 8, |_, _| rng.random_range(-1.0..1.0));
                x = apply_impulse(&sys, &x, 1, &u).unwrap();
                x = apply_semigroup(&sys, &x, rng.random_range(0.1..2.0)).unwrap();
                assert!((x.mode(1)[0] - 2.0 * eps).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_impulse_tail_shrinks_with_truncation() {
        // The retained coefficients do not depend on N; the part of χ_ω e_1
        // above mode N carries squared norm O(1/N).
        let support = Interval::new(0.0, PI / 2.0);
        let mut prev_tail = f64::INFINITY;
        for modes in [16usize, 32, 64] {
            let small = appendix_c(modes, support);
            let big = small.with_modes(2 * modes).unwrap();
            let mut u = small.zero_control();
            u[(0, 0)] = 1.0;
            let mut ub = big.zero_control();
            ub[(0, 0)] = 1.0;
            let xs = apply_impulse(&small, &small.zero_state(), 1, &u).unwrap();
            let xb = apply_impulse(&big, &big.zero_state(), 1, &ub).unwrap();
            let head = xb.coeffs().columns(0, modes).into_owned();
            assert!((&head - xs.coeffs()).amax() < 1e-15);
            let tail_sq = xb.l2_norm().powi(2) - xs.l2_norm().powi(2);
            assert!(
                tail_sq >= 0.0 && tail_sq * modes as f64 <= 0.5,
                "N={modes}: {tail_sq}"
            );
            assert!(tail_sq < prev_tail);
            prev_tail = tail_sq;
        }
    }

    #[test]
    fn norm_examples() {
        assert_eq!(ModalState::zeros(2, 3).l2_norm(), 0.0);
        assert_eq!(ModalState::single_mode(2, 3, 1, &[3.0, 4.0]).l2_norm(), 5.0);
        let x = &ModalState::single_mode(2, 3, 1, &[1.0, 0.0])
            + &ModalState::single_mode(2, 3, 2, &[0.0, 1.0]);
        assert!((l2_norm(&x) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn observation_norm_matches_restriction() {
        // ‖χ_ω f‖² = ∫_ω f² = gᵀ G g
        let sys = appendix_c(6, Interval::new(0.5, 2.0));
        let z = ModalState::single_mode(2, 6, 2, &[0.0, 1.0]);
        let g = sys.overlap(1).unwrap().unwrap();
        let obs = sys.observation_norm(1, &z).unwrap();
        assert!((obs * obs - g[(1, 1)]).abs() < 1e-14);
        let z1 = ModalState::single_mode(2, 6, 1, &[1.0, 0.0]);
        assert_eq!(sys.observation_norm(1, &z1).unwrap(), 0.0);
    }

    #[test]
    fn inject_adjoint_is_adjoint() {
        let d = SpectralDomain::unit(5).unwrap();
        let sys = CoupledSystem::new(
            Matrix::zeros(2, 2),
            vec![Controller {
                q: Matrix::from_row_slice(2, 1, &[1.0, -2.0]),
                support: Interval::new(0.3, 2.2),
            }],
            d,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = Matrix::from_fn(1, 5, |_, _| rng.random_range(-1.0..1.0));
        let y = Matrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
        let lhs = sys.inject(1, &u).unwrap().dot(&y);
        let rhs = u.dot(&sys.inject_adjoint(1, &y).unwrap());
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
