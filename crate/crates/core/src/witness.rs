// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Certified obstructions to constrained approximate null controllability.
//!
//! Both results rest on one duality estimate: for any unit `φ` and any
//! controls with `‖u_j‖ ≤ 1`,
//! `⟨x(t_k), φ⟩ ≥ ⟨e^{At_k}x0, φ⟩ − Σ_j ‖B*_{ν(j)} e^{A*(t_k−t_j)} φ‖`,
//! so the right-hand side bounds `‖x(t_k)‖` from below.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector};
use crate::observability::{
    spectral_verdict, ObservabilityError, ObservationMaps, SpectralVerdict,
};
use crate::schedule::ImpulseSchedule;
use crate::spectral::{CoupledSystem, ModalState, SpectralError};
use crate::synthesis::{self, minimize_residual, ControlSequence, PgOptions, SynthesisError};

/// Random dual directions tried by [`reachability_gap`].
pub const RANDOM_DIRECTIONS: usize = 100;

/// Best random directions handed to the ascent.
const REFINED_DIRECTIONS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WitnessError {
    #[error(
        "spectral obstruction inapplicable: max Re σ(P) = {max_re} does not exceed λ₁ = {lambda1}"
    )]
    Inapplicable { max_re: f64, lambda1: f64 },
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("eigenvector computation failed")]
    Eigen,
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Observability(#[from] ObservabilityError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, WitnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenCase {
    RealEigenvector,
    ComplexEigenvector,
}

impl EigenCase {
    pub fn label(self) -> &'static str {
        match self {
            EigenCase::RealEigenvector => "real-eigenvector",
            EigenCase::ComplexEigenvector => "complex-eigenvector",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeCertificate {
    /// Eigenvalue of `Pᵀ` with `Re ρ > λ₁`.
    pub rho: Complex<f64>,
    /// Real and imaginary parts of a unit eigenvector `η` of `Pᵀ`.
    pub eta_re: Vector,
    pub eta_im: Vector,
    /// Direction of the hard initial states: `η` itself or `Im η`.
    pub eta_hat: Vector,
    pub threshold_ell: f64,
    pub epsilon0: f64,
    pub case: EigenCase,
}

impl NegativeCertificate {
    /// `ℓ·η̂·e₁`.
    pub fn initial_state(&self, ell: f64, modes: usize) -> ModalState {
        let g: Vec<f64> = self.eta_hat.iter().map(|v| ell * v).collect();
        ModalState::single_mode(g.len(), modes, 1, &g)
    }
}

/// Unit null vector of `M − ρI` for complex `ρ`.
fn complex_null_vector(m: &Matrix, rho: Complex<f64>) -> Result<DVector<Complex<f64>>> {
    let n = m.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        Complex::new(m[(i, j)], 0.0) - if i == j { rho } else { Complex::new(0.0, 0.0) }
    });
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or(WitnessError::Eigen)?;
    let imin = svd.singular_values.imin();
    let v = v_t.row(imin).adjoint();
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(WitnessError::Eigen);
    }
    Ok(v / Complex::new(norm, 0.0))
}

fn split(v: &DVector<Complex<f64>>) -> (Vector, Vector) {
    (
        Vector::from_iterator(v.nrows(), v.iter().map(|z| z.re)),
        Vector::from_iterator(v.nrows(), v.iter().map(|z| z.im)),
    )
}

/// Scale `ℓ` beyond which `ℓ·η̂·e₁` cannot be driven into `B_{ε₀}(0)`.
pub fn negative_bound(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    epsilon0: f64,
) -> Result<NegativeCertificate> {
    if !(epsilon0 > 0.0 && epsilon0.is_finite()) {
        return Err(WitnessError::BadArgument(format!(
            "epsilon0 must be positive, got {epsilon0}"
        )));
    }
    let pt = system.p().transpose();
    let spec = linalg::spectrum(&pt)?;
    let lambda1 = system.lambda1();
    if spectral_verdict(spec.max_real_part, lambda1) != SpectralVerdict::Violated {
        return Err(WitnessError::Inapplicable {
            max_re: spec.max_real_part,
            lambda1,
        });
    }
    // prefer a real eigenvalue among those with the largest real part
    let rho = spec
        .eigenvalues
        .iter()
        .copied()
        .max_by(|a, b| {
            a.re.total_cmp(&b.re)
                .then((b.im.abs()).total_cmp(&a.im.abs()))
        })
        .ok_or(WitnessError::Eigen)?;
    let q_norm = system
        .controllers()
        .iter()
        .map(|c| linalg::spectral_norm(&c.q))
        .fold(0.0, f64::max);
    let min_gap = (1..=sched.hbar())
        .map(|j| sched.time_at(j) - sched.time_at(j - 1))
        .fold(f64::INFINITY, f64::min);
    let base = q_norm / ((rho.re - lambda1) * min_gap) + epsilon0;

    if rho.im == 0.0 {
        let shifted = &pt - Matrix::identity(pt.nrows(), pt.nrows()) * rho.re;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or(WitnessError::Eigen)?;
        let mut eta = v_t.row(svd.singular_values.imin()).transpose();
        eta /= eta.norm();
        if eta[eta.iamax()] < 0.0 {
            eta = -eta;
        }
        return Ok(NegativeCertificate {
            rho,
            eta_im: Vector::zeros(eta.len()),
            eta_hat: eta.clone(),
            eta_re: eta,
            threshold_ell: base,
            epsilon0,
            case: EigenCase::RealEigenvector,
        });
    }

    // Any unimodular rescaling of η is again a unit eigenvector; pick the
    // phase that makes Im η longest.
    let (x, y) = split(&complex_null_vector(&pt, rho)?);
    let (a, b, c) = (x.norm_squared(), y.norm_squared(), x.dot(&y));
    let form = Matrix::from_row_slice(2, 2, &[a, c, c, b]);
    let eig = form.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let (s, co) = (eig.eigenvectors[(0, top)], eig.eigenvectors[(1, top)]);
    let eta_re = &x * co - &y * s;
    let eta_im = &x * s + &y * co;
    let hat_sq = eta_im.norm_squared();
    if hat_sq == 0.0 {
        return Err(WitnessError::Eigen);
    }
    Ok(NegativeCertificate {
        rho,
        eta_hat: eta_im.clone(),
        eta_re,
        eta_im,
        threshold_ell: base / hat_sq,
        epsilon0,
        case: EigenCase::ComplexEigenvector,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityGap {
    /// Certified lower bound on `‖x(t_k)‖` over all admissible controls.
    pub lower_bound: f64,
    /// Best residual found by constrained minimization.
    pub achieved: f64,
    /// Dual direction behind `lower_bound`, as an `n × N` array.
    pub direction: ModalState,
    pub controls: ControlSequence,
}

struct Dual<'a> {
    maps: &'a ObservationMaps,
    free: Vector,
}

impl Dual<'_> {
    fn value(&self, phi: &Vector) -> f64 {
        self.free.dot(phi) - self.maps.obs_sum(phi)
    }

    fn supergradient(&self, phi: &Vector) -> Vector {
        let mut g = self.free.clone();
        for o in &self.maps.obs {
            let op = o * phi;
            let n = op.norm();
            if n > 0.0 {
                g -= o.transpose() * op / n;
            }
        }
        g
    }

    /// Projected supergradient ascent on the unit ball; returns the best point seen.
    fn ascend(&self, start: Vector, iters: usize, scale: f64) -> (f64, Vector) {
        let mut phi = start;
        let mut best = (self.value(&phi), phi.clone());
        for t in 0..iters {
            let g = self.supergradient(&phi);
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            phi += g * (scale / (gn * ((t + 1) as f64).sqrt()));
            let n = phi.norm();
            if n > 1.0 {
                phi /= n;
            }
            let v = self.value(&phi);
            if v > best.0 {
                best = (v, phi.clone());
            }
        }
        best
    }
}

/// Real and imaginary parts of the eigenvectors of `Pᵀ`, normalized.
fn eigen_directions(p: &Matrix) -> Result<Vec<Vector>> {
    let pt = p.transpose();
    let mut out = Vec::new();
    for rho in linalg::spectrum(&pt)?.eigenvalues {
        let (x, y) = split(&complex_null_vector(&pt, rho)?);
        for v in [x, y] {
            let n = v.norm();
            if n > 1e-12 {
                out.push(v / n);
            }
        }
    }
    Ok(out)
}

fn embed_mode1(v: &Vector, dim: usize) -> Vector {
    let mut z = Vector::zeros(dim);
    z.rows_mut(0, v.len()).copy_from(v);
    z
}

/// Certified lower bound and achieved residual for steering `x0` at horizon `k`.
pub fn reachability_gap(
    system: &CoupledSystem,
    sched: &ImpulseSchedule,
    x0: &ModalState,
    k: usize,
    grad_iters: usize,
    seed: u64,
) -> Result<ReachabilityGap> {
    if k == 0 {
        return Err(WitnessError::BadArgument("k must be at least 1".into()));
    }
    let free_state = synthesis::simulate(system, sched, x0, &ControlSequence::empty(), k)?;
    let maps = ObservationMaps::new(system, sched, k, sched.time_at(k))?;
    let dim = maps.dim();
    let n = system.n();
    let dual = Dual {
        maps: &maps,
        free: Vector::from_column_slice(free_state.coeffs().as_slice()),
    };

    let mut candidates: Vec<Vector> = Vec::new();
    for v in eigen_directions(system.p())? {
        candidates.push(embed_mode1(&v, dim));
        candidates.push(-embed_mode1(&v, dim));
    }
    for r in 0..n {
        let mut e = Vector::zeros(n);
        e[r] = 1.0;
        candidates.push(embed_mode1(&e, dim));
        candidates.push(-embed_mode1(&e, dim));
    }
    if dual.free.norm() > 0.0 {
        candidates.push(&dual.free / dual.free.norm());
    }
    let mut best = (0.0, Vector::zeros(dim));
    for c in &candidates {
        let v = dual.value(c);
        if v > best.0 {
            best = (v, c.clone());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<(f64, Vector)> = (0..RANDOM_DIRECTIONS)
        .map(|_| {
            let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let v = &v / v.norm();
            (dual.value(&v), v)
        })
        .collect();
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    starts.truncate(REFINED_DIRECTIONS);
    starts.push(best.clone());
    for (_, s) in starts {
        let (v, phi) = dual.ascend(s, grad_iters, 0.5);
        if v > best.0 {
            best = (v, phi);
        }
    }

    let pg = PgOptions {
        iterations: grad_iters,
        ..PgOptions::default()
    };
    let out = minimize_residual(system, sched, x0, k, None, pg)?;
    let direction = ModalState::new(Matrix::from_column_slice(
        n,
        system.modes(),
        best.1.as_slice(),
    ));
    Ok(ReachabilityGap {
        lower_bound: best.0.max(0.0),
        achieved: out.residual,
        direction,
        controls: out.controls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Controller, Interval, SpectralDomain};
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

    #[test]
    fn real_threshold_example() {
        let s = system(
            Matrix::from_diagonal(&Vector::from_vec(vec![1.5, 0.0])),
            vec![Matrix::identity(2, 2)],
            None,
            4,
        );
        let c = negative_bound(&s, &unit_sched(), 1.0).unwrap();
        assert_eq!(c.case, EigenCase::RealEigenvector);
        assert!((c.threshold_ell - 3.0).abs() < 1e-12);
        assert!((c.rho.re - 1.5).abs() < 1e-12);
        assert!((c.eta_hat[0].abs() - 1.0).abs() < 1e-12 && c.eta_hat[1].abs() < 1e-12);
    }

    #[test]
    fn inapplicable_when_spectrum_is_stable() {
        let s = system(
            Matrix::identity(2, 2),
            vec![Matrix::identity(2, 2)],
            None,
            4,
        );
        assert!(matches!(
            negative_bound(&s, &unit_sched(), 1.0),
            Err(WitnessError::Inapplicable { .. })
        ));
    }

    #[test]
    fn complex_case_example() {
        let p = Matrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 2.0]);
        let s = system(p.clone(), vec![Matrix::identity(2, 2)], None, 4);
        let c = negative_bound(&s, &unit_sched(), 1.0).unwrap();
        assert_eq!(c.case, EigenCase::ComplexEigenvector);
        assert!(c.eta_hat.norm() > 0.0 && c.threshold_ell.is_finite());
        // η = η_re + i η_im solves Pᵀη = ρη with ‖η‖ = 1
        let (re, im) = (&c.eta_re, &c.eta_im);
        let pt = p.transpose();
        let lhs_re = &pt * re - (re * c.rho.re - im * c.rho.im);
        let lhs_im = &pt * im - (im * c.rho.re + re * c.rho.im);
        assert!(lhs_re.norm() < 1e-12 && lhs_im.norm() < 1e-12);
        assert!((re.norm_squared() + im.norm_squared() - 1.0).abs() < 1e-12);
        // rotation generator: |Re| = |Im| after the best phase
        assert!((c.eta_hat.norm_squared() - 0.5).abs() < 1e-12);
        assert!((c.threshold_ell - 2.0 * (1.0 / 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn appendix_c_gap_is_exact() {
        let s = system(
            Matrix::identity(2, 2),
            vec![Matrix::from_column_slice(2, 1, &[0.0, 1.0])],
            Some((0.0, PI / 2.0)),
            8,
        );
        let x0 = ModalState::single_mode(2, 8, 1, &[0.5, 0.0]);
        for k in [1, 4] {
            let g = reachability_gap(&s, &unit_sched(), &x0, k, 50, 3).unwrap();
            assert!((g.lower_bound - 0.5).abs() < 1e-12);
            assert!((g.achieved - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_state_has_no_gap() {
        let s = system(Matrix::zeros(2, 2), vec![Matrix::identity(2, 2)], None, 4);
        let g = reachability_gap(&s, &unit_sched(), &s.zero_state(), 3, 20, 1).unwrap();
        assert_eq!((g.lower_bound, g.achieved), (0.0, 0.0));
    }

    #[test]
    fn controllable_system_closes_gap() {
        let s = system(Matrix::zeros(2, 2), vec![Matrix::identity(2, 2)], None, 6);
        let x0 = ModalState::single_mode(2, 6, 1, &[1.5, -0.5]);
        let g = reachability_gap(&s, &unit_sched(), &x0, 8, 200, 2).unwrap();
        assert_eq!(g.lower_bound, 0.0);
        assert!(g.achieved < 1e-6, "{}", g.achieved);
    }

    #[test]
    fn dual_bound_never_exceeds_primal() {
        let s = system(
            Matrix::from_row_slice(2, 2, &[1.2, 0.5, -0.3, 0.4]),
            vec![Matrix::from_column_slice(2, 1, &[0.3, 1.0])],
            Some((0.2, 1.9)),
            6,
        );
        let x0 = ModalState::single_mode(2, 6, 1, &[4.0, -2.0]);
        for k in [1, 3, 6] {
            let g = reachability_gap(&s, &unit_sched(), &x0, k, 100, 5).unwrap();
            assert!(g.lower_bound <= g.achieved * (1.0 + 1e-12));
        }
    }
}
