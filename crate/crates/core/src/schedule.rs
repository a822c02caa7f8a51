// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Periodic impulse schedules.
//!
//! A schedule is fixed by `ħ` base times `0 < t_1 < … < t_ħ` and extended by
//! `t_{j+kħ} = t_j + k·t_ħ`. Impulse `j` uses controller `ν(j) ∈ {1,…,ħ}`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector, DEFAULT_RANK_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule needs at least one base time")]
    Empty,
    #[error("base times must be finite and strictly increasing from 0, got {0:?}")]
    NotIncreasing(Vec<f64>),
    #[error("impulse indices start at 1")]
    ZeroIndex,
    #[error("controller list is empty")]
    NoControllers,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSchedule {
    base: Vec<f64>,
}

impl ImpulseSchedule {
    pub fn new(base_times: Vec<f64>) -> Result<Self, ScheduleError> {
        if base_times.is_empty() {
            return Err(ScheduleError::Empty);
        }
        let mut prev = 0.0;
        for &t in &base_times {
            if !(t.is_finite() && t > prev) {
                return Err(ScheduleError::NotIncreasing(base_times));
            }
            prev = t;
        }
        Ok(Self { base: base_times })
    }

    /// `t_j = j·period/ħ`.
    pub fn equally_spaced(hbar: usize, period: f64) -> Result<Self, ScheduleError> {
        Self::new(
            (1..=hbar)
                .map(|j| j as f64 * period / hbar as f64)
                .collect(),
        )
    }

    pub fn hbar(&self) -> usize {
        self.base.len()
    }

    pub fn base_times(&self) -> &[f64] {
        &self.base
    }

    /// `t_ħ`, the period of the schedule.
    pub fn period(&self) -> f64 {
        self.base[self.base.len() - 1]
    }

    /// `t_j` for `j ≥ 0`, with `t_0 = 0`.
    pub fn time_at(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let h = self.hbar();
        let (cycles, r) = ((j - 1) / h, (j - 1) % h);
        self.base[r] + cycles as f64 * self.period()
    }

    /// `t_1, …, t_k`.
    pub fn times(&self, k: usize) -> Vec<f64> {
        (1..=k).map(|j| self.time_at(j)).collect()
    }

    /// Controller index `ν(j) ∈ {1,…,ħ}` of impulse `j ≥ 1`.
    pub fn nu(&self, j: usize) -> Result<usize, ScheduleError> {
        if j == 0 {
            return Err(ScheduleError::ZeroIndex);
        }
        Ok((j - 1) % self.hbar() + 1)
    }

    /// Same as [`Self::nu`] for indices already known to be positive.
    pub(crate) fn nu_unchecked(&self, j: usize) -> usize {
        debug_assert!(j >= 1);
        (j - 1) % self.hbar() + 1
    }
}

/// `dim span{q, Pq, …, P^{n−1}q}`.
pub fn krylov_dim(p: &Matrix, q: &Vector) -> Result<usize, ScheduleError> {
    linalg::ensure_square(p)?;
    let n = p.nrows();
    if q.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "vector of length {} for {n}x{n} matrix",
            q.len()
        ))
        .into());
    }
    let mut k = Matrix::zeros(n, n);
    let mut v = q.clone();
    for c in 0..n {
        k.set_column(c, &v);
        v = p * v;
    }
    Ok(linalg::column_normalized_rank(&k, DEFAULT_RANK_TOL)?)
}

/// Largest Krylov dimension over the columns of `Q`.
pub fn krylov_dim_matrix(p: &Matrix, q: &Matrix) -> Result<usize, ScheduleError> {
    let mut best = 0;
    for c in q.column_iter() {
        best = best.max(krylov_dim(p, &c.into_owned())?);
    }
    Ok(best)
}

/// `min π/|Im λ|` over `σ(P)`; `+∞` for a real spectrum.
pub fn d_min_imag(p: &Matrix) -> Result<f64, ScheduleError> {
    let info = linalg::spectrum(p)?;
    Ok(if info.is_real() {
        f64::INFINITY
    } else {
        PI / info.min_nonzero_abs_imag
    })
}

/// `q = max_j (q(−P, Q_j) − 1)`.
pub fn krylov_exponent(p: &Matrix, qs: &[Matrix]) -> Result<usize, ScheduleError> {
    let minus_p = -p;
    let mut q = 0;
    for qj in qs {
        q = q.max(krylov_dim_matrix(&minus_p, qj)?.saturating_sub(1));
    }
    Ok(q)
}

/// Quantities behind [`pick_schedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleChoice {
    pub schedule: ImpulseSchedule,
    /// `q = max_j (q(−P, Q_j) − 1)`.
    pub q: usize,
    /// `d_{−P}`.
    pub d: f64,
}

/// Equally spaced schedule with `q·t_ħ < d_{−P}`.
pub fn pick_schedule(p: &Matrix, qs: &[Matrix]) -> Result<ImpulseSchedule, ScheduleError> {
    Ok(pick_schedule_detailed(p, qs)?.schedule)
}

pub fn pick_schedule_detailed(p: &Matrix, qs: &[Matrix]) -> Result<ScheduleChoice, ScheduleError> {
    if qs.is_empty() {
        return Err(ScheduleError::NoControllers);
    }
    let q = krylov_exponent(p, qs)?;
    let d = d_min_imag(&-p)?;
    let period = if d.is_infinite() {
        1.0
    } else {
        (d / (2.0 * q.max(1) as f64)).min(1.0)
    };
    Ok(ScheduleChoice {
        schedule: ImpulseSchedule::equally_spaced(qs.len(), period)?,
        q,
        d,
    })
}
