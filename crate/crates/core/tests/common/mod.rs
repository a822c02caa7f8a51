// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Reference computations that share no code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `e^{tM}` by scaling and squaring of a long Taylor series.
pub fn expm_taylor(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let a = m * t;
    let norm: f64 = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let a = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Dirichlet eigenvalue `(iπ/L)²`.
pub fn eigenvalue(i: usize, length: f64) -> f64 {
    let w = i as f64 * std::f64::consts::PI / length;
    w * w
}

/// Full-support impulse system evolved mode by mode: between impulses
/// `g_i ← e^{(P − λ_i I)Δt} g_i`, at impulse `j` `g_i ← g_i + Q_{ν(j)} u_j[:, i]`.
pub fn simulate_full_support(
    p: &DMatrix<f64>,
    qs: &[DMatrix<f64>],
    base_times: &[f64],
    length: f64,
    x0: &DMatrix<f64>,
    controls: &[DMatrix<f64>],
    k: usize,
) -> DMatrix<f64> {
    let n = p.nrows();
    let h = base_times.len();
    let time = |j: usize| -> f64 {
        if j == 0 {
            0.0
        } else {
            base_times[(j - 1) % h] + ((j - 1) / h) as f64 * base_times[h - 1]
        }
    };
    let mut x = x0.clone();
    for i in 0..x.ncols() {
        let a = p - DMatrix::<f64>::identity(n, n) * eigenvalue(i + 1, length);
        let mut g: DVector<f64> = x.column(i).into_owned();
        for j in 1..=k {
            g = expm_taylor(&a, time(j) - time(j - 1)) * g;
            if let Some(u) = controls.get(j - 1) {
                g += &qs[(j - 1) % h] * u.column(i);
            }
        }
        x.set_column(i, &g);
    }
    x
}

/// Relative Frobenius distance.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
