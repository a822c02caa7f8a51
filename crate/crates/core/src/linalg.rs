// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense real matrix primitives: matrix exponential, numerical rank,
//! minimum-norm solves and spectral queries.
//!
//! Everything here works on small dense matrices (n ≤ 64). Matrices are plain
//! [`nalgebra::DMatrix<f64>`] values; the functions validate shape and
//! finiteness on entry and never mutate their inputs.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative singular-value cutoff for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Imaginary parts below this (relative to the matrix scale) count as zero.
const IMAG_ZERO_REL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("non-finite scalar argument {0}")]
    NonFiniteScalar(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("target unreachable: residual {residual:.3e} exceeds {allowed:.3e}")]
    Unreachable { residual: f64, allowed: f64 },
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Eigenvalue summary of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumInfo {
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real_part: f64,
    /// `+∞` exactly when every eigenvalue is real.
    pub min_nonzero_abs_imag: f64,
}

impl SpectrumInfo {
    pub fn is_real(&self) -> bool {
        self.min_nonzero_abs_imag.is_infinite()
    }
}

pub fn ensure_finite(m: &Matrix) -> Result<(), LinalgError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

pub fn ensure_square(m: &Matrix) -> Result<(), LinalgError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Builds a matrix from row-major nested rows. All rows must share a length.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix, LinalgError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(LinalgError::DimensionMismatch(format!(
            "row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    let m = Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Horizontal concatenation `[B_1, B_2, …]`. All blocks must have `rows` rows.
pub fn hstack(rows: usize, blocks: &[Matrix]) -> Result<Matrix, LinalgError> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        if b.nrows() != rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "block has {} rows, expected {rows}",
                b.nrows()
            )));
        }
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    Ok(out)
}

// Padé(13,13) numerator coefficients, Higham (2005).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(M t)` by scaling and squaring around a degree-13 Padé kernel.
///
/// Negative `t` is allowed. The result is accurate to a few ulps times the
/// condition of the exponential for the matrix sizes used in this crate.
pub fn mat_exp(m: &Matrix, t: f64) -> Result<Matrix, LinalgError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    if !t.is_finite() {
        return Err(LinalgError::NonFiniteScalar(t));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let a = m * t;
    let norm = one_norm(&a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-squarings);

    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut x = denom.lu().solve(&numer).ok_or(LinalgError::NonFinite)?;
    for _ in 0..squarings {
        x = &x * &x;
    }
    ensure_finite(&x)?;
    Ok(x)
}

fn singular_values(m: &Matrix) -> Vector {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Number of singular values above `tol × σ_max`. Zero matrix has rank 0.
pub fn numerical_rank(m: &Matrix, tol: f64) -> Result<usize, LinalgError> {
    if !(tol > 0.0) {
        return Err(LinalgError::BadTolerance(tol));
    }
    ensure_finite(m)?;
    let sv = singular_values(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * smax).count())
}

/// Rank after scaling every column to unit length.
///
/// Column scaling does not change the exact rank, but it keeps columns that
/// carry very different exponential weights (e.g. `e^{-P t_j}` for large
/// `t_j`) from being swamped by the relative cutoff. Columns whose norm is
/// below `1e-14` of the largest column are treated as exact zeros.
pub fn column_normalized_rank(m: &Matrix, tol: f64) -> Result<usize, LinalgError> {
    ensure_finite(m)?;
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let cmax = norms.iter().copied().fold(0.0, f64::max);
    if cmax == 0.0 {
        return Ok(0);
    }
    let keep: Vec<usize> = (0..m.ncols())
        .filter(|&j| norms[j] > 1e-14 * cmax)
        .collect();
    let mut scaled = Matrix::zeros(m.nrows(), keep.len());
    for (c, &j) in keep.iter().enumerate() {
        scaled.set_column(c, &(m.column(j) / norms[j]));
    }
    numerical_rank(&scaled, tol)
}

/// Minimum-Euclidean-norm least-squares solution of `A x = b`.
///
/// With `require_exact`, fails with [`LinalgError::Unreachable`] unless
/// `‖A x − b‖ ≤ tol · ‖b‖`.
pub fn min_norm_solve(
    a: &Matrix,
    b: &Vector,
    require_exact: bool,
    tol: f64,
) -> Result<Vector, LinalgError> {
    ensure_finite(a)?;
    if b.len() != a.nrows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix has {} rows but right-hand side has length {}",
            a.nrows(),
            b.len()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let q = a.ncols();
    if a.nrows() == 0 || q == 0 {
        let x = Vector::zeros(q);
        return check_residual(a, b, x, require_exact, tol);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = smax * (a.nrows().max(q) as f64) * f64::EPSILON;
    let u = svd.u.as_ref().ok_or(LinalgError::EigenFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(LinalgError::EigenFailure)?;
    let mut x = Vector::zeros(q);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            let coeff = u.column(i).dot(b) / s;
            x += v_t.row(i).transpose() * coeff;
        }
    }
    check_residual(a, b, x, require_exact, tol)
}

fn check_residual(
    a: &Matrix,
    b: &Vector,
    x: Vector,
    require_exact: bool,
    tol: f64,
) -> Result<Vector, LinalgError> {
    if require_exact {
        let residual = (a * &x - b).norm();
        let allowed = tol * b.norm();
        if residual > allowed {
            return Err(LinalgError::Unreachable { residual, allowed });
        }
    }
    Ok(x)
}

/// All eigenvalues (with multiplicity) from a real Schur decomposition.
pub fn spectrum(m: &Matrix) -> Result<SpectrumInfo, LinalgError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(SpectrumInfo {
            eigenvalues: vec![],
            max_real_part: f64::NEG_INFINITY,
            min_nonzero_abs_imag: f64::INFINITY,
        });
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(LinalgError::EigenFailure)?;
    let scale = m.amax().max(1.0);
    let eigenvalues: Vec<Complex<f64>> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| {
            if z.im.abs() <= IMAG_ZERO_REL * scale {
                Complex::new(z.re, 0.0)
            } else {
                *z
            }
        })
        .collect();
    if eigenvalues
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(LinalgError::EigenFailure);
    }
    let max_real_part = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_nonzero_abs_imag = eigenvalues
        .iter()
        .map(|z| z.im.abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(SpectrumInfo {
        eigenvalues,
        max_real_part,
        min_nonzero_abs_imag,
    })
}

/// Largest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn symmetric_part_max_eig(m: &Matrix) -> Result<f64, LinalgError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    if m.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

/// Smallest and largest eigenvalues of a symmetric matrix.
pub fn symmetric_extreme_eigs(m: &Matrix) -> (f64, f64) {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    /// Truncated Taylor series, independent of the Padé path.
    fn series_exp(m: &Matrix, t: f64, terms: usize) -> Matrix {
        let n = m.nrows();
        let a = m * t;
        let mut term = Matrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..terms {
            term = &term * &a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = Matrix::zeros(2, 2);
        assert_eq!(mat_exp(&z, 5.0).unwrap(), Matrix::identity(2, 2));
    }

    #[test]
    fn exp_of_rotation_generator() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let got = mat_exp(&m, PI / 2.0).unwrap();
        let oracle = series_exp(&m, PI / 2.0, 30);
        assert!((&got - &oracle).amax() < 1e-12);
        assert!((&got - &m).amax() < 1e-12);
    }

    #[test]
    fn exp_of_identity() {
        let got = mat_exp(&Matrix::identity(2, 2), 1.0).unwrap();
        assert!((got - Matrix::identity(2, 2) * E).amax() < 1e-14);
    }

    #[test]
    fn exp_negative_time_inverts() {
        let m = Matrix::from_row_slice(3, 3, &[0.3, -1.2, 0.5, 2.0, -0.7, 0.1, 0.0, 0.4, 1.1]);
        let fwd = mat_exp(&m, 1.7).unwrap();
        let bwd = mat_exp(&m, -1.7).unwrap();
        assert!((fwd * bwd - Matrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn exp_large_norm_uses_squaring() {
        let m = Matrix::from_row_slice(2, 2, &[-3.0, 1.0, 0.5, -4.0]);
        let got = mat_exp(&m, 4.0).unwrap();
        let half = mat_exp(&m, 2.0).unwrap();
        assert!((&got - &half * &half).amax() <= 1e-12 * got.amax().max(1e-300));
    }

    #[test]
    fn exp_rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert_eq!(
            mat_exp(&rect, 1.0),
            Err(LinalgError::NotSquare { rows: 2, cols: 3 })
        );
        let mut nan = Matrix::zeros(2, 2);
        nan[(0, 1)] = f64::NAN;
        assert_eq!(mat_exp(&nan, 1.0), Err(LinalgError::NonFinite));
        assert!(mat_exp(&Matrix::zeros(2, 2), f64::INFINITY).is_err());
    }

    #[test]
    fn derivative_at_zero_is_generator() {
        let m = Matrix::from_row_slice(2, 2, &[0.4, -1.3, 0.9, -0.2]);
        let id = Matrix::identity(2, 2);
        let mut errs = vec![];
        for h in [1e-3, 1e-4] {
            let fd = (mat_exp(&m, h).unwrap() - &id) / h;
            errs.push((fd - &m).amax());
        }
        // O(h): shrinking h tenfold shrinks the error roughly tenfold.
        assert!(errs[0] < 5e-3 && errs[1] < 5e-4);
        assert!(errs[1] < errs[0] / 5.0);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Matrix::identity(3, 3), 1e-10).unwrap(), 3);
        let e = |t: f64| (-t).exp();
        let stack = Matrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, e(1.0), e(2.0), e(3.0)]);
        assert_eq!(numerical_rank(&stack, DEFAULT_RANK_TOL).unwrap(), 1);
        let u = Vector::from_vec(vec![0.3, -1.2, 2.2]);
        let v = Vector::from_vec(vec![1.5, 0.1, -0.8, 0.6]);
        let outer = &u * v.transpose();
        assert_eq!(numerical_rank(&outer, DEFAULT_RANK_TOL).unwrap(), 1);
        assert_eq!(numerical_rank(&Matrix::zeros(3, 2), 1e-9).unwrap(), 0);
        assert!(numerical_rank(&outer, 0.0).is_err());
    }

    #[test]
    fn normalized_rank_sees_tiny_columns() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
        assert_eq!(numerical_rank(&m, 1e-9).unwrap(), 1);
        assert_eq!(column_normalized_rank(&m, 1e-9).unwrap(), 2);
    }

    #[test]
    fn min_norm_examples() {
        let x = min_norm_solve(
            &Matrix::identity(2, 2),
            &Vector::from_vec(vec![3.0, 4.0]),
            true,
            1e-12,
        )
        .unwrap();
        assert!((x - Vector::from_vec(vec![3.0, 4.0])).amax() < 1e-14);

        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = min_norm_solve(&a, &Vector::from_vec(vec![2.0]), true, 1e-12).unwrap();
        // pinv([1 1]) = [1/2; 1/2]
        assert!((x - Vector::from_vec(vec![1.0, 1.0])).amax() < 1e-14);

        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let err = min_norm_solve(&a, &Vector::from_vec(vec![0.0, 1.0]), true, 1e-9);
        assert!(matches!(err, Err(LinalgError::Unreachable { .. })));
        // without the exactness flag the least-squares answer is returned
        let x = min_norm_solve(&a, &Vector::from_vec(vec![0.0, 1.0]), false, 1e-9).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn spectrum_examples() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        let s = spectrum(&d).unwrap();
        let mut re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 1.0).abs() < 1e-12 && (re[1] - 2.0).abs() < 1e-12);
        assert!((s.max_real_part - 2.0).abs() < 1e-12);
        assert!(s.min_nonzero_abs_imag.is_infinite());

        let rot = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let s = spectrum(&rot).unwrap();
        assert!(s.max_real_part.abs() < 1e-12);
        assert!((s.min_nonzero_abs_imag - 1.0).abs() < 1e-12);
        let mut ims: Vec<f64> = s.eigenvalues.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 1.0).abs() < 1e-12 && (ims[1] - 1.0).abs() < 1e-12);

        let s = spectrum(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(s.eigenvalues.len(), 2);
        assert_eq!(s.max_real_part, 0.0);
        assert!(s.is_real());
    }

    #[test]
    fn symmetric_part_examples() {
        assert!((symmetric_part_max_eig(&Matrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-15);
        let skew = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(symmetric_part_max_eig(&skew).unwrap().abs() < 1e-15);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        assert!((symmetric_part_max_eig(&d).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identity_norm_is_exactly_one() {
        assert_eq!(spectral_norm(&Matrix::identity(2, 2)), 1.0);
        assert_eq!(spectral_norm(&Matrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let m = matrix_from_rows(&rows).unwrap();
        assert_eq!(m[(2, 1)], 6.0);
        assert_eq!(matrix_to_rows(&m), rows);
        assert!(matrix_from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
