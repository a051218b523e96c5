// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Matrices are `nalgebra` dense matrices of `Complex64`. Sizes stay small
//! (chi-matrices are at most 16×16 here), so everything is dense and
//! allocation-happy.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Default absolute tolerance on Frobenius norms.
pub const TOL: f64 = 1e-10;

/// Eigenvalues in `[-NEG_EIG_TOL, 0)` are treated as round-off and clamped.
pub const NEG_EIG_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

/// Builds a matrix from row-major nested data.
pub fn from_rows(rows: &[&[Complex64]]) -> ComplexMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    ComplexMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn diag(entries: &[Complex64]) -> ComplexMatrix {
    let n = entries.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i == j { entries[i] } else { Complex64::ZERO })
}

pub fn pauli_x() -> ComplexMatrix {
    from_rows(&[&[real(0.0), real(1.0)], &[real(1.0), real(0.0)]])
}

pub fn pauli_y() -> ComplexMatrix {
    from_rows(&[&[real(0.0), c(0.0, -1.0)], &[c(0.0, 1.0), real(0.0)]])
}

pub fn pauli_z() -> ComplexMatrix {
    diag(&[real(1.0), real(-1.0)])
}

/// Kronecker product `a ⊗ b`.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of a sequence of factors, left to right.
pub fn tensor_all<'a, I>(factors: I) -> ComplexMatrix
where
    I: IntoIterator<Item = &'a ComplexMatrix>,
{
    factors.into_iter().fold(identity(1), |acc, f| tensor_product(&acc, f))
}

pub fn dagger(m: &ComplexMatrix) -> ComplexMatrix {
    m.adjoint()
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.trace()
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius distance between two matrices of equal shape.
pub fn distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    frobenius(&(a - b))
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(m, &m.adjoint())
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    hermiticity_defect(m) <= tol
}

pub fn unitarity_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(&(m.adjoint() * m), &identity(m.nrows()))
}

pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> bool {
    unitarity_defect(m) <= tol
}

/// Averages `m` with its adjoint.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
///
/// Columns of the returned matrix are the matching orthonormal eigenvectors.
pub fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let defect = hermiticity_defect(m);
    let scale = frobenius(m).max(1.0);
    if defect > 1e-9 * scale {
        return Err(Error::NotHermitian(defect));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(m: &ComplexMatrix) -> Result<Vec<f64>> {
    eigh(m).map(|(v, _)| v)
}

/// Rebuilds `V f(Λ) V†` from an eigendecomposition.
pub fn spectral_map(values: &[f64], vectors: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let w = f(lam);
        for i in 0..n {
            scaled[(i, j)] *= w;
        }
    }
    hermitian_part(&(scaled * vectors.adjoint()))
}

/// `exp(−i θ H)` for Hermitian `H`, computed through the eigenbasis.
pub fn expm_hermitian(h: &ComplexMatrix, theta: f64) -> Result<ComplexMatrix> {
    let (values, vectors) = eigh(h)?;
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -theta * lam);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    Ok(scaled * vectors.adjoint())
}

/// Principal square root of a Hermitian positive-semidefinite matrix.
///
/// Eigenvalues in `[-1e-10, 0)` are clamped to zero; anything more negative
/// is reported as [`Error::NotPositive`].
pub fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (values, vectors) = eigh(m)?;
    if let Some(&lowest) = values.first() {
        if lowest < -NEG_EIG_TOL {
            return Err(Error::NotPositive(lowest));
        }
    }
    // Eigenvalues at round-off level relative to the spectrum are zero; their
    // square roots would otherwise be ~1e-8.
    let floor = 1e-14 * values.last().copied().unwrap_or(0.0).max(0.0);
    Ok(spectral_map(&values, &vectors, |x| if x > floor { x.sqrt() } else { 0.0 }))
}

/// Column-stacking vectorization: column 0 first, column 1 beneath it, ...
pub fn vec(m: &ComplexMatrix) -> ComplexMatrix {
    // nalgebra storage is column-major, which is exactly column stacking.
    ComplexMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &ComplexMatrix, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if v.len() != rows * cols || (v.ncols() != 1 && v.nrows() != 1) {
        return Err(Error::DimensionMismatch(format!(
            "cannot unvec a {}x{} array into {rows}x{cols}",
            v.nrows(),
            v.ncols()
        )));
    }
    Ok(ComplexMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Traces out the second tensor factor of a `(d1·d2)`-square matrix.
pub fn partial_trace_second(m: &ComplexMatrix, dim_first: usize, dim_second: usize) -> Result<ComplexMatrix> {
    let n = dim_first * dim_second;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(ComplexMatrix::from_fn(dim_first, dim_first, |a, b| {
        (0..dim_second).map(|k| m[(a * dim_second + k, b * dim_second + k)]).sum()
    }))
}

/// Traces out the first tensor factor of a `(d1·d2)`-square matrix.
pub fn partial_trace_first(m: &ComplexMatrix, dim_first: usize, dim_second: usize) -> Result<ComplexMatrix> {
    let n = dim_first * dim_second;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(ComplexMatrix::from_fn(dim_second, dim_second, |a, b| {
        (0..dim_first).map(|k| m[(k * dim_second + a, k * dim_second + b)]).sum()
    }))
}

/// Outer product `|u⟩⟨v|` of two column vectors.
pub fn outer(u: &ComplexMatrix, v: &ComplexMatrix) -> ComplexMatrix {
    u * v.adjoint()
}

/// Column-stacked JSON form: `{rows, cols, re: [...], im: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            re: m.iter().map(|z| z.re).collect(),
            im: m.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<&MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: &MatrixJson) -> Result<Self> {
        let n = j.rows * j.cols;
        if j.re.len() != n || j.im.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix JSON declares {}x{} but carries {} real and {} imaginary entries",
                j.rows,
                j.cols,
                j.re.len(),
                j.im.len()
            )));
        }
        let data: Vec<Complex64> = j.re.iter().zip(&j.im).map(|(&r, &i)| c(r, i)).collect();
        Ok(ComplexMatrix::from_column_slice(j.rows, j.cols, &data))
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_tensor_identity() {
        assert_eq!(tensor_product(&identity(2), &identity(2)), identity(4));
    }

    #[test]
    fn zz_is_diagonal() {
        let zz = tensor_product(&pauli_z(), &pauli_z());
        assert_eq!(zz, diag(&[real(1.0), real(-1.0), real(-1.0), real(1.0)]));
    }

    #[test]
    fn normalized_x_tensor_y_is_real_half_entries() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = pauli_x().scale(s);
        let y = (pauli_y() * c(0.0, -1.0)).scale(s);
        // Y = [[0,-1],[1,0]]/√2, X = [[0,1],[1,0]]/√2, expanded by hand.
        let expected = [[0.0, 0.0, 0.0, -0.5], [0.0, 0.0, 0.5, 0.0], [0.0, -0.5, 0.0, 0.0], [0.5, 0.0, 0.0, 0.0]];
        let xy = tensor_product(&x, &y);
        for i in 0..4 {
            for j in 0..4 {
                assert!((xy[(i, j)] - real(expected[i][j])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn mixed_product_property() {
        let mut r = rng(3);
        let (a, b, cm, d) = (
            random_matrix(&mut r, 2, 3),
            random_matrix(&mut r, 3, 2),
            random_matrix(&mut r, 3, 2),
            random_matrix(&mut r, 2, 3),
        );
        let lhs = tensor_product(&a, &b) * tensor_product(&cm, &d);
        let rhs = tensor_product(&(&a * &cm), &(&b * &d));
        assert!(distance(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut r = rng(5);
        let a = random_matrix(&mut r, 3, 3);
        let b = random_matrix(&mut r, 2, 2);
        let pt = partial_trace_second(&tensor_product(&a, &b), 3, 2).unwrap();
        assert!(distance(&pt, &(&a * b.trace())) < 1e-12);
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let mut rho = zeros(4, 4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            rho[(i, j)] = real(0.5);
        }
        let pt = partial_trace_second(&rho, 2, 2).unwrap();
        assert!(distance(&pt, &identity(2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn identity_channel_choi_reduces_to_half_identity() {
        let v = vec(&identity(2));
        let chi = outer(&v, &v).scale(0.5);
        let pt = partial_trace_second(&chi, 2, 2).unwrap();
        assert!(distance(&pt, &identity(2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        assert!(matches!(partial_trace_second(&identity(4), 3, 2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn psd_sqrt_examples() {
        assert!(distance(&psd_sqrt(&identity(3)).unwrap(), &identity(3)) < 1e-12);
        let r = psd_sqrt(&diag(&[real(4.0), real(9.0)])).unwrap();
        assert!(distance(&r, &diag(&[real(2.0), real(3.0)])) < 1e-12);
        let v = ComplexMatrix::from_column_slice(2, 1, &[c(0.6, 0.0), c(0.0, 0.8)]);
        let p = outer(&v, &v);
        assert!(distance(&psd_sqrt(&p).unwrap(), &p) < 1e-12);
    }

    #[test]
    fn psd_sqrt_errors() {
        assert!(matches!(psd_sqrt(&diag(&[real(1.0), real(-1e-3)])), Err(Error::NotPositive(_))));
        assert!(psd_sqrt(&diag(&[real(1.0), real(-1e-12)])).is_ok());
        let nh = from_rows(&[&[real(1.0), real(1.0)], &[real(0.0), real(1.0)]]);
        assert!(matches!(psd_sqrt(&nh), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn vec_examples() {
        let (a, b, cc, d) = (real(1.0), real(2.0), real(3.0), real(4.0));
        let m = from_rows(&[&[a, cc], &[b, d]]);
        assert_eq!(vec(&m).as_slice(), &[a, b, cc, d]);
        assert_eq!(vec(&identity(2)).as_slice(), &[real(1.0), real(0.0), real(0.0), real(1.0)]);
        let mut r = rng(9);
        let x = random_matrix(&mut r, 3, 3);
        assert_eq!(unvec(&vec(&x), 3, 3).unwrap(), x);
        assert!(unvec(&vec(&x), 2, 4).is_err());
    }

    #[test]
    fn matrix_json_round_trip() {
        let mut r = rng(1);
        let m = random_matrix(&mut r, 2, 3);
        let j = MatrixJson::from(&m);
        assert_eq!(j.re[1], m[(1, 0)].re);
        let back = ComplexMatrix::try_from(&j).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn vec_sandwich_identity(seed in any::<u64>(), n in 1usize..4, m in 1usize..4, k in 1usize..4) {
            let mut r = rng(seed);
            let a = random_matrix(&mut r, n, m);
            let x = random_matrix(&mut r, m, k);
            let b = random_matrix(&mut r, k, n);
            let lhs = vec(&(&a * &x * &b));
            let rhs = tensor_product(&b.transpose(), &a) * vec(&x);
            prop_assert!(distance(&lhs, &rhs) < 1e-12);
        }

        #[test]
        fn psd_sqrt_squares_back(seed in any::<u64>(), n in 1usize..9) {
            let mut r = rng(seed);
            let m = random_psd(&mut r, n);
            let s = psd_sqrt(&m).unwrap();
            prop_assert!(distance(&(&s * &s), &m) < 1e-10 * frobenius(&m).max(1.0));
            prop_assert!(is_hermitian(&s, 1e-12));
            prop_assert!(eigvalsh(&s).unwrap()[0] > -1e-10);
        }

        #[test]
        fn partial_trace_linear_and_trace_preserving(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4) {
            let mut r = rng(seed);
            let x = random_matrix(&mut r, d1 * d2, d1 * d2);
            let y = random_matrix(&mut r, d1 * d2, d1 * d2);
            let alpha = c(0.3, -1.2);
            let lhs = partial_trace_second(&(&x * alpha + &y), d1, d2).unwrap();
            let rhs = partial_trace_second(&x, d1, d2).unwrap() * alpha
                + partial_trace_second(&y, d1, d2).unwrap();
            prop_assert!(distance(&lhs, &rhs) < 1e-12);
            prop_assert!((lhs.trace() - (x * alpha + y).trace()).norm() < 1e-12);
        }

        #[test]
        fn tensor_product_associative(seed in any::<u64>()) {
            let mut r = rng(seed);
            let a = random_matrix(&mut r, 2, 1);
            let b = random_matrix(&mut r, 1, 3);
            let cm = random_matrix(&mut r, 2, 2);
            let lhs = tensor_product(&tensor_product(&a, &b), &cm);
            let rhs = tensor_product(&a, &tensor_product(&b, &cm));
            prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-15);
        }
    }
}
