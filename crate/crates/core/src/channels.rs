// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Process representations: Kraus sets, chi-matrices and the conversions
//! between them.
//!
//! A chi-matrix is built by stacking each Kraus element `E_k` into a column
//! `vec(E_k)` of a matrix `e` and forming `e e†`. The stored [`ChiMatrix`] is
//! always rescaled to unit trace; for a trace-preserving process on dimension
//! `S` the raw `e e†` has trace `S` and its partial trace over the second
//! (row-index) factor is the identity, so the stored one reduces to `I/S`.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::Gate;
use crate::qmatrix::{
    c, eigh, frobenius, hermiticity_defect, identity, is_unitary, partial_trace_second, real, tensor_all, unvec, vec,
    zeros, ComplexMatrix,
};

/// Eigenvalues of `χ·S` at or below this are dropped when extracting Kraus
/// elements.
pub const KRAUS_CUTOFF: f64 = 1e-12;

/// Trace-preservation tolerance on `‖Σ E†E − I‖_F`.
pub const TP_TOL: f64 = 1e-10;

/// Ordered list of transformation elements acting on dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    dim: usize,
    elements: Vec<ComplexMatrix>,
}

impl KrausSet {
    pub fn new(elements: Vec<ComplexMatrix>) -> Result<Self> {
        let first =
            elements.first().ok_or_else(|| Error::InvalidParameter("a Kraus set needs at least one element".into()))?;
        let dim = first.nrows();
        if let Some(bad) = elements.iter().find(|e| e.nrows() != dim || e.ncols() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus elements must all be {dim}x{dim}, found {}x{}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        Ok(KrausSet { dim, elements })
    }

    pub fn unitary(u: &ComplexMatrix) -> Result<Self> {
        KrausSet::new(vec![u.clone()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    /// The `S² × m` matrix whose columns are `vec(E_k)`.
    pub fn stacked(&self) -> ComplexMatrix {
        let s2 = self.dim * self.dim;
        let mut e = zeros(s2, self.len());
        for (k, el) in self.elements.iter().enumerate() {
            e.set_column(k, &vec(el).column(0));
        }
        e
    }
}

/// `ρ → Σ_k E_k ρ E_k†`.
pub fn apply_channel(kraus: &KrausSet, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.nrows() != kraus.dim || rho.ncols() != kraus.dim {
        return Err(Error::DimensionMismatch(format!(
            "channel acts on dimension {}, state is {}x{}",
            kraus.dim,
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(kraus.elements.iter().fold(zeros(kraus.dim, kraus.dim), |acc, e| acc + e * rho * e.adjoint()))
}

/// Returns whether `Σ E_k†E_k = I` within [`TP_TOL`], and the Frobenius
/// residual.
pub fn check_trace_preserving(kraus: &KrausSet) -> (bool, f64) {
    let sum = kraus.elements.iter().fold(zeros(kraus.dim, kraus.dim), |acc, e| acc + e.adjoint() * e);
    let residual = frobenius(&(sum - identity(kraus.dim)));
    (residual < TP_TOL, residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Matrix units `|j⟩⟨k|` on the column-stacked space.
    Natural,
    /// Tensor products of `{I, σx, −iσy, σz}/√2`.
    Pauli,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Natural => "natural",
            Basis::Pauli => "pauli",
        })
    }
}

/// Unit-trace process matrix of side `S²`.
///
/// With this normalization a trace-preserving chi has reduced matrix
/// `Tr₂(χ) = I/S`, i.e. the constant in front of the identity is `1/S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix {
    dim: usize,
    matrix: ComplexMatrix,
    basis: Basis,
}

impl ChiMatrix {
    /// Validates Hermiticity (1e-12), positivity (eigenvalues ≥ −1e-10) and
    /// unit trace (1e-12).
    pub fn new(dim: usize, matrix: ComplexMatrix, basis: Basis) -> Result<Self> {
        let n = dim * dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "chi for dimension {dim} must be {n}x{n}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > 1e-12 {
            return Err(Error::NotHermitian(defect));
        }
        let tr = matrix.trace();
        if (tr - real(1.0)).norm() > 1e-12 {
            return Err(Error::InvalidParameter(format!("chi must have unit trace, got {tr}")));
        }
        let lowest = eigh(&matrix)?.0[0];
        if lowest < -crate::qmatrix::NEG_EIG_TOL {
            return Err(Error::NotPositive(lowest));
        }
        Ok(ChiMatrix { dim, matrix, basis })
    }

    /// Rescales a Hermitian positive matrix of any positive trace to unit
    /// trace and validates it.
    pub fn from_unnormalized(dim: usize, matrix: ComplexMatrix, basis: Basis) -> Result<Self> {
        let tr = matrix.trace().re;
        if !(tr > 0.0) {
            return Err(Error::Degenerate(format!("chi has non-positive trace {tr}")));
        }
        let m = crate::qmatrix::hermitian_part(&matrix.unscale(tr));
        ChiMatrix::new(dim, m, basis)
    }

    pub(crate) fn from_parts_unchecked(dim: usize, matrix: ComplexMatrix, basis: Basis) -> Self {
        ChiMatrix { dim, matrix, basis }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// The raw normalization `χ·S` (trace `S` for trace-preserving processes).
    pub fn raw(&self) -> ComplexMatrix {
        &self.matrix * real(self.dim as f64)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        // Construction guarantees Hermiticity.
        eigh(&self.matrix).map(|(v, _)| v).unwrap_or_default()
    }

    /// Numerical rank: eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&l| l > tol).count()
    }

    /// Frobenius distance of `Tr₂(χ·S)` from `I_S`, evaluated in the natural
    /// basis.
    pub fn tp_residual(&self) -> f64 {
        let natural = match self.basis {
            Basis::Natural => self.matrix.clone(),
            Basis::Pauli => {
                let u0 = pauli_basis_for_dim(self.dim).map(|b| b.u0).unwrap_or_else(|_| identity(self.matrix.nrows()));
                &u0 * &self.matrix * u0.adjoint()
            }
        };
        let reduced = partial_trace_second(&(natural * real(self.dim as f64)), self.dim, self.dim)
            .expect("chi side is dim*dim by construction");
        frobenius(&(reduced - identity(self.dim)))
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.tp_residual() < tol
    }
}

/// `χ = e e† / Tr(e e†)` in the natural basis.
pub fn chi_from_kraus(kraus: &KrausSet) -> Result<ChiMatrix> {
    let e = kraus.stacked();
    let raw = &e * e.adjoint();
    ChiMatrix::from_unnormalized(kraus.dim, raw, Basis::Natural)
}

/// Rank-one chi of a unitary process.
pub fn chi_from_unitary(u: &ComplexMatrix) -> Result<ChiMatrix> {
    chi_from_kraus(&KrausSet::unitary(u)?)
}

/// Canonical Kraus elements from the eigendecomposition of `χ·S`: one element
/// `unvec(√λ v)` per eigenvalue above [`KRAUS_CUTOFF`].
pub fn kraus_from_chi(chi: &ChiMatrix) -> Result<KrausSet> {
    if chi.basis != Basis::Natural {
        return Err(Error::InvalidParameter("Kraus extraction needs a natural-basis chi".into()));
    }
    let (values, vectors) = eigh(&chi.raw())?;
    if values[0] < -crate::qmatrix::NEG_EIG_TOL * chi.dim as f64 {
        return Err(Error::NotPositive(values[0]));
    }
    let s = chi.dim;
    let elements = values
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, &l)| l > KRAUS_CUTOFF)
        .map(|(j, &l)| unvec(&column_matrix(&vectors, j).scale(l.sqrt()), s, s))
        .collect::<Result<Vec<_>>>()?;
    KrausSet::new(elements)
}

fn column_matrix(m: &ComplexMatrix, j: usize) -> ComplexMatrix {
    ComplexMatrix::from_iterator(m.nrows(), 1, m.column(j).iter().copied())
}

/// Re-mixes Kraus elements through `e → e·u` for an `m × m` unitary `u`.
pub fn unitary_remix(kraus: &KrausSet, u: &ComplexMatrix) -> Result<KrausSet> {
    let m = kraus.len();
    if u.nrows() != m || u.ncols() != m {
        return Err(Error::DimensionMismatch(format!("remix needs a {m}x{m} unitary")));
    }
    if !is_unitary(u, 1e-10) {
        return Err(Error::NotUnitary(crate::qmatrix::unitarity_defect(u)));
    }
    let mixed = kraus.stacked() * u;
    let elements =
        (0..m).map(|k| unvec(&column_matrix(&mixed, k), kraus.dim, kraus.dim)).collect::<Result<Vec<_>>>()?;
    KrausSet::new(elements)
}

/// Hilbert-Schmidt orthonormal operator basis together with the change of
/// basis unitary whose columns are `vec(B_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessBasis {
    pub dim: usize,
    pub operators: Vec<ComplexMatrix>,
    pub labels: Vec<String>,
    pub u0: ComplexMatrix,
}

/// Single-qubit operators `I/√2, σx/√2, −iσy/√2, σz/√2` with labels.
fn single_qubit_pauli() -> Vec<(&'static str, ComplexMatrix)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        ("I", identity(2).scale(s)),
        ("X", crate::qmatrix::pauli_x().scale(s)),
        ("Y", (crate::qmatrix::pauli_y() * c(0.0, -1.0)).scale(s)),
        ("Z", crate::qmatrix::pauli_z().scale(s)),
    ]
}

/// Tensor-power Pauli-type basis on `n_qubits` qubits, factors ordered
/// lexicographically (first qubit most significant).
pub fn pauli_basis(n_qubits: usize) -> Result<ProcessBasis> {
    if n_qubits == 0 || n_qubits > 4 {
        return Err(Error::InvalidParameter(format!("pauli basis supports 1..=4 qubits, got {n_qubits}")));
    }
    let single = single_qubit_pauli();
    let dim = 1usize << n_qubits;
    let count = dim * dim;
    let mut operators = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for index in 0..count {
        let digits: Vec<usize> = (0..n_qubits).rev().map(|q| (index >> (2 * q)) & 3).collect();
        labels.push(digits.iter().map(|&d| single[d].0).collect::<String>());
        operators.push(tensor_all(digits.iter().map(|&d| &single[d].1)));
    }
    let mut u0 = zeros(count, count);
    for (j, op) in operators.iter().enumerate() {
        u0.set_column(j, &vec(op).column(0));
    }
    Ok(ProcessBasis { dim, operators, labels, u0 })
}

fn pauli_basis_for_dim(dim: usize) -> Result<ProcessBasis> {
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::InvalidParameter(format!("no qubit Pauli basis for dimension {dim}")));
    }
    pauli_basis(dim.trailing_zeros() as usize)
}

/// Natural → Pauli: `χ' = U0† χ U0`.
pub fn change_basis(chi: &ChiMatrix, basis: &ProcessBasis) -> Result<ChiMatrix> {
    if chi.basis != Basis::Natural {
        return Err(Error::InvalidParameter("change_basis expects a natural-basis chi".into()));
    }
    check_basis_dim(chi, basis)?;
    let m = basis.u0.adjoint() * &chi.matrix * &basis.u0;
    Ok(ChiMatrix::from_parts_unchecked(chi.dim, crate::qmatrix::hermitian_part(&m), Basis::Pauli))
}

/// Pauli → natural: `χ = U0 χ' U0†`.
pub fn change_basis_inverse(chi: &ChiMatrix, basis: &ProcessBasis) -> Result<ChiMatrix> {
    if chi.basis != Basis::Pauli {
        return Err(Error::InvalidParameter("change_basis_inverse expects a pauli-basis chi".into()));
    }
    check_basis_dim(chi, basis)?;
    let m = &basis.u0 * &chi.matrix * basis.u0.adjoint();
    Ok(ChiMatrix::from_parts_unchecked(chi.dim, crate::qmatrix::hermitian_part(&m), Basis::Natural))
}

fn check_basis_dim(chi: &ChiMatrix, basis: &ProcessBasis) -> Result<()> {
    if chi.dim != basis.dim {
        return Err(Error::DimensionMismatch(format!("chi acts on dimension {}, basis on {}", chi.dim, basis.dim)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Depolarizing,
}

/// A unitary gate followed (or not) by depolarizing noise:
/// `ρ → p I/S + (1 − p) U ρ U†`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub p: f64,
    pub gate: Gate,
}

impl NoiseModel {
    pub fn noiseless(gate: Gate) -> Self {
        NoiseModel { kind: NoiseKind::None, p: 0.0, gate }
    }

    pub fn depolarizing(gate: Gate, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p must lie in [0,1], got {p}")));
        }
        Ok(NoiseModel { kind: NoiseKind::Depolarizing, p, gate })
    }

    pub fn effective_p(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Depolarizing => self.p,
        }
    }
}

/// Chi of the noise model: `(1 − p) χ_U + p I/S²` (natural basis).
pub fn noisy_chi(model: &NoiseModel) -> Result<ChiMatrix> {
    let p = model.effective_p();
    let chi_u = chi_from_unitary(&model.gate.matrix)?;
    let s = chi_u.dim;
    let n = s * s;
    let m = chi_u.matrix.scale(1.0 - p) + identity(n).scale(p / n as f64);
    Ok(ChiMatrix::from_parts_unchecked(s, m, Basis::Natural))
}

/// Real parameters of a full-rank trace-preserving chi on dimension `S`:
/// `S⁴` for a Hermitian `S² × S²` matrix minus `S²` trace-preservation
/// constraints.
pub fn free_parameter_count(dim: usize) -> usize {
    dim.pow(4) - dim.pow(2)
}

/// Random trace-preserving channel with `m` Kraus elements, taken from the
/// blocks of a random `mS × S` isometry.
pub fn random_channel(dim: usize, m: usize, rng: &mut impl Rng) -> Result<KrausSet> {
    if m == 0 || dim == 0 {
        return Err(Error::InvalidParameter("random channel needs dim >= 1 and m >= 1".into()));
    }
    let g = ComplexMatrix::from_fn(m * dim, dim, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let q = g.qr().q();
    let elements = (0..m).map(|k| q.rows(k * dim, dim).into_owned()).collect();
    KrausSet::new(elements)
}
