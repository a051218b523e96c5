// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Unitary gates for capacitively coupled phase qubits.
//!
//! The coupling `H_int = ħ(g/2)(|01⟩⟨10| + |10⟩⟨01|)` generates a rotation in
//! the `{|01⟩, |10⟩}` block. A pulse with `gt = π` gives i-SWAP and half of
//! it gives SQiSW; CNOT follows from two SQiSW pulses dressed with
//! single-qubit rotations.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phase_qubit::HBAR;
use crate::qmatrix::{
    c, identity, is_unitary, max_abs_diff, pauli_x, pauli_y, real, tensor_product, zeros, ComplexMatrix,
};

/// A unitary matrix with a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub label: String,
    pub matrix: ComplexMatrix,
}

impl Gate {
    /// Wraps `matrix`, rejecting it if `U†U` is more than 1e-12 from identity.
    pub fn new(label: impl Into<String>, matrix: ComplexMatrix) -> Result<Self> {
        if !is_unitary(&matrix, 1e-12) {
            return Err(Error::NotUnitary(crate::qmatrix::unitarity_defect(&matrix)));
        }
        Ok(Gate { label: label.into(), matrix })
    }

    fn trusted(label: impl Into<String>, matrix: ComplexMatrix) -> Self {
        debug_assert!(is_unitary(&matrix, 1e-12));
        Gate { label: label.into(), matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Matrix product `self · rhs` (rhs acts first).
    pub fn then_after(&self, rhs: &Gate) -> Gate {
        Gate::trusted(format!("{}*{}", self.label, rhs.label), &self.matrix * &rhs.matrix)
    }

    pub fn tensor(&self, rhs: &Gate) -> Gate {
        Gate::trusted(format!("({})x({})", self.label, rhs.label), tensor_product(&self.matrix, &rhs.matrix))
    }

    pub fn identity(dim: usize) -> Gate {
        Gate::trusted(format!("I{dim}"), identity(dim))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Sign in the rotation generator `exp(∓iασ/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationConvention {
    /// `R_a(α) = exp(−iασ_a/2)`.
    #[default]
    NegativeExponent,
    /// `R_a(α) = exp(+iασ_a/2)`.
    PositiveExponent,
}

impl fmt::Display for RotationConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationConvention::NegativeExponent => write!(f, "exp(-i*alpha*sigma/2)"),
            RotationConvention::PositiveExponent => write!(f, "exp(+i*alpha*sigma/2)"),
        }
    }
}

/// Bloch-sphere rotation `R_a(α) = cos(α/2) I − i sin(α/2) σ_a`.
pub fn rotation_gate(axis: Axis, alpha: f64) -> Gate {
    rotation_gate_with(axis, alpha, RotationConvention::NegativeExponent)
}

pub fn rotation_gate_with(axis: Axis, alpha: f64, convention: RotationConvention) -> Gate {
    let sigma = match axis {
        Axis::X => pauli_x(),
        Axis::Y => pauli_y(),
    };
    let sign = match convention {
        RotationConvention::NegativeExponent => -1.0,
        RotationConvention::PositiveExponent => 1.0,
    };
    let half = 0.5 * alpha;
    let m = identity(2) * real(half.cos()) + sigma * c(0.0, sign * half.sin());
    let name = match axis {
        Axis::X => "Rx",
        Axis::Y => "Ry",
    };
    Gate::trusted(format!("{name}({alpha})"), m)
}

/// Coupling Hamiltonian `ħ(g/2)(|01⟩⟨10| + |10⟩⟨01|)` in joules.
pub fn interaction_hamiltonian(g: f64) -> ComplexMatrix {
    let mut h = zeros(4, 4);
    h[(1, 2)] = real(0.5 * HBAR * g);
    h[(2, 1)] = real(0.5 * HBAR * g);
    h
}

/// Coupling parameters; the evolution only depends on the pulse area `g·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionParams {
    /// Coupling constant in rad/s.
    pub g: f64,
    /// Pulse duration in seconds.
    pub t: f64,
}

impl InteractionParams {
    pub fn new(g: f64, t: f64) -> Result<Self> {
        if !(g * t >= 0.0) {
            return Err(Error::InvalidParameter(format!("pulse area g*t must be non-negative, got {}", g * t)));
        }
        Ok(InteractionParams { g, t })
    }

    pub fn phase(&self) -> f64 {
        self.g * self.t
    }
}

/// Closed-form coupling evolution for pulse area `gt`.
pub fn interaction_unitary(gt: f64) -> Gate {
    let (s, co) = (0.5 * gt).sin_cos();
    let mut u = identity(4);
    u[(1, 1)] = real(co);
    u[(2, 2)] = real(co);
    u[(1, 2)] = c(0.0, -s);
    u[(2, 1)] = c(0.0, -s);
    Gate::trusted(format!("Uint({gt})"), u)
}

pub fn iswap() -> Gate {
    Gate { label: "iSWAP".into(), ..interaction_unitary(PI) }
}

pub fn sqiswap() -> Gate {
    Gate { label: "SQiSW".into(), ..interaction_unitary(FRAC_PI_2) }
}

/// Textbook CNOT with the first (left) qubit as control.
pub fn cnot() -> Gate {
    let mut m = zeros(4, 4);
    m[(0, 0)] = real(1.0);
    m[(1, 1)] = real(1.0);
    m[(2, 3)] = real(1.0);
    m[(3, 2)] = real(1.0);
    Gate::trusted("CNOT", m)
}

/// The SQiSW-based product for CNOT, evaluated as an ordinary matrix product
/// (rightmost factor acts first):
///
/// `[Ry(−π/2)⊗I]·[Rx(π/2)⊗Rx(−π/2)]·SQiSW·[Rx(π)⊗I]·SQiSW·[Ry(π/2)⊗I]`
pub fn cnot_product(convention: RotationConvention) -> Gate {
    let r = |axis, alpha| rotation_gate_with(axis, alpha, convention);
    let id = Gate::identity(2);
    let s = sqiswap();
    let factors = [
        r(Axis::Y, -FRAC_PI_2).tensor(&id),
        r(Axis::X, FRAC_PI_2).tensor(&r(Axis::X, -FRAC_PI_2)),
        s.clone(),
        r(Axis::X, PI).tensor(&id),
        s,
        r(Axis::Y, FRAC_PI_2).tensor(&id),
    ];
    let m = factors.iter().skip(1).fold(factors[0].matrix.clone(), |acc, f| acc * &f.matrix);
    Gate::trusted("CNOT(SQiSW)", m)
}

/// Result of comparing two unitaries up to a global phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatch {
    pub phase: Complex64,
    pub max_deviation: f64,
}

/// Fits `e^{iφ}` from the first diagonal entry of `a·b†` with modulus above
/// one half, then reports the largest entrywise deviation of `a·b†` from
/// `e^{iφ} I`.
pub fn phase_match(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<PhaseMatch> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::DimensionMismatch("phase comparison needs equal square matrices".into()));
    }
    let prod = a * b.adjoint();
    let n = prod.nrows();
    let pivot = (0..n)
        .map(|i| prod[(i, i)])
        .find(|z| z.norm() > 0.5)
        .ok_or_else(|| Error::Numerical("no diagonal entry of a*b^dagger has modulus above 1/2".into()))?;
    let phase = pivot / pivot.norm();
    let max_deviation = max_abs_diff(&prod, &(identity(n) * phase));
    Ok(PhaseMatch { phase, max_deviation })
}

/// CNOT built from SQiSW, verified against the textbook CNOT.
///
/// The negative-exponent rotation convention is tried first and the positive
/// one second; the first that reproduces CNOT to within 1e-10 (up to a global
/// phase) is returned along with the convention used.
pub fn cnot_via_sqiswap() -> Result<(Gate, RotationConvention, PhaseMatch)> {
    let target = cnot();
    let mut worst = f64::INFINITY;
    for convention in [RotationConvention::NegativeExponent, RotationConvention::PositiveExponent] {
        let product = cnot_product(convention);
        let fit = phase_match(&product.matrix, &target.matrix)?;
        if fit.max_deviation < 1e-10 {
            return Ok((Gate { label: "CNOT".into(), ..product }, convention, fit));
        }
        worst = worst.min(fit.max_deviation);
    }
    Err(Error::Numerical(format!(
        "SQiSW decomposition does not reproduce CNOT under either rotation convention (best deviation {worst:.3e})"
    )))
}

/// Gates addressable by name from configuration files and the CLI.
pub fn gate_by_name(name: &str, gt: Option<f64>) -> Result<Gate> {
    match name.to_ascii_lowercase().as_str() {
        "sqiswap" | "sqisw" => Ok(sqiswap()),
        "iswap" => Ok(iswap()),
        "cnot" => cnot_via_sqiswap().map(|(g, _, _)| g),
        "identity" => Ok(Gate::identity(4)),
        "interaction" => {
            let gt = gt.ok_or_else(|| Error::InvalidParameter("gate 'interaction' needs a pulse area gt".into()))?;
            if !(gt >= 0.0) {
                return Err(Error::InvalidParameter(format!("pulse area gt must be non-negative, got {gt}")));
            }
            Ok(interaction_unitary(gt))
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown gate '{other}'; expected one of sqiswap, iswap, cnot, identity, interaction"
        ))),
    }
}
