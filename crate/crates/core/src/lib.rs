// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Precision process tomography for superconducting phase-qubit gates.
//!
//! The crate builds the capacitive-coupling gates (SQiSW, i-SWAP, CNOT),
//! represents noisy processes as unit-trace chi-matrices, simulates
//! tomographic counts for the standard and tetrahedron input protocols,
//! reconstructs the chi-matrix by constrained maximum likelihood and
//! studies the distribution of the resulting fidelity loss.
//!
//! Conventions used throughout:
//!
//! * `vec` stacks columns, so `vec(E)` lives in (column index) ⊗ (row index).
//! * A stored [`ChiMatrix`](channels::ChiMatrix) has unit trace; the raw
//!   `e e†` of a trace-preserving process has trace `S`.
//! * Outcome probability for input `ρ` and effect `M` is `S·Tr[(ρᵀ⊗M) χ]`.
//! * Two-qubit ordering is `|00⟩, |01⟩, |10⟩, |11⟩` with `|ab⟩ = |a⟩⊗|b⟩`.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod cli;
pub mod error;
pub mod fidelity_stats;
pub mod gates;
pub mod phase_qubit;
pub mod protocols;
pub mod qmatrix;
pub mod tomography;

pub use error::{Error, Result};
pub use qmatrix::ComplexMatrix;
