// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Tomography protocols: input states, measurement POVMs and the design
//! operators `A_r = ρᵀ ⊗ M` that map a raw chi-matrix to probabilities via
//! `p_r = Tr(A_r χ_raw)`.
//!
//! Two protocols are built in. `standard` prepares the product states of
//! `{|0⟩, |1⟩, |+⟩, |+i⟩}` and measures each qubit with the binary projective
//! POVM `{|s⟩⟨s|, I − |s⟩⟨s|}` for each of the same four states.
//! `tetrahedron` prepares product states whose Bloch vectors form a regular
//! tetrahedron and measures the matching four-outcome POVM `{|t⟩⟨t|/2}` on
//! every qubit.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmatrix::{c, frobenius, identity, outer, real, tensor_all, tensor_product, zeros, ComplexMatrix};

/// Pure single-qubit state with its Bloch vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochState {
    pub bloch: [f64; 3],
    pub ket: ComplexMatrix,
    pub projector: ComplexMatrix,
}

impl BlochState {
    pub fn from_ket(a: num_complex::Complex64, b: num_complex::Complex64) -> Result<Self> {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Degenerate("zero ket".into()));
        }
        let ket = ComplexMatrix::from_column_slice(2, 1, &[a / norm, b / norm]);
        let projector = outer(&ket, &ket);
        let bloch =
            [2.0 * projector[(1, 0)].re, 2.0 * projector[(1, 0)].im, (projector[(0, 0)] - projector[(1, 1)]).re];
        Ok(BlochState { bloch, ket, projector })
    }

    /// State on the unit Bloch sphere pointing along `v` (normalized here).
    pub fn from_bloch(v: [f64; 3]) -> Result<Self> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(r > 0.0) {
            return Err(Error::Degenerate("zero Bloch vector".into()));
        }
        let (x, y, z) = (v[0] / r, v[1] / r, v[2] / r);
        let theta = z.clamp(-1.0, 1.0).acos();
        let phi = y.atan2(x);
        let a = real((0.5 * theta).cos());
        let b = num_complex::Complex64::from_polar((0.5 * theta).sin(), phi);
        let mut s = BlochState::from_ket(a, b)?;
        s.bloch = [x, y, z];
        Ok(s)
    }
}

/// `|0⟩, |1⟩, (|0⟩+|1⟩)/√2, (|0⟩+i|1⟩)/√2`.
pub fn standard_states() -> Vec<BlochState> {
    let h = FRAC_1_SQRT_2;
    [(real(1.0), real(0.0)), (real(0.0), real(1.0)), (real(h), real(h)), (real(h), c(0.0, h))]
        .into_iter()
        .map(|(a, b)| BlochState::from_ket(a, b).expect("fixed kets are nonzero"))
        .collect()
}

/// Regular tetrahedron inscribed in the Bloch sphere, canonical orientation
/// `(1,1,1), (1,−1,−1), (−1,1,−1), (−1,−1,1)` over `√3`.
pub fn tetrahedron_states() -> Vec<BlochState> {
    [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
        .into_iter()
        .map(|v| BlochState::from_bloch(v).expect("fixed vectors are nonzero"))
        .collect()
}

fn check_qubits(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > 2 {
        return Err(Error::InvalidParameter(format!("protocols are built for 1 or 2 qubits, got {n_qubits}")));
    }
    Ok(())
}

/// All ordered `n`-fold tensor products of `factors` (first factor most
/// significant).
fn ordered_products(factors: &[ComplexMatrix], n: usize) -> Vec<ComplexMatrix> {
    let k = factors.len();
    (0..k.pow(n as u32))
        .map(|index| {
            let picks: Vec<&ComplexMatrix> = (0..n).rev().map(|q| &factors[(index / k.pow(q as u32)) % k]).collect();
            tensor_all(picks)
        })
        .collect()
}

/// Density matrices of all ordered product inputs, `4^n` of them.
pub fn product_inputs(states: &[BlochState], n_qubits: usize) -> Result<Vec<ComplexMatrix>> {
    check_qubits(n_qubits)?;
    let projectors: Vec<ComplexMatrix> = states.iter().map(|s| s.projector.clone()).collect();
    Ok(ordered_products(&projectors, n_qubits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    Standard,
    Tetrahedron,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 2] = [ProtocolName::Standard, ProtocolName::Tetrahedron];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolName::Standard => "standard",
            ProtocolName::Tetrahedron => "tetrahedron",
        }
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(ProtocolName::Standard),
            "tetrahedron" => Ok(ProtocolName::Tetrahedron),
            other => Err(Error::InvalidParameter(format!(
                "unknown protocol '{other}'; valid protocols are: standard, tetrahedron"
            ))),
        }
    }
}

/// One preparation/measurement setting: an input state measured with one
/// POVM. Its outcomes occupy a contiguous block of design rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub input: usize,
    pub povm: usize,
    pub outcomes: Range<usize>,
}

/// Orthonormal real coordinates of a Hermitian `n×n` matrix: the diagonal,
/// then `√2·Re` and `√2·Im` of each strict upper entry. With this packing
/// `Tr(A X) = pack(A) · pack(X)` for Hermitian `A`, `X`.
pub fn pack_hermitian(m: &ComplexMatrix) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(n * n);
    for a in 0..n {
        out[a] = m[(a, a)].re;
    }
    let mut k = n;
    let s = std::f64::consts::SQRT_2;
    for a in 0..n {
        for b in a + 1..n {
            out[k] = s * m[(a, b)].re;
            out[k + 1] = s * m[(a, b)].im;
            k += 2;
        }
    }
    out
}

/// Inverse of [`pack_hermitian`].
pub fn unpack_hermitian(v: &DVector<f64>, n: usize) -> ComplexMatrix {
    let mut m = zeros(n, n);
    for a in 0..n {
        m[(a, a)] = real(v[a]);
    }
    let mut k = n;
    let s = FRAC_1_SQRT_2;
    for a in 0..n {
        for b in a + 1..n {
            let z = c(s * v[k], s * v[k + 1]);
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
            k += 2;
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct Protocol {
    pub name: ProtocolName,
    pub n_qubits: usize,
    pub dim: usize,
    pub states: Vec<BlochState>,
    pub inputs: Vec<ComplexMatrix>,
    pub povms: Vec<Vec<ComplexMatrix>>,
    pub configurations: Vec<Configuration>,
    /// `A_r = ρᵀ ⊗ M` for every design row, in configuration order.
    pub design_operators: Vec<ComplexMatrix>,
    /// Rows are `pack_hermitian(A_r)`; `p = design · pack(χ_raw)`.
    pub design: DMatrix<f64>,
    pub design_rank: usize,
}

impl Protocol {
    pub fn rows(&self) -> usize {
        self.design_operators.len()
    }

    pub fn is_informationally_complete(&self) -> bool {
        self.design_rank == self.dim.pow(4)
    }

    /// Shots per configuration: `total / n` each, remainder one apiece to the
    /// earliest configurations.
    pub fn allocate_shots(&self, total: u64) -> Vec<u64> {
        let n = self.configurations.len() as u64;
        let base = total / n;
        let extra = total % n;
        (0..n).map(|i| base + u64::from(i < extra)).collect()
    }

    pub fn describe(&self) -> ProtocolDescription {
        ProtocolDescription {
            name: self.name,
            n_qubits: self.n_qubits,
            bloch_vectors: self.states.iter().map(|s| s.bloch).collect(),
            inputs: self.inputs.len(),
            povms: self.povms.len(),
            outcomes_per_povm: self.povms.first().map_or(0, Vec::len),
            configurations: self.configurations.len(),
            design_rows: self.rows(),
            design_rank: self.design_rank,
            informationally_complete: self.is_informationally_complete(),
        }
    }
}

/// JSON summary printed by `protocol show`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolDescription {
    pub name: ProtocolName,
    pub n_qubits: usize,
    pub bloch_vectors: Vec<[f64; 3]>,
    pub inputs: usize,
    pub povms: usize,
    pub outcomes_per_povm: usize,
    pub configurations: usize,
    pub design_rows: usize,
    pub design_rank: usize,
    pub informationally_complete: bool,
}

fn single_qubit_povms(name: ProtocolName) -> Vec<Vec<ComplexMatrix>> {
    match name {
        ProtocolName::Standard => {
            standard_states().into_iter().map(|s| vec![s.projector.clone(), identity(2) - s.projector]).collect()
        }
        ProtocolName::Tetrahedron => {
            vec![tetrahedron_states().into_iter().map(|s| s.projector.scale(0.5)).collect()]
        }
    }
}

/// Builds the named protocol with its cached design operators.
pub fn build_protocol(name: ProtocolName, n_qubits: usize) -> Result<Protocol> {
    check_qubits(n_qubits)?;
    let states = match name {
        ProtocolName::Standard => standard_states(),
        ProtocolName::Tetrahedron => tetrahedron_states(),
    };
    let inputs = product_inputs(&states, n_qubits)?;
    let single = single_qubit_povms(name);

    // Every POVM on n qubits is a tensor product of one single-qubit POVM per
    // qubit; outcomes are ordered lexicographically.
    let mut povms = Vec::new();
    let k = single.len();
    for index in 0..k.pow(n_qubits as u32) {
        let picks: Vec<&Vec<ComplexMatrix>> =
            (0..n_qubits).rev().map(|q| &single[(index / k.pow(q as u32)) % k]).collect();
        let mut effects = vec![identity(1)];
        for povm in picks {
            effects = effects.iter().flat_map(|e| povm.iter().map(move |m| tensor_product(e, m))).collect();
        }
        povms.push(effects);
    }

    let dim = 1usize << n_qubits;
    let mut configurations = Vec::new();
    let mut design_operators = Vec::new();
    for (i, rho) in inputs.iter().enumerate() {
        let rho_t = rho.transpose();
        for (g, povm) in povms.iter().enumerate() {
            let start = design_operators.len();
            design_operators.extend(povm.iter().map(|m| tensor_product(&rho_t, m)));
            configurations.push(Configuration { input: i, povm: g, outcomes: start..design_operators.len() });
        }
    }

    let side = dim * dim;
    let mut design = DMatrix::zeros(design_operators.len(), side * side);
    for (r, a) in design_operators.iter().enumerate() {
        design.set_row(r, &pack_hermitian(a).transpose());
    }
    let design_rank = numerical_rank(&design);

    Ok(Protocol { name, n_qubits, dim, states, inputs, povms, configurations, design_operators, design, design_rank })
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    // Rank of the Gram matrix avoids a thin SVD of a tall matrix.
    let gram = m.transpose() * m;
    let ev = gram.symmetric_eigenvalues();
    let top = ev.iter().cloned().fold(0.0, f64::max);
    ev.iter().filter(|&&l| l > top * 1e-12).count()
}

/// Largest deviation of any POVM's sum from the identity.
pub fn povm_completeness_defect(protocol: &Protocol) -> f64 {
    protocol
        .povms
        .iter()
        .map(|p| {
            let sum = p.iter().fold(zeros(protocol.dim, protocol.dim), |acc, m| acc + m);
            frobenius(&(sum - identity(protocol.dim)))
        })
        .fold(0.0, f64::max)
}
