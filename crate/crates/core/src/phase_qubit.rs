// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Operating-point physics of a current-biased Josephson phase qubit in the
//! harmonic approximation. All quantities are SI.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qmatrix::{diag, real, ComplexMatrix};

/// Elementary charge in coulombs (CODATA, exact).
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

/// Reduced Planck constant in joule-seconds (CODATA).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Ratio `E_J / E_C` below which the well is too shallow for a phase qubit.
pub const DEEP_WELL_RATIO: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseQubitParams {
    /// Critical current `I_c` in amperes.
    pub critical_current: f64,
    /// Bias current `I_e` in amperes.
    pub bias_current: f64,
    /// Junction capacitance `C` in farads.
    pub capacitance: f64,
}

impl PhaseQubitParams {
    pub fn new(critical_current: f64, bias_current: f64, capacitance: f64) -> Result<Self> {
        if !(critical_current > 0.0) || !critical_current.is_finite() {
            return Err(Error::InvalidParameter(format!("critical current must be positive, got {critical_current}")));
        }
        if !(capacitance > 0.0) || !capacitance.is_finite() {
            return Err(Error::InvalidParameter(format!("capacitance must be positive, got {capacitance}")));
        }
        if !(bias_current >= 0.0) || !bias_current.is_finite() {
            return Err(Error::InvalidParameter(format!("bias current must be non-negative, got {bias_current}")));
        }
        Ok(PhaseQubitParams { critical_current, bias_current, capacitance })
    }

    /// Charging energy `E_C = (2e)² / 2C`.
    pub fn charging_energy(&self) -> f64 {
        let q = 2.0 * ELECTRON_CHARGE;
        q * q / (2.0 * self.capacitance)
    }

    /// Josephson energy `E_J = (ħ / 2e) I_c`.
    pub fn josephson_energy(&self) -> f64 {
        HBAR / (2.0 * ELECTRON_CHARGE) * self.critical_current
    }

    /// Josephson frequency `ω_J = √(2e I_c / ħ C)`.
    pub fn josephson_frequency(&self) -> f64 {
        (2.0 * ELECTRON_CHARGE * self.critical_current / (HBAR * self.capacitance)).sqrt()
    }

    pub fn is_deep_well(&self) -> bool {
        self.josephson_energy() / self.charging_energy() >= DEEP_WELL_RATIO
    }

    /// Human-readable warning when `E_C ≪ E_J` does not hold.
    pub fn regime_warning(&self) -> Option<String> {
        let ratio = self.josephson_energy() / self.charging_energy();
        (ratio < DEEP_WELL_RATIO).then(|| {
            format!("E_J/E_C = {ratio:.3e} is below {DEEP_WELL_RATIO}; the phase-qubit regime E_C << E_J does not hold")
        })
    }

    fn bias_ratio(&self) -> Result<f64> {
        if self.bias_current > self.critical_current {
            return Err(Error::InvalidParameter(format!(
                "bias current {} A exceeds critical current {} A: the washboard has no minimum",
                self.bias_current, self.critical_current
            )));
        }
        Ok(self.bias_current / self.critical_current)
    }
}

/// Potential minimum `φ₀ = arcsin(I_e / I_c)`.
pub fn equilibrium_phase(params: &PhaseQubitParams) -> Result<f64> {
    Ok(params.bias_ratio()?.asin())
}

/// Small-oscillation frequency `ω_p = ω_J (1 − (I_e/I_c)²)^{1/4}`.
pub fn plasma_frequency(params: &PhaseQubitParams) -> Result<f64> {
    let r = params.bias_ratio()?;
    Ok(params.josephson_frequency() * (1.0 - r * r).powf(0.25))
}

/// Harmonic levels `E_k = ħ ω_p (k + ½)` for `k = 0..=k_max`.
pub fn harmonic_levels(params: &PhaseQubitParams, k_max: usize) -> Result<Vec<f64>> {
    let quantum = HBAR * plasma_frequency(params)?;
    Ok((0..=k_max).map(|k| quantum * (k as f64 + 0.5)).collect())
}

/// Two-level Hamiltonian with the ground state `|0⟩ = (1, 0)ᵀ` at `−ε/2` and
/// the excited state `|1⟩ = (0, 1)ᵀ` at `+ε/2`.
///
/// Note the literal `−½ ε σ_z` with `σ_z = diag(1, −1)` would put `|0⟩` at
/// `−ε/2` as well; this function follows that energy assignment.
pub fn qubit_hamiltonian(epsilon: f64) -> ComplexMatrix {
    diag(&[real(-0.5 * epsilon), real(0.5 * epsilon)])
}

#[derive(Debug, Clone, Serialize)]
pub struct PhysicsReport {
    pub phi0: f64,
    #[serde(rename = "omega_J")]
    pub omega_j: f64,
    pub omega_p: f64,
    pub levels: Vec<f64>,
    #[serde(rename = "E_C")]
    pub e_c: f64,
    #[serde(rename = "E_J")]
    pub e_j: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn physics_report(params: &PhaseQubitParams, k_max: usize) -> Result<PhysicsReport> {
    Ok(PhysicsReport {
        phi0: equilibrium_phase(params)?,
        omega_j: params.josephson_frequency(),
        omega_p: plasma_frequency(params)?,
        levels: harmonic_levels(params, k_max)?,
        e_c: params.charging_energy(),
        e_j: params.josephson_energy(),
        warning: params.regime_warning(),
    })
}
