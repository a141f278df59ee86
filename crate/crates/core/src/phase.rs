//! Phase decomposition and topological classification of reversal runs.
//!
//! The total phase of a returned state is the Pancharatnam phase
//! arg⟨ψ(0)|ψ(T)⟩. Subtracting the dynamical part −∫⟨H⟩dt leaves the
//! geometric part, which for |F, m=0⟩ field reversals is quantized to {0, π}
//! and decides the parity factor (−1)^F. The same parity shows up in the
//! spherical harmonics Y_F0 under point reflection, which `parity_factor`
//! checks directly.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::dynamics::EvolutionResult;
use crate::spin::{Spin, SpinError, StateVector};

/// Geometric phases farther than this from both 0 and π stay unclassified.
pub const SNAP_TOLERANCE: f64 = 0.3;
/// Classification demands at least this return fidelity.
pub const FIDELITY_FLOOR: f64 = 0.9;
/// Below this overlap magnitude the overlap argument is pure noise.
pub const PHASE_DEFINED_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("spherical harmonics require integer F, got 2F = {two_f}")]
    HalfIntegerSpin { two_f: u32 },
    #[error("theta = {theta} is outside [0, pi]")]
    ThetaOutOfRange { theta: f64 },
    #[error("energy record is empty; nothing to integrate")]
    EmptyEnergyRecord,
    #[error("energy record times decrease at index {index}")]
    NonMonotonicTimes { index: usize },
    #[error("parity check needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("reflection symmetry of Y_F0 has no consistent sign for 2F = {two_f}")]
    InconsistentParity { two_f: u32 },
    #[error(transparent)]
    Spin(#[from] SpinError),
}

/// Maps any angle to (−π, π], keeping +π (not −π) as the branch point.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

/// Phase content of one evolution window.
///
/// `total_phase` and `geometric_phase` are `None` when the return fidelity is
/// below [`PHASE_DEFINED_FLOOR`]: the argument of a near-zero overlap carries
/// no information.
#[derive(Clone, Copy, Debug)]
pub struct PhaseDecomposition {
    /// arg⟨ψ(0)|ψ(T)⟩, wrapped to (−π, π].
    pub total_phase: Option<f64>,
    /// −∫⟨H⟩dt by trapezoidal quadrature, wrapped to (−π, π].
    pub dynamical_phase: f64,
    /// wrap(total − dynamical).
    pub geometric_phase: Option<f64>,
    /// |⟨ψ(0)|ψ(T)⟩|.
    pub return_fidelity: f64,
}

/// Two-valued classification of the geometric phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologicalClass {
    /// Geometric phase 0.
    Trivial,
    /// Geometric phase π.
    Pi,
    /// Too far from both values, or fidelity too low to decide.
    Undefined,
}

impl std::fmt::Display for TopologicalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopologicalClass::Trivial => write!(f, "trivial"),
            TopologicalClass::Pi => write!(f, "pi"),
            TopologicalClass::Undefined => write!(f, "undefined"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifiedPhase {
    pub class: TopologicalClass,
    /// Distance to the nearest of {0, π}; infinite when no phase is defined.
    pub residual: f64,
    pub fidelity: f64,
}

/// Trapezoidal −∫⟨H⟩dt over an energy record of (t, ⟨H⟩) pairs, wrapped.
pub fn dynamical_phase(energies: &[(f64, f64)]) -> Result<f64, PhaseError> {
    if energies.is_empty() {
        return Err(PhaseError::EmptyEnergyRecord);
    }
    let mut action = 0.0;
    for (i, pair) in energies.windows(2).enumerate() {
        let (t0, e0) = pair[0];
        let (t1, e1) = pair[1];
        if t1 < t0 {
            return Err(PhaseError::NonMonotonicTimes { index: i + 1 });
        }
        action += 0.5 * (e0 + e1) * (t1 - t0);
    }
    Ok(wrap_phase(-action))
}

/// Splits the phase of a finished run into dynamical and geometric parts.
pub fn decompose(
    initial: &StateVector,
    result: &EvolutionResult,
) -> Result<PhaseDecomposition, PhaseError> {
    let overlap = initial.overlap(&result.final_state)?;
    let fidelity = overlap.norm();
    let dynamical = dynamical_phase(&result.energies)?;
    let (total, geometric) = if fidelity < PHASE_DEFINED_FLOOR {
        (None, None)
    } else {
        let total = wrap_phase(overlap.arg());
        (Some(total), Some(wrap_phase(total - dynamical)))
    };
    Ok(PhaseDecomposition {
        total_phase: total,
        dynamical_phase: dynamical,
        geometric_phase: geometric,
        return_fidelity: fidelity,
    })
}

/// Snaps the geometric phase to {0, π}, or reports it unclassifiable.
pub fn topological_class(p: &PhaseDecomposition) -> ClassifiedPhase {
    let fidelity = p.return_fidelity;
    let Some(geometric) = p.geometric_phase else {
        return ClassifiedPhase { class: TopologicalClass::Undefined, residual: f64::INFINITY, fidelity };
    };
    let to_zero = wrap_phase(geometric).abs();
    let to_pi = wrap_phase(geometric - PI).abs();
    let (class, residual) = if to_zero <= to_pi {
        (TopologicalClass::Trivial, to_zero)
    } else {
        (TopologicalClass::Pi, to_pi)
    };
    if residual > SNAP_TOLERANCE || fidelity < FIDELITY_FLOOR {
        ClassifiedPhase { class: TopologicalClass::Undefined, residual, fidelity }
    } else {
        ClassifiedPhase { class, residual, fidelity }
    }
}

/// Y_F0(θ) = √((2F+1)/4π)·P_F(cos θ) for integer F.
///
/// Y_F0 carries no φ dependence, so none is accepted. The Legendre value
/// comes from the standard three-term recurrence, which is stable on [−1, 1].
pub fn y_f0(f: Spin, theta: f64) -> Result<f64, PhaseError> {
    if !f.is_integer() {
        return Err(PhaseError::HalfIntegerSpin { two_f: f.two_f() });
    }
    if !(0.0..=PI).contains(&theta) {
        return Err(PhaseError::ThetaOutOfRange { theta });
    }
    let n = (f.two_f() / 2) as usize;
    let x = theta.cos();
    let mut p_prev = 1.0;
    if n == 0 {
        return Ok((1.0 / (4.0 * PI)).sqrt());
    }
    let mut p = x;
    for k in 1..n {
        let k_f = k as f64;
        let p_next = ((2.0 * k_f + 1.0) * x * p - k_f * p_prev) / (k_f + 1.0);
        p_prev = p;
        p = p_next;
    }
    Ok(((2.0 * n as f64 + 1.0) / (4.0 * PI)).sqrt() * p)
}

/// Measures the sign s with Y_F0(π−θ) = s·Y_F0(θ) and checks s = (−1)^F.
///
/// Samples avoid the zeros of P_F, where the ratio is 0/0.
pub fn parity_factor(f: Spin, n_theta_samples: usize) -> Result<i32, PhaseError> {
    if n_theta_samples < 3 {
        return Err(PhaseError::TooFewSamples { needed: 3, got: n_theta_samples });
    }
    let expected = if f.two_f() % 4 == 0 { 1 } else { -1 };
    let mut sign: Option<i32> = None;
    let mut checked = 0usize;
    for i in 0..n_theta_samples {
        let theta = PI / 2.0 * (i as f64 + 0.5) / n_theta_samples as f64;
        let y = y_f0(f, theta)?;
        let y_reflected = y_f0(f, PI - theta)?;
        // Near a Legendre zero both values vanish and the sign is noise.
        if y.abs() < 1e-6 {
            continue;
        }
        let s = if (y_reflected / y) > 0.0 { 1 } else { -1 };
        if (y_reflected - s as f64 * y).abs() > 1e-9 * y.abs().max(1.0) {
            return Err(PhaseError::InconsistentParity { two_f: f.two_f() });
        }
        match sign {
            None => sign = Some(s),
            Some(prev) if prev != s => {
                return Err(PhaseError::InconsistentParity { two_f: f.two_f() })
            }
            Some(_) => {}
        }
        checked += 1;
    }
    let Some(s) = sign else {
        return Err(PhaseError::InconsistentParity { two_f: f.two_f() });
    };
    if checked == 0 || s != expected {
        return Err(PhaseError::InconsistentParity { two_f: f.two_f() });
    }
    Ok(s)
}
