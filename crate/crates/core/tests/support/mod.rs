//! Shared pieces for the integration suites: a fixed-step reference
//! integrator independent of the adaptive code path, plus a grid helper.

#![allow(dead_code)]

use spinsim_core::spin::{unitary_from_hamiltonian, CMat, CVec};

/// Step for reference runs; small enough that the reference's own error sits
/// well below the 1e-6 agreement budget the suites assert.
pub const ORACLE_DT_S: f64 = 1e-8;

/// Marches the midpoint exponential at (almost) fixed dt, rounding the step
/// count so the window divides exactly; a trailing fractional step would
/// otherwise contaminate the comparison at the 1e-5 level.
pub fn fixed_step_final<H>(
    mut hamiltonian: H,
    initial: &CVec,
    t0: f64,
    t1: f64,
    dt_nominal: f64,
) -> CVec
where
    H: FnMut(f64) -> CMat,
{
    assert!(t1 > t0, "bad window [{t0}, {t1}]");
    let n = ((t1 - t0) / dt_nominal).round().max(1.0) as u64;
    let dt = (t1 - t0) / n as f64;
    let mut psi = initial.clone();
    for i in 0..n {
        let t_mid = t0 + (i as f64 + 0.5) * dt;
        let u = unitary_from_hamiltonian(&hamiltonian(t_mid), dt).expect("hermitian hamiltonian");
        psi = u * psi;
    }
    psi
}

/// Fixed-step reference that re-anchors at the given interior times, so no
/// step straddles a point where the field's derivative jumps. Stepping over
/// such a kink costs the midpoint rule O(|dH'| dt^2) in one step, which at
/// dt = 1e-8 can dwarf the error of the whole smooth stretch.
pub fn fixed_step_through<H>(
    mut hamiltonian: H,
    initial: &CVec,
    t0: f64,
    t1: f64,
    interior: &[f64],
    dt_nominal: f64,
) -> CVec
where
    H: FnMut(f64) -> CMat,
{
    let mut psi = initial.clone();
    let mut a = t0;
    for &b in interior.iter().filter(|&&b| b > t0 && b < t1).chain(std::iter::once(&t1)) {
        psi = fixed_step_final(&mut hamiltonian, &psi, a, b, dt_nominal);
        a = b;
    }
    psi
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two grid points");
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}
