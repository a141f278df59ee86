//! Spin operators, basis-labelled states, and the complex-Hermitian kernel.
//!
//! Quantum numbers are stored doubled (2F, 2m) so half-integer spins remain
//! exact integers. Matrix bases order the sublevels m = F, F-1, ..., -F.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Absolute entrywise tolerance for accepting a matrix as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Acceptable deviation of a state norm from 1 at construction.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SpinError {
    #[error("spin 2F = 0 has no dynamics")]
    TrivialSpin,
    #[error("invalid sublevel 2m = {two_m} for 2F = {two_f}")]
    InvalidSublevel { two_f: u32, two_m: i32 },
    #[error("matrix is not Hermitian: max |H - H^dag| = {defect:.3e} exceeds {tol:.1e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("time step {0} is not finite")]
    NonFiniteStep(f64),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("basis labels disagree at index {index}: {left} vs {right}")]
    BasisMismatch { index: usize, left: Level, right: Level },
    #[error("state norm {norm} deviates from 1 by more than {tol:.1e}")]
    NotNormalized { norm: f64, tol: f64 },
    #[error("basis index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("level {0} not present in this basis")]
    UnknownLevel(Level),
    #[error("direct sum needs at least one block")]
    EmptyDirectSum,
    #[error("block {block} is {rows} x {cols} but carries {labels} labels")]
    BlockShapeMismatch { block: usize, rows: usize, cols: usize, labels: usize },
    #[error("duplicate basis label {0} across direct-sum blocks")]
    DuplicateLabel(Level),
}

/// Spin quantum number, stored as 2F.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Spin {
    two_f: u32,
}

impl Spin {
    pub const fn new(two_f: u32) -> Self {
        Spin { two_f }
    }

    pub const fn two_f(self) -> u32 {
        self.two_f
    }

    pub fn f(self) -> f64 {
        self.two_f as f64 / 2.0
    }

    /// Hilbert-space dimension 2F + 1.
    pub const fn dim(self) -> usize {
        self.two_f as usize + 1
    }

    pub const fn is_integer(self) -> bool {
        self.two_f % 2 == 0
    }

    /// Doubled magnetic quantum numbers in basis order: 2F, 2F - 2, ..., -2F.
    pub fn two_m_values(self) -> impl Iterator<Item = i32> {
        let two_f = self.two_f as i32;
        (0..=two_f).map(move |i| two_f - 2 * i)
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.two_f % 2 == 0 {
            write!(f, "F={}", self.two_f / 2)
        } else {
            write!(f, "F={}/2", self.two_f)
        }
    }
}

/// One magnetic sublevel |F, m>, stored as (2F, 2m).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Level {
    two_f: u32,
    two_m: i32,
}

impl Level {
    pub fn new(two_f: u32, two_m: i32) -> Result<Self, SpinError> {
        let valid = two_m.unsigned_abs() <= two_f && (two_m.rem_euclid(2) as u32) == two_f % 2;
        if !valid {
            return Err(SpinError::InvalidSublevel { two_f, two_m });
        }
        Ok(Level { two_f, two_m })
    }

    pub const fn two_f(self) -> u32 {
        self.two_f
    }

    pub const fn two_m(self) -> i32 {
        self.two_m
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.two_f % 2 == 0 {
            write!(f, "|F={},m={}>", self.two_f / 2, self.two_m / 2)
        } else {
            write!(f, "|F={}/2,m={}/2>", self.two_f, self.two_m)
        }
    }
}

/// Cartesian spin operators fx, fy, fz for one manifold.
#[derive(Clone, Debug)]
pub struct SpinOperatorSet {
    spin: Spin,
    fx: CMat,
    fy: CMat,
    fz: CMat,
}

/// Builds fx, fy, fz from the ladder operators.
///
/// The only nonzero raising elements are <m+1|F+|m> = sqrt(F(F+1) - m(m+1)).
/// The resulting matrices are exactly Hermitian entry by entry.
pub fn build_spin_operators(spin: Spin) -> Result<SpinOperatorSet, SpinError> {
    if spin.two_f() == 0 {
        return Err(SpinError::TrivialSpin);
    }
    let d = spin.dim();
    let f = spin.f();

    let mut fp = CMat::zeros(d, d);
    for col in 1..d {
        let m = f - col as f64; // column holds |F, m>, row col-1 holds |F, m+1>
        let elem = (f * (f + 1.0) - m * (m + 1.0)).sqrt();
        fp[(col - 1, col)] = C64::new(elem, 0.0);
    }
    let fm = fp.adjoint();

    let fx = (&fp + &fm) * C64::new(0.5, 0.0);
    let fy = (&fp - &fm) * C64::new(0.0, -0.5);
    let fz = CMat::from_diagonal(&DVector::from_iterator(
        d,
        spin.two_m_values().map(|tm| C64::new(tm as f64 / 2.0, 0.0)),
    ));

    Ok(SpinOperatorSet { spin, fx, fy, fz })
}

impl SpinOperatorSet {
    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn fx(&self) -> &CMat {
        &self.fx
    }

    pub fn fy(&self) -> &CMat {
        &self.fy
    }

    pub fn fz(&self) -> &CMat {
        &self.fz
    }

    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// bx*fx + by*fy + bz*fz.
    pub fn dot(&self, bx: f64, by: f64, bz: f64) -> CMat {
        &self.fx * C64::new(bx, 0.0) + &self.fy * C64::new(by, 0.0) + &self.fz * C64::new(bz, 0.0)
    }

    /// Basis labels (F, m) in storage order m = F ... -F.
    pub fn labels(&self) -> Vec<Level> {
        let two_f = self.spin.two_f();
        self.spin
            .two_m_values()
            .map(|tm| Level::new(two_f, tm).expect("sublevel range is valid by construction"))
            .collect()
    }

    /// Basis index of the sublevel with the given 2m, if it exists.
    pub fn m_index(&self, two_m: i32) -> Option<usize> {
        let two_f = self.spin.two_f() as i32;
        if two_m.unsigned_abs() <= self.spin.two_f() && (two_f - two_m) % 2 == 0 {
            Some(((two_f - two_m) / 2) as usize)
        } else {
            None
        }
    }
}

/// Normalized state with explicit basis labels.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: CVec,
    labels: Vec<Level>,
}

impl StateVector {
    pub fn new(amplitudes: CVec, labels: Vec<Level>) -> Result<Self, SpinError> {
        if amplitudes.len() != labels.len() {
            return Err(SpinError::DimensionMismatch {
                left: amplitudes.len(),
                right: labels.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(SpinError::NotNormalized { norm, tol: NORM_TOL });
        }
        Ok(StateVector { amplitudes, labels })
    }

    /// Integrator-internal constructor; norm drift is reported, not rejected.
    pub(crate) fn from_evolved(amplitudes: CVec, labels: Vec<Level>) -> Self {
        StateVector { amplitudes, labels }
    }

    /// The basis state with amplitude 1 at `index`.
    pub fn basis_state(labels: Vec<Level>, index: usize) -> Result<Self, SpinError> {
        if index >= labels.len() {
            return Err(SpinError::IndexOutOfRange { index, dim: labels.len() });
        }
        let mut amplitudes = CVec::zeros(labels.len());
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(StateVector { amplitudes, labels })
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn labels(&self) -> &[Level] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// <self|other>, conjugate-linear in `self`. The bases must agree label by label.
    pub fn overlap(&self, other: &StateVector) -> Result<C64, SpinError> {
        if self.dim() != other.dim() {
            return Err(SpinError::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        for (index, (a, b)) in self.labels.iter().zip(other.labels.iter()).enumerate() {
            if a != b {
                return Err(SpinError::BasisMismatch { index, left: *a, right: *b });
            }
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// |amplitude|^2 of the given sublevel.
    pub fn population(&self, level: Level) -> Result<f64, SpinError> {
        let index = self
            .labels
            .iter()
            .position(|l| *l == level)
            .ok_or(SpinError::UnknownLevel(level))?;
        Ok(self.amplitudes[index].norm_sqr())
    }
}

/// Largest entrywise deviation from Hermiticity, max_ij |h_ij - conj(h_ji)|.
pub fn hermiticity_defect(h: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            let d = (h[(i, j)] - h[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// exp(-i H dt) for Hermitian H, via eigendecomposition.
///
/// Diagonalizing keeps the result unitary to rounding even for large |H| dt,
/// which a truncated series would not.
pub fn unitary_from_hamiltonian(h: &CMat, dt: f64) -> Result<CMat, SpinError> {
    if h.nrows() != h.ncols() {
        return Err(SpinError::NotSquare { rows: h.nrows(), cols: h.ncols() });
    }
    if !dt.is_finite() {
        return Err(SpinError::NonFiniteStep(dt));
    }
    let defect = hermiticity_defect(h);
    if defect > HERMITICITY_TOL {
        return Err(SpinError::NotHermitian { defect, tol: HERMITICITY_TOL });
    }

    let eig = h.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (col, w) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -w * dt);
        for entry in scaled.column_mut(col).iter_mut() {
            *entry *= phase;
        }
    }
    Ok(scaled * eig.eigenvectors.adjoint())
}

/// Block-diagonal embedding of per-manifold operators into a combined space.
///
/// Labels are concatenated in block order and must stay globally unique.
pub fn embed_direct_sum(blocks: &[(&CMat, &[Level])]) -> Result<(CMat, Vec<Level>), SpinError> {
    if blocks.is_empty() {
        return Err(SpinError::EmptyDirectSum);
    }
    for (k, (m, labels)) in blocks.iter().enumerate() {
        if m.nrows() != m.ncols() || m.nrows() != labels.len() {
            return Err(SpinError::BlockShapeMismatch {
                block: k,
                rows: m.nrows(),
                cols: m.ncols(),
                labels: labels.len(),
            });
        }
    }
    let total: usize = blocks.iter().map(|(_, l)| l.len()).sum();
    let mut combined = CMat::zeros(total, total);
    let mut labels = Vec::with_capacity(total);
    let mut offset = 0usize;
    for (m, block_labels) in blocks {
        for label in *block_labels {
            if labels.contains(label) {
                return Err(SpinError::DuplicateLabel(*label));
            }
            labels.push(*label);
        }
        combined.view_mut((offset, offset), (m.nrows(), m.ncols())).copy_from(*m);
        offset += m.nrows();
    }
    Ok((combined, labels))
}
