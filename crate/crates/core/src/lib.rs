//! Numerical kernels for spin-F dynamics in time-varying magnetic fields.
//!
//! The crate simulates Zeeman evolution of a single spin manifold (or the
//! two-manifold microwave clock system) through programmable field schedules,
//! with an emphasis on slow field reversals B -> -B and the phase they imprint
//! on the m = 0 sublevel. Modules:
//!
//! - [`spin`]: spin operators, states, and the dense complex-matrix kernel
//! - [`field`]: magnetic field schedules and adiabaticity diagnostics
//! - [`dynamics`]: adaptive unitary time evolution
//! - [`phase`]: phase decomposition and topological classification
//! - [`fit`]: damped least-squares cosine fitting
//! - [`ramsey`]: the two-manifold clock model and Ramsey protocols

pub mod dynamics;
pub mod field;
pub mod fit;
pub mod phase;
pub mod ramsey;
pub mod spin;
