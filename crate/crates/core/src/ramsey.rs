//! Clock-transition Ramsey interferometry on the (F=1) ⊕ (F=2) system.
//!
//! The microwave drive couples only |1,0⟩ ↔ |2,0⟩ (the π-polarized clock
//! transition; every other hyperfine transition is Zeeman-detuned far beyond
//! the Rabi frequency at the working bias). Everything is expressed in the
//! frame rotating at the microwave frequency: the detuning Δ enters as
//! −2πΔ·P_{F=2} and stays on during interrogation, so fringe phase
//! accumulates in the Hamiltonian itself rather than through bookkeeping.
//!
//! A Ramsey run is pulse1 → interrogation → pulse2. Pulses see a frozen bias
//! (the schedule endpoint fields) and are propagated by one exact matrix
//! exponential each; the interrogation is integrated adaptively with the
//! microwave off.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    evolve_through, zeeman_hamiltonian, DynamicsError, EvolutionConfig, EvolutionResult,
    GAMMA_F1_HZ_PER_GAUSS, GAMMA_F2_HZ_PER_GAUSS,
};
use crate::field::{FieldError, FieldSchedule, FieldVector};
use crate::fit::{fit_cosine, CosineFit, FitError};
use crate::phase::wrap_phase;
use crate::spin::{
    build_spin_operators, embed_direct_sum, unitary_from_hamiltonian, C64, CMat, Level, Spin,
    SpinError, SpinOperatorSet, StateVector,
};

/// Clock Rabi frequency Ω/2π the hardware realized, Hz.
pub const CLOCK_RABI_HZ: f64 = 12.2e3;
/// Idle time between a π/2 pulse and the start/end of the reversal.
pub const DEFAULT_GUARD_S: f64 = 100e-6;
/// Contrast decay time while the microwave drive is on.
pub const DRIVEN_DECAY_S: f64 = 0.4e-3;
/// Contrast decay time during free evolution.
pub const FREE_DECAY_S: f64 = 5.5e-3;

/// Fringe fits refuse scans with fewer points than this.
pub const MIN_FRINGE_POINTS: usize = 8;
/// Fits are comparable only when their periods agree this closely.
pub const PERIOD_MATCH_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RamseyError {
    #[error("Rabi frequency must be positive and finite, got {0} Hz")]
    BadRabi(f64),
    #[error("detuning must be finite, got {0} Hz")]
    BadDetuning(f64),
    #[error("{name} = {value} s is not a valid duration")]
    BadDuration { name: &'static str, value: f64 },
    #[error(
        "interrogation time {t_s} s exceeds the schedule domain of {domain_s} s; \
         the field is undefined for part of the sequence"
    )]
    WindowMismatch { t_s: f64, domain_s: f64 },
    #[error("scan needs at least one detuning")]
    EmptyScan,
    #[error("fringe fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("fit did not converge; phases are not comparable")]
    NotConverged,
    #[error("fringe periods differ beyond {tol_percent}%: {a_hz:.6} Hz vs {b_hz:.6} Hz")]
    PeriodMismatch { a_hz: f64, b_hz: f64, tol_percent: f64 },
    #[error("population {p} outside [0, 1]; simulation integrity violated")]
    PopulationOutOfRange { p: f64 },
    #[error("visibility undefined: fitted offset {offset} is not positive")]
    VisibilityUndefined { offset: f64 },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Spin(#[from] SpinError),
}

/// Eight-level clock system: (F=1) ⊕ (F=2) with a π-polarized microwave
/// coupling between the two m=0 sublevels, in the rotating frame.
#[derive(Clone, Debug)]
pub struct ClockModel {
    rabi_hz: f64,
    detuning_hz: f64,
    gamma_f1_hz_per_gauss: f64,
    gamma_f2_hz_per_gauss: f64,
    ops_f1: SpinOperatorSet,
    ops_f2: SpinOperatorSet,
    labels: Vec<Level>,
    index_10: usize,
    index_20: usize,
}

impl ClockModel {
    /// Model with the standard ground-manifold gyromagnetic ratios.
    pub fn new(rabi_hz: f64, detuning_hz: f64) -> Result<Self, RamseyError> {
        Self::with_gammas(rabi_hz, detuning_hz, GAMMA_F1_HZ_PER_GAUSS, GAMMA_F2_HZ_PER_GAUSS)
    }

    pub fn with_gammas(
        rabi_hz: f64,
        detuning_hz: f64,
        gamma_f1_hz_per_gauss: f64,
        gamma_f2_hz_per_gauss: f64,
    ) -> Result<Self, RamseyError> {
        if !(rabi_hz.is_finite() && rabi_hz > 0.0) {
            return Err(RamseyError::BadRabi(rabi_hz));
        }
        if !detuning_hz.is_finite() {
            return Err(RamseyError::BadDetuning(detuning_hz));
        }
        for gamma in [gamma_f1_hz_per_gauss, gamma_f2_hz_per_gauss] {
            if !(gamma.is_finite() && gamma != 0.0) {
                return Err(RamseyError::Dynamics(DynamicsError::BadGamma(gamma)));
            }
        }
        let ops_f1 = build_spin_operators(Spin::new(2))?;
        let ops_f2 = build_spin_operators(Spin::new(4))?;
        let mut labels = ops_f1.labels();
        labels.extend(ops_f2.labels());
        let index_10 = labels
            .iter()
            .position(|l| l.two_f() == 2 && l.two_m() == 0)
            .expect("F=1 manifold contains m=0");
        let index_20 = labels
            .iter()
            .position(|l| l.two_f() == 4 && l.two_m() == 0)
            .expect("F=2 manifold contains m=0");
        Ok(ClockModel {
            rabi_hz,
            detuning_hz,
            gamma_f1_hz_per_gauss,
            gamma_f2_hz_per_gauss,
            ops_f1,
            ops_f2,
            labels,
            index_10,
            index_20,
        })
    }

    pub fn rabi_hz(&self) -> f64 {
        self.rabi_hz
    }

    pub fn detuning_hz(&self) -> f64 {
        self.detuning_hz
    }

    pub fn labels(&self) -> &[Level] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// π/2 condition for a square pulse: τ = 1/(4·Ω).
    pub fn pi_half_duration_s(&self) -> f64 {
        1.0 / (4.0 * self.rabi_hz)
    }

    /// Microwave-off part: Zeeman blocks plus the rotating-frame detuning.
    fn interrogation_hamiltonian(&self, b: FieldVector) -> Result<CMat, DynamicsError> {
        let h1 = zeeman_hamiltonian(&self.ops_f1, self.gamma_f1_hz_per_gauss, b)?;
        let h2 = zeeman_hamiltonian(&self.ops_f2, self.gamma_f2_hz_per_gauss, b)?;
        let labels_f1 = self.ops_f1.labels();
        let labels_f2 = self.ops_f2.labels();
        let (mut h, _) =
            embed_direct_sum(&[(&h1, &labels_f1), (&h2, &labels_f2)]).map_err(DynamicsError::Spin)?;
        let delta = std::f64::consts::TAU * self.detuning_hz;
        for (i, label) in self.labels.iter().enumerate() {
            if label.two_f() == 4 {
                h[(i, i)] -= C64::new(delta, 0.0);
            }
        }
        Ok(h)
    }

    /// Rotating-frame Hamiltonian in rad/s at bias field `b`.
    pub fn hamiltonian(&self, b: FieldVector, microwave_on: bool) -> Result<CMat, RamseyError> {
        let mut h = self.interrogation_hamiltonian(b)?;
        if microwave_on {
            let coupling = C64::new(std::f64::consts::PI * self.rabi_hz, 0.0);
            h[(self.index_10, self.index_20)] += coupling;
            h[(self.index_20, self.index_10)] += coupling;
        }
        Ok(h)
    }

    /// Optically pumped |F=2, m=0⟩.
    pub fn prepare_initial_state(&self) -> StateVector {
        StateVector::basis_state(self.labels.clone(), self.index_20)
            .expect("basis index is in range")
    }

    /// Population of |F=2, m=0⟩ in a state on this model's basis.
    pub fn p_f2(&self, state: &StateVector) -> Result<f64, RamseyError> {
        let p = state.population(self.labels[self.index_20])?;
        check_population(p)?;
        Ok(p)
    }
}

fn check_population(p: f64) -> Result<f64, RamseyError> {
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(RamseyError::PopulationOutOfRange { p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Phenomenological contrast decay, pulling populations toward 1/2.
///
/// Models microwave inhomogeneity (driven periods) and diffusion out of the
/// probe volume (free periods); both are outside the coherent dynamics, so
/// they act on reported populations, not on the state.
#[derive(Clone, Copy, Debug)]
pub struct ContrastModel {
    pub driven_decay_s: f64,
    pub free_decay_s: f64,
}

impl Default for ContrastModel {
    fn default() -> Self {
        ContrastModel { driven_decay_s: DRIVEN_DECAY_S, free_decay_s: FREE_DECAY_S }
    }
}

impl ContrastModel {
    pub fn apply(&self, p: f64, driven_s: f64, free_s: f64) -> f64 {
        let exponent = driven_s / self.driven_decay_s + free_s / self.free_decay_s;
        0.5 + (p - 0.5) * (-exponent).exp()
    }
}

/// π/2 – interrogate – π/2 sequence geometry.
#[derive(Clone, Debug)]
pub struct RamseySequence {
    pub pulse1_s: f64,
    /// Time between the pulses, counted from the start of the schedule domain.
    pub interrogation_s: f64,
    pub pulse2_s: f64,
    /// Field seen during interrogation; pulses freeze its endpoint values.
    pub schedule: FieldSchedule,
}

impl RamseySequence {
    pub fn new(
        pulse1_s: f64,
        interrogation_s: f64,
        pulse2_s: f64,
        schedule: FieldSchedule,
    ) -> Result<Self, RamseyError> {
        for (name, value) in
            [("pulse1_s", pulse1_s), ("interrogation_s", interrogation_s), ("pulse2_s", pulse2_s)]
        {
            if !(value.is_finite() && value > 0.0) {
                return Err(RamseyError::BadDuration { name, value });
            }
        }
        let domain_s = schedule.t_end() - schedule.t_start();
        if interrogation_s > domain_s * (1.0 + 1e-12) {
            return Err(RamseyError::WindowMismatch { t_s: interrogation_s, domain_s });
        }
        Ok(RamseySequence { pulse1_s, interrogation_s, pulse2_s, schedule })
    }

    /// Sequence with π/2 pulses on both sides and T equal to the schedule
    /// domain.
    pub fn symmetric(rabi_hz: f64, schedule: FieldSchedule) -> Result<Self, RamseyError> {
        if !(rabi_hz.is_finite() && rabi_hz > 0.0) {
            return Err(RamseyError::BadRabi(rabi_hz));
        }
        let pulse = 1.0 / (4.0 * rabi_hz);
        let t = schedule.t_end() - schedule.t_start();
        Self::new(pulse, t, pulse, schedule)
    }

    /// Constant-bias sequence: the no-reversal reference fringe.
    pub fn baseline(rabi_hz: f64, bias: FieldVector, t_s: f64) -> Result<Self, RamseyError> {
        let schedule = FieldSchedule::constant(bias, 0.0, t_s)?;
        Self::symmetric(rabi_hz, schedule)
    }

    /// Smooth field reversal centered between guard intervals.
    pub fn adiabatic_reversal(
        rabi_hz: f64,
        b0_g: f64,
        b_min_g: f64,
        delta_tau_s: f64,
        guard_s: f64,
    ) -> Result<Self, RamseyError> {
        if !(guard_s.is_finite() && guard_s >= 0.0) {
            return Err(RamseyError::BadDuration { name: "guard_s", value: guard_s });
        }
        let t = delta_tau_s + 2.0 * guard_s;
        let schedule =
            FieldSchedule::smooth_reversal(b0_g, b_min_g, delta_tau_s, guard_s + delta_tau_s / 2.0)?
                .with_domain(0.0, t)?;
        Self::symmetric(rabi_hz, schedule)
    }

    /// Fast linear flip in the middle of an otherwise constant window.
    pub fn sudden_reversal(
        rabi_hz: f64,
        b0_g: f64,
        residual_g: f64,
        step_s: f64,
        t_s: f64,
    ) -> Result<Self, RamseyError> {
        let schedule = FieldSchedule::sudden_reversal(b0_g, t_s / 2.0, residual_g, step_s)?
            .with_domain(0.0, t_s)?;
        Self::symmetric(rabi_hz, schedule)
    }

    fn total_driven_s(&self) -> f64 {
        self.pulse1_s + self.pulse2_s
    }
}

/// Everything observable from one Ramsey run.
#[derive(Clone, Debug)]
pub struct RamseyOutcome {
    /// Reported |2,0⟩ population, contrast envelope applied when configured.
    pub p_f2: f64,
    /// Same population before any contrast envelope.
    pub p_f2_coherent: f64,
    pub after_pulse1: StateVector,
    pub after_interrogation: StateVector,
    pub final_state: StateVector,
    /// Full interrogation record, for phase analysis and accuracy checks.
    pub interrogation: EvolutionResult,
}

/// Runs one pulse–interrogate–pulse sequence.
pub fn run_ramsey(
    model: &ClockModel,
    seq: &RamseySequence,
    cfg: &EvolutionConfig,
    contrast: Option<&ContrastModel>,
) -> Result<RamseyOutcome, RamseyError> {
    let t0 = seq.schedule.t_start();
    let t1 = t0 + seq.interrogation_s;

    let psi0 = model.prepare_initial_state();

    // pulse 1: microwave on, bias frozen at the window-start field
    let b_start = seq.schedule.field_at(t0)?;
    let u1 = unitary_from_hamiltonian(&model.hamiltonian(b_start, true)?, seq.pulse1_s)?;
    let after_pulse1 = StateVector::from_evolved(u1 * psi0.amplitudes(), model.labels().to_vec());

    // interrogation: microwave off, schedule-driven Zeeman evolution
    let interrogation = evolve_through(
        |t| {
            let b = seq.schedule.field_at(t)?;
            model.interrogation_hamiltonian(b)
        },
        &after_pulse1,
        t0,
        t1,
        &seq.schedule.breakpoints(),
        cfg,
    )?;
    let after_interrogation = interrogation.final_state.clone();

    // pulse 2: bias frozen at the window-end field
    let b_end = seq.schedule.field_at(t1)?;
    let u2 = unitary_from_hamiltonian(&model.hamiltonian(b_end, true)?, seq.pulse2_s)?;
    let final_state = StateVector::from_evolved(
        u2 * after_interrogation.amplitudes(),
        model.labels().to_vec(),
    );

    let p_f2_coherent = model.p_f2(&final_state)?;
    let p_f2 = match contrast {
        Some(c) => c.apply(p_f2_coherent, seq.total_driven_s(), seq.interrogation_s),
        None => p_f2_coherent,
    };

    Ok(RamseyOutcome {
        p_f2,
        p_f2_coherent,
        after_pulse1,
        after_interrogation,
        final_state,
        interrogation,
    })
}

/// Ramsey fringe scan: |2,0⟩ population versus microwave detuning.
#[derive(Clone, Debug)]
pub struct FringeScan {
    /// (detuning_hz, p_f2), ordered as requested.
    pub points: Vec<(f64, f64)>,
}

/// Rabi scan: |2,0⟩ population versus drive duration.
#[derive(Clone, Debug)]
pub struct RabiScan {
    /// (duration_s, p_f2), ordered as requested.
    pub points: Vec<(f64, f64)>,
}

/// Runs the same sequence across a detuning grid, in parallel.
///
/// Each point is computed independently from scratch and results are
/// collected in input order, so output bytes do not depend on the worker
/// count.
pub fn scan_ramsey<F>(
    model_factory: F,
    detunings_hz: &[f64],
    seq: &RamseySequence,
    cfg: &EvolutionConfig,
    contrast: Option<&ContrastModel>,
) -> Result<FringeScan, RamseyError>
where
    F: Fn(f64) -> Result<ClockModel, RamseyError> + Sync,
{
    if detunings_hz.is_empty() {
        return Err(RamseyError::EmptyScan);
    }
    if let Some(&bad) = detunings_hz.iter().find(|d| !d.is_finite()) {
        return Err(RamseyError::BadDetuning(bad));
    }
    // Only the endpoint population is kept per point, so skip dense trajectory
    // recording; otherwise a 41-point scan holds tens of megabytes per worker.
    let lean = EvolutionConfig { record_stride: usize::MAX, ..*cfg };
    let points: Result<Vec<(f64, f64)>, RamseyError> = detunings_hz
        .par_iter()
        .map(|&delta| {
            let model = model_factory(delta)?;
            let outcome = run_ramsey(&model, seq, &lean, contrast)?;
            Ok((delta, outcome.p_f2))
        })
        .collect();
    Ok(FringeScan { points: points? })
}

/// Continuous resonant-drive scan over pulse durations at a constant bias.
pub fn simulate_rabi(
    model: &ClockModel,
    durations_s: &[f64],
    b_bias: FieldVector,
    contrast: Option<&ContrastModel>,
) -> Result<RabiScan, RamseyError> {
    if durations_s.is_empty() {
        return Err(RamseyError::EmptyScan);
    }
    for &tau in durations_s {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(RamseyError::BadDuration { name: "duration", value: tau });
        }
    }
    let h = model.hamiltonian(b_bias, true)?;
    let psi0 = model.prepare_initial_state();
    let points: Result<Vec<(f64, f64)>, RamseyError> = durations_s
        .par_iter()
        .map(|&tau| {
            let p = if tau == 0.0 {
                model.p_f2(&psi0)?
            } else {
                let u = unitary_from_hamiltonian(&h, tau)?;
                let state = StateVector::from_evolved(u * psi0.amplitudes(), model.labels().to_vec());
                model.p_f2(&state)?
            };
            let p = match contrast {
                Some(c) => c.apply(p, tau, 0.0),
                None => p,
            };
            Ok((tau, p))
        })
        .collect();
    Ok(RabiScan { points: points? })
}

/// Fitted fringe p(Δ) = C + A·cos(2π·Δ·T_eff + φ₀).
#[derive(Clone, Copy, Debug)]
pub struct FringeFit {
    pub amplitude: f64,
    pub phase_rad: f64,
    pub offset: f64,
    /// Effective interrogation time; square pulses stretch it past T because
    /// phase keeps accumulating at reduced rate while the drive is on.
    pub t_eff_s: f64,
    pub fringe_period_hz: f64,
    /// A/C, defined when the offset is positive.
    pub visibility: Option<f64>,
    pub converged: bool,
    /// Underlying fit with covariance diagnostics.
    pub cosine: CosineFit,
}

/// Fits a fringe scan, seeding the period search with `t_eff_init_s`.
pub fn fit_fringe(scan: &FringeScan, t_eff_init_s: f64) -> Result<FringeFit, RamseyError> {
    if scan.points.len() < MIN_FRINGE_POINTS {
        return Err(RamseyError::TooFewPoints {
            needed: MIN_FRINGE_POINTS,
            got: scan.points.len(),
        });
    }
    let x: Vec<f64> = scan.points.iter().map(|&(d, _)| d).collect();
    let y: Vec<f64> = scan.points.iter().map(|&(_, p)| p).collect();
    for &p in &y {
        check_population(p)?;
    }
    let cosine = fit_cosine(&x, &y, t_eff_init_s)?;
    Ok(FringeFit {
        amplitude: cosine.amplitude,
        phase_rad: cosine.phase,
        offset: cosine.offset,
        t_eff_s: cosine.frequency,
        fringe_period_hz: 1.0 / cosine.frequency,
        visibility: (cosine.offset > 0.0).then(|| cosine.amplitude / cosine.offset),
        converged: cosine.converged,
        cosine,
    })
}

/// Fits a Rabi scan and returns the underlying cosine fit; the oscillation
/// frequency lands in `frequency` (Hz).
pub fn fit_rabi(scan: &RabiScan, rabi_init_hz: f64) -> Result<CosineFit, RamseyError> {
    if scan.points.len() < MIN_FRINGE_POINTS {
        return Err(RamseyError::TooFewPoints {
            needed: MIN_FRINGE_POINTS,
            got: scan.points.len(),
        });
    }
    let x: Vec<f64> = scan.points.iter().map(|&(t, _)| t).collect();
    let y: Vec<f64> = scan.points.iter().map(|&(_, p)| p).collect();
    Ok(fit_cosine(&x, &y, rabi_init_hz)?)
}

/// Measured fringe displacement between two scans.
#[derive(Clone, Copy, Debug)]
pub struct PhaseShift {
    /// wrap(φ_a − φ_b) in (−π, π].
    pub shift_rad: f64,
    /// Combined one-sigma fit uncertainty, when both fits provide one.
    pub sigma_rad: Option<f64>,
}

/// Phase difference fit_a − fit_b, demanding comparable fringes.
pub fn phase_shift(fit_a: &FringeFit, fit_b: &FringeFit) -> Result<PhaseShift, RamseyError> {
    if !(fit_a.converged && fit_b.converged) {
        return Err(RamseyError::NotConverged);
    }
    let (pa, pb) = (fit_a.fringe_period_hz, fit_b.fringe_period_hz);
    if (pa - pb).abs() > PERIOD_MATCH_TOL * pa.abs().max(pb.abs()) {
        return Err(RamseyError::PeriodMismatch {
            a_hz: pa,
            b_hz: pb,
            tol_percent: PERIOD_MATCH_TOL * 100.0,
        });
    }
    let sigma_rad = match (fit_a.cosine.phase_sigma(), fit_b.cosine.phase_sigma()) {
        (Some(sa), Some(sb)) => Some(sa.hypot(sb)),
        _ => None,
    };
    Ok(PhaseShift { shift_rad: wrap_phase(fit_a.phase_rad - fit_b.phase_rad), sigma_rad })
}

/// Visibility of one reversal scan at a given field floor.
#[derive(Clone, Debug)]
pub struct VisibilityPoint {
    pub b_min_g: f64,
    pub visibility: f64,
    pub fit: FringeFit,
}

/// Scans and fits one adiabatic-reversal fringe per field floor.
///
/// Output order equals input order. Visibility degrades as the floor drops
/// because the two manifolds leak asymmetrically once the gap gets small.
#[allow(clippy::too_many_arguments)]
pub fn visibility_vs_gap(
    rabi_hz: f64,
    b0_g: f64,
    b_min_list_g: &[f64],
    delta_tau_s: f64,
    guard_s: f64,
    detunings_hz: &[f64],
    cfg: &EvolutionConfig,
    contrast: Option<&ContrastModel>,
) -> Result<Vec<VisibilityPoint>, RamseyError> {
    let mut out = Vec::with_capacity(b_min_list_g.len());
    for &b_min in b_min_list_g {
        let seq = RamseySequence::adiabatic_reversal(rabi_hz, b0_g, b_min, delta_tau_s, guard_s)?;
        let scan = scan_ramsey(
            |delta| ClockModel::new(rabi_hz, delta),
            detunings_hz,
            &seq,
            cfg,
            contrast,
        )?;
        let fit = fit_fringe(&scan, seq.interrogation_s)?;
        let visibility = fit
            .visibility
            .ok_or(RamseyError::VisibilityUndefined { offset: fit.offset })?;
        out.push(VisibilityPoint { b_min_g: b_min, visibility, fit });
    }
    Ok(out)
}

/// Exact two-level Ramsey population for square pulses, as a cross-check for
/// the eight-level engine when the bias field is zero.
///
/// Basis (|1,0⟩, |2,0⟩); the pulse propagator is the closed-form SU(2)
/// rotation exp(−i(a σ_z + b σ_x)τ) up to a global phase, with a = πΔ and
/// b = πΩ in rad/s.
pub fn two_level_ramsey(rabi_hz: f64, detuning_hz: f64, pulse_s: f64, t_s: f64) -> f64 {
    let a = std::f64::consts::PI * detuning_hz;
    let b = std::f64::consts::PI * rabi_hz;
    let omega = a.hypot(b);

    // 2x2 complex matrices as row-major arrays
    let mul = |m: [C64; 4], n: [C64; 4]| {
        [
            m[0] * n[0] + m[1] * n[2],
            m[0] * n[1] + m[1] * n[3],
            m[2] * n[0] + m[3] * n[2],
            m[2] * n[1] + m[3] * n[3],
        ]
    };

    let pulse = {
        let (c, s) = ((omega * pulse_s).cos(), (omega * pulse_s).sin());
        let phase = C64::from_polar(1.0, a * pulse_s);
        let nz = if omega > 0.0 { a / omega } else { 0.0 };
        let nx = if omega > 0.0 { b / omega } else { 0.0 };
        [
            phase * C64::new(c, -s * nz),
            phase * C64::new(0.0, -s * nx),
            phase * C64::new(0.0, -s * nx),
            phase * C64::new(c, s * nz),
        ]
    };
    let free = [
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::from_polar(1.0, std::f64::consts::TAU * detuning_hz * t_s),
    ];

    let u = mul(pulse, mul(free, pulse));
    // initial state |2,0> = (0, 1), so p_f2 is the lower-right element
    u[3].norm_sqr()
}
