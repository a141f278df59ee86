//! Magnetic field schedules B(t) and adiabaticity diagnostics.
//!
//! All field components are in gauss and times in seconds. A schedule owns an
//! explicit time domain; evaluation outside it is an error rather than an
//! extrapolation.

use std::f64::consts::{PI, TAU};
use std::io::Read;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Ratio above which a reversal counts as adiabatic.
pub const ADIABATIC_RATIO: f64 = 10.0;
/// Ratio below which a reversal counts as sudden.
pub const SUDDEN_RATIO: f64 = 0.1;
/// A perturbation may not push min |B| below this fraction of the nominal floor.
pub const GAP_FLOOR_FRACTION: f64 = 0.1;
/// Default dense-sampling count for the gap search.
pub const GAP_SEARCH_SAMPLES: usize = 10_000;
/// Default ramp duration of a sudden reversal.
pub const SUDDEN_STEP_DEFAULT: f64 = 2e-6;

const CSV_HEADER: [&str; 4] = ["t_s", "bx_g", "by_g", "bz_g"];

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("t = {t} s outside schedule domain [{t_start}, {t_end}] s")]
    OutsideDomain { t: f64, t_start: f64, t_end: f64 },
    #[error("bad domain: t_start = {t_start} s, t_end = {t_end} s")]
    BadDomain { t_start: f64, t_end: f64 },
    #[error("domain [{t_start}, {t_end}] s does not contain the transition window [{lo}, {hi}] s")]
    DomainExcludesWindow { t_start: f64, t_end: f64, lo: f64, hi: f64 },
    #[error("{name} = {value} is out of range")]
    BadParameter { name: &'static str, value: f64 },
    #[error("gap search needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("gyromagnetic ratio must be finite and nonzero, got {0}")]
    InvalidGamma(f64),
    #[error("no reversal window: schedule kind has no transition duration")]
    NoReversalWindow,
    #[error("perturbation requires a smooth reversal schedule")]
    NotSmoothReversal,
    #[error("gap closed: perturbed min |B| = {min_b_g:.3e} G fell below {floor_g:.3e} G")]
    GapClosed { min_b_g: f64, floor_g: f64 },
    #[error("sampled trace needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("sampled trace times must increase strictly (row {row})")]
    NonMonotonicTime { row: usize },
    #[error("expected CSV header {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("row {row}: bad value in column {column}")]
    BadValue { row: usize, column: &'static str },
    #[error("CSV read failed: {0}")]
    Csv(#[from] csv::Error),
}

/// One field sample, components in gauss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector { bx: 0.0, by: 0.0, bz: 0.0 };

    pub const fn new(bx: f64, by: f64, bz: f64) -> Self {
        FieldVector { bx, by, bz }
    }

    pub const fn along_z(bz: f64) -> Self {
        FieldVector { bx: 0.0, by: 0.0, bz }
    }

    pub fn norm(self) -> f64 {
        (self.bx * self.bx + self.by * self.by + self.bz * self.bz).sqrt()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Constant {
        b: FieldVector,
    },
    SmoothReversal {
        b0: f64,
        b_min: f64,
        delta_tau: f64,
        t_center: f64,
    },
    SuddenReversal {
        b0: f64,
        t_flip: f64,
        residual: f64,
        step: f64,
    },
    Sampled {
        times: Vec<f64>,
        fields: Vec<FieldVector>,
    },
    Perturbed {
        b0: f64,
        b_min: f64,
        delta_tau: f64,
        t_center: f64,
        amplitude: f64,
        /// Random phases per component (x, y, z), one entry per mode.
        phases: [Vec<f64>; 3],
    },
}

/// A magnetic field trajectory with an explicit validity domain.
#[derive(Clone, Debug)]
pub struct FieldSchedule {
    kind: Kind,
    t_start: f64,
    t_end: f64,
}

fn check_finite(name: &'static str, value: f64) -> Result<(), FieldError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(FieldError::BadParameter { name, value })
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), FieldError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FieldError::BadParameter { name, value })
    }
}

impl FieldSchedule {
    /// Fixed field over [t_start, t_end].
    pub fn constant(b: FieldVector, t_start: f64, t_end: f64) -> Result<Self, FieldError> {
        check_finite("bx", b.bx)?;
        check_finite("by", b.by)?;
        check_finite("bz", b.bz)?;
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(FieldError::BadDomain { t_start, t_end });
        }
        Ok(FieldSchedule { kind: Kind::Constant { b }, t_start, t_end })
    }

    /// Slow reversal bz: +b0 -> -b0 with a transverse opening that keeps
    /// min |B| = b_min.
    ///
    /// Inside the window of width `delta_tau` centered on `t_center`, with
    /// s in [0, 1]:
    ///   bz = b0 cos(pi s),  bx = b_min sin(pi s),  by = 0.
    /// Outside the window the field is held at (0, 0, +-b0). The default
    /// domain is exactly the window; extend it with [`Self::with_domain`].
    pub fn smooth_reversal(
        b0: f64,
        b_min: f64,
        delta_tau: f64,
        t_center: f64,
    ) -> Result<Self, FieldError> {
        check_positive("b0", b0)?;
        check_positive("b_min", b_min)?;
        if b_min > b0 {
            return Err(FieldError::BadParameter { name: "b_min", value: b_min });
        }
        check_positive("delta_tau", delta_tau)?;
        check_finite("t_center", t_center)?;
        Ok(FieldSchedule {
            kind: Kind::SmoothReversal { b0, b_min, delta_tau, t_center },
            t_start: t_center - delta_tau / 2.0,
            t_end: t_center + delta_tau / 2.0,
        })
    }

    /// Fast linear bz ramp +b0 -> -b0 over `step` seconds at `t_flip`, with a
    /// constant transverse residual bx.
    pub fn sudden_reversal(
        b0: f64,
        t_flip: f64,
        residual: f64,
        step: f64,
    ) -> Result<Self, FieldError> {
        check_positive("b0", b0)?;
        check_finite("t_flip", t_flip)?;
        if !(residual.is_finite() && residual >= 0.0) {
            return Err(FieldError::BadParameter { name: "residual", value: residual });
        }
        check_positive("step", step)?;
        Ok(FieldSchedule {
            kind: Kind::SuddenReversal { b0, t_flip, residual, step },
            t_start: t_flip - step / 2.0,
            t_end: t_flip + step / 2.0,
        })
    }

    /// Piecewise-linear interpolation through explicit samples.
    pub fn sampled(times: Vec<f64>, fields: Vec<FieldVector>) -> Result<Self, FieldError> {
        if times.len() != fields.len() || times.len() < 2 {
            return Err(FieldError::TooFewRows(times.len().min(fields.len())));
        }
        for (row, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(FieldError::NonMonotonicTime { row: row + 1 });
            }
        }
        let t_start = times[0];
        let t_end = *times.last().expect("len >= 2");
        Ok(FieldSchedule { kind: Kind::Sampled { times, fields }, t_start, t_end })
    }

    /// Reads a sampled trace from CSV with the exact header `t_s,bx_g,by_g,bz_g`.
    pub fn sampled_from_csv<R: Read>(reader: R) -> Result<Self, FieldError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let found: Vec<&str> = headers.iter().collect();
        if found != CSV_HEADER {
            return Err(FieldError::BadHeader {
                expected: CSV_HEADER.join(","),
                found: found.join(","),
            });
        }
        let mut times = Vec::new();
        let mut fields = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let record = record?;
            let row = idx + 1;
            let parse = |col: usize, name: &'static str| -> Result<f64, FieldError> {
                record
                    .get(col)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or(FieldError::BadValue { row, column: name })
            };
            let t = parse(0, "t_s")?;
            let bx = parse(1, "bx_g")?;
            let by = parse(2, "by_g")?;
            let bz = parse(3, "bz_g")?;
            times.push(t);
            fields.push(FieldVector::new(bx, by, bz));
        }
        FieldSchedule::sampled(times, fields)
    }

    /// Replaces the validity domain.
    ///
    /// Reversal kinds require the new domain to contain their transition
    /// window; sampled traces cannot grow beyond their data range.
    pub fn with_domain(mut self, t_start: f64, t_end: f64) -> Result<Self, FieldError> {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(FieldError::BadDomain { t_start, t_end });
        }
        match &self.kind {
            Kind::Constant { .. } => {}
            Kind::SmoothReversal { delta_tau, t_center, .. }
            | Kind::Perturbed { delta_tau, t_center, .. } => {
                let lo = t_center - delta_tau / 2.0;
                let hi = t_center + delta_tau / 2.0;
                if t_start > lo || t_end < hi {
                    return Err(FieldError::DomainExcludesWindow { t_start, t_end, lo, hi });
                }
            }
            Kind::SuddenReversal { t_flip, step, .. } => {
                let lo = t_flip - step / 2.0;
                let hi = t_flip + step / 2.0;
                if t_start > lo || t_end < hi {
                    return Err(FieldError::DomainExcludesWindow { t_start, t_end, lo, hi });
                }
            }
            Kind::Sampled { times, .. } => {
                let lo = times[0];
                let hi = *times.last().expect("len >= 2");
                if t_start < lo || t_end > hi {
                    return Err(FieldError::DomainExcludesWindow { t_start, t_end, lo, hi });
                }
            }
        }
        self.t_start = t_start;
        self.t_end = t_end;
        Ok(self)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Duration of the reversal transition, if this kind has one.
    pub fn reversal_duration(&self) -> Option<f64> {
        match &self.kind {
            Kind::SmoothReversal { delta_tau, .. } | Kind::Perturbed { delta_tau, .. } => {
                Some(*delta_tau)
            }
            Kind::SuddenReversal { step, .. } => Some(*step),
            Kind::Constant { .. } | Kind::Sampled { .. } => None,
        }
    }

    /// Nominal field floor b_min of a (possibly perturbed) smooth reversal.
    pub fn nominal_floor(&self) -> Option<f64> {
        match &self.kind {
            Kind::SmoothReversal { b_min, .. } | Kind::Perturbed { b_min, .. } => Some(*b_min),
            _ => None,
        }
    }

    /// Interior times where the field's time derivative jumps.
    ///
    /// A fixed-step integrator that strides across one of these points picks
    /// up an O(dt^2) local error from the kink; splitting the integration at
    /// them restores smooth-field accuracy.
    pub fn breakpoints(&self) -> Vec<f64> {
        let window = |lo: f64, hi: f64| {
            [lo, hi]
                .into_iter()
                .filter(|&t| t > self.t_start && t < self.t_end)
                .collect::<Vec<f64>>()
        };
        match &self.kind {
            Kind::Constant { .. } => Vec::new(),
            Kind::SmoothReversal { delta_tau, t_center, .. }
            | Kind::Perturbed { delta_tau, t_center, .. } => {
                window(t_center - delta_tau / 2.0, t_center + delta_tau / 2.0)
            }
            Kind::SuddenReversal { t_flip, step, .. } => {
                window(t_flip - step / 2.0, t_flip + step / 2.0)
            }
            Kind::Sampled { times, .. } => times
                .iter()
                .copied()
                .filter(|&t| t > self.t_start && t < self.t_end)
                .collect(),
        }
    }

    /// B(t); errors outside [t_start, t_end].
    pub fn field_at(&self, t: f64) -> Result<FieldVector, FieldError> {
        if !(t >= self.t_start && t <= self.t_end) {
            return Err(FieldError::OutsideDomain {
                t,
                t_start: self.t_start,
                t_end: self.t_end,
            });
        }
        Ok(match &self.kind {
            Kind::Constant { b } => *b,
            Kind::SmoothReversal { b0, b_min, delta_tau, t_center } => {
                smooth_field(t, *b0, *b_min, *delta_tau, *t_center)
            }
            Kind::SuddenReversal { b0, t_flip, residual, step } => {
                let lo = t_flip - step / 2.0;
                let hi = t_flip + step / 2.0;
                let bz = if t <= lo {
                    *b0
                } else if t >= hi {
                    -*b0
                } else {
                    b0 * (1.0 - 2.0 * (t - lo) / step)
                };
                FieldVector::new(*residual, 0.0, bz)
            }
            Kind::Sampled { times, fields } => {
                let i = times.partition_point(|&s| s <= t);
                if i == 0 {
                    fields[0]
                } else if i == times.len() {
                    fields[times.len() - 1]
                } else {
                    let (t0, t1) = (times[i - 1], times[i]);
                    let w = (t - t0) / (t1 - t0);
                    let (a, b) = (fields[i - 1], fields[i]);
                    FieldVector::new(
                        a.bx + w * (b.bx - a.bx),
                        a.by + w * (b.by - a.by),
                        a.bz + w * (b.bz - a.bz),
                    )
                }
            }
            Kind::Perturbed { b0, b_min, delta_tau, t_center, amplitude, phases } => {
                let lo = t_center - delta_tau / 2.0;
                let hi = t_center + delta_tau / 2.0;
                let base = smooth_field(t, *b0, *b_min, *delta_tau, *t_center);
                if t <= lo || t >= hi {
                    base
                } else {
                    let s = (t - lo) / delta_tau;
                    let window = (PI * s).sin();
                    let mut delta = [0.0f64; 3];
                    for (c, comp) in delta.iter_mut().enumerate() {
                        let mut sum = 0.0;
                        for (k, phase) in phases[c].iter().enumerate() {
                            sum += (PI * (k + 1) as f64 * s + phase).sin();
                        }
                        *comp = amplitude * window * sum;
                    }
                    FieldVector::new(base.bx + delta[0], base.by + delta[1], base.bz + delta[2])
                }
            }
        })
    }
}

fn smooth_field(t: f64, b0: f64, b_min: f64, delta_tau: f64, t_center: f64) -> FieldVector {
    let lo = t_center - delta_tau / 2.0;
    let hi = t_center + delta_tau / 2.0;
    if t <= lo {
        FieldVector::along_z(b0)
    } else if t >= hi {
        FieldVector::along_z(-b0)
    } else {
        let s = (t - lo) / delta_tau;
        FieldVector::new(b_min * (PI * s).sin(), 0.0, b0 * (PI * s).cos())
    }
}

/// Adds seeded random-phase sinusoids to a smooth reversal.
///
/// Each component gains amplitude * sum_k sin(pi k s + phi_k) weighted by a
/// sin(pi s) window, so the endpoint fields are untouched. The same seed
/// reproduces the same schedule bit for bit. Fails if the perturbation closes
/// the field gap below `GAP_FLOOR_FRACTION * b_min`.
pub fn perturb_schedule(
    schedule: &FieldSchedule,
    seed: u64,
    amplitude: f64,
    n_modes: usize,
) -> Result<FieldSchedule, FieldError> {
    let (b0, b_min, delta_tau, t_center) = match &schedule.kind {
        Kind::SmoothReversal { b0, b_min, delta_tau, t_center } => {
            (*b0, *b_min, *delta_tau, *t_center)
        }
        _ => return Err(FieldError::NotSmoothReversal),
    };
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(FieldError::BadParameter { name: "amplitude", value: amplitude });
    }
    if n_modes == 0 {
        return Err(FieldError::BadParameter { name: "n_modes", value: 0.0 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for component in phases.iter_mut() {
        *component = (0..n_modes).map(|_| rng.gen_range(0.0..TAU)).collect();
    }

    assemble_perturbed(schedule, (b0, b_min, delta_tau, t_center), amplitude, phases)
}

/// Builds the perturbed schedule from explicit mode phases and runs the gap
/// check. Split out of `perturb_schedule` so the closure guard can be
/// exercised with deterministic phases: random phases essentially never
/// cancel all three field components at once (that near-miss is the point of
/// the robustness claim), so the error path needs a crafted input.
fn assemble_perturbed(
    schedule: &FieldSchedule,
    base: (f64, f64, f64, f64),
    amplitude: f64,
    phases: [Vec<f64>; 3],
) -> Result<FieldSchedule, FieldError> {
    let (b0, b_min, delta_tau, t_center) = base;
    let perturbed = FieldSchedule {
        kind: Kind::Perturbed { b0, b_min, delta_tau, t_center, amplitude, phases },
        t_start: schedule.t_start,
        t_end: schedule.t_end,
    };

    let (_, min_b) = min_field_magnitude(&perturbed, GAP_SEARCH_SAMPLES)?;
    let floor = GAP_FLOOR_FRACTION * b_min;
    if min_b < floor {
        return Err(FieldError::GapClosed { min_b_g: min_b, floor_g: floor });
    }
    Ok(perturbed)
}

/// Location and value of the minimum |B(t)| over the schedule domain.
///
/// Dense uniform sampling brackets the minimum, then golden-section search
/// refines it to a relative width of 1e-6 of the domain.
pub fn min_field_magnitude(
    schedule: &FieldSchedule,
    n_samples: usize,
) -> Result<(f64, f64), FieldError> {
    if n_samples < 100 {
        return Err(FieldError::TooFewSamples(n_samples));
    }
    let span = schedule.t_end - schedule.t_start;
    let at = |t: f64| schedule.field_at(t).map(FieldVector::norm);

    let mut best_i = 0usize;
    let mut best = f64::INFINITY;
    let mut grid = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        // The affine form can land one ulp past t_end; clamp to the domain.
        let t = (schedule.t_start + span * i as f64 / (n_samples - 1) as f64)
            .clamp(schedule.t_start, schedule.t_end);
        let g = at(t)?;
        grid.push(t);
        if g < best {
            best = g;
            best_i = i;
        }
    }

    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(n_samples - 1)];
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = at(c)?;
    let mut fd = at(d)?;
    for _ in 0..80 {
        if (b - a).abs() <= 1e-6 * span {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = at(d)?;
        }
    }
    let (t_min, f_min) = if fc < fd { (c, fc) } else { (d, fd) };
    if f_min < best {
        Ok((t_min, f_min))
    } else {
        Ok((grid[best_i], best))
    }
}

/// Minimum Zeeman splitting |gamma| * min |B(t)| in Hz over the domain.
pub fn min_zeeman_gap(
    schedule: &FieldSchedule,
    gamma_hz_per_gauss: f64,
    n_samples: usize,
) -> Result<f64, FieldError> {
    if !(gamma_hz_per_gauss.is_finite() && gamma_hz_per_gauss != 0.0) {
        return Err(FieldError::InvalidGamma(gamma_hz_per_gauss));
    }
    let (_, min_b) = min_field_magnitude(schedule, n_samples)?;
    Ok(gamma_hz_per_gauss.abs() * min_b)
}

/// Speed regime of a reversal relative to its Zeeman gap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Adiabatic,
    Marginal,
    Sudden,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Adiabatic => write!(f, "adiabatic"),
            Regime::Marginal => write!(f, "marginal"),
            Regime::Sudden => write!(f, "sudden"),
        }
    }
}

/// Dimensionless comparison of reversal duration against the minimum gap.
#[derive(Clone, Copy, Debug)]
pub struct AdiabaticityReport {
    pub delta_tau_s: f64,
    pub min_gap_hz: f64,
    /// 2 pi * min_gap_hz * delta_tau_s; large means slow, hence adiabatic.
    pub ratio: f64,
    pub regime: Regime,
}

pub fn classify_ratio(ratio: f64) -> Regime {
    if ratio > ADIABATIC_RATIO {
        Regime::Adiabatic
    } else if ratio < SUDDEN_RATIO {
        Regime::Sudden
    } else {
        Regime::Marginal
    }
}

/// Gap-versus-duration report for schedules with a reversal window.
pub fn adiabaticity_ratio(
    schedule: &FieldSchedule,
    gamma_hz_per_gauss: f64,
) -> Result<AdiabaticityReport, FieldError> {
    let delta_tau_s = schedule.reversal_duration().ok_or(FieldError::NoReversalWindow)?;
    let min_gap_hz = min_zeeman_gap(schedule, gamma_hz_per_gauss, GAP_SEARCH_SAMPLES)?;
    let ratio = TAU * min_gap_hz * delta_tau_s;
    Ok(AdiabaticityReport { delta_tau_s, min_gap_hz, ratio, regime: classify_ratio(ratio) })
}
