//! Experiment configuration: strict TOML in, validated parameters out.
//!
//! Every field has a default taken from the reference operating point
//! (12.2 kHz drive, 1 ms interrogation, 0.2 G bias), so a config file only
//! names what it changes. Unknown and duplicate keys are rejected: a typo in
//! a physics parameter must fail loudly, not silently simulate something
//! else.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use spinsim_core::dynamics::{
    EvolutionConfig, GAMMA_F1_HZ_PER_GAUSS, GAMMA_F2_HZ_PER_GAUSS,
};
use spinsim_core::field::{FieldSchedule, FieldVector};
use spinsim_core::ramsey::{CLOCK_RABI_HZ, DEFAULT_GUARD_S};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("config kind {config} does not match the {subcommand} subcommand")]
    KindMismatch { config: ExperimentKind, subcommand: ExperimentKind },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rabi,
    RamseyScan,
    ReversalPhase,
    AdiabaticityReport,
    VisibilitySweep,
    RobustnessSuite,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ExperimentKind::Rabi => "rabi",
            ExperimentKind::RamseyScan => "ramsey_scan",
            ExperimentKind::ReversalPhase => "reversal_phase",
            ExperimentKind::AdiabaticityReport => "adiabaticity_report",
            ExperimentKind::VisibilitySweep => "visibility_sweep",
            ExperimentKind::RobustnessSuite => "robustness_suite",
        };
        write!(f, "{name}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockConfig {
    /// On-resonance Rabi frequency of the microwave drive, Hz.
    pub rabi_hz: f64,
    /// Microwave detuning for single-point experiments, Hz.
    pub detuning_hz: f64,
    pub gamma_f1_hz_per_g: f64,
    pub gamma_f2_hz_per_g: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig {
            rabi_hz: CLOCK_RABI_HZ,
            detuning_hz: 0.0,
            gamma_f1_hz_per_g: GAMMA_F1_HZ_PER_GAUSS,
            gamma_f2_hz_per_g: GAMMA_F2_HZ_PER_GAUSS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    /// Free-evolution time between the two pulses, seconds. For reversal
    /// schedules the window is derived from the schedule instead.
    pub interrogation_s: f64,
    /// Quiet interval on each side of a reversal, seconds.
    pub guard_s: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig { interrogation_s: 1e-3, guard_s: DEFAULT_GUARD_S }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    SmoothReversal,
    SuddenReversal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    /// Bias field at the window edges, gauss.
    pub b0_g: f64,
    /// Transverse floor of the smooth reversal, gauss.
    pub b_min_g: f64,
    /// Duration of the smooth reversal, seconds.
    pub delta_tau_s: f64,
    /// Transverse residual of the sudden flip, gauss.
    pub residual_g: f64,
    /// Ramp time of the sudden flip, seconds.
    pub step_s: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Constant,
            b0_g: 0.2,
            b_min_g: 0.2,
            delta_tau_s: 2e-3,
            residual_g: 1e-3,
            step_s: 2e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Detunings run from -span to +span, Hz.
    pub detuning_span_hz: f64,
    pub points: usize,
    /// Rabi experiments sample this many drive cycles.
    pub rabi_cycles: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { detuning_span_hz: 2.5e3, points: 41, rabi_cycles: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub target_error: f64,
    pub dt_init_s: f64,
    pub dt_max_s: f64,
    pub record_stride: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        // stride 50 samples the trajectory roughly once per microsecond at
        // the equilibrium step of the default tolerance
        NumericsConfig { target_error: 1e-9, dt_init_s: 1e-8, dt_max_s: 1e-6, record_stride: 50 }
    }
}

impl NumericsConfig {
    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            target_error: self.target_error,
            dt_init: self.dt_init_s,
            dt_max: self.dt_max_s,
            record_stride: self.record_stride,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub b_min_list_g: Vec<f64>,
    pub detuning_span_hz: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { b_min_list_g: vec![0.2, 0.02, 0.004], detuning_span_hz: 600.0, points: 41 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub n_paths: usize,
    /// Perturbation amplitude as a fraction of the field floor.
    pub amplitude_fraction: f64,
    pub n_modes: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig { n_paths: 20, amplitude_fraction: 0.2, n_modes: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifoldConfig {
    /// Doubled spin quantum number of the manifold single-manifold
    /// experiments evolve.
    pub two_f: u32,
    /// Gyromagnetic ratio override, Hz/G; derived from two_f in {2, 4} when
    /// absent.
    pub gamma_hz_per_g: Option<f64>,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig { two_f: 2, gamma_hz_per_g: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory run artifacts land in; the --out flag overrides it.
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    #[serde(default)]
    pub manifold: ManifoldConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// All defaults for the given experiment; reversal experiments get the
    /// smooth-reversal schedule since a constant field has no phase to show.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            kind,
            seed: 0,
            clock: Default::default(),
            sequence: Default::default(),
            schedule: Default::default(),
            scan: Default::default(),
            numerics: Default::default(),
            sweep: Default::default(),
            robustness: Default::default(),
            manifold: Default::default(),
            output: Default::default(),
        };
        match kind {
            ExperimentKind::ReversalPhase
            | ExperimentKind::AdiabaticityReport
            | ExperimentKind::RobustnessSuite => {
                cfg.schedule.kind = ScheduleKind::SmoothReversal;
            }
            _ => {}
        }
        cfg
    }

    pub fn serialize(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical serialization of everything that can
    /// influence the data: physics, numerics, and the seed. Where the files
    /// land cannot change their bytes, so the output section stays out.
    pub fn hash(&self) -> String {
        let mut identity = self.clone();
        identity.output = OutputConfig::default();
        let mut hasher = Sha256::new();
        hasher.update(identity.serialize().as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("hex formatting");
        }
        hex
    }

    /// Gyromagnetic ratio for the configured single manifold.
    pub fn manifold_gamma(&self) -> Result<f64, ConfigError> {
        match (self.manifold.gamma_hz_per_g, self.manifold.two_f) {
            (Some(g), _) if g.is_finite() && g != 0.0 => Ok(g),
            (Some(g), _) => Err(invalid("manifold.gamma_hz_per_g", format!("must be finite and nonzero, got {g}"))),
            (None, 2) => Ok(self.clock.gamma_f1_hz_per_g),
            (None, 4) => Ok(self.clock.gamma_f2_hz_per_g),
            (None, two_f) => Err(invalid(
                "manifold.gamma_hz_per_g",
                format!("required for two_f = {two_f}; only 2 and 4 have built-in values"),
            )),
        }
    }

    /// Field schedule over its natural domain. Constant schedules span the
    /// configured interrogation time; reversals span ramp plus guards.
    pub fn build_schedule(&self) -> Result<FieldSchedule, ConfigError> {
        let s = &self.schedule;
        let guard = self.sequence.guard_s;
        let map = |key: &'static str| {
            move |e: spinsim_core::field::FieldError| invalid(key, e.to_string())
        };
        match s.kind {
            ScheduleKind::Constant => {
                FieldSchedule::constant(FieldVector::along_z(s.b0_g), 0.0, self.sequence.interrogation_s)
                    .map_err(map("schedule.b0_g"))
            }
            ScheduleKind::SmoothReversal => {
                let t = s.delta_tau_s + 2.0 * guard;
                FieldSchedule::smooth_reversal(s.b0_g, s.b_min_g, s.delta_tau_s, guard + s.delta_tau_s / 2.0)
                    .and_then(|sched| sched.with_domain(0.0, t))
                    .map_err(map("schedule.b_min_g"))
            }
            ScheduleKind::SuddenReversal => {
                let t = self.sequence.interrogation_s;
                FieldSchedule::sudden_reversal(s.b0_g, t / 2.0, s.residual_g, s.step_s)
                    .and_then(|sched| sched.with_domain(0.0, t))
                    .map_err(map("schedule.residual_g"))
            }
        }
    }

    pub fn detunings_hz(&self) -> Vec<f64> {
        grid(self.scan.detuning_span_hz, self.scan.points)
    }

    pub fn sweep_detunings_hz(&self) -> Vec<f64> {
        grid(self.sweep.detuning_span_hz, self.sweep.points)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&'static str, f64); 7] = [
            ("clock.rabi_hz", self.clock.rabi_hz),
            ("sequence.interrogation_s", self.sequence.interrogation_s),
            ("sequence.guard_s", self.sequence.guard_s),
            ("schedule.b0_g", self.schedule.b0_g),
            ("scan.detuning_span_hz", self.scan.detuning_span_hz),
            ("scan.rabi_cycles", self.scan.rabi_cycles),
            ("sweep.detuning_span_hz", self.sweep.detuning_span_hz),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(key, format!("must be positive and finite, got {value}")));
            }
        }
        if !self.clock.detuning_hz.is_finite() {
            return Err(invalid("clock.detuning_hz", "must be finite"));
        }
        if self.scan.points < 8 {
            return Err(invalid("scan.points", format!("need at least 8 for a fit, got {}", self.scan.points)));
        }
        if self.sweep.points < 8 {
            return Err(invalid("sweep.points", format!("need at least 8 for a fit, got {}", self.sweep.points)));
        }
        if self.sweep.b_min_list_g.is_empty() {
            return Err(invalid("sweep.b_min_list_g", "must not be empty"));
        }
        for &b in &self.sweep.b_min_list_g {
            if !(b.is_finite() && b > 0.0 && b <= self.schedule.b0_g) {
                return Err(invalid(
                    "sweep.b_min_list_g",
                    format!("entries must lie in (0, b0 = {}], got {b}", self.schedule.b0_g),
                ));
            }
        }
        if self.robustness.n_paths == 0 {
            return Err(invalid("robustness.n_paths", "must be at least 1"));
        }
        if self.robustness.n_modes == 0 {
            return Err(invalid("robustness.n_modes", "must be at least 1"));
        }
        if !(self.robustness.amplitude_fraction.is_finite() && self.robustness.amplitude_fraction >= 0.0) {
            return Err(invalid(
                "robustness.amplitude_fraction",
                format!("must be nonnegative, got {}", self.robustness.amplitude_fraction),
            ));
        }
        if self.manifold.two_f == 0 || self.manifold.two_f % 2 != 0 {
            return Err(invalid(
                "manifold.two_f",
                format!("needs a positive even value (integer spin), got {}", self.manifold.two_f),
            ));
        }
        match self.kind {
            ExperimentKind::AdiabaticityReport | ExperimentKind::ReversalPhase => {
                if self.schedule.kind == ScheduleKind::Constant {
                    return Err(invalid(
                        "schedule.kind",
                        "a constant field has no reversal; pick smooth_reversal or sudden_reversal",
                    ));
                }
            }
            ExperimentKind::RobustnessSuite => {
                if self.schedule.kind != ScheduleKind::SmoothReversal {
                    return Err(invalid(
                        "schedule.kind",
                        "perturbed-path analysis needs a smooth_reversal schedule",
                    ));
                }
            }
            _ => {}
        }
        self.numerics
            .evolution()
            .validate()
            .map_err(|e| invalid("numerics.target_error", e.to_string()))?;
        self.manifold_gamma()?;
        // surface schedule parameter problems now, under their key path
        self.build_schedule()?;
        Ok(())
    }
}

fn grid(span: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| -span + 2.0 * span * i as f64 / (points - 1) as f64)
        .collect()
}

/// Parses and validates a strict TOML experiment description.
///
/// The TOML layer itself rejects duplicate keys; `deny_unknown_fields`
/// rejects unknown ones with the offending key in the message.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}
