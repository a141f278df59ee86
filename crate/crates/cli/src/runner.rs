//! Experiment dispatch: runs the configured simulation, writes data files,
//! fit reports, and plots, and returns a run manifest.
//!
//! Data files are byte-identical across reruns of the same config and seed;
//! only the manifest carries a timestamp. On any failure every file written
//! so far is removed, so an output directory never holds a half-finished run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use spinsim_core::dynamics::{evolve_zeeman, DynamicsError, EvolutionConfig};
use spinsim_core::field::{adiabaticity_ratio, perturb_schedule, FieldError, FieldVector};
use spinsim_core::phase::{decompose, topological_class, PhaseError};
use spinsim_core::ramsey::{
    fit_fringe, fit_rabi, phase_shift, scan_ramsey, simulate_rabi, ClockModel, FringeFit,
    FringeScan, RamseyError, RamseySequence,
};
use spinsim_core::spin::{build_spin_operators, Spin, SpinError, SpinOperatorSet, StateVector};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, ScheduleKind};
use crate::svg::{render_plot, SvgError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{experiment}: {source}")]
    Engine {
        experiment: ExperimentKind,
        #[source]
        source: EngineError,
    },
    #[error("writing {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Any engine-layer failure, unified so experiment context can be attached.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ramsey(#[from] RamseyError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Svg(#[from] SvgError),
}

trait EngineContext<T> {
    fn during(self, kind: ExperimentKind) -> Result<T, RunError>;
}

impl<T, E: Into<EngineError>> EngineContext<T> for Result<T, E> {
    fn during(self, kind: ExperimentKind) -> Result<T, RunError> {
        self.map_err(|e| RunError::Engine { experiment: kind, source: e.into() })
    }
}

/// What a finished run wrote and under which config identity.
#[derive(Debug)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: &'static str,
    pub timestamp_unix_s: u64,
    pub outputs: Vec<PathBuf>,
    /// Every requested fit converged; the process exit code keys off this.
    pub fits_converged: bool,
}

/// Collects written files so a failed run can sweep up after itself.
struct OutputTracker<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> OutputTracker<'a> {
    fn new(dir: &'a Path) -> Self {
        OutputTracker { dir, written: Vec::new() }
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|source| RunError::Io { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }

    fn cleanup(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest, RunError> {
    fs::create_dir_all(out_dir)
        .map_err(|source| RunError::Io { path: out_dir.to_path_buf(), source })?;
    let mut tracker = OutputTracker::new(out_dir);

    let fits_converged = match dispatch(cfg, &mut tracker) {
        Ok(converged) => converged,
        Err(e) => {
            tracker.cleanup();
            return Err(e);
        }
    };

    let manifest = RunManifest {
        config_hash: cfg.hash(),
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outputs: tracker.written.clone(),
        fits_converged,
    };

    let mut text = String::new();
    writeln!(text, "tool = spinsim {}", manifest.tool_version).unwrap();
    writeln!(text, "config_sha256 = {}", manifest.config_hash).unwrap();
    writeln!(text, "timestamp_unix_s = {}", manifest.timestamp_unix_s).unwrap();
    writeln!(text, "seed = {}", cfg.seed).unwrap();
    writeln!(text, "fits_converged = {}", manifest.fits_converged).unwrap();
    for path in &manifest.outputs {
        writeln!(text, "output = {}", path.file_name().unwrap_or_default().to_string_lossy())
            .unwrap();
    }
    if let Err(e) = tracker.write("manifest.txt", &text) {
        tracker.cleanup();
        return Err(e);
    }

    Ok(manifest)
}

fn dispatch(cfg: &ExperimentConfig, out: &mut OutputTracker) -> Result<bool, RunError> {
    match cfg.kind {
        ExperimentKind::Rabi => run_rabi(cfg, out),
        ExperimentKind::RamseyScan => run_ramsey_scan(cfg, out),
        ExperimentKind::ReversalPhase => run_reversal_phase(cfg, out),
        ExperimentKind::AdiabaticityReport => run_adiabaticity(cfg, out),
        ExperimentKind::VisibilitySweep => run_visibility_sweep(cfg, out),
        ExperimentKind::RobustnessSuite => run_robustness(cfg, out),
    }
}

/// Float formatting used in every data file: shortest exact representation,
/// so bytes are reproducible and values survive a parse round trip.
fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_of_points(header: &str, points: &[(f64, f64)]) -> String {
    let mut s = String::with_capacity(points.len() * 32 + header.len() + 1);
    s.push_str(header);
    s.push('\n');
    for &(x, y) in points {
        s.push_str(&num(x));
        s.push(',');
        s.push_str(&num(y));
        s.push('\n');
    }
    s
}

fn fringe_report(name: &str, fit: &FringeFit) -> String {
    let mut s = String::new();
    writeln!(s, "[{name}]").unwrap();
    writeln!(s, "A = {}", num(fit.amplitude)).unwrap();
    writeln!(s, "phi0_rad = {}", num(fit.phase_rad)).unwrap();
    writeln!(s, "C = {}", num(fit.offset)).unwrap();
    writeln!(s, "t_eff_s = {}", num(fit.t_eff_s)).unwrap();
    writeln!(s, "fringe_period_hz = {}", num(fit.fringe_period_hz)).unwrap();
    match fit.visibility {
        Some(v) => writeln!(s, "visibility = {}", num(v)).unwrap(),
        None => writeln!(s, "visibility = undefined").unwrap(),
    }
    writeln!(s, "converged = {}", fit.converged).unwrap();
    writeln!(s, "residual_rms = {}", num(fit.cosine.residual_rms)).unwrap();
    s
}

fn fringe_model(fit: &FringeFit) -> impl Fn(f64) -> f64 + '_ {
    move |d| {
        fit.offset
            + fit.amplitude * (std::f64::consts::TAU * fit.t_eff_s * d + fit.phase_rad).cos()
    }
}

fn m_zero_state(two_f: u32) -> Result<(SpinOperatorSet, StateVector), EngineError> {
    let ops = build_spin_operators(Spin::new(two_f))?;
    let idx = ops.m_index(0).expect("integer spin has an m = 0 level");
    let psi0 = StateVector::basis_state(ops.labels(), idx)?;
    Ok((ops, psi0))
}

fn clock_for(cfg: &ExperimentConfig, detuning_hz: f64) -> Result<ClockModel, RamseyError> {
    ClockModel::with_gammas(
        cfg.clock.rabi_hz,
        detuning_hz,
        cfg.clock.gamma_f1_hz_per_g,
        cfg.clock.gamma_f2_hz_per_g,
    )
}

fn scan_and_fit(
    cfg: &ExperimentConfig,
    seq: &RamseySequence,
    detunings: &[f64],
    evolution: &EvolutionConfig,
) -> Result<(FringeScan, FringeFit), EngineError> {
    let scan = scan_ramsey(|delta| clock_for(cfg, delta), detunings, seq, evolution, None)?;
    let fit = fit_fringe(&scan, seq.interrogation_s)?;
    Ok((scan, fit))
}

fn run_rabi(cfg: &ExperimentConfig, out: &mut OutputTracker) -> Result<bool, RunError> {
    let kind = cfg.kind;
    let model = clock_for(cfg, cfg.clock.detuning_hz).during(kind)?;
    let n = cfg.scan.points;
    let t_max = cfg.scan.rabi_cycles / cfg.clock.rabi_hz;
    let durations: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
    let scan = simulate_rabi(&model, &durations, FieldVector::along_z(cfg.schedule.b0_g), None)
        .during(kind)?;
    let fit = fit_rabi(&scan, cfg.clock.rabi_hz).during(kind)?;

    out.write("rabi.csv", &csv_of_points("duration_s,p_f2", &scan.points))?;

    let mut report = String::new();
    writeln!(report, "[rabi_fit]").unwrap();
    writeln!(report, "A = {}", num(fit.amplitude)).unwrap();
    writeln!(report, "frequency_hz = {}", num(fit.frequency)).unwrap();
    writeln!(report, "phi0_rad = {}", num(fit.phase)).unwrap();
    writeln!(report, "C = {}", num(fit.offset)).unwrap();
    writeln!(report, "converged = {}", fit.converged).unwrap();
    writeln!(report, "residual_rms = {}", num(fit.residual_rms)).unwrap();
    out.write("rabi_fit.txt", &report)?;

    let model_fn = |t: f64| {
        fit.offset + fit.amplitude * (std::f64::consts::TAU * fit.frequency * t + fit.phase).cos()
    };
    let svg = render_plot(
        "Rabi oscillation",
        "drive duration (s)",
        "p(F=2) (population)",
        &scan.points,
        Some(&model_fn),
    )
    .during(kind)?;
    out.write("rabi.svg", &svg)?;
    Ok(fit.converged)
}

fn run_ramsey_scan(cfg: &ExperimentConfig, out: &mut OutputTracker) -> Result<bool, RunError> {
    let kind = cfg.kind;
    let evolution = cfg.numerics.evolution();
    let detunings = cfg.detunings_hz();
    let schedule = cfg.build_schedule()?;
    let seq = RamseySequence::symmetric(cfg.clock.rabi_hz, schedule).during(kind)?;

    let (scan, fit) = scan_and_fit(cfg, &seq, &detunings, &evolution).during(kind)?;
    out.write("fringe.csv", &csv_of_points("detuning_hz,p_f2", &scan.points))?;
    let svg = render_plot(
        "Ramsey fringe",
        "detuning (Hz)",
        "p(F=2) (population)",
        &scan.points,
        Some(&fringe_model(&fit)),
    )
    .during(kind)?;
    out.write("fringe.svg", &svg)?;

    let mut report = fringe_report("fringe_fit", &fit);
    let mut converged = fit.converged;

    // a reversal fringe is only meaningful against the no-reversal
    // reference, so produce both and the displacement between them
    if cfg.schedule.kind != ScheduleKind::Constant {
        let seq_base = RamseySequence::baseline(
            cfg.clock.rabi_hz,
            FieldVector::along_z(cfg.schedule.b0_g),
            seq.interrogation_s,
        )
        .during(kind)?;
        let (scan_base, fit_base) =
            scan_and_fit(cfg, &seq_base, &detunings, &evolution).during(kind)?;
        out.write(
            "fringe_baseline.csv",
            &csv_of_points("detuning_hz,p_f2", &scan_base.points),
        )?;
        let svg = render_plot(
            "Ramsey fringe, no reversal",
            "detuning (Hz)",
            "p(F=2) (population)",
            &scan_base.points,
            Some(&fringe_model(&fit_base)),
        )
        .during(kind)?;
        out.write("fringe_baseline.svg", &svg)?;

        report.push('\n');
        report.push_str(&fringe_report("baseline_fit", &fit_base));
        let shift = phase_shift(&fit, &fit_base).during(kind)?;
        report.push('\n');
        writeln!(report, "[fringe_shift]").unwrap();
        writeln!(report, "shift_rad = {}", num(shift.shift_rad)).unwrap();
        match shift.sigma_rad {
            Some(s) => writeln!(report, "sigma_rad = {}", num(s)).unwrap(),
            None => writeln!(report, "sigma_rad = undefined").unwrap(),
        }
        converged = converged && fit_base.converged;
    }

    out.write("fringe_fit.txt", &report)?;
    Ok(converged)
}

fn run_reversal_phase(cfg: &ExperimentConfig, out: &mut OutputTracker) -> Result<bool, RunError> {
    let kind = cfg.kind;
    let gamma = cfg.manifold_gamma()?;
    let schedule = cfg.build_schedule()?;
    let (ops, psi0) = m_zero_state(cfg.manifold.two_f).during(kind)?;
    let evolution = cfg.numerics.evolution();

    let run = evolve_zeeman(&ops, gamma, &schedule, &psi0, &evolution).during(kind)?;
    let dec = decompose(&psi0, &run).during(kind)?;
    let cls = topological_class(&dec);

    // trajectory dump: time plus interleaved re/im amplitudes
    let dim = ops.dim();
    let mut csv = String::from("t_s");
    for i in 0..dim {
        write!(csv, ",re_c{i},im_c{i}").unwrap();
    }
    csv.push('\n');
    for (t, amps) in run.times.iter().zip(run.trajectory.iter()) {
        csv.push_str(&num(*t));
        for a in amps.iter() {
            csv.push(',');
            csv.push_str(&num(a.re));
            csv.push(',');
            csv.push_str(&num(a.im));
        }
        csv.push('\n');
    }
    out.write("trajectory.csv", &csv)?;

    let mut report = String::new();
    writeln!(report, "[reversal_phase]").unwrap();
    writeln!(report, "two_f = {}", cfg.manifold.two_f).unwrap();
    writeln!(report, "class = {}", cls.class).unwrap();
    writeln!(report, "class_residual_rad = {}", num(cls.residual)).unwrap();
    writeln!(report, "return_fidelity = {}", num(dec.return_fidelity)).unwrap();
    match dec.total_phase {
        Some(p) => writeln!(report, "total_phase_rad = {}", num(p)).unwrap(),
        None => writeln!(report, "total_phase_rad = undefined").unwrap(),
    }
    writeln!(report, "dynamical_phase_rad = {}", num(dec.dynamical_phase)).unwrap();
    match dec.geometric_phase {
        Some(p) => writeln!(report, "geometric_phase_rad = {}", num(p)).unwrap(),
        None => writeln!(report, "geometric_phase_rad = undefined").unwrap(),
    }
    writeln!(report, "max_norm_defect = {}", num(run.max_norm_defect)).unwrap();
    writeln!(report, "steps_accepted = {}", run.steps_accepted).unwrap();
    writeln!(report, "steps_rejected = {}", run.steps_rejected).unwrap();
    out.write("reversal.txt", &report)?;

    // the m = 0 population along the way makes leakage visible at a glance
    let idx = ops.m_index(0).expect("integer spin");
    let pops: Vec<(f64, f64)> = run
        .times
        .iter()
        .zip(run.trajectory.iter())
        .map(|(t, amps)| (*t, amps[idx].norm_sqr()))
        .collect();
    let svg = render_plot(
        "m = 0 population through the reversal",
        "time (s)",
        "|<m=0|psi>|^2 (population)",
        &pops,
        None,
    )
    .during(kind)?;
    out.write("reversal.svg", &svg)?;

    Ok(true)
}

fn run_adiabaticity(cfg: &ExperimentConfig, out: &mut OutputTracker) -> Result<bool, RunError> {
    let kind = cfg.kind;
    let gamma = cfg.manifold_gamma()?;
    let schedule = cfg.build_schedule()?;
    let report = adiabaticity_ratio(&schedule, gamma).during(kind)?;

    // Zeeman gap versus time, sampled densely enough to show the waist
    let n = 501;
    let (t0, t1) = (schedule.t_start(), schedule.t_end());
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let t = (t0 + (t1 - t0) * i as f64 / (n - 1) as f64).clamp(t0, t1);
        let b = schedule.field_at(t).during(kind)?;
        points.push((t, gamma.abs() * b.norm()));
    }
    out.write("gap.csv", &csv_of_points("t_s,gap_hz", &points))?;

    let mut text = String::new();
    writeln!(text, "[adiabaticity]").unwrap();
    writeln!(text, "delta_tau_s = {}", num(report.delta_tau_s)).unwrap();
    writeln!(text, "min_gap_hz = {}", num(report.min_gap_hz)).unwrap();
    writeln!(text, "ratio = {}", num(report.ratio)).unwrap();
    writeln!(text, "regime = {}", report.regime).unwrap();
    out.write("adiabaticity.txt", &text)?;

    let svg = render_plot(
        "Zeeman gap through the schedule",
        "time (s)",
        "adjacent-level gap (Hz)",
        &points,
        None,
    )
    .during(kind)?;
    out.write("gap.svg", &svg)?;
    Ok(true)
}

fn run_visibility_sweep(cfg: &ExperimentConfig, out: &mut OutputTracker) -> Result<bool, RunError> {
    let kind = cfg.kind;
    let evolution = cfg.numerics.evolution();
    let detunings = cfg.sweep_detunings_hz();

    let mut csv = String::from("b_min_g,visibility\n");
    let mut report = String::new();
    let mut converged = true;
    let mut plot: Vec<(f64, f64)> = Vec::with_capacity(cfg.sweep.b_min_list_g.len());
    for &b_min in &cfg.sweep.b_min_list_g {
        let seq = RamseySequence::adiabatic_reversal(
            cfg.clock.rabi_hz,
            cfg.schedule.b0_g,
            b_min,
            cfg.schedule.delta_tau_s,
            cfg.sequence.guard_s,
        )
        .during(kind)?;
        let (_, fit) = scan_and_fit(cfg, &seq, &detunings, &evolution).during(kind)?;
        let visibility = fit
            .visibility
            .ok_or(RamseyError::VisibilityUndefined { offset: fit.offset })
            .during(kind)?;
        csv.push_str(&num(b_min));
        csv.push(',');
        csv.push_str(&num(visibility));
        csv.push('\n');
        plot.push((b_min.log10(), visibility));
        report.push_str(&fringe_report(&format!("fit_b_min_{}", num(b_min)), &fit));
        report.push('\n');
        converged = converged && fit.converged;
    }
    out.write("sweep.csv", &csv)?;
    out.write("sweep_fits.txt", &report)?;
    let svg = render_plot(
        "Fringe visibility vs field floor",
        "log10(b_min / G)",
        "visibility (A/C)",
        &plot,
        None,
    )
    .during(kind)?;
    out.write("sweep.svg", &svg)?;
    Ok(converged)
}

fn run_robustness(cfg: &ExperimentConfig, out: &mut OutputTracker) -> Result<bool, RunError> {
    let kind = cfg.kind;
    let schedule = cfg.build_schedule()?;
    let amplitude = cfg.robustness.amplitude_fraction * cfg.schedule.b_min_g;
    let evolution = cfg.numerics.evolution();

    let mut csv = String::from("two_f,seed,class,return_fidelity,residual_rad\n");
    let mut report = String::new();
    writeln!(report, "[robustness]").unwrap();
    writeln!(report, "amplitude_g = {}", num(amplitude)).unwrap();
    writeln!(report, "n_modes = {}", cfg.robustness.n_modes).unwrap();
    let mut all_preserved = true;

    for (two_f, gamma) in [(2u32, cfg.clock.gamma_f1_hz_per_g), (4, cfg.clock.gamma_f2_hz_per_g)] {
        let (ops, psi0) = m_zero_state(two_f).during(kind)?;
        let base_run = evolve_zeeman(&ops, gamma, &schedule, &psi0, &evolution).during(kind)?;
        let base = topological_class(&decompose(&psi0, &base_run).during(kind)?);

        let mut preserved = 0usize;
        for i in 0..cfg.robustness.n_paths {
            let seed = cfg.seed.wrapping_add(i as u64);
            let path = perturb_schedule(&schedule, seed, amplitude, cfg.robustness.n_modes)
                .during(kind)?;
            let run = evolve_zeeman(&ops, gamma, &path, &psi0, &evolution).during(kind)?;
            let cls = topological_class(&decompose(&psi0, &run).during(kind)?);
            if cls.class == base.class {
                preserved += 1;
            }
            writeln!(
                csv,
                "{two_f},{seed},{},{},{}",
                cls.class,
                num(cls.fidelity),
                num(cls.residual)
            )
            .unwrap();
        }
        writeln!(report, "two_f_{two_f}_base_class = {}", base.class).unwrap();
        writeln!(report, "two_f_{two_f}_preserved = {preserved} of {}", cfg.robustness.n_paths)
            .unwrap();
        all_preserved = all_preserved && preserved == cfg.robustness.n_paths;
    }
    writeln!(report, "all_preserved = {all_preserved}").unwrap();

    out.write("robustness.csv", &csv)?;
    out.write("robustness.txt", &report)?;
    Ok(true)
}
