//! End-to-end gate: one test per headline result, each asserting the stated
//! tolerance and printing the measured values. Criteria run at the default
//! integrator accuracy unless noted.

mod support;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use spinsim_core::dynamics::{
    evolve_zeeman, zeeman_hamiltonian, EvolutionConfig, GAMMA_F1_HZ_PER_GAUSS,
    GAMMA_F2_HZ_PER_GAUSS,
};
use spinsim_core::field::{adiabaticity_ratio, perturb_schedule, FieldSchedule, FieldVector, Regime};
use spinsim_core::phase::{
    decompose, parity_factor, topological_class, wrap_phase, TopologicalClass,
};
use spinsim_core::ramsey::{
    fit_fringe, fit_rabi, phase_shift, run_ramsey, scan_ramsey, simulate_rabi, visibility_vs_gap,
    ClockModel, FringeFit, RamseySequence, CLOCK_RABI_HZ, DEFAULT_GUARD_S,
};
use spinsim_core::spin::{build_spin_operators, Spin, SpinOperatorSet, StateVector};

const BIAS_G: f64 = 0.2;
const REVERSAL_S: f64 = 2e-3;

fn m_zero(two_f: u32) -> (SpinOperatorSet, StateVector) {
    let ops = build_spin_operators(Spin::new(two_f)).unwrap();
    let idx = ops.m_index(0).unwrap();
    let psi0 = StateVector::basis_state(ops.labels(), idx).unwrap();
    (ops, psi0)
}

fn reference_reversal() -> FieldSchedule {
    FieldSchedule::smooth_reversal(BIAS_G, BIAS_G, REVERSAL_S, REVERSAL_S / 2.0).unwrap()
}

fn scan_and_fit(seq: &RamseySequence, detunings: &[f64], cfg: &EvolutionConfig) -> FringeFit {
    let scan = scan_ramsey(|d| ClockModel::new(CLOCK_RABI_HZ, d), detunings, seq, cfg, None)
        .expect("scan completes");
    fit_fringe(&scan, seq.interrogation_s).expect("fringe fit completes")
}

#[test]
fn c01_adiabatic_reversal_phase_dichotomy() {
    let schedule = reference_reversal();
    let cfg = EvolutionConfig::default();

    for (two_f, gamma, target) in
        [(2u32, GAMMA_F1_HZ_PER_GAUSS, PI), (4, GAMMA_F2_HZ_PER_GAUSS, 0.0)]
    {
        let clock = Instant::now();
        let (ops, psi0) = m_zero(two_f);
        let run = evolve_zeeman(&ops, gamma, &schedule, &psi0, &cfg).unwrap();
        let elapsed = clock.elapsed();

        let dec = decompose(&psi0, &run).unwrap();
        let geo = dec.geometric_phase.expect("phase defined at this fidelity");
        let miss = wrap_phase(geo - target).abs();
        println!(
            "c01 two_f={two_f}: geometric={geo:+.6} rad (target {target:+.3}), \
             fidelity={:.6}, dynamical={:+.3e} rad, {elapsed:?}",
            dec.return_fidelity, dec.dynamical_phase
        );
        assert!(dec.return_fidelity > 0.999, "two_f={two_f}: fidelity {}", dec.return_fidelity);
        assert!(miss <= 0.01, "two_f={two_f}: geometric phase {geo:+.6} misses by {miss:.4} rad");
        assert!(elapsed < Duration::from_secs(10), "two_f={two_f}: took {elapsed:?}");
    }
}

#[test]
fn c02_adiabatic_reversal_shifts_the_fringe_by_pi() {
    let clock = Instant::now();
    let detunings = support::linspace(-2500.0, 2500.0, 41);
    let cfg = EvolutionConfig::default();

    let seq_rev =
        RamseySequence::adiabatic_reversal(CLOCK_RABI_HZ, BIAS_G, BIAS_G, REVERSAL_S, DEFAULT_GUARD_S)
            .unwrap();
    let seq_base =
        RamseySequence::baseline(CLOCK_RABI_HZ, FieldVector::along_z(BIAS_G), seq_rev.interrogation_s)
            .unwrap();

    let fit_rev = scan_and_fit(&seq_rev, &detunings, &cfg);
    let fit_base = scan_and_fit(&seq_base, &detunings, &cfg);
    let shift = phase_shift(&fit_rev, &fit_base).unwrap();
    let miss = wrap_phase(shift.shift_rad - PI).abs();
    let elapsed = clock.elapsed();

    println!(
        "c02: shift={:+.4} rad (target +pi), miss={miss:.4}, sigma={:?}, {elapsed:?}",
        shift.shift_rad, shift.sigma_rad
    );
    assert!(miss <= 0.05, "fringe shift {:+.4} rad misses pi by {miss:.4}", shift.shift_rad);
    assert!(elapsed < Duration::from_secs(300), "scan pair took {elapsed:?}");
}

#[test]
fn c03_sudden_reversal_leaves_the_fringe_unshifted() {
    let detunings = support::linspace(-2500.0, 2500.0, 41);
    let cfg = EvolutionConfig::default();
    let t_s = REVERSAL_S + 2.0 * DEFAULT_GUARD_S;

    let seq_sudden =
        RamseySequence::sudden_reversal(CLOCK_RABI_HZ, BIAS_G, 1e-3, 2e-6, t_s).unwrap();
    let seq_base =
        RamseySequence::baseline(CLOCK_RABI_HZ, FieldVector::along_z(BIAS_G), t_s).unwrap();

    let fit_sudden = scan_and_fit(&seq_sudden, &detunings, &cfg);
    let fit_base = scan_and_fit(&seq_base, &detunings, &cfg);
    let shift = phase_shift(&fit_sudden, &fit_base).unwrap();

    println!("c03: shift={:+.4} rad (target 0), sigma={:?}", shift.shift_rad, shift.sigma_rad);
    assert!(
        shift.shift_rad.abs() <= 0.05,
        "sudden reversal shifted the fringe by {:+.4} rad",
        shift.shift_rad
    );
}

#[test]
fn c04_one_millisecond_fringe_period_is_one_kilohertz() {
    let detunings = support::linspace(-2500.0, 2500.0, 41);
    let cfg = EvolutionConfig::default();
    let seq = RamseySequence::baseline(CLOCK_RABI_HZ, FieldVector::along_z(BIAS_G), 1e-3).unwrap();

    let fit = scan_and_fit(&seq, &detunings, &cfg);
    assert!(fit.converged, "fringe fit did not converge");
    println!(
        "c04: fitted period={:.2} Hz, t_eff={:.6e} s (T=1.000000e-3 s)",
        fit.fringe_period_hz, fit.t_eff_s
    );
    assert!(
        (fit.fringe_period_hz - 1000.0).abs() <= 20.0,
        "fitted fringe period {:.2} Hz is outside 1.00 kHz +/- 2%: square pi/2 pulses keep \
         accumulating detuning phase at a reduced rate, stretching the effective time to \
         T + 4*tau_p/pi = {:.6e} s, so a 1 ms free-evolution window with 20.5 us pulses \
         produces a {:.1} Hz fringe",
        fit.fringe_period_hz,
        fit.t_eff_s,
        1.0 / fit.t_eff_s
    );
}

#[test]
fn c05_resonant_rabi_frequency_matches_configuration() {
    let model = ClockModel::new(CLOCK_RABI_HZ, 0.0).unwrap();
    // three full cycles, 121 samples
    let durations = support::linspace(0.0, 3.0 / CLOCK_RABI_HZ, 121);
    let scan = simulate_rabi(&model, &durations, FieldVector::along_z(BIAS_G), None).unwrap();
    let fit = fit_rabi(&scan, CLOCK_RABI_HZ).unwrap();

    println!("c05: fitted Rabi frequency={:.3} Hz (configured {CLOCK_RABI_HZ})", fit.frequency);
    assert!(fit.converged, "Rabi fit did not converge");
    let rel = (fit.frequency - CLOCK_RABI_HZ).abs() / CLOCK_RABI_HZ;
    assert!(rel <= 1e-3, "fitted {:.3} Hz off by {:.2e} relative", fit.frequency, rel);
}

#[test]
fn c06_gap_values_classify_adiabatic_and_sudden() {
    for (b_min, gap_hz) in [(0.2, 140e3), (0.02, 14e3), (0.004, 2.8e3)] {
        let s = FieldSchedule::smooth_reversal(BIAS_G, b_min, REVERSAL_S, REVERSAL_S / 2.0).unwrap();
        let rep = adiabaticity_ratio(&s, GAMMA_F1_HZ_PER_GAUSS).unwrap();
        println!(
            "c06 b_min={b_min}: gap={:.1} Hz (expected {gap_hz}), ratio={:.3e}, {}",
            rep.min_gap_hz, rep.ratio, rep.regime
        );
        assert!(
            (rep.min_gap_hz - gap_hz).abs() <= 0.01 * gap_hz,
            "b_min={b_min}: gap {:.1} Hz, expected {gap_hz}",
            rep.min_gap_hz
        );
        assert_eq!(rep.regime, Regime::Adiabatic, "b_min={b_min}: ratio {:.3}", rep.ratio);
    }

    let s = FieldSchedule::sudden_reversal(BIAS_G, 1e-6, 1e-3, 2e-6).unwrap();
    let rep = adiabaticity_ratio(&s, GAMMA_F1_HZ_PER_GAUSS).unwrap();
    println!(
        "c06 sudden: gap={:.1} Hz (expected 700), ratio={:.3e}, {}",
        rep.min_gap_hz, rep.ratio, rep.regime
    );
    assert!((rep.min_gap_hz - 700.0).abs() <= 7.0, "sudden gap {:.1} Hz", rep.min_gap_hz);
    assert_eq!(rep.regime, Regime::Sudden, "ratio {:.3e}", rep.ratio);
}

#[test]
fn c07_perturbed_paths_preserve_the_class() {
    let base = reference_reversal();
    let cfg = EvolutionConfig::default();
    // 20% of the field floor, four modes per component
    let amplitude = 0.2 * BIAS_G;

    for (two_f, gamma, want) in [
        (2u32, GAMMA_F1_HZ_PER_GAUSS, TopologicalClass::Pi),
        (4, GAMMA_F2_HZ_PER_GAUSS, TopologicalClass::Trivial),
    ] {
        let (ops, psi0) = m_zero(two_f);
        let mut preserved = 0u32;
        for seed in 0..20u64 {
            let path = perturb_schedule(&base, seed, amplitude, 4)
                .unwrap_or_else(|e| panic!("seed {seed} rejected: {e}"));
            let run = evolve_zeeman(&ops, gamma, &path, &psi0, &cfg).unwrap();
            let cls = topological_class(&decompose(&psi0, &run).unwrap());
            if cls.class == want {
                preserved += 1;
            } else {
                println!(
                    "c07 two_f={two_f} seed={seed}: class={} residual={:.3} fidelity={:.4}",
                    cls.class, cls.residual, cls.fidelity
                );
            }
        }
        println!("c07 two_f={two_f}: {preserved}/20 preserved class {want:?}");
        assert_eq!(preserved, 20, "two_f={two_f}: only {preserved}/20 paths kept class {want:?}");
    }
}

#[test]
fn c08_visibility_degrades_as_the_floor_drops() {
    // Span chosen so the fit sees a couple of fringe periods; the top two
    // floors differ in visibility only at the 1e-7 level (both are nearly
    // ideal), which the per-point integrator error at default accuracy
    // (~3e-8, averaged further by the fit) resolves.
    let detunings = support::linspace(-600.0, 600.0, 41);
    let cfg = EvolutionConfig::default();
    let floors = [0.2, 0.02, 0.004];

    let pts = visibility_vs_gap(
        CLOCK_RABI_HZ,
        BIAS_G,
        &floors,
        REVERSAL_S,
        DEFAULT_GUARD_S,
        &detunings,
        &cfg,
        None,
    )
    .unwrap();

    let t_s = REVERSAL_S + 2.0 * DEFAULT_GUARD_S;
    let seq_base =
        RamseySequence::baseline(CLOCK_RABI_HZ, FieldVector::along_z(BIAS_G), t_s).unwrap();
    let fit_base = scan_and_fit(&seq_base, &detunings, &cfg);

    for p in &pts {
        let shift = phase_shift(&p.fit, &fit_base).unwrap();
        println!(
            "c08 b_min={}: visibility={:.9}, shift={:+.4} rad",
            p.b_min_g, p.visibility, shift.shift_rad
        );
        assert!(
            wrap_phase(shift.shift_rad - PI).abs() < 0.3,
            "b_min={}: fringe class left pi (shift {:+.4} rad)",
            p.b_min_g,
            shift.shift_rad
        );
    }
    assert!(
        pts[0].visibility > pts[1].visibility && pts[1].visibility > pts[2].visibility,
        "visibility not strictly decreasing: {:.9}, {:.9}, {:.9}",
        pts[0].visibility,
        pts[1].visibility,
        pts[2].visibility
    );
}

#[test]
fn c09_default_accuracy_tracks_the_fixed_step_reference() {
    let cfg = EvolutionConfig::default();

    // bare-manifold reversals
    let schedule = reference_reversal();
    for (two_f, gamma) in [(2u32, GAMMA_F1_HZ_PER_GAUSS), (4, GAMMA_F2_HZ_PER_GAUSS)] {
        let (ops, psi0) = m_zero(two_f);
        let run = evolve_zeeman(&ops, gamma, &schedule, &psi0, &cfg).unwrap();
        let reference = support::fixed_step_final(
            |t| zeeman_hamiltonian(&ops, gamma, schedule.field_at(t).unwrap()).unwrap(),
            psi0.amplitudes(),
            schedule.t_start(),
            schedule.t_end(),
            support::ORACLE_DT_S,
        );
        let diff = (run.final_state.amplitudes() - &reference).norm();
        println!(
            "c09 bare two_f={two_f}: defect={:.2e}, reference diff={:.2e}",
            run.max_norm_defect, diff
        );
        assert!(run.max_norm_defect < 1e-10, "two_f={two_f}: defect {:.2e}", run.max_norm_defect);
        assert!(diff < 1e-6, "two_f={two_f}: reference diff {diff:.2e}");
    }

    // interferometer interrogation windows at a representative detuning
    let t_s = REVERSAL_S + 2.0 * DEFAULT_GUARD_S;
    let model = ClockModel::new(CLOCK_RABI_HZ, 1000.0).unwrap();
    let sequences = [
        (
            "adiabatic",
            RamseySequence::adiabatic_reversal(CLOCK_RABI_HZ, BIAS_G, BIAS_G, REVERSAL_S, DEFAULT_GUARD_S)
                .unwrap(),
        ),
        ("sudden", RamseySequence::sudden_reversal(CLOCK_RABI_HZ, BIAS_G, 1e-3, 2e-6, t_s).unwrap()),
        ("baseline", RamseySequence::baseline(CLOCK_RABI_HZ, FieldVector::along_z(BIAS_G), t_s).unwrap()),
    ];
    for (name, seq) in sequences {
        let out = run_ramsey(&model, &seq, &cfg, None).unwrap();
        let t0 = seq.schedule.t_start();
        // split the reference at the field's derivative kinks (ramp edges,
        // guard junctions); striding over one costs the fixed-step rule
        // |dH'| dt^2 / 8 ~ 5e-6 in a single step, swamping the comparison
        let reference = support::fixed_step_through(
            |t| model.hamiltonian(seq.schedule.field_at(t).unwrap(), false).unwrap(),
            out.after_pulse1.amplitudes(),
            t0,
            t0 + seq.interrogation_s,
            &seq.schedule.breakpoints(),
            support::ORACLE_DT_S,
        );
        let diff = (out.after_interrogation.amplitudes() - &reference).norm();
        println!(
            "c09 {name}: defect={:.2e}, reference diff={:.2e}",
            out.interrogation.max_norm_defect, diff
        );
        assert!(
            out.interrogation.max_norm_defect < 1e-10,
            "{name}: defect {:.2e}",
            out.interrogation.max_norm_defect
        );
        assert!(diff < 1e-6, "{name}: reference diff {diff:.2e}");
    }
}

#[test]
fn c10_parity_factor_alternates_with_f() {
    for f in 0..=6u32 {
        let sign = parity_factor(Spin::new(2 * f), 51).unwrap();
        let want = if f % 2 == 0 { 1 } else { -1 };
        assert_eq!(sign, want, "F={f}");
    }
    println!("c10: parity factor alternates (-1)^F for F=0..=6");
}
