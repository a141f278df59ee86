//! Damped least-squares fitting of cosine models.
//!
//! The single model fitted anywhere in this crate is
//! y(x) = C + A·cos(2π·f·x + φ). For Ramsey fringes x is the detuning in Hz
//! and f is the effective interrogation time in seconds; for Rabi scans x is
//! the pulse duration in seconds and f is the Rabi frequency in Hz.
//!
//! Cosine least squares is multimodal in f, so the solver first grid-searches
//! f around the caller's estimate, solving the linear subproblem
//! (a·cos + b·sin + C) exactly per trial, then polishes all four parameters
//! with Levenberg-Marquardt.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use thiserror::Error;

use crate::phase::wrap_phase;

const MAX_ITERATIONS: usize = 200;
const RELATIVE_STEP_TOL: f64 = 1e-8;
/// Relative SSE improvement below which the iteration is stationary.
const RELATIVE_SSE_TOL: f64 = 1e-15;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("x and y lengths differ ({x} vs {y})")]
    MismatchedLengths { x: usize, y: usize },
    #[error("data contains non-finite values")]
    NonFiniteData,
    #[error("frequency initializer must be positive and finite, got {0}")]
    BadFrequencyInit(f64),
    #[error("data spans {span_cycles:.3} fringe periods at the initial frequency; need at least 1")]
    SpanTooNarrow { span_cycles: f64 },
}

/// Result of fitting y = C + A·cos(2π·f·x + φ).
///
/// Normalized so A ≥ 0, f > 0 and φ ∈ (−π, π]. When the fit did not reach
/// parameter stationarity within the iteration budget, `converged` is false
/// and the fields hold the best parameters found (never silently wrong).
#[derive(Clone, Copy, Debug)]
pub struct CosineFit {
    pub amplitude: f64,
    /// Cycles per unit of x.
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual_rms: f64,
    /// Covariance of (amplitude, frequency, phase, offset) from s²(JᵀJ)⁻¹;
    /// absent when JᵀJ is singular or the fit has no residual degrees of
    /// freedom.
    pub covariance: Option<[[f64; 4]; 4]>,
}

impl CosineFit {
    /// One-sigma standard errors in parameter order, where available.
    pub fn sigmas(&self) -> Option<[f64; 4]> {
        self.covariance.map(|c| {
            [
                c[0][0].max(0.0).sqrt(),
                c[1][1].max(0.0).sqrt(),
                c[2][2].max(0.0).sqrt(),
                c[3][3].max(0.0).sqrt(),
            ]
        })
    }

    pub fn phase_sigma(&self) -> Option<f64> {
        self.sigmas().map(|s| s[2])
    }
}

fn model(params: &Vector4<f64>, x: f64) -> f64 {
    let u = std::f64::consts::TAU * params[1] * x + params[2];
    params[3] + params[0] * u.cos()
}

fn residuals(params: &Vector4<f64>, x: &[f64], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(y).map(|(&xi, &yi)| model(params, xi) - yi))
}

fn jacobian(params: &Vector4<f64>, x: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(x.len(), 4);
    for (i, &xi) in x.iter().enumerate() {
        let u = std::f64::consts::TAU * params[1] * xi + params[2];
        let (sin_u, cos_u) = u.sin_cos();
        j[(i, 0)] = cos_u;
        j[(i, 1)] = -params[0] * std::f64::consts::TAU * xi * sin_u;
        j[(i, 2)] = -params[0] * sin_u;
        j[(i, 3)] = 1.0;
    }
    j
}

/// Exact linear solve for (a, b, C) in y ≈ a·cos(2πfx) + b·sin(2πfx) + C.
fn linear_subfit(x: &[f64], y: &[f64], freq: f64) -> Option<(f64, f64, f64, f64)> {
    let n = x.len() as f64;
    let (mut sc, mut ss, mut scc, mut sss, mut scs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sy, mut syc, mut sys) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let (s, c) = (std::f64::consts::TAU * freq * xi).sin_cos();
        sc += c;
        ss += s;
        scc += c * c;
        sss += s * s;
        scs += c * s;
        sy += yi;
        syc += yi * c;
        sys += yi * s;
    }
    let normal = Matrix3::new(scc, scs, sc, scs, sss, ss, sc, ss, n);
    let rhs = Vector3::new(syc, sys, sy);
    let sol = normal.lu().solve(&rhs)?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    let mut sse = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let (s, co) = (std::f64::consts::TAU * freq * xi).sin_cos();
        let r = a * co + b * s + c - yi;
        sse += r * r;
    }
    Some((a, b, c, sse))
}

/// Flips signs so A ≥ 0, f > 0 and φ lands in (−π, π].
fn normalize(params: &mut Vector4<f64>) {
    if params[1] < 0.0 {
        params[1] = -params[1];
        params[2] = -params[2];
    }
    if params[0] < 0.0 {
        params[0] = -params[0];
        params[2] += std::f64::consts::PI;
    }
    params[2] = wrap_phase(params[2]);
}

pub fn fit_cosine(x: &[f64], y: &[f64], freq_init: f64) -> Result<CosineFit, FitError> {
    fit_cosine_with_budget(x, y, freq_init, MAX_ITERATIONS)
}

/// Same as [`fit_cosine`] with an explicit iteration budget, so tests can
/// exercise the non-converged path deterministically.
pub fn fit_cosine_with_budget(
    x: &[f64],
    y: &[f64],
    freq_init: f64,
    max_iterations: usize,
) -> Result<CosineFit, FitError> {
    if x.len() != y.len() {
        return Err(FitError::MismatchedLengths { x: x.len(), y: y.len() });
    }
    if x.len() < 5 {
        return Err(FitError::TooFewPoints { needed: 5, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::NonFiniteData);
    }
    if !(freq_init.is_finite() && freq_init > 0.0) {
        return Err(FitError::BadFrequencyInit(freq_init));
    }
    let x_min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span_cycles = (x_max - x_min) * freq_init;
    if span_cycles < 1.0 {
        return Err(FitError::SpanTooNarrow { span_cycles });
    }

    // Coarse stage: scan f over a bracket around the estimate and keep the
    // trial whose linear subproblem fits best.
    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    let n_grid = 241;
    for i in 0..n_grid {
        let f = freq_init * (0.7 + 0.6 * i as f64 / (n_grid - 1) as f64);
        if let Some((a, b, c, sse)) = linear_subfit(x, y, f) {
            if best.map_or(true, |(_, _, _, _, best_sse)| sse < best_sse) {
                best = Some((f, a, b, c, sse));
            }
        }
    }
    let (f0, a0, b0, c0, _) = best.ok_or(FitError::NonFiniteData)?;
    let mut params =
        Vector4::new(a0.hypot(b0), f0, f64::atan2(-b0, a0), c0);

    // Polish stage: Levenberg-Marquardt on all four parameters.
    let mut r = residuals(&params, x, y);
    let mut sse = r.norm_squared();
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;

    let scale_y = (y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - y.iter().cloned().fold(f64::INFINITY, f64::min))
    .max(1e-30);
    let scales = Vector4::new(scale_y, freq_init, 1.0, scale_y);

    while iterations < max_iterations {
        iterations += 1;
        let j = jacobian(&params, x);
        let jtj_dyn = j.transpose() * &j;
        let jtj = Matrix4::from_fn(|i, k| jtj_dyn[(i, k)]);
        let gradient_dyn = j.transpose() * &r;
        let gradient = Vector4::from_fn(|i, _| gradient_dyn[i]);

        let max_diag = (0..4).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let mut damped = jtj;
        for i in 0..4 {
            // floor keeps the system solvable when a column degenerates
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag).max(1e-300);
        }
        let Some(step) = damped.lu().solve(&(-gradient)) else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
            continue;
        };

        let trial = params + step;
        let trial_r = residuals(&trial, x, y);
        let trial_sse = trial_r.norm_squared();
        if trial_sse <= sse {
            let improvement = (sse - trial_sse) / sse.max(1e-300);
            let small_step = (0..4)
                .all(|i| step[i].abs() <= RELATIVE_STEP_TOL * params[i].abs().max(scales[i]));
            params = trial;
            r = trial_r;
            sse = trial_sse;
            lambda = (lambda / 10.0).max(1e-12);
            if small_step || improvement < RELATIVE_SSE_TOL {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
        }
    }

    normalize(&mut params);
    let r = residuals(&params, x, y);
    let sse = r.norm_squared();
    let n = x.len();
    let residual_rms = (sse / n as f64).sqrt();

    let covariance = if n > 4 {
        let j = jacobian(&params, x);
        let jtj_dyn = j.transpose() * &j;
        let jtj = Matrix4::from_fn(|i, k| jtj_dyn[(i, k)]);
        jtj.try_inverse().map(|inv| {
            let s2 = sse / (n - 4) as f64;
            let mut c = [[0.0; 4]; 4];
            for (i, row) in c.iter_mut().enumerate() {
                for (k, entry) in row.iter_mut().enumerate() {
                    *entry = s2 * inv[(i, k)];
                }
            }
            c
        })
    } else {
        None
    };

    Ok(CosineFit {
        amplitude: params[0],
        frequency: params[1],
        phase: params[2],
        offset: params[3],
        converged,
        iterations,
        residual_rms,
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn detuning_grid(n: usize, half_span: f64) -> Vec<f64> {
        (0..n).map(|i| -half_span + 2.0 * half_span * i as f64 / (n - 1) as f64).collect()
    }

    fn cosine(x: &[f64], a: f64, f: f64, phi: f64, c: f64) -> Vec<f64> {
        x.iter().map(|&xi| c + a * (std::f64::consts::TAU * f * xi + phi).cos()).collect()
    }

    #[test]
    fn noiseless_fringe_is_recovered_to_machine_level() {
        let x = detuning_grid(41, 2500.0);
        let y = cosine(&x, 0.5, 1e-3, 0.0, 0.5);
        let fit = fit_cosine(&x, &y, 1.05e-3).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.amplitude, 0.5, epsilon = 1e-6);
        assert_relative_eq!(fit.frequency, 1e-3, max_relative = 1e-6);
        assert!(fit.phase.abs() < 1e-6);
        assert_relative_eq!(fit.offset, 0.5, epsilon = 1e-6);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn pi_phase_is_recovered_on_the_positive_branch() {
        let x = detuning_grid(41, 2500.0);
        let y = cosine(&x, 0.5, 1e-3, std::f64::consts::PI, 0.5);
        let fit = fit_cosine(&x, &y, 1e-3).unwrap();
        assert!(fit.converged);
        assert!(wrap_phase(fit.phase - std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn negative_amplitude_input_normalizes_to_shifted_phase() {
        let x = detuning_grid(33, 2000.0);
        // -0.4 cos(u) = 0.4 cos(u + pi)
        let y = cosine(&x, -0.4, 1.2e-3, 0.3, 0.5);
        let fit = fit_cosine(&x, &y, 1.1e-3).unwrap();
        assert!(fit.converged);
        assert!(fit.amplitude > 0.0);
        assert_relative_eq!(fit.amplitude, 0.4, epsilon = 1e-6);
        assert!(
            wrap_phase(fit.phase - (0.3 + std::f64::consts::PI)).abs() < 1e-6,
            "phase {}",
            fit.phase
        );
    }

    #[test]
    fn initializer_may_be_a_quarter_off() {
        let x = detuning_grid(61, 3000.0);
        let y = cosine(&x, 0.31, 2.2e-3, -1.1, 0.55);
        for f_init in [1.8e-3, 2.2e-3, 2.7e-3] {
            let fit = fit_cosine(&x, &y, f_init).unwrap();
            assert!(fit.converged, "f_init {f_init}");
            assert_relative_eq!(fit.frequency, 2.2e-3, max_relative = 1e-6);
            assert!(wrap_phase(fit.phase + 1.1).abs() < 1e-5);
        }
    }

    #[test]
    fn noisy_phase_lands_within_three_sigma_almost_always() {
        let x = detuning_grid(41, 2500.0);
        let truth = cosine(&x, 0.45, 1e-3, 0.7, 0.5);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut hits = 0;
        let trials = 200;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = truth.iter().map(|&v| v + noise.sample(&mut rng)).collect();
            let fit = fit_cosine(&x, &y, 1e-3).unwrap();
            let sigma_phi = fit.phase_sigma().expect("covariance available");
            if wrap_phase(fit.phase - 0.7).abs() < 3.0 * sigma_phi {
                hits += 1;
            }
        }
        assert!(hits * 100 >= trials * 95, "only {hits}/{trials} within 3 sigma");
    }

    #[test]
    fn exhausted_budget_is_flagged_not_hidden() {
        let x = detuning_grid(41, 2500.0);
        let truth = cosine(&x, 0.45, 1e-3, 0.7, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let y: Vec<f64> = truth.iter().map(|&v| v + noise.sample(&mut rng)).collect();
        let fit = fit_cosine_with_budget(&x, &y, 1e-3, 1).unwrap();
        assert!(!fit.converged);
        assert!(fit.amplitude.is_finite());
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let x = detuning_grid(41, 2500.0);
        let y = cosine(&x, 0.5, 1e-3, 0.0, 0.5);
        assert!(matches!(
            fit_cosine(&x[..4], &y[..4], 1e-3),
            Err(FitError::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_cosine(&x[..10], &y, 1e-3),
            Err(FitError::MismatchedLengths { .. })
        ));
        assert!(matches!(fit_cosine(&x, &y, 0.0), Err(FitError::BadFrequencyInit(_))));
        assert!(matches!(fit_cosine(&x, &y, f64::NAN), Err(FitError::BadFrequencyInit(_))));
        let mut y_bad = y.clone();
        y_bad[3] = f64::NAN;
        assert!(matches!(fit_cosine(&x, &y_bad, 1e-3), Err(FitError::NonFiniteData)));
        // 41 points over a twentieth of a period cannot constrain the model
        assert!(matches!(
            fit_cosine(&x, &y, 1e-5),
            Err(FitError::SpanTooNarrow { .. })
        ));
    }

    #[test]
    fn rabi_style_scan_in_time_units_fits_too() {
        let durations: Vec<f64> = (0..81).map(|i| 400e-6 * i as f64 / 80.0).collect();
        let y = cosine(&durations, -0.5, 12.2e3, 0.0, 0.5); // p = 1 - sin^2(pi f t)
        let fit = fit_cosine(&durations, &y, 12.0e3).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.frequency, 12.2e3, max_relative = 1e-9);
    }
}
