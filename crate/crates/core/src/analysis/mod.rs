// SPDX-License-Identifier: Apache-2.0

//! Trace fitting and the magnetometry figures of merit.
//!
//! `δB_min = σ(t)/(γ α τ C)`, `η = δB_min·√t` and bandwidth `1/T₂`. With
//! shot-noise-limited counting, `σ(t) = 1/√(N_ph·t/τ)`, which makes `η`
//! independent of `t`. Inputs here are in SI units.

mod fit;

pub use fit::{fit_signal, periodogram, FitErrors, FitModel, FitOptions, RabiFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagate::TraceRecord;

/// NV gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const GAMMA_NV: f64 = 2.0 * std::f64::consts::PI * 28.8e9;

/// Phase-accumulation factors `g_eff/g`.
pub const ALPHA_SINGLE: f64 = 0.5;
pub const ALPHA_DOUBLE: f64 = 0.25;

/// Fits the population trace `p1`, weighted by the trace's standard errors.
pub fn fit_damped_rabi(trace: &TraceRecord) -> Result<RabiFit> {
    fit_damped_rabi_with(trace, &FitOptions::default())
}

pub fn fit_damped_rabi_with(trace: &TraceRecord, opts: &FitOptions) -> Result<RabiFit> {
    fit_signal(&trace.times, &trace.p1, trace.stderr.as_deref(), opts)
}

fn require_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    Ok(())
}

/// `σ(t)/(γ α τ C)`.
pub fn min_field(sigma_t: f64, tau: f64, alpha: f64, contrast: f64, gamma: f64) -> Result<f64> {
    require_positive(&[
        ("sigma_t", sigma_t),
        ("tau", tau),
        ("alpha", alpha),
        ("contrast", contrast),
        ("gamma", gamma),
    ])?;
    Ok(sigma_t / (gamma * alpha * tau * contrast))
}

/// `η = δB_min·√t`.
pub fn sensitivity(sigma_t: f64, tau: f64, alpha: f64, contrast: f64, gamma: f64, t: f64) -> Result<f64> {
    require_positive(&[("t", t)])?;
    Ok(min_field(sigma_t, tau, alpha, contrast, gamma)? * t.sqrt())
}

/// Shot-noise closed form `1/(γ α C √(N_ph τ))`.
pub fn sensitivity_shot_noise(n_ph: f64, tau: f64, alpha: f64, contrast: f64, gamma: f64) -> Result<f64> {
    require_positive(&[
        ("n_ph", n_ph),
        ("tau", tau),
        ("alpha", alpha),
        ("contrast", contrast),
        ("gamma", gamma),
    ])?;
    Ok(1.0 / (gamma * alpha * contrast * (n_ph * tau).sqrt()))
}

/// `1/T₂`.
pub fn bandwidth(t2: f64) -> Result<f64> {
    require_positive(&[("T2", t2)])?;
    Ok(1.0 / t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInputs {
    /// rad·s⁻¹·T⁻¹.
    pub gamma: f64,
    pub alpha: f64,
    /// Single-shot sensing time, s.
    pub tau: f64,
    pub contrast: f64,
    /// Photons per shot.
    pub n_ph: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    /// Total measurement time, s.
    pub t: f64,
    pub sigma: f64,
    pub delta_b_min: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub inputs: SensitivityInputs,
    /// Fitted coherence time, s.
    pub t2: f64,
    /// Fitted effective Rabi rate, rad/s.
    pub g_eff: f64,
    pub bandwidth: f64,
    pub eta_closed_form: f64,
    pub rows: Vec<SensitivityRow>,
}

/// Shot-noise-limited `δB_min(t)` and `η(t)` at the total times `times` (s).
pub fn sensitivity_report(inputs: &SensitivityInputs, t2: f64, g_eff: f64, times: &[f64]) -> Result<SensitivityReport> {
    let SensitivityInputs {
        gamma,
        alpha,
        tau,
        contrast,
        n_ph,
    } = *inputs;
    let rows = times
        .iter()
        .map(|&t| {
            require_positive(&[("t", t), ("n_ph", n_ph), ("tau", tau)])?;
            let sigma = 1.0 / (n_ph * t / tau).sqrt();
            let delta_b_min = min_field(sigma, tau, alpha, contrast, gamma)?;
            Ok(SensitivityRow {
                t,
                sigma,
                delta_b_min,
                eta: delta_b_min * t.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityReport {
        inputs: *inputs,
        t2,
        g_eff,
        bandwidth: bandwidth(t2)?,
        eta_closed_form: sensitivity_shot_noise(n_ph, tau, alpha, contrast, gamma)?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn formula_pins() {
        assert_eq!(min_field(1.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        let a = min_field(0.3, 2e-4, 0.25, 0.3, GAMMA_NV).unwrap();
        let b = min_field(0.3, 4e-4, 0.25, 0.3, GAMMA_NV).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-15);
        assert!(min_field(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(min_field(1.0, -1.0, 1.0, 1.0, 1.0).is_err());

        let bw = bandwidth(1.1e-6).unwrap();
        assert!((900e3..=920e3).contains(&bw), "{bw}");
        let bw = bandwidth(1.43e-3).unwrap();
        assert!((695.0..=705.0).contains(&bw), "{bw}");
        assert_eq!(bandwidth(1.0).unwrap(), 1.0);
        assert!(bandwidth(0.0).is_err());
    }

    #[test]
    fn double_drive_wins_at_equal_photon_budget() {
        let single = sensitivity_shot_noise(0.03, 60e-6, ALPHA_SINGLE, 0.3, GAMMA_NV).unwrap();
        let double = sensitivity_shot_noise(0.03, 1.43e-3, ALPHA_DOUBLE, 0.3, GAMMA_NV).unwrap();
        assert_relative_eq!(double / single, 2.0 * (60.0f64 / 1430.0).sqrt(), max_relative = 1e-12);
        assert!((double / single - 0.41).abs() < 0.01);
        let brighter = sensitivity_shot_noise(0.06, 60e-6, ALPHA_SINGLE, 0.3, GAMMA_NV).unwrap();
        assert_relative_eq!(single / brighter, 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn report_routes_agree() {
        let inputs = SensitivityInputs {
            gamma: GAMMA_NV,
            alpha: ALPHA_DOUBLE,
            tau: 1.43e-3,
            contrast: 0.3,
            n_ph: 0.03,
        };
        let times: Vec<f64> = (0..20).map(|k| 1.43e-3 * 10f64.powf(k as f64 / 5.0)).collect();
        let r = sensitivity_report(&inputs, 1.43e-3, 1.0, &times).unwrap();
        for row in &r.rows {
            assert_relative_eq!(row.eta, r.eta_closed_form, max_relative = 1e-12);
        }
        assert_relative_eq!(r.bandwidth, 1.0 / 1.43e-3);
    }

    proptest! {
        #[test]
        fn min_field_is_homogeneous_in_sigma(
            sigma in 1e-6f64..1e3,
            k in 1e-3f64..1e3,
            tau in 1e-9f64..1.0,
            alpha in 0.01f64..1.0,
            c in 0.01f64..1.0,
        ) {
            let a = min_field(k * sigma, tau, alpha, c, GAMMA_NV).unwrap();
            let b = k * min_field(sigma, tau, alpha, c, GAMMA_NV).unwrap();
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
        }

        #[test]
        fn eta_is_min_field_times_root_t(sigma in 1e-3f64..10.0, t in 1e-6f64..1e3) {
            let eta = sensitivity(sigma, 1e-4, 0.5, 0.3, GAMMA_NV, t).unwrap();
            let dbm = min_field(sigma, 1e-4, 0.5, 0.3, GAMMA_NV).unwrap();
            prop_assert!((eta - dbm * t.sqrt()).abs() <= 1e-14 * eta);
        }
    }
}
