// SPDX-License-Identifier: Apache-2.0

//! Fluorescence readout: which axis is measured, the stroboscopic sampling
//! grid that hides the drive rotations, and Poisson photon counting.
//!
//! The measured population is `P(−a) = (1 − r·a)/2` for the protected axis
//! `a` in the first rotating frame. The first drive dresses along `x`, so a
//! single-drive sequence prepares `|+x⟩` and reads `x` (a π/2 pulse on
//! either side of the free evolution). With the second drive on, the
//! doubly-dressed axis is `n = (0, cos ψ, sin ψ)`, which is `z` at the
//! default `ψ = π/2`, so preparation and readout are plain `σ_z`.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriveConfig, Frame};
use crate::noise::{self, CHANNEL_PHOTONS};
use crate::pauli::Field;
use crate::propagate::{self, TraceRecord};

/// Relative tolerance for "sits on the strobe grid".
const STROBE_TOLERANCE: f64 = 1e-9;

/// Axis protected by the active drives, in first-rotating-frame coordinates.
pub fn protected_axis(cfg: &DriveConfig) -> Field {
    match cfg.drive_count() {
        0 => Field::z(),
        1 => Field::x(),
        _ => cfg.drive2_axis(),
    }
}

/// `P(−a)` for a Bloch vector already expressed in the first rotating frame.
pub fn readout_population(cfg: &DriveConfig, bloch_ip1: &Field) -> f64 {
    0.5 * (1.0 - bloch_ip1.dot(&protected_axis(cfg)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceModel {
    /// Fractional dip between bright and dark state.
    pub contrast: f64,
    /// Expected photons detected per shot from the bright state.
    pub n_ph: f64,
}

impl Default for FluorescenceModel {
    fn default() -> Self {
        Self {
            contrast: 0.3,
            n_ph: 0.03,
        }
    }
}

impl FluorescenceModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::invalid("contrast must lie in [0, 1]"));
        }
        if !(self.n_ph > 0.0) || !self.n_ph.is_finite() {
            return Err(Error::invalid("n_ph must be finite and > 0"));
        }
        Ok(())
    }

    /// Expected normalized signal `1 − C·p₁`.
    pub fn expected_signal(&self, p1: f64) -> f64 {
        1.0 - self.contrast * p1
    }

    /// Shot-noise level of the normalized signal after `repetitions` shots.
    pub fn shot_noise(&self, repetitions: u64) -> f64 {
        1.0 / (self.n_ph * repetitions as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StroboscopicGrid {
    /// `τ_Ω₁ = 2π/Ω₁`.
    pub period: f64,
    /// `1..=N_max`.
    pub indices: Vec<u64>,
}

impl StroboscopicGrid {
    pub fn times(&self) -> Vec<f64> {
        self.indices.iter().map(|&n| n as f64 * self.period).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Whether `t` is an integer multiple of the period (zero included).
    pub fn contains(&self, t: f64) -> bool {
        on_grid(self.period, t)
    }
}

fn on_grid(period: f64, t: f64) -> bool {
    let n = (t / period).round();
    n >= 0.0 && (t - n * period).abs() <= STROBE_TOLERANCE * t.abs().max(period)
}

/// First-drive period.
pub fn strobe_period(cfg: &DriveConfig) -> Result<f64> {
    if !(cfg.omega1 > 0.0) {
        return Err(Error::invalid("stroboscopic sampling needs Omega1 > 0"));
    }
    Ok(2.0 * std::f64::consts::PI / cfg.omega1)
}

/// All `N ≥ 1` with `N·τ_Ω₁ ≤ t_max`.
pub fn strobe_grid(cfg: &DriveConfig, t_max: f64) -> Result<StroboscopicGrid> {
    let period = strobe_period(cfg)?;
    let n_max = if t_max >= period {
        // absorb rounding in t_max / period
        (t_max / period * (1.0 + 1e-12)).floor() as u64
    } else {
        0
    };
    Ok(StroboscopicGrid {
        period,
        indices: (1..=n_max).collect(),
    })
}

/// Readout signal of a propagated trace: `P(−a)` at each stroboscopic sample.
///
/// The trace must carry Bloch data in the lab or first rotating frame and
/// every sample time must be a multiple of `τ_Ω₁`.
pub fn visible_signal(trace: &TraceRecord, cfg: &DriveConfig) -> Result<TraceRecord> {
    let period = strobe_period(cfg)?;
    if let Some(bad) = trace.times.iter().find(|&&t| !on_grid(period, t)) {
        return Err(Error::invalid(format!(
            "sample at t = {bad} is not a multiple of the strobe period {period}"
        )));
    }
    if trace.bloch.len() != trace.times.len() {
        return Err(Error::invalid("visible_signal needs a trace with Bloch vectors"));
    }
    if !matches!(trace.frame, Frame::Lab | Frame::Ip1) {
        return Err(Error::invalid("visible_signal reads traces in the lab or IP1 frame"));
    }
    let p1 = trace
        .times
        .iter()
        .zip(&trace.bloch)
        .map(|(&t, b)| {
            let b = Field::new(b[0], b[1], b[2]);
            let b = propagate::transform_bloch(cfg, &b, t, trace.frame, Frame::Ip1);
            readout_population(cfg, &b)
        })
        .collect();
    let mut out = TraceRecord::from_signal(Frame::Ip1, trace.times.clone(), p1);
    out.meta = trace.meta.clone();
    out.meta.strobe_period = Some(period);
    Ok(out)
}

/// Photon counts for one pass over a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonSample {
    pub counts: Vec<u64>,
    /// Counts divided by the bright-state expectation `N·N_ph`.
    pub normalized: Vec<f64>,
    /// `1/√(N_ph·N)` at each point.
    pub sigma: Vec<f64>,
    pub repetitions: Vec<u64>,
}

impl PhotonSample {
    /// Population estimate `(1 − normalized)/C`; `None` without contrast.
    pub fn population_estimate(&self, fm: &FluorescenceModel) -> Option<Vec<f64>> {
        (fm.contrast > 0.0).then(|| {
            self.normalized
                .iter()
                .map(|s| (1.0 - s) / fm.contrast)
                .collect()
        })
    }
}

/// Draws Poisson counts for populations `p1`, point `i` accumulating
/// `repetitions[i]` shots. Counts come from the photon stream of trajectory
/// `replica` under `seed`.
pub fn photon_sample(
    p1: &[f64],
    fm: &FluorescenceModel,
    repetitions: &[u64],
    seed: u64,
    replica: u64,
) -> Result<PhotonSample> {
    fm.validate()?;
    if p1.len() != repetitions.len() {
        return Err(Error::invalid("one repetition count per sample is required"));
    }
    if repetitions.iter().any(|&n| n == 0) {
        return Err(Error::invalid("repetitions must be >= 1"));
    }
    let mut rng = noise::stream_rng(seed, replica, CHANNEL_PHOTONS);
    let mut counts = Vec::with_capacity(p1.len());
    let mut normalized = Vec::with_capacity(p1.len());
    let mut sigma = Vec::with_capacity(p1.len());
    for (&p, &n) in p1.iter().zip(repetitions) {
        let bright = fm.n_ph * n as f64;
        let mean = bright * fm.expected_signal(p.clamp(0.0, 1.0));
        let k = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("Poisson mean {mean}: {e}")))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        counts.push(k);
        normalized.push(k as f64 / bright);
        sigma.push(fm.shot_noise(n));
    }
    Ok(PhotonSample {
        counts,
        normalized,
        sigma,
        repetitions: repetitions.to_vec(),
    })
}

/// Repetitions accumulated by time `t` when each shot lasts `tau`: `⌊t/τ⌋`, at least one.
pub fn repetitions_for(t: f64, tau: f64) -> u64 {
    ((t / tau) * (1.0 + 1e-12)).floor().max(1.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn scaled() -> DriveConfig {
        DriveConfig::on_resonance(TAU * 500.0, TAU * 10.0, TAU * 1.5, TAU * 0.2, 0.0)
    }

    #[test]
    fn strobe_grid_examples() {
        let grid = strobe_grid(&scaled(), 1.05).unwrap();
        assert_relative_eq!(grid.period, 0.1, max_relative = 1e-15);
        assert_eq!(grid.indices, (1..=10).collect::<Vec<_>>());
        for (t, n) in grid.times().iter().zip(1..) {
            assert!((t - n as f64 * 0.1).abs() <= 1e-12 * t);
        }
        assert!(strobe_grid(&scaled(), 0.05).unwrap().is_empty());
        assert_eq!(strobe_grid(&scaled(), 1.0).unwrap().len(), 10);

        let bench = DriveConfig::on_resonance(TAU * 1.596e9, TAU * 3.363e6, TAU * 505e3, 0.0, 0.0);
        assert_relative_eq!(strobe_period(&bench).unwrap(), 297.354e-9, max_relative = 1e-4);

        let undriven = DriveConfig { omega1: 0.0, ..scaled() };
        assert!(strobe_grid(&undriven, 1.0).is_err());
    }

    #[test]
    fn axis_choice() {
        let cfg = scaled();
        assert_relative_eq!((protected_axis(&cfg) - Field::z()).norm(), 0.0, epsilon = 1e-15);
        let single = DriveConfig { omega2: 0.0, ..cfg };
        assert_eq!(protected_axis(&single), Field::x());
        assert_eq!(readout_population(&single, &Field::x()), 0.0);
        assert_eq!(readout_population(&single, &-Field::x()), 1.0);
    }

    #[test]
    fn off_grid_trace_rejected() {
        let cfg = scaled();
        let mut trace = TraceRecord::empty(Frame::Ip1);
        trace.times = vec![0.1, 0.15];
        trace.p0 = vec![1.0, 1.0];
        trace.p1 = vec![0.0, 0.0];
        trace.bloch = vec![[0.0, 0.0, 1.0]; 2];
        assert!(visible_signal(&trace, &cfg).is_err());
        trace.times = vec![0.1, 0.2];
        let out = visible_signal(&trace, &cfg).unwrap();
        assert_eq!(out.p1, vec![0.0, 0.0]);
        assert_eq!(out.meta.strobe_period, Some(strobe_period(&cfg).unwrap()));
    }

    #[test]
    fn shot_noise_vanishes_for_bright_sources() {
        let fm = FluorescenceModel {
            contrast: 0.3,
            n_ph: 1e8,
        };
        let p1: Vec<f64> = (0..50).map(|k| 0.5 * (1.0 - (0.3 * k as f64).cos())).collect();
        let s = photon_sample(&p1, &fm, &vec![1; p1.len()], 4, 0).unwrap();
        for (x, p) in s.normalized.iter().zip(&p1) {
            assert!((x - fm.expected_signal(*p)).abs() < 1e-3);
        }
        let est = s.population_estimate(&fm).unwrap();
        for (x, p) in est.iter().zip(&p1) {
            assert!((x - p).abs() < 3e-3);
        }
    }

    #[test]
    fn zero_contrast_is_flat() {
        let fm = FluorescenceModel {
            contrast: 0.0,
            n_ph: 50.0,
        };
        let s0 = photon_sample(&[0.0; 400], &fm, &[100; 400], 8, 0).unwrap();
        let s1 = photon_sample(&[1.0; 400], &fm, &[100; 400], 8, 0).unwrap();
        // same stream, same mean: identical draws whatever the population
        assert_eq!(s0.counts, s1.counts);
        assert!(s0.population_estimate(&fm).is_none());
    }

    #[test]
    fn quadrupling_repetitions_halves_the_spread() {
        let fm = FluorescenceModel::default();
        let replicas = 4000;
        let spread = |n: u64| {
            let xs: Vec<f64> = (0..replicas)
                .map(|r| photon_sample(&[0.2], &fm, &[n], 21, r).unwrap().normalized[0])
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        };
        let ratio = spread(40_000) / spread(160_000);
        // standard error of a ratio of two sample deviations, ~√(1/N) relative
        assert!((ratio - 2.0).abs() < 2.0 * 3.0 * (1.0 / replicas as f64).sqrt(), "ratio {ratio}");
        assert_relative_eq!(fm.shot_noise(400) / fm.shot_noise(1600), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn bad_inputs() {
        let fm = FluorescenceModel::default();
        assert!(photon_sample(&[0.1], &fm, &[0], 1, 0).is_err());
        assert!(photon_sample(&[0.1, 0.2], &fm, &[1], 1, 0).is_err());
        assert!(FluorescenceModel { contrast: 1.5, n_ph: 1.0 }.validate().is_err());
        assert_eq!(repetitions_for(1.0, 0.1), 10);
        assert_eq!(repetitions_for(0.01, 0.1), 1);
    }
}
