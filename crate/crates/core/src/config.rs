// SPDX-License-Identifier: Apache-2.0

//! Run configuration: one flat TOML table.
//!
//! Frequencies are given in cycles per time unit (`f`, not `ω`): with
//! `unit = "scaled"` the time unit is whatever the user has in mind and
//! `time_unit_s` only matters for conversions to SI figures of merit; with
//! `unit = "SI"` frequencies are in Hz, times in seconds, and everything is
//! rescaled internally to units of `time_unit_s` (1 µs unless set).
//!
//! Noise strengths are angular (`sigma_b`, rad per unit) or relative
//! (`sigma_omega1`, `sigma_omega2`). A missing `sigma_b` falls back to
//! `√2/t2_star`. Correlation times default to `25·T₂*` for the field and
//! `100` first-drive periods for the drives.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{CoherenceSettings, EnsembleSettings};
use crate::model::{DriveConfig, Frame};
use crate::noise::{CoherenceTargets, NoiseConfig, OuProcess};
use crate::readout::FluorescenceModel;

/// Seconds per unit when `unit = "SI"` and `time_unit_s` is not given.
pub const SI_DEFAULT_UNIT_S: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UnitSystem {
    #[default]
    #[serde(rename = "scaled")]
    Scaled,
    #[serde(rename = "SI", alias = "si")]
    Si,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub unit: UnitSystem,
    /// Seconds per time unit. Unset means 1 (scaled) or 1 µs (SI).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_unit_s: Option<f64>,

    pub f0: f64,
    pub rabi1: f64,
    pub rabi2: f64,
    pub g: f64,
    /// Signal carrier; unset tunes it to `f0 + rabi1 + rabi2/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    pub phi: f64,
    pub drive2_phase: f64,

    pub frame: Frame,
    pub t_final: f64,
    pub strobe_stride: usize,
    pub trajectories: usize,
    pub seed: u64,

    pub contrast: f64,
    pub n_ph: f64,
    /// Shots per strobe point in the simulated photon record.
    pub repetitions: u64,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_b: Option<f64>,
    pub sigma_omega1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_omega1: Option<f64>,
    pub sigma_omega2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_omega2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_grid_dt: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_t2_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_t2_single: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_t2_double: Option<f64>,
    /// Sample intervals per coherence window.
    pub coherence_samples: usize,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_axis: Option<String>,
    pub scan_values: Vec<f64>,
    pub objective: String,
    pub scan_samples: usize,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_single_naive: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_single: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_double: Option<f64>,
    /// Total measurement times for the sensitivity table, in time units.
    pub sensitivity_t_min: f64,
    pub sensitivity_t_max: f64,
    pub sensitivity_points: usize,

    /// Fixed stretching exponent for every fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_p: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            unit: UnitSystem::Scaled,
            time_unit_s: None,
            f0: 500.0,
            rabi1: 10.0,
            rabi2: 1.5,
            g: 0.2,
            fs: None,
            phi: 0.0,
            drive2_phase: 0.5 * PI,
            frame: Frame::Ip1,
            t_final: 40.0,
            strobe_stride: 1,
            trajectories: 200,
            seed: 1,
            contrast: 0.3,
            n_ph: 0.03,
            repetitions: 100_000,
            t2_star: None,
            sigma_b: None,
            tau_b: None,
            sigma_omega1: 0.0,
            tau_omega1: None,
            sigma_omega2: 0.0,
            tau_omega2: None,
            t1: None,
            noise_grid_dt: None,
            target_t2_star: None,
            target_t2_single: None,
            target_t2_double: None,
            coherence_samples: 60,
            scan_axis: None,
            scan_values: Vec::new(),
            objective: "t2".into(),
            scan_samples: 200,
            tau_single_naive: None,
            tau_single: None,
            tau_double: None,
            sensitivity_t_min: 1e2,
            sensitivity_t_max: 1e6,
            sensitivity_points: 41,
            fit_p: None,
        }
    }
}

/// A configuration converted to internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub drive: DriveConfig,
    pub noise: NoiseConfig,
    pub fluorescence: FluorescenceModel,
    /// Seconds per internal time unit.
    pub time_unit_s: f64,
    /// Internal units per input time unit (1 for scaled configs).
    pub time_scale: f64,
    pub t_final: f64,
    pub ensemble: EnsembleSettings,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config serialization: {e}")))
    }

    /// Reads `path` and applies `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))?;
        apply_overrides(&mut table, overrides)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))
    }

    pub fn seconds_per_unit(&self) -> f64 {
        self.time_unit_s.unwrap_or(match self.unit {
            UnitSystem::Scaled => 1.0,
            UnitSystem::Si => SI_DEFAULT_UNIT_S,
        })
    }

    /// Internal units per input time unit.
    pub fn time_scale(&self) -> f64 {
        match self.unit {
            UnitSystem::Scaled => 1.0,
            UnitSystem::Si => 1.0 / self.seconds_per_unit(),
        }
    }

    /// Input-unit time to internal units.
    pub fn time(&self, t: f64) -> f64 {
        t * self.time_scale()
    }

    /// Input-unit frequency (cycles) to internal angular frequency.
    pub fn angular(&self, f: f64) -> f64 {
        2.0 * PI * f / self.time_scale()
    }

    pub fn drive(&self) -> DriveConfig {
        let mut d = DriveConfig::on_resonance(
            self.angular(self.f0),
            self.angular(self.rabi1),
            self.angular(self.rabi2),
            self.angular(self.g),
            self.phi,
        );
        d.drive2_phase = self.drive2_phase;
        if let Some(fs) = self.fs {
            d.omega_s = self.angular(fs);
        }
        d
    }

    pub fn noise(&self) -> Result<NoiseConfig> {
        let drive = self.drive();
        let t2_star = self.t2_star.map(|t| self.time(t));
        let sigma_b = match (self.sigma_b, t2_star) {
            (Some(s), _) => s / self.time_scale(),
            (None, Some(t)) if t > 0.0 => SQRT_2 / t,
            (None, Some(t)) => return Err(Error::invalid(format!("t2_star must be > 0, got {t}"))),
            (None, None) => 0.0,
        };
        let tau_b = match self.tau_b {
            Some(t) => self.time(t),
            None if sigma_b > 0.0 => 25.0 * SQRT_2 / sigma_b,
            None => 1.0,
        };
        let tau_drive = if drive.omega1 > 0.0 {
            100.0 * 2.0 * PI / drive.omega1
        } else {
            tau_b
        };
        let mut n = NoiseConfig {
            delta_b: OuProcess::new(sigma_b, tau_b),
            delta_omega1: OuProcess::new(self.sigma_omega1, self.tau_omega1.map_or(tau_drive, |t| self.time(t))),
            delta_omega2: OuProcess::new(self.sigma_omega2, self.tau_omega2.map_or(tau_drive, |t| self.time(t))),
            t1: self.t1.map(|t| self.time(t)),
            grid_dt: 0.0,
        };
        n.grid_dt = match self.noise_grid_dt {
            Some(dt) => self.time(dt),
            None => n.default_grid_dt(),
        };
        n.validate()?;
        Ok(n)
    }

    pub fn fluorescence(&self) -> Result<FluorescenceModel> {
        let fm = FluorescenceModel {
            contrast: self.contrast,
            n_ph: self.n_ph,
        };
        fm.validate()?;
        Ok(fm)
    }

    pub fn ensemble(&self) -> EnsembleSettings {
        EnsembleSettings {
            trajectories: self.trajectories,
            seed: self.seed,
            frame: self.frame,
        }
    }

    pub fn coherence_settings(&self) -> CoherenceSettings {
        CoherenceSettings {
            ensemble: self.ensemble(),
            samples: self.coherence_samples,
            ..CoherenceSettings::default()
        }
    }

    /// Calibration targets in internal units, when all three are set.
    pub fn targets(&self) -> Option<CoherenceTargets> {
        Some(CoherenceTargets {
            t2_star: self.time(self.target_t2_star?),
            t2_single: self.time(self.target_t2_single?),
            t2_double: self.time(self.target_t2_double?),
        })
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if !(self.t_final > 0.0) {
            return Err(Error::invalid("t_final must be > 0"));
        }
        if self.trajectories == 0 {
            return Err(Error::invalid("trajectories must be >= 1"));
        }
        if !(self.seconds_per_unit() > 0.0) {
            return Err(Error::invalid("time_unit_s must be > 0"));
        }
        let drive = self.drive();
        drive.validate()?;
        Ok(Resolved {
            drive,
            noise: self.noise()?,
            fluorescence: self.fluorescence()?,
            time_unit_s: self.seconds_per_unit(),
            time_scale: self.time_scale(),
            t_final: self.time(self.t_final),
            ensemble: self.ensemble(),
        })
    }

    /// Writes calibrated noise strengths back in input units.
    pub fn with_noise(&self, noise: &NoiseConfig) -> Self {
        let k = self.time_scale();
        Self {
            sigma_b: Some(noise.delta_b.sigma * k),
            tau_b: Some(noise.delta_b.tau_c / k),
            sigma_omega1: noise.delta_omega1.sigma,
            tau_omega1: Some(noise.delta_omega1.tau_c / k),
            sigma_omega2: noise.delta_omega2.sigma,
            tau_omega2: Some(noise.delta_omega2.tau_c / k),
            ..self.clone()
        }
    }
}

/// Applies `key=value` pairs; the value is read as a TOML value and taken
/// as a bare string when it does not parse.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override '{item}' is not key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::invalid(format!("override '{item}' has an empty key")));
        }
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        table.insert(key.to_string(), value);
    }
    Ok(())
}
