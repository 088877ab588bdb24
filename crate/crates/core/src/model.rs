// SPDX-License-Identifier: Apache-2.0

//! Drive configuration, the Hamiltonian in each frame of the dressing cascade,
//! the frame-change unitaries, and the resonance conditions.
//!
//! Units are dimensionless: every frequency is an angular frequency in
//! radians per time unit and the caller picks the time unit.
//!
//! Frames are nested: `Lab → IP1 → IP2 → IP3`. With `U_F(t)` the cumulative
//! transform into frame `F`, a lab state is `ψ_lab = U_F(t) ψ_F`.
//!
//! * `U_IP1 = exp(-i ω₀ t σ_z / 2)`
//! * `U_IP2 = U_IP1 · exp(-i Ω₁ t σ_x / 2)`
//! * `U_IP3 = U_IP2 · exp(-i Ω₂ t (n·σ) / 4)`, `n = (0, cos ψ, sin ψ)` where
//!   `ψ` is the second-drive modulation offset. `ψ = π/2` turns the
//!   doubly-dressed axis into `σ_z`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{self, Field, Mat2};

/// Off-resonance tolerance for the third-frame analytic form, as a fraction of `g`.
pub const IP3_DETUNING_TOLERANCE: f64 = 0.01;

/// Default minimum ratio between adjacent scales in the hierarchy check.
pub const DEFAULT_MIN_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Bare level splitting ω₀.
    pub omega0: f64,
    /// First drive Rabi frequency Ω₁.
    pub omega1: f64,
    /// Second drive Rabi frequency Ω₂.
    pub omega2: f64,
    /// Signal carrier frequency ω_s.
    pub omega_s: f64,
    /// Signal strength g.
    pub g: f64,
    /// Signal phase φ.
    pub phi: f64,
    /// Modulation offset of the second drive, `cos(Ω₁ t + drive2_phase)`.
    pub drive2_phase: f64,
}

impl DriveConfig {
    /// A configuration with the signal tuned to the `(+,+)` resonance
    /// `ω_s = ω₀ + Ω₁ + Ω₂/2` and the second drive shifted by π/2.
    pub fn on_resonance(omega0: f64, omega1: f64, omega2: f64, g: f64, phi: f64) -> Self {
        Self {
            omega0,
            omega1,
            omega2,
            omega_s: omega0 + omega1 + 0.5 * omega2,
            g,
            phi,
            drive2_phase: 0.5 * PI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("omega0", self.omega0),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("omega_s", self.omega_s),
            ("g", self.g),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.phi.is_finite() || !self.drive2_phase.is_finite() {
            return Err(Error::invalid("phases must be finite"));
        }
        Ok(())
    }

    /// Signal detuning from the `(+,+)` resonance.
    pub fn detuning(&self) -> f64 {
        self.omega_s - (self.omega0 + self.omega1 + 0.5 * self.omega2)
    }

    /// Axis of the second drive once the first drive is removed.
    pub fn drive2_axis(&self) -> Field {
        Field::new(0.0, self.drive2_phase.cos(), self.drive2_phase.sin())
    }

    /// Number of active dressing drives.
    pub fn drive_count(&self) -> usize {
        match (self.omega1 > 0.0, self.omega2 > 0.0) {
            (false, _) => 0,
            (true, false) => 1,
            (true, true) => 2,
        }
    }

    /// Ratio of the visible signal-induced Rabi rate to `g`: 1/2 for a
    /// single drive, 1/4 for two.
    pub fn signal_rate_factor(&self) -> f64 {
        match self.drive_count() {
            0 => 1.0,
            1 => 0.5,
            _ => 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Ip1,
    Ip2,
    Ip3,
}

impl Frame {
    pub const ALL: [Frame; 4] = [Frame::Lab, Frame::Ip1, Frame::Ip2, Frame::Ip3];

    pub fn depth(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lab" => Ok(Frame::Lab),
            "ip1" => Ok(Frame::Ip1),
            "ip2" => Ok(Frame::Ip2),
            "ip3" => Ok(Frame::Ip3),
            other => Err(Error::invalid(format!("unknown frame '{other}'"))),
        }
    }
}

/// A time-dependent traceless Hermitian Hamiltonian `H(t) = h(t)·σ`.
pub trait Hamiltonian: Send + Sync {
    fn field(&self, t: f64) -> Field;

    fn frame(&self) -> Frame;

    /// Whether counter-rotating terms were dropped.
    fn rwa(&self) -> bool;

    /// Largest angular frequency present, counting both level splittings and
    /// modulation frequencies. Drives the integrator step rule.
    fn max_angular_frequency(&self) -> f64;

    fn matrix(&self, t: f64) -> Mat2 {
        pauli::field_matrix(&self.field(t))
    }
}

/// `H = (ω₀/2)σ_z + Ω₁σ_x cos ω₀t + Ω₂σ_y cos ω₀t cos(Ω₁t+ψ) + gσ_x cos(ω_s t+φ)`, exact.
#[derive(Debug, Clone, Copy)]
pub struct LabHamiltonian {
    pub cfg: DriveConfig,
}

impl Hamiltonian for LabHamiltonian {
    fn field(&self, t: f64) -> Field {
        let c = &self.cfg;
        let carrier = (c.omega0 * t).cos();
        let x = c.omega1 * carrier + c.g * (c.omega_s * t + c.phi).cos();
        let y = c.omega2 * carrier * (c.omega1 * t + c.drive2_phase).cos();
        Field::new(x, y, 0.5 * c.omega0)
    }

    fn frame(&self) -> Frame {
        Frame::Lab
    }

    fn rwa(&self) -> bool {
        false
    }

    fn max_angular_frequency(&self) -> f64 {
        let c = &self.cfg;
        let gap = c.omega0 + 2.0 * (c.omega1 + c.omega2 + c.g);
        gap.max(c.omega0 + c.omega1).max(c.omega_s)
    }
}

pub fn lab_hamiltonian(cfg: &DriveConfig) -> LabHamiltonian {
    LabHamiltonian { cfg: *cfg }
}

/// Rotating-wave Hamiltonian of one of the dressed frames.
#[derive(Debug, Clone, Copy)]
pub struct RwaHamiltonian {
    cfg: DriveConfig,
    frame: Frame,
}

impl RwaHamiltonian {
    pub fn config(&self) -> &DriveConfig {
        &self.cfg
    }
}

impl Hamiltonian for RwaHamiltonian {
    fn field(&self, t: f64) -> Field {
        let c = &self.cfg;
        let q = 0.5 * c.g;
        match self.frame {
            Frame::Ip1 => {
                // (Ω₁/2)σ_x + (Ω₂/2)σ_y cos(Ω₁t+ψ) + (g/2)(σ₊e^{-iα} + h.c.), α = (ω_s-ω₀)t + φ
                let alpha = (c.omega_s - c.omega0) * t + c.phi;
                let (sa, ca) = alpha.sin_cos();
                Field::new(
                    0.5 * c.omega1 + q * ca,
                    0.5 * c.omega2 * (c.omega1 * t + c.drive2_phase).cos() + q * sa,
                    0.0,
                )
            }
            Frame::Ip2 => {
                // (Ω₂/4) n·σ + (g/4)(σ_y sin β − σ_z cos β), β = (ω_s-ω₀-Ω₁)t + φ
                let beta = (c.omega_s - c.omega0 - c.omega1) * t + c.phi;
                let (sb, cb) = beta.sin_cos();
                let n = c.drive2_axis();
                n * (0.25 * c.omega2) + Field::new(0.0, 0.5 * q * sb, -0.5 * q * cb)
            }
            Frame::Ip3 => {
                // −(g/8)(cos γ m + sin γ x̂), m ⊥ n in the y–z plane, γ = δt + φ − ψ
                let gamma = c.detuning() * t + c.phi - c.drive2_phase;
                let (sg, cg) = gamma.sin_cos();
                let m = Field::new(0.0, -c.drive2_phase.sin(), c.drive2_phase.cos());
                (m * cg + Field::x() * sg) * (-0.125 * c.g)
            }
            Frame::Lab => unreachable!("RwaHamiltonian is never built in the lab frame"),
        }
    }

    fn frame(&self) -> Frame {
        self.frame
    }

    fn rwa(&self) -> bool {
        true
    }

    fn max_angular_frequency(&self) -> f64 {
        let c = &self.cfg;
        match self.frame {
            Frame::Ip1 => (c.omega1 + c.omega2 + c.g)
                .max(c.omega1)
                .max((c.omega_s - c.omega0).abs()),
            Frame::Ip2 => (0.5 * c.omega2 + 0.5 * c.g).max((c.omega_s - c.omega0 - c.omega1).abs()),
            Frame::Ip3 => (0.25 * c.g).max(c.detuning().abs()),
            Frame::Lab => unreachable!(),
        }
    }
}

/// The analytic rotating-wave Hamiltonian of `frame`.
///
/// The IP2 and IP3 forms describe the `(+,+)` branch of the cascade and
/// require a nonzero first drive; IP3 also needs the second drive and the
/// signal on resonance to within `g/100`.
pub fn ip_hamiltonian(cfg: &DriveConfig, frame: Frame) -> Result<RwaHamiltonian> {
    cfg.validate()?;
    let unavailable = |reason: &str| Error::FrameUnavailable {
        frame,
        reason: reason.to_string(),
    };
    match frame {
        Frame::Lab => return Err(unavailable("the lab frame has no rotating-wave form")),
        Frame::Ip1 => {}
        Frame::Ip2 | Frame::Ip3 => {
            if cfg.omega1 == 0.0 {
                return Err(unavailable("cascade undefined without the first drive"));
            }
        }
    }
    if frame == Frame::Ip3 {
        if cfg.omega2 == 0.0 {
            return Err(unavailable("cascade undefined without the second drive"));
        }
        let detuning = cfg.detuning().abs();
        if cfg.g > 0.0 && detuning > IP3_DETUNING_TOLERANCE * cfg.g {
            return Err(unavailable(&format!(
                "signal detuned by {detuning} from omega0 + Omega1 + Omega2/2 (tolerance g/100)"
            )));
        }
    }
    Ok(RwaHamiltonian { cfg: *cfg, frame })
}

/// Cumulative transform `U_F(t)` from `frame` back to the lab.
pub fn frame_unitary(cfg: &DriveConfig, frame: Frame, t: f64) -> Mat2 {
    let mut u = pauli::identity();
    if frame >= Frame::Ip1 {
        u = pauli::rotation(&Field::z(), cfg.omega0 * t);
    }
    if frame >= Frame::Ip2 {
        u *= pauli::rotation(&Field::x(), cfg.omega1 * t);
    }
    if frame >= Frame::Ip3 {
        u *= pauli::rotation(&cfg.drive2_axis(), 0.5 * cfg.omega2 * t);
    }
    u
}

/// The four signal resonances `ω₀ ± Ω₁ ± Ω₂/2`, ascending.
pub fn resonances(cfg: &DriveConfig) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut k = 0;
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            out[k] = cfg.omega0 + s1 * cfg.omega1 + s2 * 0.5 * cfg.omega2;
            k += 1;
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub min_ratio: f64,
    pub ratios: Vec<RatioCheck>,
}

impl HierarchyReport {
    pub fn pass(&self) -> bool {
        self.ratios.iter().all(|r| r.pass)
    }

    pub fn violations(&self) -> Vec<&str> {
        self.ratios
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.name.as_str())
            .collect()
    }
}

/// Checks `ω₀ ≫ Ω₁ ≫ Ω₂ ≫ g` link by link. Absent drives drop out of the
/// chain, so a single-drive configuration is checked as `ω₀ ≫ Ω₁ ≫ g`.
pub fn validate_hierarchy(cfg: &DriveConfig, min_ratio: f64) -> HierarchyReport {
    let mut scales = vec![("omega0", cfg.omega0)];
    if cfg.omega1 > 0.0 {
        scales.push(("Omega1", cfg.omega1));
    }
    if cfg.omega2 > 0.0 {
        scales.push(("Omega2", cfg.omega2));
    }
    if cfg.g > 0.0 {
        scales.push(("g", cfg.g));
    }
    let ratios = scales
        .windows(2)
        .map(|w| {
            let value = w[0].1 / w[1].1;
            RatioCheck {
                name: format!("{}/{}", w[0].0, w[1].0),
                value,
                pass: value >= min_ratio,
            }
        })
        .collect();
    HierarchyReport { min_ratio, ratios }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TAU: f64 = 2.0 * PI;

    fn scaled() -> DriveConfig {
        DriveConfig::on_resonance(TAU * 500.0, TAU * 10.0, TAU * 1.5, TAU * 0.2, 0.3)
    }

    #[test]
    fn free_evolution_hamiltonian() {
        let cfg = DriveConfig {
            omega1: 0.0,
            omega2: 0.0,
            g: 0.0,
            ..scaled()
        };
        let h = lab_hamiltonian(&cfg);
        for t in [0.0, 0.013, 0.7, 5.0] {
            let expected = pauli::sigma_z() * pauli::C64::new(0.5 * cfg.omega0, 0.0);
            assert!((h.matrix(t) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn lab_hamiltonian_is_traceless_hermitian_with_expected_gap() {
        let cfg = DriveConfig { phi: 0.0, ..scaled() };
        let h = lab_hamiltonian(&cfg);
        for t in [0.0, 0.1, 0.37] {
            let m = h.matrix(t);
            assert!(pauli::hermiticity_defect(&m) < 1e-12);
            assert!(m.trace().norm() < 1e-12);
        }
        let [lo, hi] = pauli::hermitian_eigenvalues(&h.matrix(0.0));
        let expected = (cfg.omega0.powi(2) + 4.0 * (cfg.omega1 + cfg.g).powi(2)).sqrt();
        // cos(π/2) leaves a 1e-16 σ_y residue from the second drive
        assert_relative_eq!(hi - lo, expected, max_relative = 1e-12);
    }

    #[test]
    fn operating_point_bias_frequency() {
        let omega_s = TAU * 1.6e9;
        let omega1 = TAU * 3.363e6;
        let omega2 = TAU * 505e3;
        let omega0 = omega_s - omega1 - 0.5 * omega2;
        assert_relative_eq!(omega0 / TAU, 1.596_384_5e9, max_relative = 1e-7);
        let cfg = DriveConfig::on_resonance(omega0, omega1, omega2, 0.0, 0.0);
        assert_relative_eq!(resonances(&cfg)[3], omega_s, max_relative = 1e-14);
    }

    #[test]
    fn ip3_form_and_gap() {
        for phi in [0.0, PI / 4.0, PI / 2.0, PI, 2.1] {
            let cfg = DriveConfig { phi, ..scaled() };
            let h = ip_hamiltonian(&cfg, Frame::Ip3).unwrap();
            let m0 = h.matrix(0.0);
            let m1 = h.matrix(3.7);
            assert!((m0 - m1).norm() < 1e-12, "IP3 form must be static on resonance");
            let [lo, hi] = pauli::hermitian_eigenvalues(&m0);
            assert_relative_eq!(hi - lo, cfg.g / 4.0, max_relative = 1e-12);
        }
        let cfg = DriveConfig { phi: 0.0, ..scaled() };
        let f = ip_hamiltonian(&cfg, Frame::Ip3).unwrap().field(0.0);
        assert_relative_eq!((f - Field::new(cfg.g / 8.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let cfg = DriveConfig { phi: PI / 2.0, ..scaled() };
        let f = ip_hamiltonian(&cfg, Frame::Ip3).unwrap().field(0.0);
        assert_relative_eq!((f - Field::new(0.0, cfg.g / 8.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let cfg = DriveConfig { g: 0.0, ..scaled() };
        assert_eq!(ip_hamiltonian(&cfg, Frame::Ip3).unwrap().field(1.0).norm(), 0.0);
    }

    #[test]
    fn ip3_rejects_detuned_signal_and_missing_drives() {
        let mut cfg = scaled();
        cfg.omega_s += 0.02 * cfg.g;
        assert!(matches!(
            ip_hamiltonian(&cfg, Frame::Ip3),
            Err(Error::FrameUnavailable { frame: Frame::Ip3, .. })
        ));
        cfg.omega_s -= 0.015 * cfg.g;
        assert!(ip_hamiltonian(&cfg, Frame::Ip3).is_ok());

        let cfg = DriveConfig { omega1: 0.0, ..scaled() };
        assert!(ip_hamiltonian(&cfg, Frame::Ip2).is_err());
        assert!(ip_hamiltonian(&cfg, Frame::Ip1).is_ok());
        assert!(ip_hamiltonian(&scaled(), Frame::Lab).is_err());
    }

    #[test]
    fn frame_unitaries() {
        let cfg = scaled();
        for f in Frame::ALL {
            assert!((frame_unitary(&cfg, f, 0.0) - pauli::identity()).norm() < 1e-15);
        }
        let u = frame_unitary(&cfg, Frame::Ip1, TAU / cfg.omega0);
        assert!((u + pauli::identity()).norm() < 1e-12);

        let mut state = 0x2545_f491_4f6c_dd1d_u64;
        for _ in 0..100 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let t = (state % 1_000_000) as f64 * 1e-4;
            let u = frame_unitary(&cfg, Frame::Ip3, t);
            assert!((u * u.adjoint() - pauli::identity()).norm() < 1e-12);
            let composed = pauli::rotation(&Field::z(), cfg.omega0 * t)
                * pauli::rotation(&Field::x(), cfg.omega1 * t)
                * pauli::rotation(&cfg.drive2_axis(), 0.5 * cfg.omega2 * t);
            assert!((u - composed).norm() < 1e-12);
        }
    }

    #[test]
    fn resonance_enumeration() {
        let cfg = DriveConfig::on_resonance(TAU * 500.0, TAU * 10.0, TAU * 1.5, 0.0, 0.0);
        let r = resonances(&cfg);
        for (got, want) in r.iter().zip([489.25, 490.75, 509.25, 510.75]) {
            assert_relative_eq!(*got, TAU * want, max_relative = 1e-14);
        }
        let degenerate = DriveConfig { omega2: 0.0, ..cfg };
        let r = resonances(&degenerate);
        assert_eq!(r[0], r[1]);
        assert_eq!(r[2], r[3]);
        assert_ne!(r[1], r[2]);
        let rotated = DriveConfig {
            phi: 1.3,
            drive2_phase: 0.0,
            ..cfg
        };
        assert_eq!(resonances(&rotated), resonances(&cfg));
    }

    #[test]
    fn hierarchy_checks() {
        let bench = DriveConfig::on_resonance(TAU * 1.596e9, TAU * 3.363e6, TAU * 505e3, 0.0, 0.0);
        let report = validate_hierarchy(&bench, DEFAULT_MIN_RATIO);
        assert_relative_eq!(report.ratios[1].value, 6.659, max_relative = 1e-3);
        assert_relative_eq!(1.0 / report.ratios[1].value, 0.15, max_relative = 0.01);
        assert_eq!(report.ratios.len(), 2, "g = 0 skips the last link");

        let report = validate_hierarchy(&scaled(), 5.0);
        assert!(report.pass());
        let values: Vec<f64> = report.ratios.iter().map(|r| r.value).collect();
        assert_relative_eq!(values[0], 50.0, max_relative = 1e-12);
        assert_relative_eq!(values[1], 10.0 / 1.5, max_relative = 1e-12);
        assert_relative_eq!(values[2], 7.5, max_relative = 1e-12);

        let inverted = DriveConfig {
            omega2: TAU * 12.0,
            ..scaled()
        };
        let report = validate_hierarchy(&inverted, 5.0);
        assert!(!report.pass());
        assert_eq!(report.violations(), vec!["Omega1/Omega2"]);
    }
}
