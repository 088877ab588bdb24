// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo ensembles of the two measurement protocols.
//!
//! * Rabi: prepare `+a` along the protected axis, evolve with the signal on,
//!   record `P(−a)` on the sample grid.
//! * Coherence: prepare a probe perpendicular to the protected axis, evolve
//!   without signal, record the visibility `V = |⟨r⊥⟩|`, the length of the
//!   ensemble-mean Bloch vector transverse to the protected axis. A common
//!   frequency shift leaves `V` alone; spread between trajectories does not.
//!
//! Trajectories are evaluated in parallel and reduced in index order, so the
//! result is a deterministic function of the seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, FitModel, FitOptions};
use crate::error::{Error, Result};
use crate::model::{DriveConfig, Frame, Hamiltonian};
use crate::noise::{self, NoiseConfig};
use crate::pauli::{self, Field};
use crate::propagate::{self, PropagationSpec, SpinState, TraceRecord};
use crate::readout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Rabi,
    Coherence,
}

/// Uniform sample grid `t_j = j·dt`, `j = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub dt: f64,
    pub n: usize,
}

impl SampleGrid {
    pub fn new(dt: f64, n: usize) -> Result<Self> {
        if !(dt > 0.0) || n == 0 {
            return Err(Error::invalid("sample grid needs dt > 0 and at least one interval"));
        }
        Ok(Self { dt, n })
    }

    /// Every `stride`-th multiple of the strobe period up to `t_final`.
    pub fn strobe(cfg: &DriveConfig, t_final: f64, stride: usize) -> Result<Self> {
        let period = readout::strobe_period(cfg)?;
        let dt = period * stride.max(1) as f64;
        let n = ((t_final / dt) * (1.0 + 1e-12)).floor() as usize;
        Self::new(dt, n)
    }

    /// About `samples` intervals over `t_final`, snapped to the strobe
    /// period whenever a first drive is present.
    pub fn covering(cfg: &DriveConfig, t_final: f64, samples: usize) -> Result<Self> {
        let raw = t_final / samples.max(1) as f64;
        if cfg.omega1 > 0.0 {
            let period = readout::strobe_period(cfg)?;
            let stride = (raw / period).round().max(1.0) as usize;
            Self::strobe(cfg, t_final, stride)
        } else {
            Self::new(raw, samples.max(1))
        }
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|j| j as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub trajectories: usize,
    pub seed: u64,
    /// `Lab` or `Ip1`.
    pub frame: Frame,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            trajectories: 200,
            seed: 1,
            frame: Frame::Ip1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub protocol: Protocol,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard error of the mean; zero for a single trajectory.
    pub stderr: Vec<f64>,
    /// Trajectories actually run (one when nothing is random).
    pub trajectories: usize,
    pub seed: u64,
}

impl EnsembleResult {
    /// The signal as a population trace on the first rotating frame.
    pub fn to_trace(&self, cfg: &DriveConfig) -> TraceRecord {
        let mut trace = TraceRecord::from_signal(Frame::Ip1, self.times.clone(), self.mean.clone());
        trace.stderr = Some(self.stderr.clone());
        trace.meta.seed = Some(self.seed);
        trace.meta.trajectories = self.trajectories;
        trace.meta.strobe_period = readout::strobe_period(cfg).ok();
        trace.meta.label = format!("{:?}", self.protocol).to_lowercase();
        trace
    }
}

/// Probe direction for the coherence protocol, perpendicular to the
/// protected axis.
pub fn probe_axis(cfg: &DriveConfig) -> Field {
    match cfg.drive_count() {
        0 => Field::x(),
        1 => Field::z(),
        // x ⊥ n for every ψ and is left alone by the first drive
        _ => Field::x(),
    }
}

fn initial_state(protocol: Protocol, cfg: &DriveConfig, frame: Frame, mixed: bool) -> SpinState {
    let axis = match protocol {
        Protocol::Rabi => readout::protected_axis(cfg),
        Protocol::Coherence => probe_axis(cfg),
    };
    // all frames coincide at t = 0
    let s = SpinState::along(&axis, frame, 0.0);
    if mixed {
        s.to_mixed()
    } else {
        s
    }
}

/// Runs one trajectory and returns the Bloch vectors in the first rotating
/// frame at the grid times.
fn trajectory_bloch(
    h: &(impl Hamiltonian + ?Sized),
    cfg: &DriveConfig,
    start: &SpinState,
    grid: &SampleGrid,
    relaxation: Option<noise::Relaxation>,
) -> Result<Vec<Field>> {
    let spec = PropagationSpec::for_sampling(grid.dt, grid.t_final(), PropagationSpec::max_step(h))
        .with_relaxation(relaxation);
    let mut out = Vec::with_capacity(grid.n + 1);
    let frame = h.frame();
    propagate::evolve_with(start, h, &spec, |s| {
        out.push(propagate::transform_bloch(cfg, &s.bloch(), s.t, frame, Frame::Ip1));
    })?;
    Ok(out)
}

/// Ensemble of `protocol` under `noise`.
pub fn run(
    protocol: Protocol,
    cfg: &DriveConfig,
    noise: &NoiseConfig,
    grid: &SampleGrid,
    settings: &EnsembleSettings,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    noise.validate()?;
    if settings.trajectories == 0 {
        return Err(Error::invalid("trajectories must be >= 1"));
    }
    if !matches!(settings.frame, Frame::Lab | Frame::Ip1) {
        return Err(Error::invalid("ensembles run in the lab or IP1 frame"));
    }
    let cfg_run = match protocol {
        Protocol::Rabi => *cfg,
        Protocol::Coherence => DriveConfig { g: 0.0, ..*cfg },
    };
    let mixed = noise.t1.is_some();
    let start = initial_state(protocol, &cfg_run, settings.frame, mixed);
    let relaxation = noise.relaxation();
    let t_final = grid.t_final();

    let axis = readout::protected_axis(&cfg_run);
    let n_traj = if noise.has_fluctuations() {
        settings.trajectories
    } else {
        1
    };
    let per_traj: Vec<Vec<Field>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let h = noise::noisy_hamiltonian(&cfg_run, noise, settings.seed, k, settings.frame, t_final)?;
            trajectory_bloch(&h, &cfg_run, &start, grid, relaxation)
        })
        .collect::<Result<_>>()?;

    let (mean, stderr) = match protocol {
        Protocol::Rabi => {
            let rows: Vec<Vec<f64>> = per_traj
                .iter()
                .map(|b| b.iter().map(|x| 0.5 * (1.0 - x.dot(&axis))).collect())
                .collect();
            reduce(&rows, grid.n + 1)
        }
        Protocol::Coherence => transverse_visibility(&per_traj, &axis, grid.n + 1),
    };
    Ok(EnsembleResult {
        protocol,
        times: grid.times(),
        mean,
        stderr,
        trajectories: n_traj,
        seed: settings.seed,
    })
}

/// `|⟨r⊥⟩|` per sample with the `1/N` noise floor removed from `|⟨r⊥⟩|²`,
/// and its delta-method standard error.
fn transverse_visibility(per_traj: &[Vec<Field>], axis: &Field, len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = per_traj.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for j in 0..len {
        let perp = |b: &Vec<Field>| b[j] - axis * b[j].dot(axis);
        let mut m = Field::zeros();
        for b in per_traj {
            m += perp(b);
        }
        m /= n;
        let mut var = Field::zeros();
        if per_traj.len() > 1 {
            for b in per_traj {
                let d = perp(b) - m;
                var += d.component_mul(&d);
            }
            var /= (n - 1.0) * n;
        }
        let v = (m.norm_squared() - var.sum()).max(0.0).sqrt();
        let raw = m.norm();
        let se = if raw > 0.0 {
            (m.component_mul(&m).dot(&var)).sqrt() / raw
        } else {
            var.sum().sqrt()
        };
        mean.push(v);
        stderr.push(se);
    }
    (mean, stderr)
}

/// Per-sample mean and standard error, summed in trajectory order.
fn reduce(per_traj: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = per_traj.len() as f64;
    let mut mean = vec![0.0; len];
    for row in per_traj {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut stderr = vec![0.0; len];
    if per_traj.len() > 1 {
        for row in per_traj {
            for ((s, x), m) in stderr.iter_mut().zip(row).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        stderr
            .iter_mut()
            .for_each(|s| *s = (*s / (n - 1.0)).sqrt() / n.sqrt());
    }
    (mean, stderr)
}

pub fn run_rabi(
    cfg: &DriveConfig,
    noise: &NoiseConfig,
    grid: &SampleGrid,
    settings: &EnsembleSettings,
) -> Result<EnsembleResult> {
    run(Protocol::Rabi, cfg, noise, grid, settings)
}

pub fn run_coherence(
    cfg: &DriveConfig,
    noise: &NoiseConfig,
    grid: &SampleGrid,
    settings: &EnsembleSettings,
) -> Result<EnsembleResult> {
    run(Protocol::Coherence, cfg, noise, grid, settings)
}

/// Settings for a coherence-time measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSettings {
    pub ensemble: EnsembleSettings,
    /// Sample intervals over the window.
    pub samples: usize,
    /// Window length in units of the expected decay time.
    pub span: f64,
}

impl Default for CoherenceSettings {
    fn default() -> Self {
        Self {
            ensemble: EnsembleSettings::default(),
            samples: 60,
            span: 3.0,
        }
    }
}

/// Fitted coherence decay of `cfg` (signal ignored) over a window of
/// `span·t2_guess`.
pub fn coherence_fit(
    cfg: &DriveConfig,
    noise: &NoiseConfig,
    settings: &CoherenceSettings,
    t2_guess: f64,
) -> Result<(EnsembleResult, analysis::RabiFit)> {
    if !(t2_guess > 0.0) {
        return Err(Error::invalid("coherence time guess must be > 0"));
    }
    let grid = SampleGrid::covering(cfg, settings.span * t2_guess, settings.samples)?;
    let ens = run_coherence(cfg, noise, &grid, &settings.ensemble)?;
    let opts = FitOptions {
        model: Some(FitModel::DecayOnly),
        fixed_offset: Some(0.0),
        ..FitOptions::default()
    };
    let fit = analysis::fit_signal(&ens.times, &ens.mean, Some(&ens.stderr), &opts)?;
    Ok((ens, fit))
}

/// Fitted coherence time; see [`coherence_fit`].
pub fn coherence_time(
    cfg: &DriveConfig,
    noise: &NoiseConfig,
    settings: &CoherenceSettings,
    t2_guess: f64,
) -> Result<f64> {
    coherence_fit(cfg, noise, settings, t2_guess).map(|(_, f)| f.t2)
}

/// Pure-state Bloch trajectory of the noiseless configuration in the first
/// rotating frame, for plotting and quick checks.
pub fn noiseless_bloch(cfg: &DriveConfig, grid: &SampleGrid, frame: Frame) -> Result<Vec<Field>> {
    let h = noise::noisy_hamiltonian(cfg, &NoiseConfig::quiet(), 0, 0, frame, grid.t_final())?;
    let start = initial_state(Protocol::Rabi, cfg, frame, false);
    trajectory_bloch(&h, cfg, &start, grid, None)
}

/// Ideal preparation along the protected axis, for callers that propagate
/// themselves.
pub fn prepared_state(cfg: &DriveConfig, frame: Frame) -> SpinState {
    SpinState::pure(pauli::ket_along(&readout::protected_axis(cfg)), frame, 0.0)
}
