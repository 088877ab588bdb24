// SPDX-License-Identifier: Apache-2.0

//! One-dimensional parameter scans, the sensitivity projection built on a
//! signal-strength scan, and a coordinate search over both drive strengths.
//!
//! Every point reuses the same master seed, so all points see the same
//! underlying random numbers and differences between rows reflect the
//! parameter, not the sampling.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, FitModel, FitOptions, RabiFit};
use crate::error::{Error, Result};
use crate::experiment::{self, EnsembleSettings, SampleGrid};
use crate::model::{self, DriveConfig, Frame};
use crate::noise::NoiseConfig;
use crate::readout::FluorescenceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    Omega1,
    Omega2,
    G,
    /// Offset added to the configured `ω_s`.
    Detuning,
}

impl std::str::FromStr for ScanAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omega1" | "rabi1" => Ok(Self::Omega1),
            "omega2" | "rabi2" => Ok(Self::Omega2),
            "g" => Ok(Self::G),
            "detuning" => Ok(Self::Detuning),
            other => Err(Error::invalid(format!("unknown scan axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Fitted decay time: of the Rabi trace when `g > 0`, of the coherence
    /// visibility otherwise.
    #[default]
    T2,
    /// Largest `P(−a)` reached within the window.
    Amplitude,
    /// Shot-noise sensitivity at `τ = T₂`, in T/√Hz.
    Eta,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t2" => Ok(Self::T2),
            "amplitude" => Ok(Self::Amplitude),
            "eta" => Ok(Self::Eta),
            other => Err(Error::invalid(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub axis: ScanAxis,
    pub values: Vec<f64>,
    pub cfg: DriveConfig,
    pub noise: NoiseConfig,
    pub trajectories: usize,
    pub seed: u64,
    pub objective: Objective,
    /// Window of each simulated trace.
    pub t_final: f64,
    /// Sample intervals per trace (snapped to the strobe period).
    pub samples: usize,
    pub frame: Frame,
    pub fluorescence: FluorescenceModel,
    pub min_ratio: f64,
    /// Seconds per time unit, for `η`.
    pub time_unit_s: f64,
    pub gamma: f64,
    /// Fixed stretching exponent for the fits.
    pub fixed_p: Option<f64>,
}

impl ScanSpec {
    pub fn new(axis: ScanAxis, values: Vec<f64>, cfg: DriveConfig, noise: NoiseConfig) -> Self {
        Self {
            axis,
            values,
            cfg,
            noise,
            trajectories: 200,
            seed: 1,
            objective: Objective::T2,
            t_final: 100.0,
            samples: 200,
            frame: Frame::Ip1,
            fluorescence: FluorescenceModel::default(),
            min_ratio: model::DEFAULT_MIN_RATIO,
            time_unit_s: 1.0,
            gamma: analysis::GAMMA_NV,
            fixed_p: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("scan grid is empty"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scan grid has non-finite values"));
        }
        let up = self.values.windows(2).all(|w| w[1] > w[0]);
        let down = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::invalid("scan grid must be strictly monotone"));
        }
        if self.trajectories == 0 {
            return Err(Error::invalid("trajectories must be >= 1"));
        }
        if !(self.t_final > 0.0) || self.samples < 4 {
            return Err(Error::invalid("scan needs t_final > 0 and at least 4 samples"));
        }
        self.noise.validate()
    }

    /// The configuration at one grid value. Drive changes keep the signal's
    /// offset from the `(+,+)` resonance.
    pub fn point_config(&self, value: f64) -> DriveConfig {
        let base = self.cfg;
        let retune = |c: DriveConfig| DriveConfig {
            omega_s: c.omega0 + c.omega1 + 0.5 * c.omega2 + base.detuning(),
            ..c
        };
        match self.axis {
            ScanAxis::Omega1 => retune(DriveConfig { omega1: value, ..base }),
            ScanAxis::Omega2 => retune(DriveConfig { omega2: value, ..base }),
            ScanAxis::G => DriveConfig { g: value, ..base },
            ScanAxis::Detuning => DriveConfig {
                omega_s: base.omega_s + value,
                ..base
            },
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            fixed_p: self.fixed_p,
            ..FitOptions::default()
        }
    }

    /// Objective and its one-sigma uncertainty at `cfg`.
    pub fn evaluate(&self, cfg: &DriveConfig) -> Result<PointResult> {
        let settings = EnsembleSettings {
            trajectories: self.trajectories,
            seed: self.seed,
            frame: self.frame,
        };
        let grid = SampleGrid::covering(cfg, self.t_final, self.samples)?;
        match self.objective {
            Objective::Amplitude => {
                let ens = experiment::run_rabi(cfg, &self.noise, &grid, &settings)?;
                let (k, &best) = ens
                    .mean
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("non-empty grid");
                Ok(PointResult {
                    objective: best,
                    uncertainty: ens.stderr[k],
                    fit: None,
                })
            }
            Objective::T2 | Objective::Eta => {
                let fit = self.t2_fit(cfg, &grid, &settings)?;
                if self.objective == Objective::T2 {
                    return Ok(PointResult {
                        objective: fit.t2,
                        uncertainty: fit.errors.t2,
                        fit: Some(fit),
                    });
                }
                let tau = fit.t2 * self.time_unit_s;
                let eta = analysis::sensitivity_shot_noise(
                    self.fluorescence.n_ph,
                    tau,
                    cfg.signal_rate_factor(),
                    self.fluorescence.contrast,
                    self.gamma,
                )?;
                Ok(PointResult {
                    objective: eta,
                    uncertainty: 0.5 * eta * fit.errors.t2 / fit.t2,
                    fit: Some(fit),
                })
            }
        }
    }

    fn t2_fit(&self, cfg: &DriveConfig, grid: &SampleGrid, settings: &EnsembleSettings) -> Result<RabiFit> {
        if cfg.g > 0.0 {
            let ens = experiment::run_rabi(cfg, &self.noise, grid, settings)?;
            let opts = FitOptions {
                model: Some(FitModel::DampedCosine),
                ..self.fit_options()
            };
            analysis::fit_signal(&ens.times, &ens.mean, Some(&ens.stderr), &opts)
        } else {
            let ens = experiment::run_coherence(cfg, &self.noise, grid, settings)?;
            let opts = FitOptions {
                model: Some(FitModel::DecayOnly),
                fixed_offset: Some(0.0),
                ..self.fit_options()
            };
            analysis::fit_signal(&ens.times, &ens.mean, Some(&ens.stderr), &opts)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub objective: f64,
    pub uncertainty: f64,
    pub fit: Option<RabiFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub value: f64,
    pub objective: Option<f64>,
    pub uncertainty: Option<f64>,
    pub hierarchy_ok: bool,
    pub violations: Vec<String>,
    pub fit: Option<RabiFit>,
    /// Why the objective is missing, when it is.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub axis: ScanAxis,
    pub objective: Objective,
    pub seed: u64,
    pub trajectories: usize,
    pub rows: Vec<ScanRow>,
}

/// Evaluates every grid point; a failing point is recorded in its row and
/// the scan carries on.
pub fn run_scan(spec: &ScanSpec) -> Result<ScanTable> {
    spec.validate()?;
    let rows = spec
        .values
        .par_iter()
        .map(|&value| {
            let cfg = spec.point_config(value);
            let report = model::validate_hierarchy(&cfg, spec.min_ratio);
            let violations: Vec<String> = report.violations().iter().map(|s| s.to_string()).collect();
            let outcome = cfg.validate().and_then(|_| spec.evaluate(&cfg));
            let (objective, uncertainty, fit, error) = match outcome {
                Ok(p) => (Some(p.objective), Some(p.uncertainty), p.fit, None),
                Err(Error::FitNonConvergence { best, .. }) => {
                    (None, None, Some(*best), Some("fit did not converge".to_string()))
                }
                Err(e) => (None, None, None, Some(e.to_string())),
            };
            ScanRow {
                value,
                objective,
                uncertainty,
                hierarchy_ok: report.pass(),
                violations,
                fit,
                error,
            }
        })
        .collect();
    Ok(ScanTable {
        axis: spec.axis,
        objective: spec.objective,
        seed: spec.seed,
        trajectories: spec.trajectories,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub g: f64,
    /// Coherence time used as `τ`, in time units.
    pub t2: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProjection {
    pub rows: Vec<ProjectionRow>,
    /// `η` at the signal-free coherence time, when one was given.
    pub reference_eta: Option<f64>,
    /// Grid values without a usable `T₂`.
    pub skipped: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInputs {
    pub fluorescence: FluorescenceModel,
    pub alpha: f64,
    pub gamma: f64,
    pub time_unit_s: f64,
    /// Signal-free coherence time in time units, for the reference line.
    pub reference_t2: Option<f64>,
}

/// `η(g)` with `τ = T₂(g)` read from a signal-strength scan, holding the
/// per-shot photon number fixed.
pub fn project_sensitivity(table: &ScanTable, inputs: &ProjectionInputs) -> Result<SensitivityProjection> {
    if table.axis != ScanAxis::G || table.objective != Objective::T2 {
        return Err(Error::invalid("sensitivity projection needs a g scan of T2"));
    }
    let fm = inputs.fluorescence;
    let eta = |t2: f64| {
        analysis::sensitivity_shot_noise(fm.n_ph, t2 * inputs.time_unit_s, inputs.alpha, fm.contrast, inputs.gamma)
    };
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for row in &table.rows {
        match row.objective {
            Some(t2) if t2.is_finite() && t2 > 0.0 => rows.push(ProjectionRow {
                g: row.value,
                t2,
                eta: eta(t2)?,
            }),
            _ => skipped.push(row.value),
        }
    }
    let reference_eta = inputs.reference_t2.map(eta).transpose()?;
    Ok(SensitivityProjection {
        rows,
        reference_eta,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub omega1: (f64, f64),
    pub omega2: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Points per line search.
    pub grid_points: usize,
    /// Grid shrink steps after the first pass.
    pub refinements: usize,
    pub max_evaluations: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            grid_points: 5,
            refinements: 3,
            max_evaluations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeStep {
    pub omega1: f64,
    pub omega2: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub omega1: f64,
    pub omega2: f64,
    pub value: f64,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
    pub evaluations: usize,
    pub trace: Vec<OptimizeStep>,
}

struct Search<'a, F> {
    objective: &'a F,
    cache: HashMap<(u64, u64), Option<f64>>,
    trace: Vec<OptimizeStep>,
    budget: usize,
}

impl<F: Fn(f64, f64) -> Result<f64>> Search<'_, F> {
    fn eval(&mut self, o1: f64, o2: f64) -> Option<Option<f64>> {
        let key = (o1.to_bits(), o2.to_bits());
        if let Some(v) = self.cache.get(&key) {
            return Some(*v);
        }
        if self.cache.len() >= self.budget {
            return None;
        }
        let v = (self.objective)(o1, o2).ok().filter(|v| v.is_finite());
        self.cache.insert(key, v);
        self.trace.push(OptimizeStep {
            omega1: o1,
            omega2: o2,
            value: v,
        });
        Some(v)
    }
}

/// `a` beats `b` on a higher value; equal values prefer the smaller `Ω₂`,
/// then the smaller `Ω₁`.
fn better(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    match a.2.total_cmp(&b.2) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => (a.1, a.0) < (b.1, b.0),
    }
}

fn line(center: f64, half: f64, bounds: (f64, f64), points: usize) -> Vec<f64> {
    let lo = (center - half).max(bounds.0);
    let hi = (center + half).min(bounds.1);
    if points < 2 || hi <= lo {
        return vec![center.clamp(bounds.0, bounds.1)];
    }
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

/// Maximizes `objective(Ω₁, Ω₂)` over `bounds` by alternating line
/// searches on a grid that shrinks to one grid step around the incumbent
/// after each pass.
pub fn optimize(
    objective: impl Fn(f64, f64) -> Result<f64>,
    bounds: &Bounds,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    for (lo, hi) in [bounds.omega1, bounds.omega2] {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
            return Err(Error::invalid("bounds must be finite, non-negative and ordered"));
        }
    }
    if opts.max_evaluations == 0 {
        return Err(Error::invalid("evaluation budget must be >= 1"));
    }
    let mut search = Search {
        objective: &objective,
        cache: HashMap::new(),
        trace: Vec::new(),
        budget: opts.max_evaluations,
    };
    let points = opts.grid_points.max(2);
    let mut h1 = 0.5 * (bounds.omega1.1 - bounds.omega1.0);
    let mut h2 = 0.5 * (bounds.omega2.1 - bounds.omega2.0);
    let mut best = (bounds.omega1.0 + h1, bounds.omega2.0 + h2, f64::NEG_INFINITY);
    let mut exhausted = false;

    'outer: for _ in 0..=opts.refinements {
        for _sweep in 0..4 {
            let before = best;
            for dim in 0..2 {
                let candidates = if dim == 0 {
                    line(best.0, h1, bounds.omega1, points)
                        .into_iter()
                        .map(|x| (x, best.1))
                        .collect::<Vec<_>>()
                } else {
                    line(best.1, h2, bounds.omega2, points)
                        .into_iter()
                        .map(|y| (best.0, y))
                        .collect()
                };
                for (o1, o2) in candidates {
                    match search.eval(o1, o2) {
                        None => {
                            exhausted = true;
                            break 'outer;
                        }
                        Some(Some(v)) if better((o1, o2, v), best) => best = (o1, o2, v),
                        _ => {}
                    }
                }
            }
            if before.0 == best.0 && before.1 == best.1 {
                break;
            }
        }
        h1 /= (points - 1) as f64 / 2.0;
        h2 /= (points - 1) as f64 / 2.0;
    }
    if !best.2.is_finite() {
        return Err(Error::invalid("objective failed at every evaluated point"));
    }
    Ok(OptimizeResult {
        omega1: best.0,
        omega2: best.1,
        value: best.2,
        converged: !exhausted,
        evaluations: search.cache.len(),
        trace: search.trace,
    })
}

/// The scan objective as a function of both drive strengths, oriented so
/// that larger is better (`η` is negated).
pub fn scan_objective(spec: &ScanSpec) -> impl Fn(f64, f64) -> Result<f64> + '_ {
    move |o1, o2| {
        let base = spec.cfg;
        let cfg = DriveConfig {
            omega1: o1,
            omega2: o2,
            omega_s: base.omega0 + o1 + 0.5 * o2 + base.detuning(),
            ..base
        };
        let v = spec.evaluate(&cfg)?.objective;
        Ok(if spec.objective == Objective::Eta { -v } else { v })
    }
}
